// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "screenflow/executors.hpp"
#include "screenflow/scheduler.hpp"
#include "screenflow/workflow.hpp"

namespace screenflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad command-line input; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// `small=2,large=4` -> {large: 4, small: 2}. Throws UsageError.
std::map<std::string, int> parse_pool_option(std::string_view text);

/// Entries a run writes into its directory; `--force` removes only these.
inline constexpr const char* kRunEntries[] = {"workflow.sf", "events.log", "run.comm", "logs", "data"};

/// Creates `dir` or, with `force`, clears a previous run out of it. Throws
/// UsageError if it already holds a run and `force` is false.
void prepare_run_dir(const std::filesystem::path& dir, bool force);

struct RunRequest {
  WorkflowSpec spec;
  std::filesystem::path run_dir;
  std::optional<std::filesystem::path> data_dir;  // defaults to <run_dir>/data
  std::uint64_t seed = 0;
  bool simulate = true;
  std::optional<std::int64_t> task_timeout_ms;
  bool force = false;
  const BuiltinRegistry* builtins = nullptr;  // defaults to the screening steps
};

struct RunReport {
  RunOutput output;
  std::filesystem::path run_dir;
  std::filesystem::path data_dir;

  bool success() const { return output.result.success; }
};

/// Snapshots the spec, then runs it with the simulated (discrete-event) or
/// process (wall-clock) backend, writing events.log, run.comm and logs/.
RunReport execute_run(const RunRequest& request);

/// `$SCREENFLOW_RUN_DIR`, else `./screenflow-run`.
std::filesystem::path default_run_dir();

int run_cli(int argc, char** argv);

}  // namespace screenflow
