// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "screenflow/execution.hpp"
#include "screenflow/hash.hpp"

namespace screenflow {

/// Byte string hashed to select an instance's random stream:
/// `<task_id>#<map_index>` or `<task_id>#-`.
std::string substream_name(const std::string& task_id, std::optional<int> map_index);

/// Per-instance generator: `run_seed ^ fnv1a64(substream_name(...))` seeds a
/// SplitMix64 sequence whose first four outputs form the xoshiro256** state.
Xoshiro256 derive_substream(std::uint64_t run_seed, const std::string& task_id,
                            std::optional<int> map_index);

/// Draws one duration: fixed specs use no randomness; uniform specs take one
/// unbiased integer in [lo, hi]. The weight is applied last, rounded to ms.
std::int64_t sample_duration(const DurationSpec& spec, Xoshiro256& rng);

/// Deterministic split of a simulated duration into the four phases; the
/// parts always sum to `duration_ms` exactly.
PhaseTiming simulated_phases(std::int64_t duration_ms);

/// Turns a resolved `returns=` value (`int:`, `str:`, `list:`, `labels:`)
/// into a comm value. Throws Error on malformed input.
CommValue evaluate_returns(const std::string& resolved);

/// `<run_dir>/logs/<task_id>[.<map_index>].log`
std::filesystem::path instance_log_path(const std::filesystem::path& run_dir, const InstanceKey& key);

struct StepContext {
  InstanceKey key;
  std::vector<std::string> params;
  std::optional<MapScope> scope;
  std::filesystem::path data_dir;
  std::filesystem::path run_dir;
  bool simulated = false;
};

struct StepResult {
  bool ok = true;
  std::string output;
  std::string diagnostic;
  std::optional<CommValue> value;
};

using BuiltinStep = std::function<StepResult(const StepContext&)>;
using BuiltinRegistry = std::map<std::string, BuiltinStep>;

/// Runs a builtin step, converting exceptions into a failed completion.
Completion run_builtin(const BuiltinRegistry* registry, const Launch& launch, StepContext ctx);

struct ShellOptions {
  std::filesystem::path data_dir;
  std::filesystem::path run_dir;
  std::optional<std::int64_t> timeout_ms;
};

/// Runs `/bin/sh -c <command>` in `data_dir` with stdout and stderr captured
/// to the instance log. Blocks until exit or timeout.
Completion exec_shell(const InstanceKey& key, const std::string& command, const ShellOptions& options);

struct CommandResult {
  int exit_code = 0;
  std::string output;
};

/// Runs `/bin/sh -c <command>` in `cwd`, capturing stdout and stderr.
CommandResult run_command(const std::string& command, const std::filesystem::path& cwd);

/// Discrete-event backend: every instance completes at start + sampled
/// duration on the shared SimClock.
class SimExecutor final : public Executor {
 public:
  struct Options {
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> run_dir;  // writes instance logs when set
    std::filesystem::path data_dir;
    const BuiltinRegistry* builtins = nullptr;
  };

  SimExecutor(SimClock& clock, Options options);

  void start(const Launch& launch) override;
  std::vector<Completion> wait() override;

 private:
  struct Pending {
    std::int64_t finish_ms;
    std::uint64_t seq;
    Completion completion;
  };

  void write_log(const InstanceKey& key, const std::string& output) const;

  SimClock& clock_;
  Options options_;
  std::vector<Pending> pending_;
  std::uint64_t seq_ = 0;
};

/// Wall-clock backend: each instance runs on its own thread and reports
/// through a mutex-guarded completion queue.
class ProcessExecutor final : public Executor {
 public:
  struct Options {
    std::filesystem::path data_dir;
    std::filesystem::path run_dir;
    std::optional<std::int64_t> timeout_ms;
    std::uint64_t seed = 0;
    const BuiltinRegistry* builtins = nullptr;
  };

  explicit ProcessExecutor(Options options);
  ~ProcessExecutor() override;

  void start(const Launch& launch) override;
  std::vector<Completion> wait() override;

 private:
  Completion execute(const Launch& launch) const;

  Options options_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<Completion> done_;
  std::map<InstanceKey, std::thread> workers_;
};

}  // namespace screenflow
