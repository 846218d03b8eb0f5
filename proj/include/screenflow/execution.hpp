// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "screenflow/comm_store.hpp"
#include "screenflow/workflow.hpp"

// The contract between the scheduler and execution backends.

namespace screenflow {

class Clock {
 public:
  virtual ~Clock() = default;
  /// Milliseconds since run start; never decreases.
  virtual std::int64_t now_ms() const = 0;
};

/// Discrete-event clock, moved forward by the simulated executor.
class SimClock final : public Clock {
 public:
  std::int64_t now_ms() const override { return now_; }
  void advance_to(std::int64_t t) {
    if (t > now_) now_ = t;
  }

 private:
  std::int64_t now_ = 0;
};

class WallClock final : public Clock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  std::int64_t now_ms() const override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Durations of the four docking phases, in milliseconds.
struct PhaseTiming {
  double setup_cuda = 0;
  double setup_rest = 0;
  double docking = 0;
  double shutdown = 0;

  double total() const noexcept { return setup_cuda + setup_rest + docking + shutdown; }

  friend bool operator==(const PhaseTiming&, const PhaseTiming&) = default;
};

inline constexpr std::string_view kPhaseNames[] = {"setup_cuda", "setup_rest", "docking", "shutdown"};

double phase_value(const PhaseTiming& p, std::string_view name);

/// Formats the `PHASES <setup_cuda> <setup_rest> <docking> <shutdown>` line.
std::string format_phases_line(const PhaseTiming& p);
/// Last `PHASES` line in `output`, if any parses.
std::optional<PhaseTiming> parse_phases(std::string_view output);

/// Parses the last `RESULT <int|str|list> <encoded>` line in `output`.
std::optional<CommValue> parse_result_line(std::string_view output);

/// A READY instance that has been given a slot, with its templates resolved.
struct Launch {
  InstanceKey key;
  const TaskSpec* task = nullptr;
  std::string pool;
  int slot = 0;
  std::string command;
  std::vector<std::string> params;
  std::string returns;
  std::optional<MapScope> scope;
  std::int64_t start_ms = 0;
};

struct Completion {
  InstanceKey key;
  bool ok = false;
  int exit_code = 0;
  std::string output;
  std::string diagnostic;
  std::optional<PhaseTiming> phases;
  std::optional<CommValue> value;
};

class Executor {
 public:
  virtual ~Executor() = default;
  /// Begins executing; must not block on the task itself.
  virtual void start(const Launch& launch) = 0;
  /// Blocks until at least one started instance finishes and returns every
  /// completion available at that point.
  virtual std::vector<Completion> wait() = 0;
};

}  // namespace screenflow
