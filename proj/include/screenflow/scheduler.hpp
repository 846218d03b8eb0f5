// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "screenflow/comm_store.hpp"
#include "screenflow/events.hpp"
#include "screenflow/execution.hpp"
#include "screenflow/workflow.hpp"

namespace screenflow {

enum class TaskState { pending, ready, running, success, failed, upstream_failed };

std::string_view to_string(TaskState s) noexcept;
bool legal_transition(TaskState from, TaskState to) noexcept;
inline bool is_terminal(TaskState s) noexcept {
  return s == TaskState::success || s == TaskState::failed || s == TaskState::upstream_failed;
}

struct TaskInstance {
  InstanceKey key;
  TaskState state = TaskState::pending;
  std::string pool;
  std::optional<int> slot;  // set iff RUNNING
  std::int64_t ready_ms = 0;
  std::optional<MapScope> scope;
};

/// Instance table and dependency bookkeeping for one run, including groups
/// that have not been fanned out yet.
class RunState {
 public:
  explicit RunState(const WorkflowSpec& spec);

  const WorkflowSpec& spec() const noexcept { return spec_; }
  const std::vector<TaskInstance>& instances() const noexcept { return instances_; }
  const TaskInstance& at(const InstanceKey& key) const;
  TaskInstance& at(const InstanceKey& key);
  bool contains(const InstanceKey& key) const { return index_.count(key) > 0; }

  bool expanded(const std::string& group) const { return expanded_.count(group) > 0; }
  /// Creates the PENDING instances of a mapped group. Throws if `values` is
  /// not a list or the group was already expanded.
  std::vector<InstanceKey> expand_group(const std::string& group, const CommValue& values);

  /// Throws Error on an illegal transition.
  void transition(const InstanceKey& key, TaskState to);

  /// Upstream instances of `key`, or nullopt while some upstream group has
  /// not been expanded.
  std::optional<std::vector<InstanceKey>> upstream_instances(const InstanceKey& key) const;

  /// PENDING instances whose every upstream instance is SUCCESS.
  std::vector<InstanceKey> ready_set() const;
  /// Non-terminal, non-running instances that can never run because an
  /// upstream failed (or an upstream group can no longer be expanded).
  std::vector<InstanceKey> doomed() const;

  bool all_terminal() const;

 private:
  // Dependency counters kept in step with instance states so readiness and
  // failure checks touch only the instances whose upstreams changed.
  struct Node {
    std::vector<std::size_t> downstream;
    int unsatisfied = 0;  // linked upstreams not yet SUCCESS
    int failed = 0;       // linked upstreams FAILED or UPSTREAM_FAILED
    std::set<std::string> waiting;  // upstream groups not expanded yet
    bool dead = false;    // an upstream group can no longer be expanded
  };

  bool group_dead(const std::string& group) const;
  std::size_t add_instance(InstanceKey key, std::optional<MapScope> scope);
  void link(std::size_t from, std::size_t to);
  void link_upstreams(std::size_t i);
  void link_group(std::size_t i, const std::string& group);
  void refresh(std::size_t i);

  const WorkflowSpec& spec_;
  std::map<std::string, std::vector<std::string>> upstream_tasks_;
  std::map<std::string, std::vector<std::size_t>> by_task_;
  std::set<std::string> expanded_;
  std::vector<TaskInstance> instances_;
  std::vector<Node> nodes_;
  std::map<InstanceKey, std::size_t> index_;
  std::map<std::string, std::vector<std::size_t>> waiting_on_;
  std::set<InstanceKey> ready_;
  std::set<InstanceKey> doomed_;
};

inline std::vector<InstanceKey> ready_set(const RunState& state) { return state.ready_set(); }

struct PoolState {
  PoolSpec spec;
  std::vector<std::optional<InstanceKey>> occupied;

  explicit PoolState(PoolSpec s) : spec(std::move(s)), occupied(static_cast<std::size_t>(spec.slots)) {}

  int free_slots() const;
  int running() const { return spec.slots - free_slots(); }
};

struct ReadyEntry {
  InstanceKey key;
  std::int64_t ready_ms = 0;
};

struct Assignment {
  InstanceKey key;
  int slot = 0;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Fills free slots lowest-first, taking instances in FIFO order of READY
/// time with ties broken by (task id, map index).
std::vector<Assignment> admit(const PoolState& pool, std::span<const ReadyEntry> ready);

struct RunOptions {
  /// When set, every event is appended (and flushed) as it happens.
  std::optional<std::filesystem::path> event_log_path;
};

struct RunResult {
  bool success = false;
  std::vector<TaskInstance> instances;
  std::map<InstanceKey, Completion> completions;
};

struct RunOutput {
  RunResult result;
  EventLog events;
};

/// Drives `spec` to completion. Throws Error if the spec does not validate.
RunOutput run(const WorkflowSpec& spec, Executor& executor, Clock& clock, CommStore& store,
              const RunOptions& options = {});

}  // namespace screenflow
