// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "screenflow/value.hpp"

namespace screenflow {

inline constexpr const char* kDefaultCommKey = "return_value";

struct PoolSpec {
  std::string name;
  int slots = 1;

  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

/// Simulated duration: `fixed:<ms>` or `uniform:<lo>:<hi>`, optionally
/// scaled by `*<weight>` and marked to fail with `!fail[=i,j,...]`.
struct DurationSpec {
  enum class Kind { fixed, uniform };

  Kind kind = Kind::fixed;
  std::int64_t lo_ms = 0;
  std::int64_t hi_ms = 0;
  double weight = 1.0;
  bool fail_all = false;
  std::set<int> fail_indices;

  static DurationSpec fixed(std::int64_t ms) { return {Kind::fixed, ms, ms, 1.0, false, {}}; }
  static DurationSpec uniform(std::int64_t lo, std::int64_t hi) { return {Kind::uniform, lo, hi, 1.0, false, {}}; }

  bool fails(std::optional<int> map_index) const {
    return fail_all || (map_index && fail_indices.count(*map_index) > 0);
  }

  friend bool operator==(const DurationSpec&, const DurationSpec&) = default;
};

struct ActionSpec {
  enum class Kind { shell, sim, builtin };

  Kind kind = Kind::sim;
  std::string command;  // shell: command template
  DurationSpec duration;  // sim
  std::string step;  // builtin: pipeline step name
  // sim: typed template for the published value, e.g. `int:10`,
  // `labels:{split_sdf.return_value}`, `list:a,b`, `str:x`.
  std::string returns;

  static ActionSpec shell(std::string cmd) {
    ActionSpec a;
    a.kind = Kind::shell;
    a.command = std::move(cmd);
    return a;
  }
  static ActionSpec sim(DurationSpec d, std::string returns = {}) {
    ActionSpec a;
    a.kind = Kind::sim;
    a.duration = std::move(d);
    a.returns = std::move(returns);
    return a;
  }
  static ActionSpec builtin(std::string step) {
    ActionSpec a;
    a.kind = Kind::builtin;
    a.step = std::move(step);
    return a;
  }

  friend bool operator==(const ActionSpec&, const ActionSpec&) = default;
};

struct TaskSpec {
  std::string id;
  std::string pool;
  std::optional<std::string> group;
  ActionSpec action;
  std::optional<std::string> produces;
  std::vector<std::string> params;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Reference to a published value: `<task>.<key>`.
struct CommRef {
  std::string task_id;
  std::string key = kDefaultCommKey;

  std::string str() const { return task_id + "." + key; }
  static CommRef parse(const std::string& text);

  friend auto operator<=>(const CommRef&, const CommRef&) = default;
};

struct GroupSpec {
  std::string id;
  std::optional<CommRef> mapped_over;

  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

struct Edge {
  std::string from;
  std::string to;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct WorkflowSpec {
  std::string name;
  std::vector<PoolSpec> pools;
  std::vector<TaskSpec> tasks;
  std::vector<GroupSpec> groups;
  std::vector<Edge> edges;

  const TaskSpec* find_task(const std::string& id) const;
  const GroupSpec* find_group(const std::string& id) const;
  const PoolSpec* find_pool(const std::string& name) const;

  /// Member task ids of `group`, in declaration order.
  std::vector<std::string> members(const std::string& group) const;
  /// The mapped group `task` belongs to, if any.
  const GroupSpec* mapped_group_of(const std::string& task) const;

  friend bool operator==(const WorkflowSpec&, const WorkflowSpec&) = default;
};

/// One runtime instance identity. Ordered by task id, then map index with
/// "unmapped" before every index.
struct InstanceKey {
  std::string task_id;
  std::optional<int> map_index;

  std::string str() const;

  friend auto operator<=>(const InstanceKey&, const InstanceKey&) = default;
};

struct ValidationReport {
  std::vector<std::string> violations;

  bool ok() const noexcept { return violations.empty(); }
};

/// Checks every structural rule; never throws.
/// When `known_steps` is given, builtin actions must name one of them.
ValidationReport validate(const WorkflowSpec& spec,
                          const std::set<std::string>* known_steps = nullptr);

/// Kahn layering over top-level tasks and groups (a group is one node).
/// Throws Error on a cycle.
std::vector<std::set<std::string>> topo_layers(const WorkflowSpec& spec);

/// Task-level dependency edges: group endpoints are replaced by the group's
/// sinks (as upstream) or sources (as downstream). Sorted and deduplicated.
std::vector<Edge> task_edges(const WorkflowSpec& spec);

/// Upstream task ids of `task` in the task-level graph.
std::vector<std::string> upstream_tasks(const WorkflowSpec& spec, const std::string& task);

/// True when `from` reaches `to` through task-level edges.
bool reaches(const WorkflowSpec& spec, const std::string& from, const std::string& to);

struct InstanceEdge {
  InstanceKey from;
  InstanceKey to;

  friend auto operator<=>(const InstanceEdge&, const InstanceEdge&) = default;
};

struct InstanceSet {
  int map_index = 0;
  std::string value;
  std::vector<InstanceKey> instances;
  std::vector<InstanceEdge> internal_edges;
};

/// Fans `group` out over `values` (which must be a list): one instance set
/// per element, with the group's internal edges copied per index.
std::vector<InstanceSet> expand(const WorkflowSpec& spec, const std::string& group,
                                const CommValue& values);

struct InstanceGraph {
  std::vector<InstanceKey> nodes;
  std::vector<InstanceEdge> edges;
};

/// Fully materialized instance graph, given the fan-out list of every mapped
/// group. A mapped group absent from `bindings` contributes no instances.
InstanceGraph expanded_graph(const WorkflowSpec& spec,
                             const std::map<std::string, TextList>& bindings);

}  // namespace screenflow
