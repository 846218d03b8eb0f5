// SPDX-License-Identifier: Apache-2.0
#include "screenflow/scheduler.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <utility>

namespace screenflow {

std::string_view to_string(TaskState s) noexcept {
  switch (s) {
    case TaskState::pending: return "PENDING";
    case TaskState::ready: return "READY";
    case TaskState::running: return "RUNNING";
    case TaskState::success: return "SUCCESS";
    case TaskState::failed: return "FAILED";
    case TaskState::upstream_failed: return "UPSTREAM_FAILED";
  }
  return "PENDING";
}

bool legal_transition(TaskState from, TaskState to) noexcept {
  using S = TaskState;
  switch (from) {
    case S::pending: return to == S::ready || to == S::upstream_failed;
    case S::ready: return to == S::running || to == S::upstream_failed;
    case S::running: return to == S::success || to == S::failed;
    default: return false;
  }
}

RunState::RunState(const WorkflowSpec& spec) : spec_(spec) {
  for (const auto& t : spec.tasks) upstream_tasks_[t.id];
  for (const auto& e : task_edges(spec)) upstream_tasks_[e.to].push_back(e.from);
  std::vector<std::size_t> created;
  for (const auto& t : spec.tasks)
    if (!spec.mapped_group_of(t.id)) created.push_back(add_instance(InstanceKey{t.id, std::nullopt}, std::nullopt));
  for (auto i : created) link_upstreams(i);
  for (auto i : created) refresh(i);
}

std::size_t RunState::add_instance(InstanceKey key, std::optional<MapScope> scope) {
  const TaskSpec* task = spec_.find_task(key.task_id);
  TaskInstance inst;
  inst.key = key;
  inst.pool = task->pool;
  inst.scope = std::move(scope);
  const std::size_t i = instances_.size();
  index_.emplace(key, i);
  by_task_[key.task_id].push_back(i);
  instances_.push_back(std::move(inst));
  nodes_.emplace_back();
  return i;
}

void RunState::link(std::size_t from, std::size_t to) {
  nodes_[from].downstream.push_back(to);
  const auto s = instances_[from].state;
  if (s != TaskState::success) ++nodes_[to].unsatisfied;
  if (s == TaskState::failed || s == TaskState::upstream_failed) ++nodes_[to].failed;
}

void RunState::link_upstreams(std::size_t i) {
  const InstanceKey key = instances_[i].key;
  const GroupSpec* own = spec_.mapped_group_of(key.task_id);
  for (const auto& up : upstream_tasks_.at(key.task_id)) {
    const GroupSpec* g = spec_.mapped_group_of(up);
    if (g && g == own) {
      link(index_.at(InstanceKey{up, key.map_index}), i);
    } else if (g && !expanded(g->id)) {
      if (nodes_[i].waiting.insert(g->id).second) waiting_on_[g->id].push_back(i);
      if (group_dead(g->id)) nodes_[i].dead = true;
    } else if (auto it = by_task_.find(up); it != by_task_.end()) {
      for (auto u : it->second) link(u, i);
    }
  }
}

void RunState::link_group(std::size_t i, const std::string& group) {
  for (const auto& up : upstream_tasks_.at(instances_[i].key.task_id)) {
    const GroupSpec* g = spec_.mapped_group_of(up);
    if (!g || g->id != group) continue;
    if (auto it = by_task_.find(up); it != by_task_.end())
      for (auto u : it->second) link(u, i);
  }
  nodes_[i].waiting.erase(group);
}

void RunState::refresh(std::size_t i) {
  const auto& inst = instances_[i];
  const auto& n = nodes_[i];
  const bool open = inst.state == TaskState::pending || inst.state == TaskState::ready;
  const bool doom = open && (n.failed > 0 || n.dead);
  const bool ready = inst.state == TaskState::pending && !doom && n.unsatisfied == 0 && n.waiting.empty();
  if (doom) doomed_.insert(inst.key);
  else doomed_.erase(inst.key);
  if (ready) ready_.insert(inst.key);
  else ready_.erase(inst.key);
}

const TaskInstance& RunState::at(const InstanceKey& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw Error("unknown instance " + key.str());
  return instances_[it->second];
}

TaskInstance& RunState::at(const InstanceKey& key) {
  return const_cast<TaskInstance&>(std::as_const(*this).at(key));
}

std::vector<InstanceKey> RunState::expand_group(const std::string& group, const CommValue& values) {
  if (expanded_.count(group)) throw Error("group " + group + " already expanded");
  auto sets = expand(spec_, group, values);
  expanded_.insert(group);
  std::vector<InstanceKey> created;
  std::vector<std::size_t> fresh;
  for (const auto& set : sets) {
    for (const auto& key : set.instances) {
      fresh.push_back(add_instance(key, MapScope{set.map_index, set.value}));
      created.push_back(key);
    }
  }
  for (auto i : fresh) link_upstreams(i);
  for (auto i : fresh) refresh(i);
  if (auto it = waiting_on_.find(group); it != waiting_on_.end()) {
    for (auto i : it->second) {
      link_group(i, group);
      refresh(i);
    }
    waiting_on_.erase(it);
  }
  return created;
}

void RunState::transition(const InstanceKey& key, TaskState to) {
  auto it = index_.find(key);
  if (it == index_.end()) throw Error("unknown instance " + key.str());
  const std::size_t i = it->second;
  auto& inst = instances_[i];
  if (!legal_transition(inst.state, to)) {
    throw Error("illegal transition " + std::string(to_string(inst.state)) + " -> " +
                std::string(to_string(to)) + " for " + key.str());
  }
  inst.state = to;
  if (to != TaskState::running) inst.slot.reset();
  refresh(i);
  if (!is_terminal(to)) return;
  const bool bad = to != TaskState::success;
  for (auto d : nodes_[i].downstream) {
    if (bad) ++nodes_[d].failed;
    else --nodes_[d].unsatisfied;
    refresh(d);
  }
  if (!bad) return;
  for (const auto& g : spec_.groups) {
    if (!g.mapped_over || g.mapped_over->task_id != key.task_id || expanded(g.id)) continue;
    if (auto w = waiting_on_.find(g.id); w != waiting_on_.end()) {
      for (auto d : w->second) {
        nodes_[d].dead = true;
        refresh(d);
      }
    }
  }
}

std::optional<std::vector<InstanceKey>> RunState::upstream_instances(const InstanceKey& key) const {
  const GroupSpec* own = spec_.mapped_group_of(key.task_id);
  std::vector<InstanceKey> out;
  for (const auto& up : upstream_tasks_.at(key.task_id)) {
    const GroupSpec* g = spec_.mapped_group_of(up);
    if (g && g == own) {
      out.push_back(InstanceKey{up, key.map_index});
      continue;
    }
    if (g && !expanded(g->id)) return std::nullopt;
    if (auto it = by_task_.find(up); it != by_task_.end())
      for (auto i : it->second) out.push_back(instances_[i].key);
  }
  return out;
}

bool RunState::group_dead(const std::string& group) const {
  const GroupSpec* g = spec_.find_group(group);
  if (!g || !g->mapped_over || expanded(group)) return false;
  auto it = index_.find(InstanceKey{g->mapped_over->task_id, std::nullopt});
  if (it == index_.end()) return false;
  auto s = instances_[it->second].state;
  return s == TaskState::failed || s == TaskState::upstream_failed;
}

std::vector<InstanceKey> RunState::ready_set() const { return {ready_.begin(), ready_.end()}; }

std::vector<InstanceKey> RunState::doomed() const { return {doomed_.begin(), doomed_.end()}; }

bool RunState::all_terminal() const {
  return std::all_of(instances_.begin(), instances_.end(),
                     [](const TaskInstance& i) { return is_terminal(i.state); });
}

int PoolState::free_slots() const {
  return static_cast<int>(std::count(occupied.begin(), occupied.end(), std::nullopt));
}

std::vector<Assignment> admit(const PoolState& pool, std::span<const ReadyEntry> ready) {
  std::vector<ReadyEntry> order(ready.begin(), ready.end());
  std::sort(order.begin(), order.end(), [](const ReadyEntry& a, const ReadyEntry& b) {
    if (a.ready_ms != b.ready_ms) return a.ready_ms < b.ready_ms;
    return a.key < b.key;
  });
  std::vector<Assignment> out;
  auto next = order.begin();
  for (std::size_t slot = 0; slot < pool.occupied.size() && next != order.end(); ++slot) {
    if (pool.occupied[slot]) continue;
    out.push_back(Assignment{next->key, static_cast<int>(slot)});
    ++next;
  }
  return out;
}

namespace {

class Scheduler {
 public:
  Scheduler(const WorkflowSpec& spec, Executor& executor, Clock& clock, CommStore& store,
            const RunOptions& options)
      : spec_(spec), executor_(executor), clock_(clock), store_(store), state_(spec) {
    for (const auto& p : spec.pools) pools_.emplace(p.name, PoolState(p));
    if (options.event_log_path) {
      sink_.emplace(*options.event_log_path, std::ios::binary | std::ios::trunc);
      if (!*sink_) throw Error("cannot write event log " + options.event_log_path->string());
    }
  }

  RunOutput execute() {
    while (true) {
      settle();
      if (running_ == 0) break;
      auto completions = executor_.wait();
      std::sort(completions.begin(), completions.end(),
                [](const Completion& a, const Completion& b) { return a.key < b.key; });
      for (auto& c : completions) finish(std::move(c));
    }
    RunOutput out;
    out.result.instances = state_.instances();
    out.result.success = std::all_of(out.result.instances.begin(), out.result.instances.end(),
                                     [](const TaskInstance& i) { return i.state == TaskState::success; });
    out.result.completions = std::move(completions_);
    out.events = std::move(events_);
    return out;
  }

 private:
  void emit(EventKind kind, const TaskInstance& inst, std::optional<int> slot = std::nullopt) {
    Event e{clock_.now_ms(), kind, inst.key, inst.pool, slot};
    if (sink_) {
      *sink_ << format_event(e) << '\n';
      sink_->flush();
    }
    events_.push_back(std::move(e));
  }

  // Applies failure propagation, readiness and admission until nothing
  // changes at the current instant.
  void settle() {
    bool progress = true;
    while (progress) {
      progress = false;
      for (const auto& key : state_.doomed()) {
        const auto& inst = state_.at(key);
        if (inst.state == TaskState::ready) queues_[inst.pool].erase({inst.ready_ms, key});
        state_.transition(key, TaskState::upstream_failed);
        emit(EventKind::upstream_failed, inst);
        progress = true;
      }
      for (const auto& key : state_.ready_set()) {
        state_.transition(key, TaskState::ready);
        auto& inst = state_.at(key);
        inst.ready_ms = clock_.now_ms();
        queues_[inst.pool].insert({inst.ready_ms, key});
        emit(EventKind::ready, inst);
        progress = true;
      }
      for (const auto& pool_spec : spec_.pools) {
        auto& pool = pools_.at(pool_spec.name);
        // The queue is already in admission order; only the head can start.
        std::vector<ReadyEntry> entries;
        const auto& queue = queues_[pool_spec.name];
        const auto free = static_cast<std::size_t>(pool.free_slots());
        for (auto it = queue.begin(); it != queue.end() && entries.size() < free; ++it)
          entries.push_back(ReadyEntry{it->second, it->first});
        for (const auto& a : admit(pool, entries)) {
          queues_[pool_spec.name].erase({state_.at(a.key).ready_ms, a.key});
          launch(pool, a);
          progress = true;
        }
      }
    }
  }

  void launch(PoolState& pool, const Assignment& a) {
    state_.transition(a.key, TaskState::running);
    auto& inst = state_.at(a.key);
    inst.slot = a.slot;
    pool.occupied[static_cast<std::size_t>(a.slot)] = a.key;
    emit(EventKind::start, inst, a.slot);
    ++running_;

    const TaskSpec* task = spec_.find_task(a.key.task_id);
    Launch l;
    l.key = a.key;
    l.task = task;
    l.pool = inst.pool;
    l.slot = a.slot;
    l.scope = inst.scope;
    l.start_ms = clock_.now_ms();
    try {
      l.command = store_.resolve(task->action.command, inst.scope);
      l.returns = store_.resolve(task->action.returns, inst.scope);
      for (const auto& p : task->params) l.params.push_back(store_.resolve(p, inst.scope));
    } catch (const UnresolvedPlaceholderError& e) {
      Completion c;
      c.key = a.key;
      c.ok = false;
      c.exit_code = -1;
      c.diagnostic = e.what();
      finish(std::move(c));
      return;
    }
    executor_.start(l);
  }

  void finish(Completion c) {
    if (state_.at(c.key).state != TaskState::running)
      throw Error("completion for non-running instance " + c.key.str());
    const TaskSpec* task = spec_.find_task(c.key.task_id);

    if (task->produces) {
      if (c.value) {
        CommKey key{task->id, *task->produces, c.key.map_index};
        try {
          store_.publish(key, *c.value, clock_.now_ms());
          expand_consumers(*task, *c.value, c);
        } catch (const DuplicateKeyError& e) {
          fail(c, e.what());
        }
      } else if (c.ok) {
        fail(c, "no value produced for key " + *task->produces);
      }
    }

    // Expansion may have grown the instance table.
    auto& inst = state_.at(c.key);
    int slot = inst.slot.value_or(0);
    emit(c.ok ? EventKind::end_ok : EventKind::end_fail, inst, slot);
    pools_.at(inst.pool).occupied[static_cast<std::size_t>(slot)].reset();
    state_.transition(c.key, c.ok ? TaskState::success : TaskState::failed);
    --running_;
    completions_[c.key] = std::move(c);
  }

  void expand_consumers(const TaskSpec& producer, const CommValue& value, Completion& c) {
    for (const auto& g : spec_.groups) {
      if (!g.mapped_over || g.mapped_over->task_id != producer.id || g.mapped_over->key != *producer.produces)
        continue;
      if (!value.is_list()) {
        fail(c, "value for " + g.mapped_over->str() + " is not a list; cannot expand group " + g.id);
        continue;
      }
      state_.expand_group(g.id, value);
    }
  }

  static void fail(Completion& c, const std::string& why) {
    c.ok = false;
    if (!c.diagnostic.empty()) c.diagnostic += "; ";
    c.diagnostic += why;
  }

  const WorkflowSpec& spec_;
  Executor& executor_;
  Clock& clock_;
  CommStore& store_;
  RunState state_;
  std::map<std::string, PoolState> pools_;
  std::map<std::string, std::set<std::pair<std::int64_t, InstanceKey>>> queues_;  // READY, by admission order
  std::optional<std::ofstream> sink_;
  EventLog events_;
  std::map<InstanceKey, Completion> completions_;
  int running_ = 0;
};

}  // namespace

RunOutput run(const WorkflowSpec& spec, Executor& executor, Clock& clock, CommStore& store,
              const RunOptions& options) {
  auto report = validate(spec);
  if (!report.ok()) throw Error("workflow does not validate: " + report.violations.front());
  Scheduler scheduler(spec, executor, clock, store, options);
  return scheduler.execute();
}

}  // namespace screenflow
