// SPDX-License-Identifier: Apache-2.0
#include "screenflow/workflow.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <unordered_map>

#include "screenflow/comm_store.hpp"

namespace screenflow {

CommRef CommRef::parse(const std::string& text) {
  auto dot = text.find('.');
  if (dot == std::string::npos) return CommRef{text, kDefaultCommKey};
  return CommRef{text.substr(0, dot), text.substr(dot + 1)};
}

std::string InstanceKey::str() const {
  return map_index ? task_id + "[" + std::to_string(*map_index) + "]" : task_id;
}

const TaskSpec* WorkflowSpec::find_task(const std::string& id) const {
  for (const auto& t : tasks)
    if (t.id == id) return &t;
  return nullptr;
}

const GroupSpec* WorkflowSpec::find_group(const std::string& id) const {
  for (const auto& g : groups)
    if (g.id == id) return &g;
  return nullptr;
}

const PoolSpec* WorkflowSpec::find_pool(const std::string& n) const {
  for (const auto& p : pools)
    if (p.name == n) return &p;
  return nullptr;
}

std::vector<std::string> WorkflowSpec::members(const std::string& group) const {
  std::vector<std::string> out;
  for (const auto& t : tasks)
    if (t.group == group) out.push_back(t.id);
  return out;
}

const GroupSpec* WorkflowSpec::mapped_group_of(const std::string& task) const {
  const TaskSpec* t = find_task(task);
  if (!t || !t->group) return nullptr;
  const GroupSpec* g = find_group(*t->group);
  return (g && g->mapped_over) ? g : nullptr;
}

namespace {

bool valid_identifier(const std::string& id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-';
  });
}

// Indexed view of a spec: tasks, groups, and the "collapsed" node graph in
// which each group stands for all of its members.
class Graph {
 public:
  explicit Graph(const WorkflowSpec& spec) : spec_(spec) {
    for (const auto& t : spec.tasks) {
      std::string node = t.group ? *t.group : t.id;
      add_node(node);
    }
    for (const auto& g : spec.groups) add_node(g.id);
  }

  const std::vector<std::string>& nodes() const { return nodes_; }
  std::size_t order_of(const std::string& node) const { return order_.at(node); }

  bool is_group(const std::string& id) const { return spec_.find_group(id) != nullptr; }
  bool is_task(const std::string& id) const { return spec_.find_task(id) != nullptr; }

  std::string node_of(const std::string& id) const {
    if (const TaskSpec* t = spec_.find_task(id); t && t->group) return *t->group;
    return id;
  }

  // Edges between distinct collapsed nodes (internal group edges dropped).
  std::vector<std::pair<std::string, std::string>> collapsed_edges() const {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& e : spec_.edges) {
      if (!known(e.from) || !known(e.to)) continue;
      auto a = node_of(e.from);
      auto b = node_of(e.to);
      // Self-edges on a plain task are real cycles; on a group they are
      // internal edges and are checked separately.
      if (a == b && is_group(a)) continue;
      out.emplace(a, b);
    }
    return {out.begin(), out.end()};
  }

  // Edges between two members of `group`.
  std::vector<std::pair<std::string, std::string>> internal_edges(const std::string& group) const {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& e : spec_.edges) {
      const TaskSpec* a = spec_.find_task(e.from);
      const TaskSpec* b = spec_.find_task(e.to);
      if (a && b && a->group == group && b->group == group) out.emplace(e.from, e.to);
    }
    return {out.begin(), out.end()};
  }

  std::vector<std::string> sources(const std::string& group) const {
    auto members = spec_.members(group);
    auto internal = internal_edges(group);
    std::vector<std::string> out;
    for (const auto& m : members) {
      bool has_up = std::any_of(internal.begin(), internal.end(), [&](auto& e) { return e.second == m; });
      if (!has_up) out.push_back(m);
    }
    return out;
  }

  std::vector<std::string> sinks(const std::string& group) const {
    auto members = spec_.members(group);
    auto internal = internal_edges(group);
    std::vector<std::string> out;
    for (const auto& m : members) {
      bool has_down = std::any_of(internal.begin(), internal.end(), [&](auto& e) { return e.first == m; });
      if (!has_down) out.push_back(m);
    }
    return out;
  }

  bool known(const std::string& id) const { return is_task(id) || is_group(id); }

 private:
  void add_node(const std::string& node) {
    if (order_.emplace(node, nodes_.size()).second) nodes_.push_back(node);
  }

  const WorkflowSpec& spec_;
  std::vector<std::string> nodes_;
  std::unordered_map<std::string, std::size_t> order_;
};

// Strongly connected components that contain a cycle, members listed in
// `order` order. Tarjan's algorithm.
std::vector<std::vector<std::string>> cyclic_components(
    const std::vector<std::string>& order, const std::vector<std::pair<std::string, std::string>>& edges) {
  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < order.size(); ++i) index_of[order[i]] = i;
  std::vector<std::vector<std::size_t>> adj(order.size());
  std::vector<bool> self_loop(order.size(), false);
  for (const auto& [a, b] : edges) {
    auto ia = index_of.find(a);
    auto ib = index_of.find(b);
    if (ia == index_of.end() || ib == index_of.end()) continue;
    adj[ia->second].push_back(ib->second);
    if (ia->second == ib->second) self_loop[ia->second] = true;
  }

  const std::size_t n = order.size();
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  int counter = 0;
  std::vector<std::vector<std::string>> out;

  std::function<void(std::size_t)> strongconnect = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t w : adj[v]) {
      if (index[w] < 0) {
        strongconnect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::size_t> comp;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      if (comp.size() > 1 || self_loop[v]) {
        std::sort(comp.begin(), comp.end());
        std::vector<std::string> names;
        for (auto i : comp) names.push_back(order[i]);
        out.push_back(std::move(names));
      }
    }
  };
  for (std::size_t v = 0; v < n; ++v)
    if (index[v] < 0) strongconnect(v);
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    return index_of[a.front()] < index_of[b.front()];
  });
  return out;
}

std::string join(const std::vector<std::string>& items, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

bool weakly_connected(const std::vector<std::string>& members,
                      const std::vector<std::pair<std::string, std::string>>& edges) {
  if (members.size() <= 1) return true;
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::set<std::string> seen{members.front()};
  std::deque<std::string> queue{members.front()};
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    for (const auto& w : adj[v])
      if (seen.insert(w).second) queue.push_back(w);
  }
  return seen.size() == members.size();
}

}  // namespace

std::vector<Edge> task_edges(const WorkflowSpec& spec) {
  Graph g(spec);
  std::set<Edge> out;
  for (const auto& e : spec.edges) {
    if (!g.known(e.from) || !g.known(e.to)) continue;
    auto ups = g.is_group(e.from) ? g.sinks(e.from) : std::vector<std::string>{e.from};
    auto downs = g.is_group(e.to) ? g.sources(e.to) : std::vector<std::string>{e.to};
    for (const auto& u : ups)
      for (const auto& d : downs) out.insert(Edge{u, d});
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> upstream_tasks(const WorkflowSpec& spec, const std::string& task) {
  std::vector<std::string> out;
  for (const auto& e : task_edges(spec))
    if (e.to == task) out.push_back(e.from);
  return out;
}

bool reaches(const WorkflowSpec& spec, const std::string& from, const std::string& to) {
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& e : task_edges(spec)) adj[e.from].push_back(e.to);
  std::set<std::string> seen{from};
  std::deque<std::string> queue{from};
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    for (const auto& w : adj[v]) {
      if (w == to) return true;
      if (seen.insert(w).second) queue.push_back(w);
    }
  }
  return false;
}

ValidationReport validate(const WorkflowSpec& spec, const std::set<std::string>* known_steps) {
  ValidationReport report;
  auto violate = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

  if (!valid_identifier(spec.name)) violate("workflow: invalid name '" + spec.name + "'");

  std::set<std::string> pool_names;
  for (const auto& p : spec.pools) {
    if (!valid_identifier(p.name)) violate("pool '" + p.name + "': invalid identifier");
    if (!pool_names.insert(p.name).second) violate("duplicate pool: " + p.name);
    if (p.slots < 1) violate("pool " + p.name + ": slots must be >= 1");
  }

  std::set<std::string> ids;
  for (const auto& t : spec.tasks) {
    if (!valid_identifier(t.id)) violate("task '" + t.id + "': invalid identifier");
    if (!ids.insert(t.id).second) violate("duplicate id: " + t.id);
  }
  for (const auto& g : spec.groups) {
    if (!valid_identifier(g.id)) violate("group '" + g.id + "': invalid identifier");
    if (!ids.insert(g.id).second) violate("duplicate id: " + g.id);
  }

  for (const auto& t : spec.tasks) {
    if (!spec.find_pool(t.pool)) violate("task " + t.id + ": unknown pool " + t.pool);
    if (t.group && !spec.find_group(*t.group)) violate("task " + t.id + ": unknown group " + *t.group);
    if (t.action.kind == ActionSpec::Kind::builtin && known_steps && !known_steps->count(t.action.step))
      violate("task " + t.id + ": unknown builtin step " + t.action.step);
    if (t.action.kind == ActionSpec::Kind::sim && t.action.duration.lo_ms > t.action.duration.hi_ms)
      violate("task " + t.id + ": duration lo > hi");
    if (t.action.kind == ActionSpec::Kind::sim && t.produces && t.action.returns.empty())
      violate("task " + t.id + ": sim action produces " + *t.produces + " but has no returns value");
    if (!t.action.returns.empty() && !t.produces)
      violate("task " + t.id + ": returns value without produces");
  }

  Graph graph(spec);
  bool edges_ok = true;
  for (const auto& e : spec.edges) {
    for (const auto* end : {&e.from, &e.to}) {
      if (!graph.known(*end)) {
        violate("edge " + e.from + " -> " + e.to + ": unknown endpoint " + *end);
        edges_ok = false;
      }
    }
    if (graph.is_group(e.from) && graph.node_of(e.to) == e.from)
      violate("edge " + e.from + " -> " + e.to + ": member depends on its own group");
    if (graph.is_group(e.to) && graph.node_of(e.from) == e.to)
      violate("edge " + e.from + " -> " + e.to + ": group depends on its own member");
  }

  for (const auto& g : spec.groups) {
    if (spec.members(g.id).empty()) violate("group " + g.id + ": no members");
  }

  bool acyclic = true;
  for (const auto& comp : cyclic_components(graph.nodes(), graph.collapsed_edges())) {
    violate("cycle: " + join(comp));
    acyclic = false;
  }
  for (const auto& g : spec.groups) {
    auto members = spec.members(g.id);
    auto internal = graph.internal_edges(g.id);
    auto cycles = cyclic_components(members, internal);
    for (const auto& comp : cycles) violate("cycle: " + join(comp));
    if (!cycles.empty()) {
      acyclic = false;
    } else if (!weakly_connected(members, internal)) {
      violate("group " + g.id + ": members not connected");
    }
  }

  if (!acyclic || !edges_ok) return report;

  for (const auto& g : spec.groups) {
    if (!g.mapped_over) continue;
    const auto& ref = *g.mapped_over;
    const TaskSpec* producer = spec.find_task(ref.task_id);
    if (!producer) {
      violate("group " + g.id + ": mapped_over references unknown task " + ref.task_id);
      continue;
    }
    if (producer->produces != ref.key)
      violate("group " + g.id + ": task " + ref.task_id + " does not produce key " + ref.key);
    if (producer->group && *producer->group == g.id) {
      violate("group " + g.id + ": mapped_over producer " + ref.task_id + " is a member of the group");
      continue;
    }
    if (spec.mapped_group_of(producer->id))
      violate("group " + g.id + ": mapped_over producer " + ref.task_id + " is itself mapped");
    bool upstream = true;
    for (const auto& s : graph.sources(g.id)) upstream = upstream && reaches(spec, producer->id, s);
    if (!upstream)
      violate("group " + g.id + ": mapped_over producer " + ref.task_id + " is not upstream of the group");
  }

  for (const auto& t : spec.tasks) {
    std::vector<const std::string*> templates{&t.action.command, &t.action.returns};
    for (const auto& p : t.params) templates.push_back(&p);
    for (const auto* tmpl : templates) {
      auto refs = scan_template(*tmpl);
      if (refs.uses_map_value && !spec.mapped_group_of(t.id))
        violate("task " + t.id + ": {map_value} used outside a mapped group");
      for (const auto& r : refs.refs) {
        const TaskSpec* p = spec.find_task(r.task_id);
        if (!p || p->produces != r.key || !reaches(spec, p->id, t.id))
          violate("task " + t.id + ": template references {" + r.str() + "} which is not produced upstream");
      }
    }
  }
  return report;
}

std::vector<std::set<std::string>> topo_layers(const WorkflowSpec& spec) {
  Graph graph(spec);
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& n : graph.nodes()) indegree[n] = 0;
  for (const auto& [a, b] : graph.collapsed_edges()) {
    adj[a].push_back(b);
    ++indegree[b];
  }

  std::vector<std::set<std::string>> layers;
  std::set<std::string> current;
  for (const auto& [n, d] : indegree)
    if (d == 0) current.insert(n);
  std::size_t placed = 0;
  while (!current.empty()) {
    std::set<std::string> next;
    for (const auto& n : current)
      for (const auto& w : adj[n])
        if (--indegree[w] == 0) next.insert(w);
    placed += current.size();
    layers.push_back(std::move(current));
    current = std::move(next);
  }
  if (placed != graph.nodes().size()) {
    std::vector<std::string> stuck;
    for (const auto& n : graph.nodes())
      if (indegree[n] > 0) stuck.push_back(n);
    throw Error("cycle: " + join(stuck));
  }
  for (const auto& g : spec.groups) {
    auto cycles = cyclic_components(spec.members(g.id), graph.internal_edges(g.id));
    if (!cycles.empty()) throw Error("cycle: " + join(cycles.front()));
  }
  return layers;
}

std::vector<InstanceSet> expand(const WorkflowSpec& spec, const std::string& group,
                                const CommValue& values) {
  if (!values.is_list()) throw Error("group " + group + ": mapped value is not a list");
  if (!spec.find_group(group)) throw Error("unknown group " + group);
  const auto members = spec.members(group);
  std::vector<Edge> internal;
  for (const auto& e : task_edges(spec)) {
    const TaskSpec* a = spec.find_task(e.from);
    const TaskSpec* b = spec.find_task(e.to);
    if (a->group == group && b->group == group) internal.push_back(e);
  }

  const auto& items = values.as_list();
  std::vector<InstanceSet> sets;
  sets.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    InstanceSet set;
    set.map_index = static_cast<int>(i);
    set.value = items[i];
    for (const auto& m : members) set.instances.push_back(InstanceKey{m, set.map_index});
    for (const auto& e : internal)
      set.internal_edges.push_back({InstanceKey{e.from, set.map_index}, InstanceKey{e.to, set.map_index}});
    sets.push_back(std::move(set));
  }
  return sets;
}

InstanceGraph expanded_graph(const WorkflowSpec& spec, const std::map<std::string, TextList>& bindings) {
  std::map<std::string, std::vector<InstanceKey>> instances_of;
  InstanceGraph out;
  for (const auto& t : spec.tasks) {
    auto& list = instances_of[t.id];
    if (const GroupSpec* g = spec.mapped_group_of(t.id)) {
      auto it = bindings.find(g->id);
      if (it == bindings.end()) continue;
      for (std::size_t i = 0; i < it->second.size(); ++i) list.push_back({t.id, static_cast<int>(i)});
    } else {
      list.push_back({t.id, std::nullopt});
    }
    out.nodes.insert(out.nodes.end(), list.begin(), list.end());
  }
  for (const auto& e : task_edges(spec)) {
    const GroupSpec* ga = spec.mapped_group_of(e.from);
    const GroupSpec* gb = spec.mapped_group_of(e.to);
    const auto& ups = instances_of[e.from];
    const auto& downs = instances_of[e.to];
    if (ga && ga == gb) {
      for (std::size_t i = 0; i < ups.size(); ++i) out.edges.push_back({ups[i], downs[i]});
    } else {
      for (const auto& u : ups)
        for (const auto& d : downs) out.edges.push_back({u, d});
    }
  }
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

}  // namespace screenflow
