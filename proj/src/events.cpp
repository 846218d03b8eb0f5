// SPDX-License-Identifier: Apache-2.0
#include "screenflow/events.hpp"

#include <fstream>
#include <sstream>

namespace screenflow {

std::string_view to_string(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::ready: return "READY";
    case EventKind::start: return "START";
    case EventKind::end_ok: return "END_OK";
    case EventKind::end_fail: return "END_FAIL";
    case EventKind::upstream_failed: return "UPSTREAM_FAILED";
  }
  return "READY";
}

std::optional<EventKind> parse_event_kind(std::string_view text) noexcept {
  for (auto k : {EventKind::ready, EventKind::start, EventKind::end_ok, EventKind::end_fail,
                 EventKind::upstream_failed}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::string format_event(const Event& e) {
  std::ostringstream os;
  os << e.t_ms << ' ' << to_string(e.kind) << ' ' << e.instance.task_id << ' ';
  if (e.instance.map_index) os << *e.instance.map_index;
  else os << '-';
  os << ' ' << e.pool << ' ';
  if (e.slot) os << *e.slot;
  else os << '-';
  return os.str();
}

Event parse_event(std::string_view line, std::size_t lineno) {
  std::istringstream in{std::string(line)};
  std::string t, kind, task, idx, pool, slot, extra;
  if (!(in >> t >> kind >> task >> idx >> pool >> slot) || (in >> extra))
    throw ParseError(lineno, "expected 6 fields");
  Event e;
  auto tv = parse_int(t);
  if (!tv || *tv < 0) throw ParseError(lineno, "invalid time '" + t + "'");
  e.t_ms = *tv;
  auto k = parse_event_kind(kind);
  if (!k) throw ParseError(lineno, "unknown event kind '" + kind + "'");
  e.kind = *k;
  e.instance.task_id = task;
  if (idx != "-") {
    auto v = parse_int(idx);
    if (!v || *v < 0) throw ParseError(lineno, "invalid map index '" + idx + "'");
    e.instance.map_index = static_cast<int>(*v);
  }
  e.pool = pool;
  if (slot != "-") {
    auto v = parse_int(slot);
    if (!v || *v < 0) throw ParseError(lineno, "invalid slot '" + slot + "'");
    e.slot = static_cast<int>(*v);
  }
  return e;
}

std::string format_event_log(const EventLog& log) {
  std::string out;
  for (const auto& e : log) {
    out += format_event(e);
    out += '\n';
  }
  return out;
}

EventLog parse_event_log(std::string_view text) {
  EventLog log;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++lineno;
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    log.push_back(parse_event(line, lineno));
  }
  return log;
}

EventLog read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read event log " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_event_log(ss.str());
}

void write_event_log(const std::filesystem::path& path, const EventLog& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write event log " + path.string());
  out << format_event_log(log);
}

}  // namespace screenflow
