// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "screenflow/workflow.hpp"

namespace screenflow {

enum class EventKind { ready, start, end_ok, end_fail, upstream_failed };

std::string_view to_string(EventKind kind) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view text) noexcept;

/// One scheduler transition. Serialized as
/// `<t_ms> <kind> <task_id> <map_index|-> <pool> <slot|->`.
struct Event {
  std::int64_t t_ms = 0;
  EventKind kind = EventKind::ready;
  InstanceKey instance;
  std::string pool;
  std::optional<int> slot;

  friend bool operator==(const Event&, const Event&) = default;
};

using EventLog = std::vector<Event>;

std::string format_event(const Event& e);
/// Throws ParseError carrying `lineno`.
Event parse_event(std::string_view line, std::size_t lineno = 1);

std::string format_event_log(const EventLog& log);
EventLog parse_event_log(std::string_view text);
EventLog read_event_log(const std::filesystem::path& path);
void write_event_log(const std::filesystem::path& path, const EventLog& log);

}  // namespace screenflow
