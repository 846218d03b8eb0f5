// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "screenflow/value.hpp"
#include "screenflow/workflow.hpp"

namespace screenflow {

struct CommKey {
  std::string task_id;
  std::string key = kDefaultCommKey;
  std::optional<int> map_index;

  friend auto operator<=>(const CommKey&, const CommKey&) = default;
};

class DuplicateKeyError : public Error {
 public:
  using Error::Error;
};

class UnresolvedPlaceholderError : public Error {
 public:
  using Error::Error;
};

/// Placeholders in a template: `{task.key}` references and `{map_value}`.
/// Any other brace text is literal.
struct TemplateRefs {
  std::vector<CommRef> refs;
  bool uses_map_value = false;
};

TemplateRefs scan_template(std::string_view tmpl);

/// Fan-out element bound to a mapped instance.
struct MapScope {
  int map_index = 0;
  std::string map_value;
};

struct JournalRecord {
  std::int64_t t_ms = 0;
  CommKey key;
  CommValue value;

  friend bool operator==(const JournalRecord&, const JournalRecord&) = default;
};

std::string format_journal_record(const JournalRecord& record);
JournalRecord parse_journal_record(std::string_view line);

/// Write-once keyed store shared by all task instances of a run. When a
/// journal path is given every publish is appended to it before returning.
class CommStore {
 public:
  CommStore() = default;
  explicit CommStore(std::filesystem::path journal);

  CommStore(const CommStore&) = delete;
  CommStore& operator=(const CommStore&) = delete;

  /// Throws DuplicateKeyError if `key` was already published.
  void publish(const CommKey& key, CommValue value, std::int64_t t_ms = 0);

  std::optional<CommValue> get(const CommKey& key) const;

  /// Lookup used by templates: an unmapped publish under (task, key) wins;
  /// otherwise the value published by the same map index as `scope`.
  std::optional<CommValue> lookup(const CommRef& ref, const std::optional<MapScope>& scope) const;

  /// Throws UnresolvedPlaceholderError when a placeholder cannot be filled.
  std::string resolve(std::string_view tmpl, const std::optional<MapScope>& scope = std::nullopt) const;

  std::vector<JournalRecord> records() const;

  /// Reads a journal file back into records.
  static std::vector<JournalRecord> load_journal(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::map<CommKey, CommValue> values_;
  std::vector<JournalRecord> records_;
  std::optional<std::ofstream> journal_;
};

}  // namespace screenflow
