// SPDX-License-Identifier: Apache-2.0
#include "screenflow/comm_store.hpp"

#include <sstream>

namespace screenflow {

namespace {

bool is_ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c == '-';
}

std::size_t ident_end(std::string_view s, std::size_t pos) {
  while (pos < s.size() && is_ident_char(s[pos])) ++pos;
  return pos;
}

constexpr std::string_view kMapValue = "map_value";

// A placeholder found at `open`; `length` covers the braces.
struct Placeholder {
  std::size_t length = 0;
  bool map_value = false;
  CommRef ref;
};

std::optional<Placeholder> match_placeholder(std::string_view s, std::size_t open) {
  std::size_t a = open + 1;
  std::size_t a_end = ident_end(s, a);
  if (a_end == a || a_end >= s.size()) return std::nullopt;
  if (s[a_end] == '}') {
    if (s.substr(a, a_end - a) != kMapValue) return std::nullopt;
    return Placeholder{a_end - open + 1, true, {}};
  }
  if (s[a_end] != '.') return std::nullopt;
  std::size_t b = a_end + 1;
  std::size_t b_end = ident_end(s, b);
  if (b_end == b || b_end >= s.size() || s[b_end] != '}') return std::nullopt;
  return Placeholder{b_end - open + 1, false,
                     CommRef{std::string(s.substr(a, a_end - a)), std::string(s.substr(b, b_end - b))}};
}

std::string map_index_field(const std::optional<int>& idx) {
  return idx ? std::to_string(*idx) : std::string("-");
}

}  // namespace

TemplateRefs scan_template(std::string_view tmpl) {
  TemplateRefs out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') continue;
    if (auto ph = match_placeholder(tmpl, i)) {
      if (ph->map_value) out.uses_map_value = true;
      else out.refs.push_back(ph->ref);
      i += ph->length - 1;
    }
  }
  return out;
}

std::string format_journal_record(const JournalRecord& r) {
  std::ostringstream os;
  os << r.t_ms << ' ' << r.key.task_id << ' ' << r.key.key << ' ' << map_index_field(r.key.map_index)
     << ' ' << r.value.type_name() << ' ' << r.value.encode();
  return os.str();
}

JournalRecord parse_journal_record(std::string_view line) {
  // Five space-separated fields, then the (possibly empty) encoded payload.
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  for (int i = 0; i < 5; ++i) {
    std::size_t sp = line.find(' ', pos);
    if (sp == std::string_view::npos) {
      throw Error("malformed journal record: " + std::string(line));
    }
    fields.push_back(line.substr(pos, sp - pos));
    pos = sp + 1;
  }
  JournalRecord r;
  auto t = parse_int(fields[0]);
  if (!t) throw Error("malformed journal timestamp: " + std::string(fields[0]));
  r.t_ms = *t;
  r.key.task_id = std::string(fields[1]);
  r.key.key = std::string(fields[2]);
  if (fields[3] != "-") {
    auto idx = parse_int(fields[3]);
    if (!idx) throw Error("malformed journal map index: " + std::string(fields[3]));
    r.key.map_index = static_cast<int>(*idx);
  }
  r.value = CommValue::decode(fields[4], line.substr(pos));
  return r;
}

CommStore::CommStore(std::filesystem::path journal) {
  journal_.emplace(journal, std::ios::out | std::ios::app | std::ios::binary);
  if (!*journal_) throw Error("cannot open comm journal " + journal.string());
}

void CommStore::publish(const CommKey& key, CommValue value, std::int64_t t_ms) {
  std::lock_guard lock(mutex_);
  if (values_.count(key)) {
    throw DuplicateKeyError("duplicate publish for " + key.task_id + "." + key.key + "[" +
                            map_index_field(key.map_index) + "]");
  }
  JournalRecord record{t_ms, key, value};
  if (journal_) {
    *journal_ << format_journal_record(record) << '\n';
    journal_->flush();
  }
  values_.emplace(key, std::move(value));
  records_.push_back(std::move(record));
}

std::optional<CommValue> CommStore::get(const CommKey& key) const {
  std::lock_guard lock(mutex_);
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<CommValue> CommStore::lookup(const CommRef& ref,
                                           const std::optional<MapScope>& scope) const {
  if (auto v = get(CommKey{ref.task_id, ref.key, std::nullopt})) return v;
  if (scope) return get(CommKey{ref.task_id, ref.key, scope->map_index});
  return std::nullopt;
}

std::string CommStore::resolve(std::string_view tmpl, const std::optional<MapScope>& scope) const {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{') {
      if (auto ph = match_placeholder(tmpl, i)) {
        if (ph->map_value) {
          if (!scope) throw UnresolvedPlaceholderError("{map_value} used outside a mapped instance");
          out += scope->map_value;
        } else {
          auto v = lookup(ph->ref, scope);
          if (!v) throw UnresolvedPlaceholderError("unresolved placeholder {" + ph->ref.str() + "}");
          out += v->render();
        }
        i += ph->length - 1;
        continue;
      }
    }
    out += tmpl[i];
  }
  return out;
}

std::vector<JournalRecord> CommStore::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::vector<JournalRecord> CommStore::load_journal(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read comm journal " + path.string());
  std::vector<JournalRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_journal_record(line));
  }
  return out;
}

}  // namespace screenflow
