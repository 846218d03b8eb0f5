// SPDX-License-Identifier: Apache-2.0
#include "screenflow/value.hpp"

#include <charconv>

namespace screenflow {

std::int64_t CommValue::as_int() const {
  if (auto* v = std::get_if<std::int64_t>(&payload_)) return *v;
  if (auto* s = std::get_if<std::string>(&payload_)) {
    if (auto parsed = parse_int(*s)) return *parsed;
  }
  throw Error("comm value is not an integer: " + render());
}

const std::string& CommValue::as_text() const {
  if (auto* s = std::get_if<std::string>(&payload_)) return *s;
  throw Error("comm value is not text");
}

const TextList& CommValue::as_list() const {
  if (auto* l = std::get_if<TextList>(&payload_)) return *l;
  throw Error("comm value is not a list");
}

std::string CommValue::render() const {
  switch (type()) {
    case Type::integer:
      return std::to_string(std::get<std::int64_t>(payload_));
    case Type::text:
      return std::get<std::string>(payload_);
    case Type::list: {
      std::string out;
      const auto& items = std::get<TextList>(payload_);
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ',';
        out += items[i];
      }
      return out;
    }
  }
  return {};
}

std::string_view CommValue::type_name() const noexcept {
  switch (type()) {
    case Type::integer: return "int";
    case Type::text: return "str";
    case Type::list: return "list";
  }
  return "str";
}

// List elements are escaped individually (commas included) and joined with
// bare commas. An empty element is written as `\e` so that an empty field
// stays reserved for the empty list.
std::string CommValue::encode() const {
  if (type() != Type::list) return escape_field(render());
  std::string out;
  const auto& items = std::get<TextList>(payload_);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i].empty() ? std::string("\\e") : escape_field(items[i], true);
  }
  return out;
}

CommValue CommValue::decode(std::string_view type_name, std::string_view encoded) {
  if (type_name == "int") {
    auto v = parse_int(encoded);
    if (!v) throw Error("invalid int payload: " + std::string(encoded));
    return of_int(*v);
  }
  if (type_name == "str") return of_text(unescape_field(encoded));
  if (type_name != "list") throw Error("unknown value type: " + std::string(type_name));

  TextList items;
  if (encoded.empty()) return of_list(std::move(items));
  std::string current;
  bool empty_marker = false;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    char c = encoded[i];
    if (c == '\\') {
      if (i + 1 == encoded.size()) throw Error("dangling escape at end of value");
      char n = encoded[++i];
      switch (n) {
        case 'n': current += '\n'; break;
        case 'r': current += '\r'; break;
        case 'e': empty_marker = true; break;
        default: current += n; break;
      }
    } else if (c == ',') {
      items.push_back(empty_marker ? std::string{} : std::move(current));
      current.clear();
      empty_marker = false;
    } else {
      current += c;
    }
  }
  items.push_back(empty_marker ? std::string{} : std::move(current));
  return of_list(std::move(items));
}

std::string escape_field(std::string_view raw, bool escape_comma) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case ',':
        if (escape_comma) out += '\\';
        out += ',';
        break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(std::string_view encoded) {
  std::string out;
  out.reserve(encoded.size());
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    char c = encoded[i];
    if (c == '\\') {
      if (i + 1 == encoded.size()) throw Error("dangling escape at end of value");
      char n = encoded[++i];
      if (n == 'n') out += '\n';
      else if (n == 'r') out += '\r';
      else out += n;
    } else {
      out += c;
    }
  }
  return out;
}

std::optional<std::int64_t> parse_int(std::string_view text) noexcept {
  if (text.empty()) return std::nullopt;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace screenflow
