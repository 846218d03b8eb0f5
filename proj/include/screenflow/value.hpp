// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace screenflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A failure that carries the 1-based line it was found on.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error("line " + std::to_string(line) + ": " + reason), line_(line), reason_(reason) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

using TextList = std::vector<std::string>;

/// Payload exchanged between tasks through the comm store.
class CommValue {
 public:
  enum class Type { integer, text, list };

  CommValue() : payload_(std::string{}) {}
  static CommValue of_int(std::int64_t v) { return CommValue(Payload{v}); }
  static CommValue of_text(std::string v) { return CommValue(Payload{std::move(v)}); }
  static CommValue of_list(TextList v) { return CommValue(Payload{std::move(v)}); }

  Type type() const noexcept { return static_cast<Type>(payload_.index()); }
  bool is_list() const noexcept { return type() == Type::list; }

  std::int64_t as_int() const;
  const std::string& as_text() const;
  const TextList& as_list() const;

  /// Textual form used in template substitution; lists are comma-joined.
  std::string render() const;

  /// Journal type tag: `int`, `str` or `list`.
  std::string_view type_name() const noexcept;

  /// Escaped single-line encoding of the payload.
  std::string encode() const;
  static CommValue decode(std::string_view type_name, std::string_view encoded);

  friend bool operator==(const CommValue&, const CommValue&) = default;

 private:
  using Payload = std::variant<std::int64_t, std::string, TextList>;
  explicit CommValue(Payload p) : payload_(std::move(p)) {}

  Payload payload_;
};

/// Backslash-escapes `\`, newline and carriage return (and `,` when `escape_comma`).
std::string escape_field(std::string_view raw, bool escape_comma = false);
std::string unescape_field(std::string_view encoded);

/// Parses a full decimal int64 (optional leading '-'); nullopt otherwise.
std::optional<std::int64_t> parse_int(std::string_view text) noexcept;

}  // namespace screenflow
