// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations used only by tests. They are written from the
// published definitions and share no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace oracle {

// ---- hashing and random streams -------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    h = h ^ static_cast<std::uint8_t>(bytes[i]);
    h = h * 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x = x + 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct Xoshiro {
  std::uint64_t s[4];

  explicit Xoshiro(std::uint64_t seed) {
    std::uint64_t sm = seed;
    s[0] = splitmix64(sm);
    s[1] = splitmix64(sm);
    s[2] = splitmix64(sm);
    s[3] = splitmix64(sm);
  }

  static std::uint64_t rotl(std::uint64_t x, unsigned k) { return (x << k) | (x >> (64u - k)); }

  std::uint64_t next() {
    std::uint64_t out = rotl(s[1] * 5, 7) * 9;
    std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return out;
  }

  // Reject draws below 2^64 mod span so every residue is equally likely.
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    std::uint64_t reject_below = (~span + 1) % span;
    for (;;) {
      std::uint64_t x = next();
      if (x >= reject_below) return lo + static_cast<std::int64_t>(x % span);
    }
  }
};

inline Xoshiro substream(std::uint64_t seed, const std::string& task, std::optional<int> index) {
  std::string name = task;
  name += '#';
  name += index ? std::to_string(*index) : "-";
  return Xoshiro(seed ^ fnv1a64(name));
}

// ---- statistics -------------------------------------------------------------

// Sort, then read the value at fractional rank p * (n - 1).
inline double quantile(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const std::size_t below = static_cast<std::size_t>(pos);
  if (below + 1 >= xs.size()) return xs.back();
  const double frac = pos - static_cast<double>(below);
  return xs[below] * (1.0 - frac) + xs[below + 1] * frac;
}

inline bool close_rel(double a, double b, double rel = 1e-9) {
  const double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) <= rel * scale;
}

// ---- SDF ------------------------------------------------------------------

// Number of records: delimiter lines plus a trailing record with content.
inline std::size_t count_sdf_records(std::string_view text) {
  std::size_t count = 0;
  bool pending_content = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    std::string stripped;
    for (char c : line)
      if (c != ' ' && c != '\t' && c != '\r') stripped += c;
    if (stripped == "$$$$") {
      ++count;
      pending_content = false;
    } else if (!stripped.empty()) {
      pending_content = true;
    }
    start = end + 1;
  }
  return count + (pending_content ? 1 : 0);
}

// ---- ranking ------------------------------------------------------------------

struct Row {
  std::string name;
  std::string batch;
  double energy;
};

// Bottom-up merge sort on (energy, name); stability keeps input order, so
// feeding batches in index order breaks the remaining ties by batch, then
// position.
inline std::vector<Row> rank(std::vector<Row> rows) {
  auto before = [](const Row& a, const Row& b) {
    if (a.energy != b.energy) return a.energy < b.energy;
    return a.name < b.name;
  };
  std::vector<Row> tmp(rows.size());
  for (std::size_t width = 1; width < rows.size(); width *= 2) {
    for (std::size_t lo = 0; lo < rows.size(); lo += 2 * width) {
      std::size_t mid = std::min(lo + width, rows.size());
      std::size_t hi = std::min(lo + 2 * width, rows.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) tmp[k++] = before(rows[j], rows[i]) ? rows[j++] : rows[i++];
      while (i < mid) tmp[k++] = rows[i++];
      while (j < hi) tmp[k++] = rows[j++];
    }
    std::swap(rows, tmp);
  }
  return rows;
}

}  // namespace oracle
