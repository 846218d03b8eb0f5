// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "screenflow/events.hpp"
#include "screenflow/workflow.hpp"

namespace screenflow {

/// A resource chart found an interval that the scheduler should never have
/// produced (unknown pool, slot out of range, two instances on one slot).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

struct Interval {
  InstanceKey instance;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::string pool;
  std::optional<int> slot;
  bool ok = true;

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Pairs each START with its END_OK/END_FAIL. Sorted by start, then instance.
std::vector<Interval> intervals(const EventLog& log);

enum class ChartFormat { svg, text };

std::optional<ChartFormat> parse_chart_format(std::string_view text) noexcept;

struct ChartScale {
  double px_per_ms = 0.1;
  int row_height = 18;
  int label_width = 170;
};

/// Text charts use one column per max(1, span / 120) ms.
std::int64_t text_ms_per_column(std::int64_t span_ms) noexcept;

/// One row per task id in order of first start. SVG rectangles are
/// translucent so overlapping instances read darker; text cells use `#` for
/// one instance and `=` for two or more.
std::string render_task_gantt(std::span<const Interval> items, ChartFormat format, const ChartScale& scale = {});

/// One row per (pool, slot) grouped under pool headers, empty slots
/// included. Throws IntegrityError on an impossible assignment.
std::string render_resource_gantt(std::span<const Interval> items, std::span<const PoolSpec> pools,
                                  ChartFormat format, const ChartScale& scale = {});

struct WhiskerStats {
  double min = 0;
  double q25 = 0;
  double median = 0;
  double q75 = 0;
  double max = 0;
};

/// Linear interpolation between closest ranks at p * (n - 1).
double quantile_sorted(std::span<const double> sorted, double p);

/// Throws Error on empty input.
WhiskerStats whiskers(std::vector<double> samples);

/// Reads the last PHASES line of every `*.log` under `logs_dir` and returns
/// the named phase, files taken in name order. A malformed PHASES line
/// throws ParseError.
std::vector<double> collect_phase_samples(const std::filesystem::path& logs_dir, std::string_view phase);

}  // namespace screenflow
