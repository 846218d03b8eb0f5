// SPDX-License-Identifier: Apache-2.0
#include "screenflow/gantt.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "screenflow/execution.hpp"

namespace screenflow {

namespace {

constexpr int kTopMargin = 28;
constexpr int kTextColumns = 120;

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::int64_t span_of(std::span<const Interval> items) {
  std::int64_t end = 0;
  for (const auto& i : items) end = std::max(end, i.end_ms);
  return end;
}

std::vector<std::string> task_rows(std::span<const Interval> items) {
  std::vector<std::string> rows;
  std::set<std::string> seen;
  for (const auto& i : items)
    if (seen.insert(i.instance.task_id).second) rows.push_back(i.instance.task_id);
  return rows;
}

std::string label_of(const Interval& i) {
  return i.instance.map_index ? std::to_string(*i.instance.map_index) : std::string{};
}

// ---- svg ------------------------------------------------------------------

class SvgWriter {
 public:
  SvgWriter(const ChartScale& scale, std::int64_t span, std::size_t rows) : scale_(scale) {
    width_ = scale.label_width + scale.px_per_ms * static_cast<double>(span) + 20;
    height_ = kTopMargin + scale.row_height * static_cast<int>(rows) + 10;
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_) << "\" height=\"" << height_
         << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out_ << "<rect x=\"0\" y=\"0\" width=\"" << num(width_) << "\" height=\"" << height_ << "\" fill=\"white\"/>\n";
    axis(span);
  }

  double x(std::int64_t t) const { return scale_.label_width + scale_.px_per_ms * static_cast<double>(t); }
  int y(std::size_t row) const { return kTopMargin + scale_.row_height * static_cast<int>(row); }

  void row_label(std::size_t row, std::string_view text, bool header = false) {
    out_ << "<text x=\"" << (header ? 4 : 12) << "\" y=\"" << y(row) + scale_.row_height - 5 << "\""
         << (header ? " font-weight=\"bold\"" : "") << ">" << xml_escape(text) << "</text>\n";
  }

  void row_line(std::size_t row) {
    out_ << "<line x1=\"0\" y1=\"" << y(row) << "\" x2=\"" << num(width_) << "\" y2=\"" << y(row)
         << "\" stroke=\"#dddddd\"/>\n";
  }

  void bar(std::size_t row, const Interval& i, const char* color, double opacity, std::string_view label) {
    const double x0 = x(i.start_ms);
    const double w = std::max(1.0, x(i.end_ms) - x0);
    out_ << "<rect x=\"" << num(x0) << "\" y=\"" << y(row) + 2 << "\" width=\"" << num(w) << "\" height=\""
         << scale_.row_height - 4 << "\" fill=\"" << color << "\" fill-opacity=\"" << num(opacity) << "\""
         << (i.ok ? "" : " stroke=\"#d62728\" stroke-width=\"1.5\"") << "><title>" << xml_escape(i.instance.str())
         << " " << i.start_ms << "-" << i.end_ms << " ms</title></rect>\n";
    if (!label.empty()) {
      out_ << "<text x=\"" << num(x0 + w / 2) << "\" y=\"" << y(row) + scale_.row_height - 5
           << "\" fill=\"white\" font-weight=\"bold\" text-anchor=\"middle\">" << xml_escape(label) << "</text>\n";
    }
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  void axis(std::int64_t span) {
    // Tick every power-of-ten multiple that leaves at least 60 px between ticks.
    std::int64_t step = 1;
    while (scale_.px_per_ms * static_cast<double>(step) < 60) step *= 10;
    for (std::int64_t t = 0; t <= span; t += step) {
      out_ << "<line x1=\"" << num(x(t)) << "\" y1=\"" << kTopMargin - 6 << "\" x2=\"" << num(x(t)) << "\" y2=\""
           << height_ - 10 << "\" stroke=\"#eeeeee\"/>\n";
      out_ << "<text x=\"" << num(x(t)) << "\" y=\"" << kTopMargin - 10 << "\" text-anchor=\"middle\">" << t
           << "</text>\n";
    }
  }

  ChartScale scale_;
  double width_ = 0;
  int height_ = 0;
  std::ostringstream out_;
};

// ---- text -----------------------------------------------------------------

class TextGrid {
 public:
  explicit TextGrid(std::int64_t span)
      : span_(span), ms_per_col_(text_ms_per_column(span)), cols_((span + ms_per_col_ - 1) / ms_per_col_) {}

  // Peak number of simultaneously open intervals inside each column; touching
  // half-open intervals do not count as overlapping.
  std::vector<int> coverage(const std::vector<const Interval*>& row) const {
    std::vector<int> cells(static_cast<std::size_t>(cols_), 0);
    std::vector<std::pair<std::int64_t, int>> edges;
    for (std::int64_t c = 0; c < cols_; ++c) {
      const auto c0 = c * ms_per_col_, c1 = c0 + ms_per_col_;
      edges.clear();
      int points = 0;
      for (const auto* i : row) {
        if (i->start_ms == i->end_ms) {
          points += i->start_ms >= c0 && i->start_ms < c1;
        } else if (i->start_ms < c1 && i->end_ms > c0) {
          edges.emplace_back(std::max(i->start_ms, c0), 1);
          edges.emplace_back(std::min(i->end_ms, c1), -1);
        }
      }
      std::sort(edges.begin(), edges.end());
      int open = 0, peak = 0;
      for (const auto& [t, d] : edges) peak = std::max(peak, open += d);
      cells[static_cast<std::size_t>(c)] = std::max(peak, points > 0 ? 1 : 0);
    }
    return cells;
  }

  std::string header() const {
    return "# 1 column = " + std::to_string(ms_per_col_) + " ms, span " + std::to_string(span_) + " ms\n";
  }

 private:
  std::int64_t span_;
  std::int64_t ms_per_col_;
  std::int64_t cols_;
};

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string cells_to_text(const std::vector<int>& cells) {
  std::string out;
  for (int n : cells) out += n == 0 ? '.' : n == 1 ? '#' : '=';
  return out;
}

struct SlotRow {
  std::string pool;
  int slot;
  std::vector<const Interval*> items;
};

std::vector<SlotRow> slot_rows(std::span<const Interval> items, std::span<const PoolSpec> pools) {
  std::vector<SlotRow> rows;
  std::map<std::string, std::size_t> first_row;
  for (const auto& p : pools) {
    first_row[p.name] = rows.size();
    for (int s = 0; s < p.slots; ++s) rows.push_back({p.name, s, {}});
  }
  for (const auto& i : items) {
    auto it = first_row.find(i.pool);
    if (it == first_row.end()) throw IntegrityError(i.instance.str() + ": unknown pool '" + i.pool + "'");
    if (!i.slot) throw IntegrityError(i.instance.str() + ": no slot");
    const auto pool = std::find_if(pools.begin(), pools.end(), [&](const PoolSpec& p) { return p.name == i.pool; });
    if (*i.slot < 0 || *i.slot >= pool->slots) {
      throw IntegrityError(i.instance.str() + ": slot " + std::to_string(*i.slot) + " out of range for pool " +
                           i.pool + " (" + std::to_string(pool->slots) + " slots)");
    }
    rows[it->second + static_cast<std::size_t>(*i.slot)].items.push_back(&i);
  }
  for (auto& row : rows) {
    std::sort(row.items.begin(), row.items.end(), [](const Interval* a, const Interval* b) {
      return std::tie(a->start_ms, a->end_ms, a->instance) < std::tie(b->start_ms, b->end_ms, b->instance);
    });
    for (std::size_t k = 1; k < row.items.size(); ++k) {
      const auto* prev = row.items[k - 1];
      const auto* cur = row.items[k];
      if (cur->start_ms < prev->end_ms) {
        throw IntegrityError(row.pool + " slot " + std::to_string(row.slot) + ": " + prev->instance.str() +
                             " and " + cur->instance.str() + " overlap");
      }
    }
  }
  return rows;
}

}  // namespace

std::vector<Interval> intervals(const EventLog& log) {
  std::map<InstanceKey, const Event*> open;
  std::vector<Interval> out;
  for (const auto& e : log) {
    if (e.kind == EventKind::start) {
      if (!open.emplace(e.instance, &e).second) throw Error("second START for " + e.instance.str());
    } else if (e.kind == EventKind::end_ok || e.kind == EventKind::end_fail) {
      auto it = open.find(e.instance);
      if (it == open.end()) throw Error("END without START for " + e.instance.str());
      const Event& s = *it->second;
      if (e.t_ms < s.t_ms) throw Error(e.instance.str() + " ends before it starts");
      out.push_back(Interval{e.instance, s.t_ms, e.t_ms, s.pool, s.slot, e.kind == EventKind::end_ok});
      open.erase(it);
    }
  }
  if (!open.empty()) throw Error("unterminated " + open.begin()->first.str());
  std::sort(out.begin(), out.end(), [](const Interval& a, const Interval& b) {
    return std::tie(a.start_ms, a.instance) < std::tie(b.start_ms, b.instance);
  });
  return out;
}

std::optional<ChartFormat> parse_chart_format(std::string_view text) noexcept {
  if (text == "svg") return ChartFormat::svg;
  if (text == "text" || text == "txt") return ChartFormat::text;
  return std::nullopt;
}

std::int64_t text_ms_per_column(std::int64_t span_ms) noexcept { return std::max<std::int64_t>(1, span_ms / kTextColumns); }

std::string render_task_gantt(std::span<const Interval> items, ChartFormat format, const ChartScale& scale) {
  const auto rows = task_rows(items);
  std::map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < rows.size(); ++r) row_of[rows[r]] = r;
  const auto span = span_of(items);

  if (format == ChartFormat::svg) {
    SvgWriter svg(scale, span, rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      svg.row_line(r);
      svg.row_label(r, rows[r]);
    }
    for (const auto& i : items) {
      const auto r = row_of.at(i.instance.task_id);
      svg.bar(r, i, kPalette[r % std::size(kPalette)], 0.5, {});
    }
    return svg.finish();
  }

  TextGrid grid(span);
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.size());
  std::vector<std::vector<const Interval*>> by_row(rows.size());
  for (const auto& i : items) by_row[row_of.at(i.instance.task_id)].push_back(&i);
  std::string out = grid.header();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += pad(rows[r], width) + " |" + cells_to_text(grid.coverage(by_row[r])) + "|\n";
  }
  return out;
}

std::string render_resource_gantt(std::span<const Interval> items, std::span<const PoolSpec> pools,
                                  ChartFormat format, const ChartScale& scale) {
  const auto rows = slot_rows(items, pools);
  const auto span = span_of(items);
  std::map<std::string, std::size_t> color_of;
  for (const auto& t : task_rows(items)) color_of.emplace(t, color_of.size());

  if (format == ChartFormat::svg) {
    SvgWriter svg(scale, span, rows.size() + pools.size());
    std::size_t line = 0;
    std::string pool;
    for (const auto& row : rows) {
      if (row.pool != pool) {
        pool = row.pool;
        svg.row_line(line);
        svg.row_label(line++, pool, true);
      }
      svg.row_line(line);
      svg.row_label(line, "slot " + std::to_string(row.slot));
      for (const auto* i : row.items) {
        svg.bar(line, *i, kPalette[color_of.at(i->instance.task_id) % std::size(kPalette)], 0.85, label_of(*i));
      }
      ++line;
    }
    return svg.finish();
  }

  TextGrid grid(span);
  std::string out = grid.header();
  std::string pool;
  for (const auto& row : rows) {
    if (row.pool != pool) {
      pool = row.pool;
      out += "[" + pool + "]\n";
    }
    out += "  slot " + std::to_string(row.slot) + " |" + cells_to_text(grid.coverage(row.items)) + "|";
    for (std::size_t k = 0; k < row.items.size(); ++k) out += (k ? ", " : " ") + row.items[k]->instance.str();
    out += "\n";
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error("quantile of empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

WhiskerStats whiskers(std::vector<double> samples) {
  if (samples.empty()) throw Error("whiskers of empty sample");
  std::sort(samples.begin(), samples.end());
  return WhiskerStats{samples.front(), quantile_sorted(samples, 0.25), quantile_sorted(samples, 0.5),
                      quantile_sorted(samples, 0.75), samples.back()};
}

std::vector<double> collect_phase_samples(const std::filesystem::path& logs_dir, std::string_view phase) {
  if (!std::filesystem::is_directory(logs_dir)) throw Error("not a directory: " + logs_dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(logs_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".log") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<double> out;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::string line;
    std::optional<PhaseTiming> last;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (line.rfind("PHASES", 0) != 0) continue;
      auto p = parse_phases(line);
      if (!p) throw ParseError(lineno, f.filename().string() + ": malformed PHASES line");
      last = p;
    }
    if (last) out.push_back(phase_value(*last, phase));
  }
  return out;
}

}  // namespace screenflow
