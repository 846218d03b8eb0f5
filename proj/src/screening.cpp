// SPDX-License-Identifier: Apache-2.0
#include "screenflow/screening.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "screenflow/comm_store.hpp"
#include "screenflow/hash.hpp"

namespace screenflow {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::string strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return std::string(line);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos + 1));
    pos = nl + 1;
  }
  return lines;
}

// First field of the counts line; the V2000 layout puts it in columns 1-3,
// and free-form writers separate it with spaces.
std::optional<int> parse_atom_count(std::string_view line) {
  line = trim(line);
  auto field = line.substr(0, line.find_first_of(" \t"));
  if (field.size() > 3 && line.size() >= 3) field = trim(line.substr(0, 3));
  int v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size() || v < 0) return std::nullopt;
  return v;
}

SdfRecord make_record(std::string body, std::vector<std::string>& warnings, std::size_t ordinal) {
  SdfRecord r;
  auto lines = split_lines(body);
  if (!lines.empty()) r.name = std::string(trim(strip_cr(lines[0])));
  std::optional<int> atoms;
  if (lines.size() >= 4) atoms = parse_atom_count(lines[3]);
  if (atoms) {
    r.atom_count = *atoms;
  } else {
    warnings.push_back("record " + std::to_string(ordinal) + " (" + r.name + "): malformed counts line");
  }
  r.body = std::move(body);
  return r;
}

std::vector<std::string> read_index(const fs::path& path) {
  std::vector<std::string> ligands;
  std::istringstream in(read_file(path));
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (first) {
      first = false;
      continue;
    }
    if (!line.empty()) ligands.push_back(line);
  }
  return ligands;
}

int label_index(const std::string& label) {
  auto idx = parse_batch_label(label);
  if (!idx) throw Error("bad batch label '" + label + "'");
  return *idx;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

std::string substitute(std::string tmpl, const std::vector<std::pair<std::string, std::string>>& subs) {
  for (const auto& [key, value] : subs) {
    const std::string ph = "{" + key + "}";
    for (auto pos = tmpl.find(ph); pos != std::string::npos; pos = tmpl.find(ph, pos + value.size())) {
      tmpl.replace(pos, ph.size(), value);
    }
  }
  return tmpl;
}

std::string format_energy(double e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", e);
  return buf;
}

}  // namespace

SdfFile parse_sdf(std::string_view text) {
  SdfFile out;
  std::string current;
  for (auto line : split_lines(text)) {
    current.append(line);
    if (trim(line) == "$$$$") {
      out.records.push_back(make_record(std::move(current), out.warnings, out.records.size()));
      current.clear();
    }
  }
  if (trim(current).empty()) {
    out.trailer = std::move(current);
  } else {
    out.warnings.push_back("final record has no $$$$ delimiter");
    out.records.push_back(make_record(std::move(current), out.warnings, out.records.size()));
  }
  return out;
}

BatchManifest split_sdf(const fs::path& input, int batch_size, const std::string& db_name, const fs::path& out_dir) {
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  SdfFile sdf = parse_sdf(read_file(input));
  BatchManifest manifest{db_name, batch_size, {}};
  const auto n = sdf.records.size();
  if (n == 0) return manifest;
  fs::create_directories(out_dir);
  const auto per = static_cast<std::size_t>(batch_size);
  const auto k = (n + per - 1) / per;
  for (std::size_t b = 0; b < k; ++b) {
    const int bi = static_cast<int>(b);
    const auto first = b * per;
    const auto last = std::min(n, first + per);
    std::string data;
    std::string index = std::string(kPreparedReceptor) + "\n";
    for (auto i = first; i < last; ++i) {
      data += sdf.records[i].body;
      index += ligand_filename(db_name, bi, static_cast<int>(i - first)) + "\n";
    }
    if (b + 1 == k) data += sdf.trailer;
    BatchInfo info{batch_label(bi), out_dir / batch_sdf_filename(db_name, bi), static_cast<int>(last - first),
                   out_dir / batch_index_filename(db_name, bi)};
    write_file(info.sdf_path, data);
    write_file(info.index_path, index);
    manifest.batches.push_back(std::move(info));
  }
  return manifest;
}

int prepare_ligands(const std::string& batch_label, const std::string& db_name, const fs::path& data_dir,
                    const std::optional<std::string>& converter_command) {
  const int b = label_index(batch_label);
  const auto sdf_path = data_dir / batch_sdf_filename(db_name, b);
  SdfFile sdf = parse_sdf(read_file(sdf_path));
  for (std::size_t j = 0; j < sdf.records.size(); ++j) {
    const auto& rec = sdf.records[j];
    const auto out = data_dir / ligand_filename(db_name, b, static_cast<int>(j));
    if (!converter_command) {
      write_file(out, "REMARK  Name = " + rec.name + "\nREMARK  Atoms = " + std::to_string(rec.atom_count) + "\n");
      continue;
    }
    auto in = out;
    in.replace_extension(".sdf");
    write_file(in, rec.body);
    fs::remove(out);
    auto cmd = substitute(*converter_command, {{"in", shell_quote(in.string())}, {"out", shell_quote(out.string())}});
    auto r = run_command(cmd, data_dir);
    if (r.exit_code != 0) {
      throw Error("converter exited with " + std::to_string(r.exit_code) + " on " + in.filename().string() + ": " +
                  r.output);
    }
    if (!fs::exists(out)) throw Error("converter did not write " + out.filename().string());
  }
  return static_cast<int>(sdf.records.size());
}

void prepare_receptor(const fs::path& receptor, const fs::path& data_dir, const std::optional<std::string>& command) {
  fs::create_directories(data_dir);
  const auto out = data_dir / kPreparedReceptor;
  if (!command) {
    write_file(out, read_file(receptor));
    return;
  }
  fs::remove(out);
  auto cmd = substitute(*command, {{"in", shell_quote(receptor.string())}, {"out", shell_quote(out.string())}});
  auto r = run_command(cmd, data_dir);
  if (r.exit_code != 0) throw Error("receptor command exited with " + std::to_string(r.exit_code) + ": " + r.output);
  if (!fs::exists(out)) throw Error(std::string("receptor command did not write ") + kPreparedReceptor);
}

double mock_energy(std::string_view ligand_name) {
  return -(1.0 + static_cast<double>(fnv1a64(ligand_name) % 1000) / 100.0);
}

DockingOutcome perform_docking(const std::string& batch_label, const std::string& db_name, const fs::path& data_dir,
                               const DockingMode& mode, bool simulated) {
  const int b = label_index(batch_label);
  const auto index_path = data_dir / batch_index_filename(db_name, b);
  if (!fs::exists(index_path)) throw Error("missing index file " + index_path.filename().string());
  const auto ligands = read_index(index_path);
  for (const auto& lig : ligands) {
    if (!fs::exists(data_dir / lig)) throw Error("missing ligand file " + lig);
  }

  DockingOutcome outcome;
  outcome.results_path = data_dir / batch_results_filename(db_name, b);
  const auto t0 = std::chrono::steady_clock::now();
  if (mode.mock) {
    std::string results;
    for (const auto& lig : ligands) {
      const std::string text = read_file(data_dir / lig);
      std::string name = lig;
      constexpr std::string_view tag = "REMARK  Name = ";
      if (auto pos = text.find(tag); pos != std::string::npos) {
        auto end = text.find('\n', pos);
        name = strip_cr(std::string_view(text).substr(pos + tag.size(), end - pos - tag.size()));
      }
      results += name + " " + format_energy(mock_energy(name)) + "\n";
    }
    write_file(outcome.results_path, results);
    if (!simulated) {
      outcome.phases.docking =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    outcome.output = format_phases_line(outcome.phases) + "\n";
    return outcome;
  }

  fs::remove(outcome.results_path);
  auto cmd = substitute(mode.command, {{"index", shell_quote(index_path.string())},
                                       {"outdir", shell_quote(data_dir.string())}});
  auto r = run_command(cmd, data_dir);
  outcome.output = r.output;
  if (r.exit_code != 0) throw Error("docking command exited with " + std::to_string(r.exit_code) + ": " + r.output);
  if (!fs::exists(outcome.results_path)) {
    throw Error("docking command did not write " + outcome.results_path.filename().string());
  }
  if (auto p = parse_phases(r.output)) {
    outcome.phases = *p;
  } else {
    outcome.phases.docking =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    outcome.output += format_phases_line(outcome.phases) + "\n";
  }
  return outcome;
}

std::vector<DockingResult> read_results_file(const fs::path& path, const std::string& batch_label) {
  if (!fs::exists(path)) throw Error("missing results file " + path.filename().string());
  std::vector<DockingResult> out;
  std::istringstream in(read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    auto sp = t.find_last_of(" \t");
    if (sp == std::string_view::npos) throw ParseError(lineno, "expected '<ligand> <energy>'");
    auto num = t.substr(sp + 1);
    double e = 0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), e);
    if (ec != std::errc{} || ptr != num.data() + num.size()) throw ParseError(lineno, "bad energy '" + std::string(num) + "'");
    out.push_back(DockingResult{std::string(trim(t.substr(0, sp))), batch_label, e});
  }
  return out;
}

RankingReport postprocess(const std::string& db_name, const std::vector<std::string>& labels, const fs::path& data_dir,
                          int top_k) {
  if (top_k < 0) throw Error("top_k must be >= 0");
  struct Row {
    DockingResult r;
    int batch;
    std::size_t pos;
  };
  std::vector<Row> rows;
  for (const auto& label : labels) {
    const int b = label_index(label);
    auto results = read_results_file(data_dir / batch_results_filename(db_name, b), label);
    for (std::size_t i = 0; i < results.size(); ++i) rows.push_back({std::move(results[i]), b, i});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.r.best_energy != b.r.best_energy) return a.r.best_energy < b.r.best_energy;
    if (a.r.ligand_name != b.r.ligand_name) return a.r.ligand_name < b.r.ligand_name;
    if (a.batch != b.batch) return a.batch < b.batch;
    return a.pos < b.pos;
  });

  RankingReport report;
  report.csv_path = data_dir / "ranking.csv";
  report.top_path = data_dir / ("top" + std::to_string(top_k) + ".txt");
  std::string csv = "rank,ligand,batch,energy\n";
  std::string top;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i].r;
    csv += std::to_string(i + 1) + "," + r.ligand_name + "," + r.batch_label + "," + format_energy(r.best_energy) + "\n";
    if (i < static_cast<std::size_t>(top_k)) {
      top += std::to_string(i + 1) + ". " + r.ligand_name + " (" + r.batch_label + ") " +
             format_energy(r.best_energy) + " kcal/mol\n";
    }
    report.ranking.push_back(r);
  }
  write_file(report.csv_path, csv);
  write_file(report.top_path, top);
  return report;
}

// ---- builtin steps ---------------------------------------------------------

namespace {

const std::string& param(const StepContext& ctx, std::size_t i, const char* what) {
  if (i >= ctx.params.size()) {
    throw Error(ctx.key.task_id + ": missing parameter " + std::to_string(i) + " (" + what + ")");
  }
  return ctx.params[i];
}

std::optional<std::string> optional_param(const StepContext& ctx, std::size_t i) {
  if (i >= ctx.params.size() || ctx.params[i].empty()) return std::nullopt;
  return ctx.params[i];
}

int int_param(const StepContext& ctx, std::size_t i, const char* what) {
  const auto& s = param(ctx, i, what);
  auto v = parse_int(s);
  if (!v) throw Error(ctx.key.task_id + ": " + what + " is not an integer: '" + s + "'");
  return static_cast<int>(*v);
}

StepResult step_split_sdf(const StepContext& ctx) {
  auto m = split_sdf(param(ctx, 0, "input"), int_param(ctx, 1, "batch_size"), param(ctx, 2, "db"), ctx.data_dir);
  StepResult r;
  for (const auto& b : m.batches) r.output += b.label + " " + std::to_string(b.ligand_count) + "\n";
  r.value = CommValue::of_int(static_cast<std::int64_t>(m.batches.size()));
  return r;
}

StepResult step_get_batch_labels(const StepContext& ctx) {
  const int n = int_param(ctx, 0, "n");
  if (n < 0) throw Error("batch count must be >= 0");
  StepResult r;
  r.value = CommValue::of_list(get_batch_labels(n));
  r.output = r.value->render() + "\n";
  return r;
}

StepResult step_prepare_receptor(const StepContext& ctx) {
  prepare_receptor(param(ctx, 0, "path"), ctx.data_dir, optional_param(ctx, 1));
  return StepResult{true, std::string("wrote ") + kPreparedReceptor + "\n", {}, {}};
}

StepResult step_prepare_ligands(const StepContext& ctx) {
  const int n = prepare_ligands(param(ctx, 1, "batch"), param(ctx, 0, "db"), ctx.data_dir, optional_param(ctx, 2));
  return StepResult{true, "prepared " + std::to_string(n) + " ligands\n", {}, {}};
}

StepResult step_perform_docking(const StepContext& ctx) {
  const auto& mode_text = param(ctx, 2, "mode");
  DockingMode mode = mode_text == "mock" ? DockingMode::mocked() : DockingMode::real(mode_text);
  auto outcome = perform_docking(param(ctx, 1, "batch"), param(ctx, 0, "db"), ctx.data_dir, mode, ctx.simulated);
  return StepResult{true, std::move(outcome.output), {}, {}};
}

StepResult step_postprocessing(const StepContext& ctx) {
  // Labels arrive comma-joined; batch labels never contain commas.
  std::vector<std::string> labels;
  std::istringstream in(param(ctx, 1, "labels"));
  for (std::string label; std::getline(in, label, ',');) labels.push_back(label);
  const int top_k = ctx.params.size() > 2 ? int_param(ctx, 2, "top_k") : 10;
  auto report = postprocess(param(ctx, 0, "db"), labels, ctx.data_dir, top_k);
  return StepResult{true, "ranked " + std::to_string(report.ranking.size()) + " ligands\n", {}, {}};
}

}  // namespace

const BuiltinRegistry& screening_steps() {
  static const BuiltinRegistry registry = {
      {"split_sdf", step_split_sdf},
      {"get_batch_labels", step_get_batch_labels},
      {"prepare_receptor", step_prepare_receptor},
      {"prepare_ligands", step_prepare_ligands},
      {"perform_docking", step_perform_docking},
      {"postprocessing", step_postprocessing},
  };
  return registry;
}

std::set<std::string> screening_step_names() {
  std::set<std::string> names;
  for (const auto& [name, step] : screening_steps()) names.insert(name);
  return names;
}

// ---- workflow builders -------------------------------------------------------

namespace {

void add_screening_edges(WorkflowSpec& spec) {
  spec.groups.push_back(GroupSpec{"docking", CommRef{"get_batch_labels", std::string(kDefaultCommKey)}});
  spec.edges = {
      {"split_sdf", "get_batch_labels"},
      {"get_batch_labels", "docking"},
      {"prepare_receptor", "docking"},
      {"prepare_ligands", "perform_docking"},
      {"docking", "postprocessing"},
  };
}

TaskSpec task(std::string id, std::string pool, ActionSpec action, std::vector<std::string> params = {},
              std::optional<std::string> group = std::nullopt, bool produces = false) {
  TaskSpec t;
  t.id = std::move(id);
  t.pool = std::move(pool);
  t.group = std::move(group);
  t.action = std::move(action);
  if (produces) t.produces = std::string(kDefaultCommKey);
  t.params = std::move(params);
  return t;
}

}  // namespace

WorkflowSpec build_screening_workflow(const ScreeningConfig& c) {
  WorkflowSpec spec;
  spec.name = "screening";
  spec.pools = {{"large", c.large_slots}, {"small", c.small_slots}};
  const std::string docking_mode = c.mock ? std::string("mock") : c.docking_command;
  spec.tasks = {
      task("split_sdf", "large", ActionSpec::builtin("split_sdf"),
           {fs::absolute(c.ligands).string(), std::to_string(c.batch_size), c.db_name}, std::nullopt, true),
      task("prepare_receptor", "large", ActionSpec::builtin("prepare_receptor"),
           {fs::absolute(c.receptor).string(), c.receptor_command.value_or("")}),
      task("get_batch_labels", "large", ActionSpec::builtin("get_batch_labels"), {"{split_sdf.return_value}"},
           std::nullopt, true),
      task("prepare_ligands", "large", ActionSpec::builtin("prepare_ligands"),
           {c.db_name, "{map_value}", c.converter_command.value_or("")}, "docking"),
      task("perform_docking", "small", ActionSpec::builtin("perform_docking"), {c.db_name, "{map_value}", docking_mode},
           "docking"),
      task("postprocessing", "large", ActionSpec::builtin("postprocessing"),
           {c.db_name, "{get_batch_labels.return_value}", std::to_string(c.top_k)}),
  };
  add_screening_edges(spec);
  return spec;
}

WorkflowSpec dummy_screening_workflow(int batches, int small_slots, int large_slots) {
  WorkflowSpec spec;
  spec.name = "dummy_screening";
  spec.pools = {{"large", large_slots}, {"small", small_slots}};
  spec.tasks = {
      task("split_sdf", "large", ActionSpec::sim(DurationSpec::uniform(2000, 4000), "int:" + std::to_string(batches)),
           {}, std::nullopt, true),
      task("prepare_receptor", "large", ActionSpec::sim(DurationSpec::uniform(2000, 5000))),
      task("get_batch_labels", "large",
           ActionSpec::sim(DurationSpec::uniform(500, 1000), "labels:{split_sdf.return_value}"), {}, std::nullopt,
           true),
      task("prepare_ligands", "large", ActionSpec::sim(DurationSpec::uniform(2000, 4000)), {}, "docking"),
      task("perform_docking", "small", ActionSpec::sim(DurationSpec::uniform(8000, 15000)), {}, "docking"),
      task("postprocessing", "large", ActionSpec::sim(DurationSpec::uniform(2000, 3000))),
  };
  add_screening_edges(spec);
  return spec;
}

}  // namespace screenflow
