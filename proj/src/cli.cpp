// SPDX-License-Identifier: Apache-2.0
#include "screenflow/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "screenflow/comm_store.hpp"
#include "screenflow/events.hpp"
#include "screenflow/gantt.hpp"
#include "screenflow/screening.hpp"
#include "screenflow/workflow_file.hpp"

namespace screenflow {

namespace fs = std::filesystem;

std::map<std::string, int> parse_pool_option(std::string_view text) {
  std::map<std::string, int> pools;
  std::istringstream in{std::string(text)};
  for (std::string item; std::getline(in, item, ',');) {
    auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("pool '" + item + "' is not NAME=SLOTS");
    auto slots = parse_int(std::string_view(item).substr(eq + 1));
    if (!slots || *slots < 1 || *slots > 1'000'000) throw UsageError("pool '" + item + "': slots must be >= 1");
    if (!pools.emplace(item.substr(0, eq), static_cast<int>(*slots)).second) {
      throw UsageError("pool '" + item.substr(0, eq) + "' given twice");
    }
  }
  if (pools.empty()) throw UsageError("empty pool list");
  return pools;
}

void prepare_run_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(dir.string() + " is not a directory");
  std::vector<fs::path> ours;
  for (const char* name : kRunEntries)
    if (fs::exists(dir / name)) ours.push_back(dir / name);
  if (!ours.empty() && !force) throw UsageError(dir.string() + " already holds a run; pass --force to replace it");
  for (const auto& p : ours) fs::remove_all(p);
  fs::create_directories(dir / "logs");
}

fs::path default_run_dir() {
  if (const char* env = std::getenv("SCREENFLOW_RUN_DIR"); env && *env) return env;
  return "screenflow-run";
}

RunReport execute_run(const RunRequest& req) {
  prepare_run_dir(req.run_dir, req.force);
  RunReport report;
  report.run_dir = fs::absolute(req.run_dir);
  report.data_dir = fs::absolute(req.data_dir.value_or(req.run_dir / "data"));
  fs::create_directories(report.data_dir);
  {
    std::ofstream snap(report.run_dir / "workflow.sf", std::ios::binary);
    snap << format_workflow(req.spec);
  }
  const BuiltinRegistry* builtins = req.builtins ? req.builtins : &screening_steps();
  CommStore store(report.run_dir / "run.comm");
  RunOptions options{report.run_dir / "events.log"};
  if (req.simulate) {
    SimClock clock;
    SimExecutor exec(clock, SimExecutor::Options{req.seed, report.run_dir, report.data_dir, builtins});
    report.output = run(req.spec, exec, clock, store, options);
  } else {
    WallClock clock;
    ProcessExecutor exec(
        ProcessExecutor::Options{report.data_dir, report.run_dir, req.task_timeout_ms, req.seed, builtins});
    report.output = run(req.spec, exec, clock, store, options);
  }
  return report;
}

namespace {

struct RunFlags {
  std::string run_dir;
  std::string data_dir;
  std::uint64_t seed = 0;
  std::int64_t task_timeout_ms = 0;
  bool force = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool timeouts) {
  cmd->add_option("--run-dir", f.run_dir, "Run directory (default $SCREENFLOW_RUN_DIR or ./screenflow-run)");
  cmd->add_option("--data-dir", f.data_dir, "Shared data directory (default <run-dir>/data)");
  cmd->add_option("--seed", f.seed, "Seed for sampled durations");
  cmd->add_flag("--force", f.force, "Replace a previous run in the run directory");
  if (timeouts) cmd->add_option("--task-timeout", f.task_timeout_ms, "Per-instance timeout in ms")->check(CLI::PositiveNumber);
}

RunRequest make_request(WorkflowSpec spec, const RunFlags& f, bool simulate) {
  RunRequest req;
  req.spec = std::move(spec);
  req.run_dir = f.run_dir.empty() ? default_run_dir() : fs::path(f.run_dir);
  if (!f.data_dir.empty()) req.data_dir = f.data_dir;
  req.seed = f.seed;
  req.simulate = simulate;
  if (f.task_timeout_ms > 0) req.task_timeout_ms = f.task_timeout_ms;
  req.force = f.force;
  return req;
}

int report_violations(const ValidationReport& r) {
  for (const auto& v : r.violations) std::cerr << v << "\n";
  return r.ok() ? kExitOk : kExitFailure;
}

int finish_run(const RunRequest& req) {
  auto v = validate(req.spec, nullptr);
  if (!v.ok()) return report_violations(v);
  auto report = execute_run(req);
  const auto& result = report.output.result;
  std::size_t ok = 0;
  for (const auto& inst : result.instances) {
    if (inst.state == TaskState::success) {
      ++ok;
      continue;
    }
    std::cerr << inst.key.str() << " " << to_string(inst.state);
    if (auto it = result.completions.find(inst.key); it != result.completions.end() && !it->second.diagnostic.empty()) {
      std::cerr << ": " << it->second.diagnostic;
    }
    std::cerr << "\n";
  }
  std::cout << req.spec.name << ": " << (result.success ? "SUCCESS" : "FAILED") << " (" << ok << "/"
            << result.instances.size() << " instances succeeded) in " << report.run_dir.string() << "\n";
  return result.success ? kExitOk : kExitFailure;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << content;
}

std::vector<PoolSpec> pools_for_report(const std::string& workflow, const std::string& pools, const fs::path& input) {
  if (!pools.empty()) {
    std::vector<PoolSpec> out;
    for (const auto& [name, slots] : parse_pool_option(pools)) out.push_back({name, slots});
    return out;
  }
  fs::path wf = workflow.empty() ? input.parent_path() / "workflow.sf" : fs::path(workflow);
  if (!fs::exists(wf)) throw UsageError("resource mode needs --pools or --workflow (no " + wf.string() + ")");
  return parse_workflow_file(wf).pools;
}

std::string format_stat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"screenflow: DAG workflow engine with a batched virtual-screening pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "screenflow 0.1.0");

  std::string workflow_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a workflow file");
  validate_cmd->add_option("workflow", workflow_path, "Workflow file")->required();

  RunFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run a workflow with the process executor");
  run_cmd->add_option("workflow", workflow_path, "Workflow file")->required();
  add_run_flags(run_cmd, run_flags, true);

  auto* sim_cmd = app.add_subcommand("simulate", "Run a workflow on the discrete-event clock");
  sim_cmd->add_option("workflow", workflow_path, "Workflow file")->required();
  add_run_flags(sim_cmd, run_flags, false);

  ScreeningConfig screen;
  std::string receptor, ligands, pools_text = "small=2,large=4", docking_cmd, converter_cmd, receptor_cmd;
  bool mock = false, emit_spec = false;
  auto* screen_cmd = app.add_subcommand("screen", "Run the batched screening pipeline");
  screen_cmd->add_option("--receptor", receptor, "Receptor file")->required();
  screen_cmd->add_option("--ligands", ligands, "Ligand SDF file")->required();
  screen_cmd->add_option("--batch-size", screen.batch_size, "Ligands per batch")->check(CLI::PositiveNumber);
  screen_cmd->add_option("--db-name", screen.db_name, "Database name used in file names");
  screen_cmd->add_option("--pools", pools_text, "Pool sizes, e.g. small=2,large=4");
  auto* mock_opt = screen_cmd->add_flag("--mock", mock, "Deterministic mock docking");
  auto* dock_opt = screen_cmd->add_option("--docking-cmd", docking_cmd, "Docking command with {index} and {outdir}");
  mock_opt->excludes(dock_opt);
  screen_cmd->add_option("--converter-cmd", converter_cmd, "Ligand converter with {in} and {out}");
  screen_cmd->add_option("--receptor-cmd", receptor_cmd, "Receptor preparation with {in} and {out}");
  screen_cmd->add_option("--top-k", screen.top_k, "Size of the top-k summary")->check(CLI::NonNegativeNumber);
  screen_cmd->add_flag("--emit-spec", emit_spec, "Print the equivalent workflow file and exit");
  add_run_flags(screen_cmd, run_flags, true);

  auto* report_cmd = app.add_subcommand("report", "Render charts and statistics from a run");
  report_cmd->require_subcommand(1);
  std::string mode = "task", format, input, output, report_workflow, report_pools;
  auto* gantt_cmd = report_cmd->add_subcommand("gantt", "Task or resource Gantt chart");
  gantt_cmd->add_option("--mode", mode, "task or resource")->check(CLI::IsMember({"task", "resource"}));
  gantt_cmd->add_option("--format", format, "svg or text (default from --output, else svg)")
      ->check(CLI::IsMember({"svg", "text", "txt"}));
  gantt_cmd->add_option("--input", input, "events.log (default <run-dir>/events.log)");
  gantt_cmd->add_option("--output", output, "Output file (default stdout)");
  gantt_cmd->add_option("--workflow", report_workflow, "Workflow file for pool sizes");
  gantt_cmd->add_option("--pools", report_pools, "Pool sizes, e.g. small=2,large=4");
  std::string report_run_dir;
  gantt_cmd->add_option("--run-dir", report_run_dir, "Run directory");

  std::string phase;
  auto* stats_cmd = report_cmd->add_subcommand("stats", "Whiskers statistics over PHASES lines");
  stats_cmd->add_option("--phase", phase, "Phase name (default all)")
      ->check(CLI::IsMember({"setup_cuda", "setup_rest", "docking", "shutdown"}));
  stats_cmd->add_option("--input", input, "Logs directory (default <run-dir>/logs)");
  stats_cmd->add_option("--run-dir", report_run_dir, "Run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (validate_cmd->parsed()) {
      return report_violations(validate(parse_workflow(read_text(workflow_path)), nullptr));
    }
    if (run_cmd->parsed() || sim_cmd->parsed()) {
      auto spec = parse_workflow(read_text(workflow_path));
      return finish_run(make_request(std::move(spec), run_flags, sim_cmd->parsed()));
    }
    if (screen_cmd->parsed()) {
      if (!mock && docking_cmd.empty()) throw UsageError("screen needs --mock or --docking-cmd");
      auto pools = parse_pool_option(pools_text);
      for (const auto& [name, slots] : pools) {
        if (name != "small" && name != "large") throw UsageError("unknown pool '" + name + "' (small, large)");
      }
      if (pools.count("small")) screen.small_slots = pools.at("small");
      if (pools.count("large")) screen.large_slots = pools.at("large");
      screen.receptor = receptor;
      screen.ligands = ligands;
      screen.mock = mock;
      screen.docking_command = docking_cmd;
      if (!converter_cmd.empty()) screen.converter_command = converter_cmd;
      if (!receptor_cmd.empty()) screen.receptor_command = receptor_cmd;
      auto spec = build_screening_workflow(screen);
      if (emit_spec) {
        std::cout << format_workflow(spec);
        return kExitOk;
      }
      if (!fs::exists(ligands)) throw UsageError("cannot read " + ligands);
      return finish_run(make_request(std::move(spec), run_flags, false));
    }
    if (gantt_cmd->parsed()) {
      const fs::path dir = report_run_dir.empty() ? default_run_dir() : fs::path(report_run_dir);
      const fs::path in = input.empty() ? dir / "events.log" : fs::path(input);
      auto fmt = parse_chart_format(format.empty() ? (fs::path(output).extension() == ".txt" ? "text" : "svg") : format);
      auto items = intervals(parse_event_log(read_text(in)));
      std::string chart;
      if (mode == "task") {
        chart = render_task_gantt(items, *fmt);
      } else {
        auto pools = pools_for_report(report_workflow, report_pools, in);
        chart = render_resource_gantt(items, pools, *fmt);
      }
      write_output(output, chart);
      return kExitOk;
    }
    if (stats_cmd->parsed()) {
      const fs::path dir = report_run_dir.empty() ? default_run_dir() : fs::path(report_run_dir);
      const fs::path in = input.empty() ? dir / "logs" : fs::path(input);
      std::vector<std::string> phases;
      if (phase.empty()) {
        phases.assign(std::begin(kPhaseNames), std::end(kPhaseNames));
      } else {
        phases.push_back(phase);
      }
      for (const auto& p : phases) {
        auto samples = collect_phase_samples(in, p);
        if (samples.empty()) throw ParseError(0, "no PHASES lines under " + in.string());
        auto w = whiskers(std::move(samples));
        std::cout << p << " " << format_stat(w.min) << " " << format_stat(w.q25) << " " << format_stat(w.median)
                  << " " << format_stat(w.q75) << " " << format_stat(w.max) << "\n";
      }
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for more information.\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return report_cmd->parsed() ? kExitUsage : kExitFailure;
  }
  return kExitUsage;
}

}  // namespace screenflow
