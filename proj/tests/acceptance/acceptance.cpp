// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks for the engine and the screening pipeline. Prints one
// PASS/FAIL line per criterion and exits nonzero if any criterion fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "audit.hpp"
#include "oracles.hpp"
#include "random_dag.hpp"
#include "temp_dir.hpp"
#include "screenflow/cli.hpp"
#include "screenflow/executors.hpp"
#include "screenflow/gantt.hpp"
#include "screenflow/naming.hpp"
#include "screenflow/scheduler.hpp"
#include "screenflow/screening.hpp"
#include "screenflow/workflow_file.hpp"

using namespace screenflow;
using testing_support::slurp;
using testing_support::spit;
using testing_support::synthetic_sdf;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

// Collects failed expectations for one criterion.
struct Check {
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

struct Span {
  std::int64_t start = -1;
  std::int64_t end = -1;
  std::string pool;
};

// Intervals rebuilt straight from the log, keyed by instance.
std::map<oracle::Inst, Span> spans_of(const EventLog& log) {
  std::map<oracle::Inst, Span> out;
  for (const auto& e : log) {
    auto& s = out[oracle::inst_of(e.instance)];
    s.pool = e.pool;
    if (e.kind == EventKind::start) s.start = e.t_ms;
    if (e.kind == EventKind::end_ok || e.kind == EventKind::end_fail) s.end = e.t_ms;
  }
  return out;
}

// Peak number of intervals open at once; an END frees its slot before a
// START at the same instant.
int peak_concurrency(const std::vector<Span>& spans) {
  std::vector<std::pair<std::int64_t, int>> edges;
  for (const auto& s : spans) {
    edges.emplace_back(s.start, 1);
    edges.emplace_back(s.end, -1);
  }
  std::sort(edges.begin(), edges.end());
  int open = 0, peak = 0;
  for (const auto& [t, d] : edges) peak = std::max(peak, open += d);
  return peak;
}

bool overlaps(const Span& a, const Span& b) { return a.start < b.end && b.start < a.end; }

RunOutput simulate(const WorkflowSpec& spec, std::uint64_t seed, CommStore& store,
                   const std::optional<fs::path>& run_dir = std::nullopt, const fs::path& data_dir = {}) {
  SimClock clock;
  SimExecutor exec(clock, SimExecutor::Options{seed, run_dir, data_dir, &screening_steps()});
  return run(spec, exec, clock, store);
}

std::string sdf_record(const std::string& name, int atoms) {
  char counts[64];
  std::snprintf(counts, sizeof counts, "%3d%3d  0  0  0  0  0  0  0  0999 V2000\n", atoms, 0);
  std::string rec = name + "\n  generated\n\n" + counts;
  for (int a = 0; a < atoms; ++a) rec += "    1.0000    0.0000    0.0000 N   0  0\n";
  return rec + "M  END\n$$$$\n";
}

std::vector<std::string> csv_rows(const fs::path& path) {
  std::vector<std::string> rows;
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) rows.push_back(line);
  return rows;
}

// Mock energy as printed in results files, computed from the hash directly.
double printed_mock_energy(const std::string& name) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", -(1.0 + static_cast<double>(oracle::fnv1a64(name) % 1000) / 100.0));
  return std::stod(buf);
}

// ---- criteria --------------------------------------------------------------

void dummy_dag(Check& c) {
  const auto spec = dummy_screening_workflow(10, 2, 4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::string at = " (seed " + std::to_string(seed) + ")";
    CommStore store;
    auto out = simulate(spec, seed, store);
    c.expect(out.result.success, "run failed" + at);
    auto spans = spans_of(parse_event_log(format_event_log(out.events)));

    std::vector<Span> docking, large, ligands;
    std::map<int, Span> prep, dock;
    std::int64_t last_dock_end = 0;
    for (const auto& [inst, s] : spans) {
      if (s.pool == "large") large.push_back(s);
      if (inst.first == "perform_docking") {
        docking.push_back(s);
        dock[inst.second] = s;
        last_dock_end = std::max(last_dock_end, s.end);
      }
      if (inst.first == "prepare_ligands") prep[inst.second] = s;
    }
    c.expect(docking.size() == 10 && prep.size() == 10, "expected 10 docking batches" + at);
    c.expect(peak_concurrency(docking) <= 2, "more than 2 perform_docking at once" + at);
    c.expect(peak_concurrency(large) <= 4, "more than 4 large-pool tasks at once" + at);
    const auto& split = spans[{"split_sdf", -1}];
    const auto& rec = spans[{"prepare_receptor", -1}];
    c.expect(split.start == 0 && rec.start == 0 && overlaps(split, rec), "split_sdf and prepare_receptor not concurrent" + at);
    bool cross = false;
    for (const auto& [i, p] : prep) {
      c.expect(dock.count(i) && p.end <= dock[i].start, "prepare_ligands[" + std::to_string(i) + "] ends after docking starts" + at);
      for (const auto& [j, d] : dock) cross |= i != j && overlaps(p, d);
    }
    c.expect(cross, "no prepare_ligands overlaps another batch's docking" + at);
    c.expect(spans[{"postprocessing", -1}].start >= last_dock_end, "postprocessing starts before docking ends" + at);
  }
}

void pool_soundness(Check& c) {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 200; ++trial) {
    auto spec = testing_support::random_dag(rng);
    if (!validate(spec).ok()) {
      c.expect(false, "generator produced an invalid DAG at trial " + std::to_string(trial));
      continue;
    }
    SimClock clock;
    SimExecutor exec(clock, SimExecutor::Options{static_cast<std::uint64_t>(trial), std::nullopt, {}, nullptr});
    CommStore store;
    auto out = run(spec, exec, clock, store);
    auto bad = oracle::audit(spec, out.events, oracle::fanout_of(spec, store.records(), out.events));
    for (const auto& b : bad) c.expect(false, "trial " + std::to_string(trial) + ": " + b);
  }
}

void batching(Check& c) {
  TempDir dir;
  const std::string text = synthetic_sdf(10000);
  spit(dir / "lig.sdf", text);
  spit(dir / "rec.pdb", "RECEPTOR\n");
  ScreeningConfig cfg;
  cfg.receptor = dir / "rec.pdb";
  cfg.ligands = dir / "lig.sdf";
  cfg.batch_size = 1000;
  RunRequest req;
  req.spec = build_screening_workflow(cfg);
  req.run_dir = dir / "run";
  req.simulate = false;
  auto report = execute_run(req);
  c.expect(report.success(), "mock pipeline failed");
  std::string joined;
  int batches = 0;
  while (fs::exists(report.data_dir / batch_sdf_filename("db", batches))) {
    joined += slurp(report.data_dir / batch_sdf_filename("db", batches));
    ++batches;
  }
  c.expect(batches == 10, "expected 10 batches, found " + std::to_string(batches));
  c.expect(joined == text, "batch files do not concatenate to the input");
  const auto rows = csv_rows(report.data_dir / "ranking.csv");
  c.expect(rows.size() == 10000, "ranking.csv has " + std::to_string(rows.size()) + " rows");
}

void naming(Check& c) {
  c.expect(ligand_filename("db", 35, 42) == "db_batch35_ligand42.pdbqt", "wrong ligand file name");
  std::set<std::string> seen;
  for (int b = 0; b < 100; ++b) {
    for (int l = 0; l < 100; ++l) {
      auto name = ligand_filename("db", b, l);
      c.expect(seen.insert(name).second, "collision on " + name);
      auto back = parse_ligand_filename(name);
      c.expect(back && *back == LigandFileId{"db", b, l}, "cannot invert " + name);
    }
  }
  c.expect(seen.size() == 10000, "expected 10000 distinct names");
}

void comm_flow(Check& c) {
  for (int records : {10, 10000}) {
    TempDir dir;
    spit(dir / "lig.sdf", synthetic_sdf(static_cast<std::size_t>(records)));
    spit(dir / "rec.pdb", "RECEPTOR\n");
    for (int size : {1, 7, 1000}) {
      const std::string at = " (" + std::to_string(records) + " records, batch size " + std::to_string(size) + ")";
      ScreeningConfig cfg;
      cfg.receptor = dir / "rec.pdb";
      cfg.ligands = dir / "lig.sdf";
      cfg.batch_size = size;
      const auto data = dir / ("data" + std::to_string(size));
      CommStore store;
      auto out = simulate(build_screening_workflow(cfg), 0, store, std::nullopt, data);
      c.expect(out.result.success, "pipeline failed" + at);
      auto count = store.get({"split_sdf", "return_value", std::nullopt});
      auto labels = store.get({"get_batch_labels", "return_value", std::nullopt});
      std::set<int> prep, dock;
      for (const auto& i : out.result.instances) {
        if (i.key.task_id == "prepare_ligands" && i.key.map_index) prep.insert(*i.key.map_index);
        if (i.key.task_id == "perform_docking" && i.key.map_index) dock.insert(*i.key.map_index);
      }
      const auto expected = static_cast<std::size_t>((records + size - 1) / size);
      c.expect(count && count->type() == CommValue::Type::integer && count->as_int() == static_cast<std::int64_t>(expected), "split_sdf count" + at);
      c.expect(labels && labels->is_list() && labels->as_list().size() == expected, "get_batch_labels length" + at);
      c.expect(prep.size() == expected && dock.size() == expected, "expanded instance sets" + at);
    }
  }
}

void determinism(Check& c) {
  TempDir dir;
  const auto spec = dummy_screening_workflow();
  auto run_once = [&](const std::string& name, std::uint64_t seed) {
    RunRequest req;
    req.spec = spec;
    req.run_dir = dir / name;
    req.seed = seed;
    auto report = execute_run(req);
    auto items = intervals(report.output.events);
    spit(dir / name / "task.svg", render_task_gantt(items, ChartFormat::svg));
    spit(dir / name / "resource.svg", render_resource_gantt(items, spec.pools, ChartFormat::svg));
  };
  run_once("a", 17);
  run_once("b", 17);
  run_once("c", 18);
  for (const char* f : {"events.log", "run.comm", "task.svg", "resource.svg"}) {
    c.expect(slurp(dir / "a" / f) == slurp(dir / "b" / f), std::string(f) + " differs between identical runs");
  }
  c.expect(slurp(dir / "a" / "events.log") != slurp(dir / "c" / "events.log"), "seed change left the log unchanged");
  bool differs = false;
  for (const auto& t : spec.tasks) {
    if (t.action.duration.kind != DurationSpec::Kind::uniform) continue;
    auto a = derive_substream(17, t.id, std::nullopt);
    auto b = derive_substream(18, t.id, std::nullopt);
    differs |= sample_duration(t.action.duration, a) != sample_duration(t.action.duration, b);
  }
  c.expect(differs, "seed change left every sampled duration unchanged");
}

void makespan(Check& c) {
  auto docking_span = [](const EventLog& log, std::vector<std::int64_t>* durations) {
    std::int64_t first = -1, last = 0;
    for (const auto& [inst, s] : spans_of(log)) {
      if (inst.first != "perform_docking") continue;
      first = first < 0 ? s.start : std::min(first, s.start);
      last = std::max(last, s.end);
      if (durations) durations->push_back(s.end - s.start);
    }
    return last - first;
  };
  for (std::int64_t d : {1000, 8000, 12345}) {
    auto spec = dummy_screening_workflow(10, 2, 4);
    for (auto& t : spec.tasks) {
      if (t.id == "perform_docking") t.action.duration = DurationSpec::fixed(d);
      if (t.id == "prepare_ligands") t.action.duration = DurationSpec::fixed(100);
    }
    CommStore store;
    auto out = simulate(spec, 1, store);
    const auto span = docking_span(out.events, nullptr);
    c.expect(span == 5 * d, "fixed d=" + std::to_string(d) + ": span " + std::to_string(span) + " != 5d");
  }
  const auto spec = dummy_screening_workflow(10, 2, 4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CommStore store;
    auto out = simulate(spec, seed, store);
    std::vector<std::int64_t> ds;
    const auto span = docking_span(out.events, &ds);
    std::int64_t sum = 0;
    for (auto x : ds) sum += x;
    const auto lower = std::max({(sum + 1) / 2, *std::max_element(ds.begin(), ds.end()),
                                 5 * *std::min_element(ds.begin(), ds.end())});
    c.expect(ds.size() == 10 && span >= lower,
             "seed " + std::to_string(seed) + ": span " + std::to_string(span) + " below bound " + std::to_string(lower));
  }
}

void whisker_stats(Check& c) {
  auto matches = [&](const std::vector<double>& xs, const std::string& label) {
    auto w = whiskers(xs);
    auto sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    c.expect(oracle::close_rel(w.min, sorted.front()) && oracle::close_rel(w.max, sorted.back()) &&
                 oracle::close_rel(w.q25, oracle::quantile(xs, 0.25)) &&
                 oracle::close_rel(w.median, oracle::quantile(xs, 0.5)) &&
                 oracle::close_rel(w.q75, oracle::quantile(xs, 0.75)),
             label + " disagrees with the oracle");
    return w;
  };
  auto w1 = matches({1, 2, 3, 4}, "set {1,2,3,4}");
  c.expect(w1.q25 == 1.75 && w1.median == 2.5 && w1.q75 == 3.25, "set {1,2,3,4} hand values");
  auto w2 = matches({7}, "set {7}");
  c.expect(w2.min == 7 && w2.q25 == 7 && w2.median == 7 && w2.q75 == 7 && w2.max == 7, "set {7} hand values");
  auto w3 = matches({10, 0, 5, 20, 15}, "set {0,5,10,15,20}");
  c.expect(w3.q25 == 5 && w3.median == 10 && w3.q75 == 15, "set {0,5,10,15,20} hand values");
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> value(0.0, 20000.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> xs(1 + rng() % 500);
    for (auto& x : xs) x = value(rng);
    matches(xs, "random set " + std::to_string(i));
  }
}

void ranking(Check& c) {
  TempDir dir;
  // 10 batches of 1000; names repeat across batches so energies and names tie.
  std::string text;
  std::vector<std::string> names;
  for (int i = 0; i < 10000; ++i) {
    names.push_back("MOL_" + std::to_string((i * 7919) % 6000));
    text += sdf_record(names.back(), 1 + i % 30);
  }
  spit(dir / "lig.sdf", text);
  spit(dir / "rec.pdb", "RECEPTOR\n");
  ScreeningConfig cfg;
  cfg.receptor = dir / "rec.pdb";
  cfg.ligands = dir / "lig.sdf";
  cfg.batch_size = 1000;
  cfg.top_k = 25;
  CommStore store;
  auto out = simulate(build_screening_workflow(cfg), 0, store, std::nullopt, dir / "data");
  c.expect(out.result.success, "pipeline failed");

  std::vector<oracle::Row> rows;
  for (int i = 0; i < 10000; ++i) rows.push_back({names[static_cast<std::size_t>(i)], batch_label(i / 1000), printed_mock_energy(names[static_cast<std::size_t>(i)])});
  const auto expected = oracle::rank(rows);
  const auto got = csv_rows(dir / "data" / "ranking.csv");
  c.expect(got.size() == expected.size(), "ranking has " + std::to_string(got.size()) + " rows");
  std::size_t ties = 0;
  for (std::size_t i = 0; i < std::min(got.size(), expected.size()); ++i) {
    char energy[32];
    std::snprintf(energy, sizeof energy, "%.2f", expected[i].energy);
    const auto want = std::to_string(i + 1) + "," + expected[i].name + "," + expected[i].batch + "," + energy;
    if (got[i] != want) {
      c.expect(false, "row " + std::to_string(i + 1) + ": '" + got[i] + "' != '" + want + "'");
      break;
    }
    if (i > 0 && expected[i].energy == expected[i - 1].energy) ++ties;
  }
  c.expect(ties > 0, "input produced no energy ties");
  std::istringstream top(slurp(dir / "data" / "top25.txt"));
  std::string first;
  std::getline(top, first);
  char want_first[128];
  std::snprintf(want_first, sizeof want_first, "1. %s (%s) %.2f kcal/mol", expected[0].name.c_str(),
                expected[0].batch.c_str(), expected[0].energy);
  c.expect(first == want_first, "top-k first line '" + first + "'");
}

void failure_semantics(Check& c) {
  TempDir dir;
  auto spec = dummy_screening_workflow();
  for (auto& t : spec.tasks)
    if (t.id == "prepare_ligands") t.action.duration.fail_indices = {3};
  spit(dir / "fail.sf", format_workflow(spec));
  const std::string cmd = "cd '" + dir.path().string() + "' && '" SCREENFLOW_CLI "' simulate fail.sf --run-dir run >out.txt 2>err.txt";
  const int status = std::system(cmd.c_str());
  c.expect(WIFEXITED(status) && WEXITSTATUS(status) == 1, "exit code is not 1");
  const auto log = parse_event_log(slurp(dir / "run" / "events.log"));
  std::map<oracle::Inst, EventKind> last;
  for (const auto& e : log) last[oracle::inst_of(e.instance)] = e.kind;
  c.expect(last.size() == 4 + 2 * 10, "expected 24 instances in the log");
  for (const auto& [inst, kind] : last) {
    EventKind want = EventKind::end_ok;
    if (inst == oracle::Inst{"prepare_ligands", 3}) want = EventKind::end_fail;
    if (inst == oracle::Inst{"perform_docking", 3} || inst.first == "postprocessing") want = EventKind::upstream_failed;
    c.expect(kind == want, oracle::inst_str(inst) + " ended as " + std::string(to_string(kind)));
  }
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0 for no runtime limit
  std::function<void(Check&)> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "dummy DAG replica", 1.0, dummy_dag},
      {2, "pool and slot soundness over 200 random DAGs", 30.0, pool_soundness},
      {3, "batching arithmetic on 10,000 records", 10.0, batching},
      {4, "ligand naming convention", 0, naming},
      {5, "comm flow from split_sdf to expanded instances", 0, comm_flow},
      {6, "determinism of logs, journal and charts", 0, determinism},
      {7, "docking makespan bound", 0, makespan},
      {8, "whiskers statistics", 1.0, whisker_stats},
      {9, "postprocessing ranking oracle", 0, ranking},
      {10, "failure semantics", 0, failure_semantics},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.limit_s > 0 && secs > cr.limit_s) {
      check.failures.push_back("took " + std::to_string(secs) + " s, limit " + std::to_string(cr.limit_s) + " s");
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.3f s", secs);
    const bool ok = check.failures.empty();
    failed += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << cr.id << ": " << cr.name << " (" << timing << ")";
    if (!ok) {
      std::cout << ": " << check.failures.front();
      if (check.failures.size() > 1) std::cout << " (+" << check.failures.size() - 1 << " more)";
    }
    std::cout << "\n";
  }
  std::cout << (failed ? std::to_string(failed) + " of " : "all ") << criteria.size() << " criteria "
            << (failed ? "failed" : "passed") << "\n";
  return failed ? 1 : 0;
}
