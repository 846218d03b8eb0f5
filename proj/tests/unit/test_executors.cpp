// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <limits>
#include <set>

#include "oracles.hpp"
#include "temp_dir.hpp"
#include "screenflow/executors.hpp"
#include "screenflow/scheduler.hpp"

using namespace screenflow;
using testing_support::TempDir;
using testing_support::slurp;

namespace {

ShellOptions shell_in(const TempDir& dir) {
  std::filesystem::create_directories(dir / "data");
  return ShellOptions{dir / "data", dir.path(), std::nullopt};
}

TaskSpec task(std::string id, ActionSpec action, std::string pool = "p") {
  TaskSpec t;
  t.id = std::move(id);
  t.pool = std::move(pool);
  t.action = std::move(action);
  return t;
}

}  // namespace

TEST_CASE("exec_shell reports exit status") {
  TempDir dir;
  auto opts = shell_in(dir);
  auto ok = exec_shell({"a", std::nullopt}, "true", opts);
  CHECK(ok.ok);
  CHECK(ok.exit_code == 0);
  auto bad = exec_shell({"b", std::nullopt}, "false", opts);
  CHECK_FALSE(bad.ok);
  CHECK(bad.exit_code == 1);
  auto seven = exec_shell({"c", std::nullopt}, "exit 7", opts);
  CHECK(seven.exit_code == 7);
  CHECK(seven.diagnostic == "exit code 7");
}

TEST_CASE("exec_shell captures output, phases and results in the instance log") {
  TempDir dir;
  auto opts = shell_in(dir);
  InstanceKey key{"perform_docking", 4};
  auto c = exec_shell(key, "echo hello; echo 'PHASES 120 80 1500 40'; echo RESULT int 12 >&2", opts);
  REQUIRE(c.ok);
  REQUIRE(c.phases);
  CHECK(*c.phases == PhaseTiming{120, 80, 1500, 40});
  REQUIRE(c.value);
  CHECK(c.value->as_int() == 12);
  const auto log = dir / "logs" / "perform_docking.4.log";
  CHECK(instance_log_path(dir.path(), key) == log);
  CHECK(slurp(log) == c.output);
  CHECK(c.output.find("hello\n") == 0);
  CHECK(instance_log_path(dir.path(), {"split_sdf", std::nullopt}) == dir / "logs" / "split_sdf.log");
}

TEST_CASE("exec_shell runs in the data dir with the task environment") {
  TempDir dir;
  auto opts = shell_in(dir);
  auto c = exec_shell({"prepare_ligands", 2}, "pwd; echo $SF_TASK_ID $SF_MAP_INDEX; echo $SF_RUN_DIR", opts);
  REQUIRE(c.ok);
  const auto data = std::filesystem::canonical(dir / "data").string();
  const auto run = std::filesystem::absolute(dir.path()).string();
  CHECK(c.output == data + "\nprepare_ligands 2\n" + run + "\n");
  auto u = exec_shell({"split_sdf", std::nullopt}, "echo $SF_MAP_INDEX", opts);
  CHECK(u.output == "-\n");
}

TEST_CASE("exec_shell kills a task that exceeds its timeout") {
  TempDir dir;
  auto opts = shell_in(dir);
  opts.timeout_ms = 100;
  const auto t0 = std::chrono::steady_clock::now();
  auto c = exec_shell({"slow", std::nullopt}, "sleep 5", opts);
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK_FALSE(c.ok);
  CHECK(c.diagnostic.find("timed out") != std::string::npos);
  CHECK(elapsed < std::chrono::seconds(3));
}

TEST_CASE("run_command captures combined output") {
  TempDir dir;
  auto r = run_command("echo out; echo err >&2; exit 3", dir.path());
  CHECK(r.exit_code == 3);
  CHECK(r.output == "out\nerr\n");
  auto p = run_command("pwd", dir.path());
  CHECK(p.output == std::filesystem::canonical(dir.path()).string() + "\n");
}

TEST_CASE("duration sampling") {
  auto rng = derive_substream(0, "x", std::nullopt);
  for (int i = 0; i < 5; ++i) CHECK(sample_duration(DurationSpec::fixed(100), rng) == 100);
  for (int i = 0; i < 5; ++i) CHECK(sample_duration(DurationSpec::uniform(50, 50), rng) == 50);

  SUBCASE("uniform draws match the reference stream") {
    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
      auto mine = derive_substream(seed, "perform_docking", 3);
      auto ref = oracle::substream(seed, "perform_docking", 3);
      for (int i = 0; i < 50; ++i) CHECK(sample_duration(DurationSpec::uniform(10, 20), mine) == ref.between(10, 20));
    }
  }
  SUBCASE("uniform mean") {
    auto r = derive_substream(7, "t", std::nullopt);
    double sum = 0;
    const int n = 10000;
    std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = 0;
    for (int i = 0; i < n; ++i) {
      auto v = sample_duration(DurationSpec::uniform(8000, 15000), r);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += static_cast<double>(v);
    }
    CHECK(std::abs(sum / n - 11500.0) / 11500.0 < 0.02);
    CHECK(lo >= 8000);
    CHECK(hi <= 15000);
  }
  SUBCASE("weight scales the draw") {
    auto d = DurationSpec::fixed(100);
    d.weight = 2.5;
    CHECK(sample_duration(d, rng) == 250);
    d = DurationSpec::fixed(3);
    d.weight = 0.5;
    CHECK(sample_duration(d, rng) == 2);  // 1.5 rounds away from zero
  }
}

TEST_CASE("substreams are keyed by seed, task and index") {
  CHECK(substream_name("A", std::nullopt) == "A#-");
  CHECK(substream_name("A", 12) == "A#12");
  auto first = [](std::uint64_t seed, const char* t, std::optional<int> i) { return derive_substream(seed, t, i)(); };
  CHECK(first(5, "A", 0) == first(5, "A", 0));
  CHECK(first(5, "A", 0) != first(5, "A", 1));
  CHECK(first(5, "A", 0) != first(6, "A", 0));
  CHECK(first(5, "A", std::nullopt) != first(5, "A", 0));
  auto ref = oracle::substream(5, "A", 0);
  auto mine = derive_substream(5, "A", 0);
  for (int i = 0; i < 10; ++i) CHECK(mine() == ref.next());
}

TEST_CASE("simulated phases sum to the duration") {
  for (std::int64_t d : {0, 1, 7, 99, 100, 1234, 15000, 999999}) {
    auto p = simulated_phases(d);
    CHECK(p.total() == static_cast<double>(d));
    CHECK(p.setup_cuda >= 0);
    CHECK(p.docking >= p.setup_cuda);
  }
  CHECK(simulated_phases(1000) == PhaseTiming{80, 50, 850, 20});
}

TEST_CASE("PHASES and RESULT lines") {
  CHECK(format_phases_line({120, 80, 1500, 40}) == "PHASES 120 80 1500 40");
  CHECK(format_phases_line({1.5, 0, 2, 0}) == "PHASES 1.5 0 2 0");
  CHECK(parse_phases("noise\nPHASES 1 2 3 4\nPHASES 5 6 7 8\n") == PhaseTiming{5, 6, 7, 8});
  CHECK_FALSE(parse_phases("PHASES 1 2 3\n"));
  CHECK_FALSE(parse_phases("PHASES 1 2 3 -4\n"));
  CHECK_FALSE(parse_phases("PHASES 1 2 3 4 5\n"));
  CHECK(parse_result_line("RESULT str hello world\n")->as_text() == "hello world");
  CHECK_FALSE(parse_result_line("RESULT int x\n"));
  CHECK(phase_value({1, 2, 3, 4}, "shutdown") == 4);
  CHECK_THROWS_AS(phase_value({}, "bogus"), Error);
}

TEST_CASE("returns expressions") {
  CHECK(evaluate_returns("int:10").as_int() == 10);
  CHECK(evaluate_returns("str:a:b").as_text() == "a:b");
  CHECK(evaluate_returns("list:x,y,,z").as_list() == TextList{"x", "y", "", "z"});
  CHECK(evaluate_returns("list:").as_list().empty());
  CHECK(evaluate_returns("labels:3").as_list() == TextList{"batch0", "batch1", "batch2"});
  CHECK(evaluate_returns("labels:0").as_list().empty());
  CHECK_THROWS_AS(evaluate_returns("labels:-1"), Error);
  CHECK_THROWS_AS(evaluate_returns("int:ten"), Error);
  CHECK_THROWS_AS(evaluate_returns("nope"), Error);
  CHECK_THROWS_AS(evaluate_returns("float:1"), Error);
}

TEST_CASE("sim executor finishes at start plus sampled duration") {
  WorkflowSpec spec;
  spec.name = "w";
  spec.pools = {{"p", 2}};
  spec.tasks = {task("a", ActionSpec::sim(DurationSpec::fixed(100))), task("b", ActionSpec::sim(DurationSpec::uniform(10, 20)))};
  spec.edges = {{"a", "b"}};
  TempDir dir;
  SimClock clock;
  SimExecutor exec(clock, SimExecutor::Options{9, dir.path(), {}, nullptr});
  CommStore store;
  auto out = run(spec, exec, clock, store);
  REQUIRE(out.result.success);
  auto ref = oracle::substream(9, "b", std::nullopt);
  const auto expected_b = 100 + ref.between(10, 20);
  CHECK(out.events.back().t_ms == expected_b);
  CHECK(slurp(dir / "logs" / "a.log") == "PHASES 8 5 85 2\n");
  CHECK(out.result.completions.at({"a", std::nullopt}).phases == PhaseTiming{8, 5, 85, 2});
}

TEST_CASE("sim executor rejects shell actions") {
  WorkflowSpec spec;
  spec.name = "w";
  spec.pools = {{"p", 1}};
  spec.tasks = {task("s", ActionSpec::shell("true"))};
  SimClock clock;
  SimExecutor exec(clock, SimExecutor::Options{});
  CommStore store;
  auto out = run(spec, exec, clock, store);
  CHECK_FALSE(out.result.success);
  CHECK(out.result.completions.at({"s", std::nullopt}).diagnostic.find("process executor") != std::string::npos);
}

TEST_CASE("unknown builtin fails the instance") {
  WorkflowSpec spec;
  spec.name = "w";
  spec.pools = {{"p", 1}};
  spec.tasks = {task("s", ActionSpec::builtin("no_such_step"))};
  SimClock clock;
  BuiltinRegistry empty;
  SimExecutor exec(clock, SimExecutor::Options{0, std::nullopt, {}, &empty});
  CommStore store;
  auto out = run(spec, exec, clock, store);
  CHECK_FALSE(out.result.success);
}

TEST_CASE("builtin exceptions become failed completions") {
  BuiltinRegistry reg;
  reg["boom"] = [](const StepContext&) -> StepResult { throw Error("kaput"); };
  reg["echo"] = [](const StepContext& ctx) {
    StepResult r;
    r.output = "PHASES 1 1 1 1\n";
    r.value = CommValue::of_text(ctx.params.empty() ? "" : ctx.params[0]);
    return r;
  };
  TaskSpec boom = task("x", ActionSpec::builtin("boom"));
  TaskSpec echo = task("y", ActionSpec::builtin("echo"));
  Launch lb{{"x", std::nullopt}, &boom, "p", 0, {}, {}, {}, std::nullopt, 0};
  Launch le{{"y", std::nullopt}, &echo, "p", 0, {}, {"hi"}, {}, std::nullopt, 0};
  auto b = run_builtin(&reg, lb, StepContext{lb.key, {}, std::nullopt, {}, {}, true});
  CHECK_FALSE(b.ok);
  CHECK(b.diagnostic == "kaput");
  auto e = run_builtin(&reg, le, StepContext{le.key, le.params, std::nullopt, {}, {}, true});
  CHECK(e.ok);
  CHECK(e.value->as_text() == "hi");
  CHECK(e.phases == PhaseTiming{1, 1, 1, 1});
}

TEST_CASE("process executor runs shell tasks concurrently with separate logs") {
  TempDir dir;
  std::filesystem::create_directories(dir / "data");
  WorkflowSpec spec;
  spec.name = "w";
  spec.pools = {{"p", 4}};
  spec.tasks = {task("gen", ActionSpec::shell("echo RESULT list a,b,c,d"))};
  spec.tasks.back().produces = "return_value";
  spec.groups = {GroupSpec{"G", CommRef{"gen", "return_value"}}};
  TaskSpec w = task("work", ActionSpec::shell("sleep 0.3; echo item={map_value} idx=$SF_MAP_INDEX"));
  w.group = "G";
  spec.tasks.push_back(w);
  spec.edges = {{"gen", "G"}};
  REQUIRE(validate(spec).ok());

  WallClock clock;
  ProcessExecutor exec(ProcessExecutor::Options{dir / "data", dir.path(), std::nullopt, 0, nullptr});
  CommStore store;
  const auto t0 = std::chrono::steady_clock::now();
  auto out = run(spec, exec, clock, store);
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  REQUIRE(out.result.success);
  CHECK(out.result.instances.size() == 5);
  const char* items[] = {"a", "b", "c", "d"};
  for (int i = 0; i < 4; ++i) {
    CHECK(slurp(dir / "logs" / ("work." + std::to_string(i) + ".log")) ==
          "item=" + std::string(items[i]) + " idx=" + std::to_string(i) + "\n");
  }
  // Four 300 ms tasks on four slots overlap instead of running back to back.
  CHECK(elapsed < std::chrono::milliseconds(1100));
  std::set<int> slots;
  for (const auto& e : out.events)
    if (e.kind == EventKind::start && e.instance.task_id == "work") slots.insert(*e.slot);
  CHECK(slots == std::set<int>{0, 1, 2, 3});
}

TEST_CASE("process executor sleeps for sim actions and propagates failures") {
  TempDir dir;
  std::filesystem::create_directories(dir / "data");
  WorkflowSpec spec;
  spec.name = "w";
  spec.pools = {{"p", 1}};
  auto d = DurationSpec::fixed(50);
  d.fail_all = true;
  spec.tasks = {task("a", ActionSpec::sim(DurationSpec::fixed(60))), task("b", ActionSpec::sim(d)),
                task("c", ActionSpec::shell("true"))};
  spec.edges = {{"a", "b"}, {"b", "c"}};
  WallClock clock;
  ProcessExecutor exec(ProcessExecutor::Options{dir / "data", dir.path(), std::nullopt, 0, nullptr});
  CommStore store;
  auto out = run(spec, exec, clock, store);
  CHECK_FALSE(out.result.success);
  std::int64_t a_start = -1, a_end = -1;
  for (const auto& e : out.events) {
    if (e.instance.task_id != "a") continue;
    if (e.kind == EventKind::start) a_start = e.t_ms;
    if (e.kind == EventKind::end_ok) a_end = e.t_ms;
  }
  CHECK(a_end - a_start >= 60);
  CHECK(out.events.back().kind == EventKind::upstream_failed);
  CHECK(out.events.back().instance.task_id == "c");
  CHECK_FALSE(std::filesystem::exists(dir / "logs" / "c.log"));
}
