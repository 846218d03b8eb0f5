// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "screenflow/cli.hpp"
#include "screenflow/events.hpp"
#include "screenflow/executors.hpp"
#include "screenflow/gantt.hpp"
#include "screenflow/hash.hpp"
#include "screenflow/naming.hpp"
#include "screenflow/scheduler.hpp"
#include "screenflow/screening.hpp"
#include "screenflow/workflow_file.hpp"

namespace py = pybind11;
using namespace screenflow;

namespace {

py::dict run_summary(const RunOutput& out) {
  py::list instances;
  for (const auto& i : out.result.instances) {
    py::dict d;
    d["task"] = i.key.task_id;
    d["map_index"] = i.key.map_index;
    d["state"] = std::string(to_string(i.state));
    d["pool"] = i.pool;
    instances.append(d);
  }
  py::dict d;
  d["success"] = out.result.success;
  d["instances"] = instances;
  d["events"] = format_event_log(out.events);
  return d;
}

ChartFormat chart_format(const std::string& name) {
  auto f = parse_chart_format(name);
  if (!f) throw Error("unknown chart format '" + name + "'");
  return *f;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DAG workflow engine with a batched virtual-screening pipeline";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", error.ptr());

  py::class_<PoolSpec>(m, "PoolSpec")
      .def(py::init([](std::string name, int slots) { return PoolSpec{std::move(name), slots}; }), py::arg("name"),
           py::arg("slots"))
      .def_readwrite("name", &PoolSpec::name)
      .def_readwrite("slots", &PoolSpec::slots)
      .def("__repr__", [](const PoolSpec& p) { return "PoolSpec(" + p.name + ", " + std::to_string(p.slots) + ")"; });

  py::class_<WorkflowSpec>(m, "Workflow")
      .def_readwrite("name", &WorkflowSpec::name)
      .def_readwrite("pools", &WorkflowSpec::pools)
      .def_property_readonly("task_ids",
                             [](const WorkflowSpec& s) {
                               std::vector<std::string> ids;
                               for (const auto& t : s.tasks) ids.push_back(t.id);
                               return ids;
                             })
      .def_property_readonly("edges",
                             [](const WorkflowSpec& s) {
                               std::vector<std::pair<std::string, std::string>> out;
                               for (const auto& e : s.edges) out.emplace_back(e.from, e.to);
                               return out;
                             })
      .def("to_text", [](const WorkflowSpec& s) { return format_workflow(s); })
      .def("__eq__", [](const WorkflowSpec& a, const WorkflowSpec& b) { return a == b; });

  m.def("parse_workflow", [](const std::string& text) { return parse_workflow(text); }, py::arg("text"));
  m.def("load_workflow", [](const std::filesystem::path& p) { return parse_workflow_file(p); }, py::arg("path"));
  m.def(
      "validate",
      [](const WorkflowSpec& spec) {
        const auto steps = screening_step_names();
        return validate(spec, &steps).violations;
      }, py::arg("workflow"),
      "Violations as strings; empty when the workflow is valid.");
  m.def("topo_layers", [](const WorkflowSpec& spec) { return topo_layers(spec); }, py::arg("workflow"));
  m.def("dummy_screening_workflow", &dummy_screening_workflow, py::arg("batches") = 10, py::arg("small_slots") = 2,
        py::arg("large_slots") = 4);
  m.def(
      "screening_workflow",
      [](const std::filesystem::path& receptor, const std::filesystem::path& ligands, int batch_size,
         const std::string& db_name, int small_slots, int large_slots, std::optional<std::string> docking_command,
         int top_k) {
        ScreeningConfig c;
        c.receptor = receptor;
        c.ligands = ligands;
        c.batch_size = batch_size;
        c.db_name = db_name;
        c.small_slots = small_slots;
        c.large_slots = large_slots;
        c.mock = !docking_command;
        c.docking_command = docking_command.value_or("");
        c.top_k = top_k;
        return build_screening_workflow(c);
      },
      py::arg("receptor"), py::arg("ligands"), py::arg("batch_size") = 1000, py::arg("db_name") = "db",
      py::arg("small_slots") = 2, py::arg("large_slots") = 4, py::arg("docking_command") = py::none(),
      py::arg("top_k") = 10);

  m.def(
      "simulate",
      [](const WorkflowSpec& spec, std::uint64_t seed) {
        SimClock clock;
        SimExecutor exec(clock, SimExecutor::Options{seed, std::nullopt, {}, &screening_steps()});
        CommStore store;
        py::gil_scoped_release release;
        auto out = run(spec, exec, clock, store);
        py::gil_scoped_acquire acquire;
        return run_summary(out);
      },
      py::arg("workflow"), py::arg("seed") = 0, "Discrete-event run held in memory.");
  m.def(
      "execute_run",
      [](const WorkflowSpec& spec, const std::filesystem::path& run_dir, std::uint64_t seed, bool simulate,
         bool force, std::optional<std::int64_t> task_timeout_ms) {
        RunRequest req;
        req.spec = spec;
        req.run_dir = run_dir;
        req.seed = seed;
        req.simulate = simulate;
        req.force = force;
        req.task_timeout_ms = task_timeout_ms;
        RunReport report;
        {
          py::gil_scoped_release release;
          report = execute_run(req);
        }
        auto d = run_summary(report.output);
        d["run_dir"] = report.run_dir;
        d["data_dir"] = report.data_dir;
        return d;
      },
      py::arg("workflow"), py::arg("run_dir"), py::arg("seed") = 0, py::arg("simulate") = true,
      py::arg("force") = false, py::arg("task_timeout_ms") = py::none(),
      "Run with on-disk artifacts: workflow.sf, events.log, run.comm and logs/.");

  m.def(
      "split_sdf",
      [](const std::filesystem::path& input, int batch_size, const std::string& db,
         const std::filesystem::path& out_dir) {
        std::vector<std::pair<std::string, int>> out;
        for (const auto& b : split_sdf(input, batch_size, db, out_dir).batches) out.emplace_back(b.label, b.ligand_count);
        return out;
      },
      py::arg("input"), py::arg("batch_size"), py::arg("db_name"), py::arg("out_dir"));
  m.def(
      "postprocess",
      [](const std::string& db, const std::vector<std::string>& labels, const std::filesystem::path& data_dir,
         int top_k) {
        std::vector<std::tuple<std::string, std::string, double>> out;
        for (const auto& r : postprocess(db, labels, data_dir, top_k).ranking)
          out.emplace_back(r.ligand_name, r.batch_label, r.best_energy);
        return out;
      },
      py::arg("db_name"), py::arg("labels"), py::arg("data_dir"), py::arg("top_k") = 10);
  m.def("mock_energy", [](const std::string& name) { return mock_energy(name); }, py::arg("ligand_name"));
  m.def("batch_labels", &batch_labels, py::arg("count"));
  m.def("ligand_filename", &ligand_filename, py::arg("db_name"), py::arg("batch"), py::arg("ligand"));
  m.def(
      "parse_ligand_filename",
      [](const std::string& name) -> std::optional<std::tuple<std::string, int, int>> {
        auto id = parse_ligand_filename(name);
        if (!id) return std::nullopt;
        return std::make_tuple(id->db, id->batch, id->ligand);
      },
      py::arg("name"));
  m.def("fnv1a64", [](const std::string& s) { return fnv1a64(s); }, py::arg("data"));

  m.def(
      "whiskers",
      [](std::vector<double> samples) {
        auto w = whiskers(std::move(samples));
        py::dict d;
        d["min"] = w.min;
        d["q25"] = w.q25;
        d["median"] = w.median;
        d["q75"] = w.q75;
        d["max"] = w.max;
        return d;
      },
      py::arg("samples"));
  m.def(
      "phase_samples",
      [](const std::filesystem::path& logs_dir, const std::string& phase) {
        return collect_phase_samples(logs_dir, phase);
      },
      py::arg("logs_dir"), py::arg("phase"));
  m.def(
      "render_gantt",
      [](const std::string& events, const std::string& mode, const std::string& format,
         const std::vector<PoolSpec>& pools) {
        auto items = intervals(parse_event_log(events));
        if (mode == "task") return render_task_gantt(items, chart_format(format));
        if (mode == "resource") return render_resource_gantt(items, pools, chart_format(format));
        throw Error("unknown chart mode '" + mode + "'");
      },
      py::arg("events"), py::arg("mode") = "task", py::arg("format") = "svg",
      py::arg("pools") = std::vector<PoolSpec>{});
}
