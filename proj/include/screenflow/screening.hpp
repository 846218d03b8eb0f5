// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "screenflow/execution.hpp"
#include "screenflow/executors.hpp"
#include "screenflow/naming.hpp"
#include "screenflow/workflow.hpp"

namespace screenflow {

inline constexpr const char* kPreparedReceptor = "receptor.prepared";

struct SdfRecord {
  std::string name;
  std::string body;  // exact bytes, delimiter line included when present
  int atom_count = 0;
};

struct SdfFile {
  std::vector<SdfRecord> records;
  std::string trailer;  // whitespace after the last delimiter
  std::vector<std::string> warnings;
};

/// Splits on lines whose trimmed content is `$$$$`. A final record without
/// a delimiter is kept; a malformed counts line yields atom_count 0 and a
/// warning. Concatenating every body and the trailer reproduces `text`.
SdfFile parse_sdf(std::string_view text);

struct BatchInfo {
  std::string label;
  std::filesystem::path sdf_path;
  int ligand_count = 0;
  std::filesystem::path index_path;
};

struct BatchManifest {
  std::string db_name;
  int batch_size = 1;
  std::vector<BatchInfo> batches;
};

/// Writes `<db>_batch<i>.sdf` and `<db>_batch<i>.index` for consecutive
/// runs of `batch_size` records. Zero records writes nothing.
BatchManifest split_sdf(const std::filesystem::path& input, int batch_size, const std::string& db_name,
                        const std::filesystem::path& out_dir);

inline std::vector<std::string> get_batch_labels(int n) { return batch_labels(n); }

/// Writes one `.pdbqt` per ligand of the batch. Without a converter the file
/// is a stub with the molecule name and atom count; with one, the command
/// runs per ligand with `{in}` (a single-record SDF) and `{out}` substituted.
int prepare_ligands(const std::string& batch_label, const std::string& db_name,
                    const std::filesystem::path& data_dir,
                    const std::optional<std::string>& converter_command = std::nullopt);

/// Copies (or converts with `{in}`/`{out}`) the receptor to receptor.prepared.
void prepare_receptor(const std::filesystem::path& receptor, const std::filesystem::path& data_dir,
                      const std::optional<std::string>& command = std::nullopt);

/// `-(1 + (fnv1a64(name) mod 1000) / 100)` kcal/mol.
double mock_energy(std::string_view ligand_name);

struct DockingMode {
  bool mock = true;
  std::string command;  // template with {index} and {outdir}

  static DockingMode mocked() { return {}; }
  static DockingMode real(std::string cmd) { return {false, std::move(cmd)}; }
};

struct DockingOutcome {
  std::filesystem::path results_path;
  PhaseTiming phases;
  std::string output;
};

/// Docks every ligand listed in the batch index. Throws Error if a listed
/// ligand file is missing or the docking command fails.
DockingOutcome perform_docking(const std::string& batch_label, const std::string& db_name,
                               const std::filesystem::path& data_dir, const DockingMode& mode,
                               bool simulated = false);

struct DockingResult {
  std::string ligand_name;
  std::string batch_label;
  double best_energy = 0;

  friend bool operator==(const DockingResult&, const DockingResult&) = default;
};

/// Parses `<ligand_name> <energy>` lines; the name may contain spaces.
std::vector<DockingResult> read_results_file(const std::filesystem::path& path, const std::string& batch_label);

struct RankingReport {
  std::vector<DockingResult> ranking;
  std::filesystem::path csv_path;
  std::filesystem::path top_path;
};

/// Merges all batch results, best (lowest) energy first with ties broken by
/// ligand name, and writes ranking.csv plus top<k>.txt.
RankingReport postprocess(const std::string& db_name, const std::vector<std::string>& labels,
                          const std::filesystem::path& data_dir, int top_k = 10);

/// Builtin steps: split_sdf, get_batch_labels, prepare_receptor,
/// prepare_ligands, perform_docking, postprocessing.
const BuiltinRegistry& screening_steps();
std::set<std::string> screening_step_names();

struct ScreeningConfig {
  std::filesystem::path receptor;
  std::filesystem::path ligands;
  int batch_size = 1000;
  std::string db_name = "db";
  int small_slots = 2;
  int large_slots = 4;
  bool mock = true;
  std::string docking_command;
  std::optional<std::string> converter_command;
  std::optional<std::string> receptor_command;
  int top_k = 10;
};

/// The batched screening DAG wired with builtin steps:
/// {split_sdf, prepare_receptor} -> get_batch_labels -> docking[
/// prepare_ligands -> perform_docking ] -> postprocessing.
WorkflowSpec build_screening_workflow(const ScreeningConfig& config);

/// Same shape with simulated durations and a fixed batch count.
WorkflowSpec dummy_screening_workflow(int batches = 10, int small_slots = 2, int large_slots = 4);

}  // namespace screenflow
