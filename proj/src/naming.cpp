// SPDX-License-Identifier: Apache-2.0
#include "screenflow/naming.hpp"

#include <charconv>

namespace screenflow {

namespace {

// Canonical non-negative decimal: no sign, no leading zeros.
std::optional<int> parse_index(std::string_view s) {
  if (s.empty() || (s.size() > 1 && s[0] == '0')) return std::nullopt;
  for (char c : s)
    if (c < '0' || c > '9') return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::string batch_label(int index) { return "batch" + std::to_string(index); }

std::optional<int> parse_batch_label(std::string_view label) {
  constexpr std::string_view prefix = "batch";
  if (label.substr(0, prefix.size()) != prefix) return std::nullopt;
  return parse_index(label.substr(prefix.size()));
}

std::vector<std::string> batch_labels(int count) {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(batch_label(i));
  return out;
}

std::string batch_sdf_filename(const std::string& db, int batch) {
  return db + "_" + batch_label(batch) + ".sdf";
}

std::string batch_index_filename(const std::string& db, int batch) {
  return db + "_" + batch_label(batch) + ".index";
}

std::string batch_results_filename(const std::string& db, int batch) {
  return db + "_" + batch_label(batch) + ".results";
}

std::string ligand_filename(const std::string& db, int batch, int ligand) {
  return db + "_" + batch_label(batch) + "_ligand" + std::to_string(ligand) + ".pdbqt";
}

std::optional<LigandFileId> parse_ligand_filename(std::string_view name) {
  constexpr std::string_view ext = ".pdbqt";
  if (name.size() < ext.size() || name.substr(name.size() - ext.size()) != ext) return std::nullopt;
  name.remove_suffix(ext.size());
  auto lig = name.rfind("_ligand");
  if (lig == std::string_view::npos) return std::nullopt;
  auto ligand = parse_index(name.substr(lig + 7));
  name = name.substr(0, lig);
  auto bat = name.rfind("_batch");
  if (bat == std::string_view::npos || bat == 0 || !ligand) return std::nullopt;
  auto batch = parse_index(name.substr(bat + 6));
  if (!batch) return std::nullopt;
  return LigandFileId{std::string(name.substr(0, bat)), *batch, *ligand};
}

}  // namespace screenflow
