// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace screenflow {

/// `batch<i>`, 0-based.
std::string batch_label(int index);
/// Inverse of batch_label; rejects leading zeros and other spellings.
std::optional<int> parse_batch_label(std::string_view label);
std::vector<std::string> batch_labels(int count);

std::string batch_sdf_filename(const std::string& db, int batch);
std::string batch_index_filename(const std::string& db, int batch);
std::string batch_results_filename(const std::string& db, int batch);

/// `<db>_batch<i>_ligand<j>.pdbqt`
std::string ligand_filename(const std::string& db, int batch, int ligand);

struct LigandFileId {
  std::string db;
  int batch = 0;
  int ligand = 0;

  friend bool operator==(const LigandFileId&, const LigandFileId&) = default;
};

/// Inverse of ligand_filename for canonical names.
std::optional<LigandFileId> parse_ligand_filename(std::string_view name);

}  // namespace screenflow
