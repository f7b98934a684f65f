// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mamkit/labels.hpp"

namespace mamkit {

nlohmann::json record_to_json(const ManifestRecord& r);
/// Strict parse of one manifest line; throws ArgumentError describing the
/// first malformed field. Record invariants are not checked here.
ManifestRecord record_from_json(const nlohmann::json& j);

struct ManifestDiagnostic {
  std::size_t line = 0;  // 1-based; 0 for whole-file findings
  std::string message;
};

struct ManifestReport {
  std::vector<ManifestRecord> records;  // every line that parsed
  std::vector<ManifestDiagnostic> diagnostics;
  std::size_t lines = 0;
  bool ok() const { return diagnostics.empty(); }
};

/// Parses JSON-lines and checks record invariants, uniqueness of
/// (id, api, combination, version) and split inheritance per original id.
ManifestReport validate_manifest(std::istream& in);
ManifestReport validate_manifest_file(const std::filesystem::path& path);

void write_manifest(std::ostream& out, const std::vector<ManifestRecord>& records);
void write_manifest_file(const std::filesystem::path& path,
                         const std::vector<ManifestRecord>& records);
/// Reads and validates; throws ArgumentError with the diagnostics on failure.
std::vector<ManifestRecord> read_manifest_file(const std::filesystem::path& path);

/// Reassigns train/val/test over the non-excluded original ids (80/10/10,
/// seeded). Excluded records lose their split.
void assign_splits(std::vector<ManifestRecord>& records, std::uint64_t seed);

/// Sort key used for deterministic record ordering.
bool record_order(const ManifestRecord& a, const ManifestRecord& b);

struct SubsetCell {
  std::size_t records = 0;
  std::size_t originals = 0;  // distinct ids
  double psnr_sum = 0.0;
  std::size_t psnr_count = 0;
  std::size_t psnr_infinite = 0;
};

struct ManifestStats {
  // (kind, api) -> counts, mirroring the per-subset per-API summary table.
  std::map<std::pair<int, SourceApi>, SubsetCell> cells;
  std::array<std::size_t, 3> split_records{};
  std::size_t excluded = 0;
  std::size_t total = 0;
};

/// Counts records per subset and API. When `image_root` is given, PSNR
/// between each retouched image and its id's original is accumulated.
ManifestStats manifest_stats(const std::vector<ManifestRecord>& records,
                             const std::optional<std::filesystem::path>& image_root);
nlohmann::json stats_to_json(const ManifestStats& stats);

}  // namespace mamkit
