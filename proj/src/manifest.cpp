// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>
#include <unordered_map>

#include "mamkit/image.hpp"

namespace mamkit {

using nlohmann::json;

namespace {

constexpr std::array<const char*, kNumTypes> kLevelKeys{"smooth", "eye_enlarge", "face_lift",
                                                       "whiten"};
constexpr std::array<const char*, 11> kFields{"id",   "api",  "kind",  "smooth",     "eye_enlarge",
                                              "face_lift", "whiten", "path", "split", "exclusions",
                                              "version"};

int require_int(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ArgumentError(std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

std::string require_string(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw ArgumentError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

json record_to_json(const ManifestRecord& r) {
  json j;
  j["id"] = r.id;
  j["api"] = std::string(api_name(r.api));
  j["kind"] = r.kind;
  for (std::size_t t = 0; t < kNumTypes; ++t) j[kLevelKeys[t]] = r.annotation.level(t).cls();
  j["path"] = r.path;
  j["split"] = r.split ? json(std::string(split_name(*r.split))) : json(nullptr);
  json ex = json::array();
  for (auto c : r.exclusions) ex.push_back(std::string(cleaning_name(c)));
  j["exclusions"] = ex;
  j["version"] = r.version;
  return j;
}

ManifestRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ArgumentError("record is not a JSON object");
  for (const char* f : kFields) {
    if (!j.contains(f)) throw ArgumentError(std::string("missing field '") + f + "'");
  }
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(kFields.begin(), kFields.end(), [&](const char* f) { return key == f; }) ==
        kFields.end()) {
      throw ArgumentError("unknown field '" + key + "'");
    }
  }
  ManifestRecord r;
  r.id = require_int(j, "id");
  const auto api = parse_api(require_string(j, "api"));
  if (!api) throw ArgumentError("unknown api '" + j.at("api").get<std::string>() + "'");
  r.api = *api;
  r.kind = require_int(j, "kind");
  std::array<int, kNumTypes> classes{};
  for (std::size_t t = 0; t < kNumTypes; ++t) classes[t] = require_int(j, kLevelKeys[t]);
  try {
    r.annotation = Annotation::from_classes(classes);
  } catch (const LevelError& e) {
    throw ArgumentError(e.what());
  }
  r.path = require_string(j, "path");
  const auto& split = j.at("split");
  if (!split.is_null()) {
    if (!split.is_string()) throw ArgumentError("field 'split' must be a string or null");
    r.split = parse_split(split.get<std::string>());
    if (!r.split) throw ArgumentError("unknown split '" + split.get<std::string>() + "'");
  }
  const auto& ex = j.at("exclusions");
  if (!ex.is_array()) throw ArgumentError("field 'exclusions' must be an array");
  for (const auto& e : ex) {
    if (!e.is_string()) throw ArgumentError("exclusion tags must be strings");
    auto c = parse_cleaning(e.get<std::string>());
    if (!c) throw ArgumentError("unknown exclusion tag '" + e.get<std::string>() + "'");
    r.exclusions.insert(*c);
  }
  r.version = require_int(j, "version");
  return r;
}

bool record_order(const ManifestRecord& a, const ManifestRecord& b) {
  return std::make_tuple(a.id, a.api, a.combination(), a.version) <
         std::make_tuple(b.id, b.api, b.combination(), b.version);
}

ManifestReport validate_manifest(std::istream& in) {
  ManifestReport report;
  std::string line;
  std::map<std::tuple<int, SourceApi, std::string, int>, std::size_t> seen;
  std::unordered_map<int, std::pair<std::optional<Split>, std::size_t>> split_by_id;
  while (std::getline(in, line)) {
    ++report.lines;
    const std::size_t n = report.lines;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      report.diagnostics.push_back({n, std::string("malformed JSON: ") + e.what()});
      continue;
    } catch (const ArgumentError& e) {
      report.diagnostics.push_back({n, e.what()});
      continue;
    }
    for (auto& msg : record_violations(r)) report.diagnostics.push_back({n, std::move(msg)});

    auto key = std::make_tuple(r.id, r.api, r.combination(), r.version);
    if (auto [it, inserted] = seen.emplace(key, n); !inserted) {
      report.diagnostics.push_back(
          {n, "duplicate (id, api, combination, version) = (" + std::to_string(r.id) + ", " +
                  std::string(api_name(r.api)) + ", " +
                  (r.combination().empty() ? std::string("-") : r.combination()) + ", " +
                  std::to_string(r.version) + "), first seen on line " +
                  std::to_string(it->second)});
    }
    if (!r.excluded()) {
      auto [it, inserted] = split_by_id.emplace(r.id, std::make_pair(r.split, n));
      if (!inserted && it->second.first != r.split) {
        report.diagnostics.push_back({n, "id " + std::to_string(r.id) +
                                             " split differs from line " +
                                             std::to_string(it->second.second)});
      }
    }
    report.records.push_back(std::move(r));
  }
  return report;
}

ManifestReport validate_manifest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    ManifestReport r;
    r.diagnostics.push_back({0, "cannot open " + path.string()});
    return r;
  }
  return validate_manifest(in);
}

void write_manifest(std::ostream& out, const std::vector<ManifestRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_manifest_file(const std::filesystem::path& path,
                         const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  write_manifest(out, records);
}

std::vector<ManifestRecord> read_manifest_file(const std::filesystem::path& path) {
  auto report = validate_manifest_file(path);
  if (!report.ok()) {
    std::string msg = "invalid manifest " + path.string() + ":";
    for (std::size_t i = 0; i < report.diagnostics.size() && i < 10; ++i) {
      msg += "\n  line " + std::to_string(report.diagnostics[i].line) + ": " +
             report.diagnostics[i].message;
    }
    throw ArgumentError(msg);
  }
  return std::move(report.records);
}

void assign_splits(std::vector<ManifestRecord>& records, std::uint64_t seed) {
  std::set<int> excluded_ids;
  for (const auto& r : records) {
    if (r.excluded()) excluded_ids.insert(r.id);
  }
  std::vector<int> universe;
  for (const auto& r : records) {
    if (!excluded_ids.count(r.id)) universe.push_back(r.id);
  }
  SplitAssigner assigner(std::move(universe), seed);
  for (auto& r : records) {
    if (excluded_ids.count(r.id)) {
      r.split.reset();
    } else {
      r.split = assigner.split_of(r.id);
    }
  }
}

ManifestStats manifest_stats(const std::vector<ManifestRecord>& records,
                             const std::optional<std::filesystem::path>& image_root) {
  ManifestStats s;
  std::map<std::pair<int, SourceApi>, std::set<int>> ids;
  std::unordered_map<int, const ManifestRecord*> originals;
  for (const auto& r : records) {
    if (r.kind == 0 && !originals.count(r.id)) originals.emplace(r.id, &r);
  }
  for (const auto& r : records) {
    ++s.total;
    if (r.excluded()) {
      ++s.excluded;
      continue;
    }
    if (r.split) ++s.split_records[static_cast<std::size_t>(*r.split)];
    const auto key = std::make_pair(r.kind, r.api);
    auto& cell = s.cells[key];
    ++cell.records;
    ids[key].insert(r.id);
    if (!image_root || r.kind == 0) continue;
    auto orig = originals.find(r.id);
    if (orig == originals.end()) continue;
    const auto a = *image_root / orig->second->path;
    const auto b = *image_root / r.path;
    if (!std::filesystem::exists(a) || !std::filesystem::exists(b)) continue;
    const auto value = psnr(read_image(a), read_image(b));
    if (value) {
      cell.psnr_sum += *value;
      ++cell.psnr_count;
    } else {
      ++cell.psnr_infinite;
    }
  }
  for (auto& [key, cell] : s.cells) cell.originals = ids[key].size();
  return s;
}

json stats_to_json(const ManifestStats& stats) {
  json rows = json::array();
  for (const auto& [key, cell] : stats.cells) {
    json row;
    row["subset"] = key.first;
    row["api"] = std::string(api_name(key.second));
    row["records"] = cell.records;
    row["originals"] = cell.originals;
    row["per_original"] =
        cell.originals ? static_cast<double>(cell.records) / static_cast<double>(cell.originals) : 0.0;
    if (cell.psnr_count) {
      row["avg_psnr"] = cell.psnr_sum / static_cast<double>(cell.psnr_count);
    } else if (cell.psnr_infinite) {
      row["avg_psnr"] = "infinite";
    } else {
      row["avg_psnr"] = nullptr;
    }
    row["psnr_pairs"] = cell.psnr_count;
    row["psnr_identical"] = cell.psnr_infinite;
    rows.push_back(row);
  }
  json j;
  j["subsets"] = rows;
  j["splits"] = {{"train", stats.split_records[0]},
                 {"val", stats.split_records[1]},
                 {"test", stats.split_records[2]}};
  j["excluded"] = stats.excluded;
  j["total"] = stats.total;
  return j;
}

}  // namespace mamkit
