// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mamkit/clustering.hpp"

namespace mamkit {

struct TrainConfig {
  std::size_t batch_size = 8;
  double lr_cnn = 2e-4;
  double lr_transformer = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t epochs = 30;
  std::size_t patience = 3;
  std::array<double, kNumStages> rates{1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0};
  double temperature = 1.0;
  std::size_t model_width = 256;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::uint64_t seed = 0;

  /// Throws ArgumentError on out-of-range values.
  void validate() const;
};

/// Keys accepted in config files and as overrides.
const std::vector<std::string>& config_keys();

/// Sets one key from its text form; ArgumentError on unknown keys or bad values.
void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Parses "key = value" lines; '#' starts a comment.
void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& origin);
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);

/// File values, then `overrides` in order, then MAMKIT_SEED when set.
TrainConfig resolve_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

/// Clustering rates from "a,b,c,d"; each entry a decimal or a fraction p/q.
std::array<double, kNumStages> parse_rates(const std::string& text);

/// Round-trippable key=value rendering.
std::string config_to_text(const TrainConfig& cfg);
nlohmann::json config_to_json(const TrainConfig& cfg);

}  // namespace mamkit
