// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "mamkit/labels.hpp"

namespace mamkit {

class AggregationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PredictionRecord {
  int id = 0;
  Annotation predicted;  // argmax levels
  Annotation truth;
};

/// Whole-image indicator flags. TP is defined only when some operation was
/// performed, TN only when some operation was not.
struct ImageFlags {
  std::optional<bool> tp;
  std::optional<bool> tn;
  bool ac = false;
};

ImageFlags image_flags(const Annotation& truth, const Annotation& predicted);

/// One indicator value as a ratio of counts; undefined when the denominator
/// is zero. In trial-averaged reports `value` is the mean of the per-trial
/// values and the counts are summed over trials.
struct MetricCell {
  std::optional<double> value;
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 0;
};

struct IndicatorBlock {
  MetricCell tp, tn, ac;
};

struct MetricsReport {
  std::array<IndicatorBlock, kNumTypes> per_type;  // canonical type order
  IndicatorBlock sum;
  std::uint64_t images = 0;

  const IndicatorBlock& of(RetouchType t) const { return per_type[static_cast<std::size_t>(t)]; }
};

/// Per-type and whole-image TP/TN/AC over a non-empty record set.
MetricsReport aggregate(std::span<const PredictionRecord> records);

/// Cell-wise mean over trials. Every report must have the same set of
/// defined cells; undefined cells stay undefined.
MetricsReport average_trials(std::span<const MetricsReport> reports);

nlohmann::json report_to_json(const MetricsReport& report);

/// Prediction file: JSON-lines {"id", "pred": [4 classes], "truth": [4 classes]}.
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);
nlohmann::json prediction_to_json(const PredictionRecord& r);

}  // namespace mamkit
