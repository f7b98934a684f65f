// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "mamkit/augment.hpp"
#include "mamkit/config.hpp"
#include "mamkit/dataset.hpp"
#include "mamkit/metrics.hpp"
#include "mamkit/model.hpp"

namespace mamkit {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  MetricsReport val_metrics;
  bool improved = false;
};

nlohmann::json epoch_log_to_json(const EpochLog& e);

struct TrainOptions {
  /// Rewritten whenever validation loss improves.
  std::optional<std::filesystem::path> checkpoint;
  /// One JSON line per epoch.
  std::optional<std::filesystem::path> run_log;
  std::function<void(const EpochLog&)> on_epoch;
  AugmentConfig augment;
};

struct TrainResult {
  /// Holds the parameters of the best validation epoch.
  std::unique_ptr<RetouchDetector> model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

ModelConfig model_config_for(const TrainConfig& cfg, int height, int width);

/// Adam on the summed cross-entropy over shuffled batches; every image is
/// augmented with a draw keyed by (seed, epoch, id). Stops after `patience`
/// epochs without a validation-loss improvement or at the epoch cap.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const TrainOptions& options = {});
/// Same, continuing from an existing model.
TrainResult train(const TrainConfig& cfg, std::unique_ptr<RetouchDetector> model,
                  const Dataset& data, const TrainOptions& options = {});

struct Prediction {
  std::vector<PredictionRecord> records;
  double loss = 0.0;  // mean per image
};

/// Eval-mode inference over `samples`, each augmented by a stream labelled
/// "<label>/<id>" on `seed`.
Prediction predict_split(const RetouchDetector& model, std::span<const Sample> samples,
                         std::uint64_t seed, const std::string& label, std::size_t batch_size,
                         const AugmentConfig& augment = {});

struct EvaluationResult {
  std::vector<MetricsReport> trials;
  std::vector<Prediction> predictions;
  MetricsReport averaged;

  /// max - min of the per-trial sum TP.
  double tp_spread() const;
};

/// `trials` augmentation re-draws, each aggregated, then averaged.
EvaluationResult evaluate(const RetouchDetector& model, std::span<const Sample> samples,
                          std::size_t trials, std::uint64_t seed, std::size_t batch_size = 8,
                          const AugmentConfig& augment = {});

nlohmann::json evaluation_to_json(const EvaluationResult& r);

}  // namespace mamkit
