// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "mamkit/backbone.hpp"
#include "mamkit/clustering.hpp"
#include "mamkit/encoder.hpp"
#include "mamkit/image.hpp"
#include "mamkit/params.hpp"

namespace mamkit {

struct MamConfig {
  std::array<double, kNumStages> rates{1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0};
  double temperature = 1.0;
  std::size_t model_width = 256;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t ff_mult = 4;
};

struct ModelConfig {
  BackboneConfig backbone;
  MamConfig mam;
  std::uint64_t init_seed = 0;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Backbone followed by the multi-granularity attention module.
class RetouchDetector {
 public:
  explicit RetouchDetector(const ModelConfig& cfg);
  RetouchDetector(const RetouchDetector&) = delete;
  RetouchDetector& operator=(const RetouchDetector&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const Backbone& backbone() const { return backbone_; }
  const ClusterBank& clusters() const { return clusters_; }
  const MultiGranularityEncoder& encoder() const { return encoder_; }

  ClusterConfig cluster_config(AssignMode mode) const;

  /// images [B, 3, H, W] scaled to [-1, 1].
  HeadOutputs forward(const Tensor& images, AssignMode mode, RngStream* rng) const;
  /// Stage features [B, C_l, H_l, W_l] from any backbone honouring the shape contract.
  HeadOutputs forward_features(const std::vector<Tensor>& features, AssignMode mode,
                               RngStream* rng) const;
  /// Stage tokens [B, n_l, C_l].
  HeadOutputs forward_tokens(const std::vector<Tensor>& tokens, AssignMode mode,
                             RngStream* rng) const;

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  RngStream init_;
  Backbone backbone_;
  ClusterBank clusters_;
  MultiGranularityEncoder encoder_;
};

/// Packs RGB images into [B, 3, H, W] with values x / 127.5 - 1.
Tensor images_to_tensor(std::span<const Image> images);

}  // namespace mamkit
