// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "mamkit/clustering.hpp"
#include "mamkit/params.hpp"
#include "mamkit/tensor.hpp"

namespace mamkit {

struct BackboneConfig {
  std::array<std::size_t, kNumStages> channels{16, 32, 64, 128};
  std::size_t input_channels = 3;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t residual_blocks = 2;

  /// Throws DimensionError unless height and width are positive multiples of 16.
  void validate() const;
};

/// Four-stage residual CNN. Stage l: stride-2 3x3 conv + GELU, then
/// residual blocks x <- gelu(x + conv3x3(x)). Each stage emits its trunk
/// features layer-normalized over channels; the trunk itself continues
/// unnormalized. Output of stage l has extent (H / 2^(l+1), W / 2^(l+1)).
class Backbone {
 public:
  struct Conv {
    Tensor weight, bias;
  };
  struct Stage {
    Conv down;
    std::vector<Conv> blocks;
    Tensor norm_gain, norm_bias;
  };

  Backbone(ParameterStore& store, const std::string& prefix, const BackboneConfig& cfg,
           RngStream& init);

  const BackboneConfig& config() const { return cfg_; }
  /// images [B, C, H, W] -> stage features, each [B, C_l, H_l, W_l].
  std::vector<Tensor> forward(const Tensor& images) const;
  /// Runs only the first `stages` stages.
  std::vector<Tensor> forward(const Tensor& images, std::size_t stages) const;

 private:
  BackboneConfig cfg_;
  std::vector<Stage> stages_;
};

}  // namespace mamkit
