// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "mamkit/params.hpp"
#include "mamkit/rng.hpp"
#include "mamkit/tensor.hpp"

namespace mamkit {

inline constexpr std::size_t kNumStages = 4;

enum class AssignMode { kTrainStochasticHard, kEvalDeterministicHard, kSoft };

const char* assign_mode_name(AssignMode mode);

struct ClusterConfig {
  std::array<double, kNumStages> rates{1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0};
  double temperature = 1.0;
  AssignMode mode = AssignMode::kEvalDeterministicHard;

  /// Throws ArgumentError unless 0 < r <= 1 and temperature > 0.
  void validate() const;
};

/// n_l = (H / 2^(l+1)) * (W / 2^(l+1)).
std::size_t stage_token_count(std::size_t height, std::size_t width, std::size_t stage);
std::array<std::size_t, kNumStages> stage_token_counts(std::size_t height, std::size_t width);

/// m_l = max(1, round(n_l * r_l)).
std::array<std::size_t, kNumStages> cluster_counts(const std::array<std::size_t, kNumStages>& n,
                                                   const std::array<double, kNumStages>& rates);

/// [B, C, H, W] stage features -> [B, H*W, C] tokens, raster order.
Tensor patchify(const Tensor& stage_features);

/// Learnable cluster embeddings and projections for all stages.
///
/// Stage l has centres [m_l, C_l] and projections W_Q, W_K, W_V of shape
/// [C_l, D]. W_o ([D, D] plus bias) is shared by every stage. Stages with
/// rate 1 hold no centres, W_Q or W_K.
class ClusterBank {
 public:
  struct Stage {
    std::size_t channels = 0;
    std::size_t tokens = 0;
    std::size_t clusters = 0;
    bool skip = false;
    Tensor centres, w_q, w_k, w_v;
  };

  ClusterBank(ParameterStore& store, const std::string& prefix,
              const std::array<std::size_t, kNumStages>& channels,
              const std::array<std::size_t, kNumStages>& tokens, const ClusterConfig& cfg,
              std::size_t width, RngStream& init);

  const Stage& stage(std::size_t l) const { return stages_.at(l); }
  std::size_t width() const { return width_; }
  const Tensor& w_o() const { return w_o_; }
  const Tensor& b_o() const { return b_o_; }
  /// Applies the shared output projection to [..., D].
  Tensor project_out(const Tensor& x) const;

 private:
  std::vector<Stage> stages_;
  std::size_t width_;
  Tensor w_o_, b_o_;
};

/// Raw assignment logits (W_Q c_i) . (W_K g_j) as [B, m, n].
Tensor assignment_logits(const ClusterBank& bank, std::size_t stage, const Tensor& tokens);

/// Column-normalized assignment [B, m, n] in the configured mode. `rng`
/// is only drawn from in the stochastic mode and may be null otherwise.
Tensor assign(const ClusterBank& bank, std::size_t stage, const Tensor& tokens,
              const ClusterConfig& cfg, RngStream* rng);

/// Assignment from precomputed logits [B, m, n], normalized over clusters.
/// Soft: softmax(logits / temperature). Eval: one-hot argmax, no gradient.
/// Train: straight-through one-hot of softmax((logits + Gumbel) / temperature).
Tensor assign_from_logits(const Tensor& logits, AssignMode mode, double temperature,
                          RngStream* rng);

/// s_i = W_o [sum_j A_ij W_V g_j / (sum_j A_ij + 1e-8)] as [B, m, D].
Tensor reduce(const Tensor& assignment, const Tensor& tokens, const ClusterBank& bank,
              std::size_t stage);

/// assign then reduce, or W_o W_V g_j per token when the stage rate is 1.
Tensor stage_pipeline(const ClusterBank& bank, std::size_t stage, const Tensor& tokens,
                      const ClusterConfig& cfg, RngStream* rng);

}  // namespace mamkit
