// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mamkit/labels.hpp"
#include "mamkit/params.hpp"
#include "mamkit/tensor.hpp"

namespace mamkit {

struct EncoderConfig {
  std::size_t width = 256;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t ff_mult = 4;

  void validate() const;
};

/// Per-type level logits, each [B, 4].
struct HeadOutputs {
  std::array<Tensor, kNumTypes> logits;

  std::size_t batch() const { return logits[0].dim(0); }
  /// Argmax per head for batch item b, ties to the lowest level.
  Annotation predicted(std::size_t b) const;
};

/// Transformer fusion of the reduced stage tokens with four CLS read-outs.
class MultiGranularityEncoder {
 public:
  struct Layer {
    Tensor ln1_g, ln1_b, w_qkv, w_proj, b_proj;  // projections to q, k, v carry no bias
    Tensor ln2_g, ln2_b, w_ff1, b_ff1, w_ff2, b_ff2;
  };
  struct Head {
    Tensor w1, b1, w2, b2;
  };

  MultiGranularityEncoder(ParameterStore& store, const std::string& prefix,
                          const EncoderConfig& cfg, std::size_t stages, RngStream& init);

  const EncoderConfig& config() const { return cfg_; }
  std::size_t stages() const { return stages_; }

  /// [CLS_0..CLS_3, stage 0 tokens, ..., stage L-1 tokens] plus the level
  /// embedding of each position. Every input is [B, m_l, width].
  Tensor assemble(const std::vector<Tensor>& reduced) const;
  /// Level index per position of an assembled sequence (CLS group = stages).
  std::vector<std::size_t> level_layout(const std::vector<std::size_t>& counts) const;
  /// Runs the encoder layers. When `attention_maps` is non-null, one
  /// [B, heads, T, T] block per layer is appended to it.
  Tensor encode(const Tensor& sequence, std::vector<std::vector<double>>* attention_maps = nullptr) const;
  /// Final normalization, then head t reads CLS position t.
  HeadOutputs predict(const Tensor& encoded) const;

  const Head& head(std::size_t t) const { return heads_.at(t); }

 private:
  EncoderConfig cfg_;
  std::size_t stages_;
  Tensor cls_, level_embed_, final_g_, final_b_;
  std::vector<Layer> layers_;
  std::vector<Head> heads_;
};

/// Mean over the batch of the per-image sum of four cross-entropies.
Tensor level_loss(const HeadOutputs& outputs, std::span<const Annotation> truth);

}  // namespace mamkit
