// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/clustering.hpp"

#include <cmath>

#include "mamkit/labels.hpp"
#include "mamkit/ops.hpp"

namespace mamkit {

const char* assign_mode_name(AssignMode mode) {
  switch (mode) {
    case AssignMode::kTrainStochasticHard: return "train";
    case AssignMode::kEvalDeterministicHard: return "eval";
    case AssignMode::kSoft: return "soft";
  }
  return "?";
}

void ClusterConfig::validate() const {
  for (double r : rates) {
    if (!(r > 0.0 && r <= 1.0)) throw ArgumentError("clustering rate must lie in (0, 1]");
  }
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
}

std::size_t stage_token_count(std::size_t height, std::size_t width, std::size_t stage) {
  return (height >> (stage + 1)) * (width >> (stage + 1));
}

std::array<std::size_t, kNumStages> stage_token_counts(std::size_t height, std::size_t width) {
  std::array<std::size_t, kNumStages> n{};
  for (std::size_t l = 0; l < kNumStages; ++l) n[l] = stage_token_count(height, width, l);
  return n;
}

std::array<std::size_t, kNumStages> cluster_counts(const std::array<std::size_t, kNumStages>& n,
                                                   const std::array<double, kNumStages>& rates) {
  std::array<std::size_t, kNumStages> m{};
  for (std::size_t l = 0; l < kNumStages; ++l) {
    const auto v = std::llround(static_cast<double>(n[l]) * rates[l]);
    m[l] = v < 1 ? 1 : static_cast<std::size_t>(v);
  }
  return m;
}

Tensor patchify(const Tensor& stage_features) { return nchw_to_tokens(stage_features); }

ClusterBank::ClusterBank(ParameterStore& store, const std::string& prefix,
                         const std::array<std::size_t, kNumStages>& channels,
                         const std::array<std::size_t, kNumStages>& tokens,
                         const ClusterConfig& cfg, std::size_t width, RngStream& init)
    : width_(width) {
  cfg.validate();
  const auto m = cluster_counts(tokens, cfg.rates);
  const auto group = ParamGroup::kTransformer;
  for (std::size_t l = 0; l < kNumStages; ++l) {
    Stage s;
    s.channels = channels[l];
    s.tokens = tokens[l];
    s.clusters = m[l];
    s.skip = cfg.rates[l] == 1.0;
    const std::string p = prefix + ".stage" + std::to_string(l);
    const double sd = fan_in_std(channels[l]);
    if (!s.skip) {
      s.centres = store.add_gaussian(p + ".centres", {m[l], channels[l]}, sd, group, init);
      s.w_q = store.add_gaussian(p + ".w_q", {channels[l], width}, sd, group, init);
      s.w_k = store.add_gaussian(p + ".w_k", {channels[l], width}, sd, group, init);
    }
    s.w_v = store.add_gaussian(p + ".w_v", {channels[l], width}, sd, group, init);
    stages_.push_back(std::move(s));
  }
  w_o_ = store.add_gaussian(prefix + ".w_o", {width, width}, fan_in_std(width), group, init);
  b_o_ = store.add_constant(prefix + ".b_o", {width}, 0.0, group);
}

Tensor ClusterBank::project_out(const Tensor& x) const { return add(matmul(x, w_o_), b_o_); }

namespace {

void check_tokens(const ClusterBank& bank, std::size_t stage, const Tensor& tokens) {
  const auto& s = bank.stage(stage);
  if (tokens.rank() != 3 || tokens.dim(2) != s.channels) {
    throw DimensionError("stage " + std::to_string(stage) + " expects tokens [B, n, " +
                         std::to_string(s.channels) + "], got " + shape_string(tokens.shape()));
  }
}

}  // namespace

Tensor assignment_logits(const ClusterBank& bank, std::size_t stage, const Tensor& tokens) {
  check_tokens(bank, stage, tokens);
  const auto& s = bank.stage(stage);
  if (s.skip) throw ArgumentError("stage " + std::to_string(stage) + " bypasses clustering");
  // (c W_Q)(g W_K)^T evaluated as ((c W_Q) W_K^T) g^T to avoid a [B, n, D] key tensor.
  const Tensor qk = matmul(matmul(s.centres, s.w_q), transpose(s.w_k));  // [m, C]
  return matmul(qk, transpose(tokens));                                   // [B, m, n]
}

Tensor assign_from_logits(const Tensor& logits, AssignMode mode, double temperature,
                          RngStream* rng) {
  if (logits.rank() != 3) throw DimensionError("assignment logits must be [B, m, n]");
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  switch (mode) {
    case AssignMode::kSoft:
      return softmax(temperature == 1.0 ? logits : scale(logits, 1.0 / temperature), 1);
    case AssignMode::kEvalDeterministicHard:
      return straight_through_onehot(logits.detach(), 1);
    case AssignMode::kTrainStochasticHard: {
      if (!rng) throw ArgumentError("stochastic assignment needs a random stream");
      const Tensor noisy = add(logits, gumbel_noise(logits.shape(), *rng));
      return straight_through_onehot(softmax(scale(noisy, 1.0 / temperature), 1), 1);
    }
  }
  throw ArgumentError("unknown assignment mode");
}

Tensor assign(const ClusterBank& bank, std::size_t stage, const Tensor& tokens,
              const ClusterConfig& cfg, RngStream* rng) {
  return assign_from_logits(assignment_logits(bank, stage, tokens), cfg.mode, cfg.temperature, rng);
}

Tensor reduce(const Tensor& assignment, const Tensor& tokens, const ClusterBank& bank,
              std::size_t stage) {
  check_tokens(bank, stage, tokens);
  if (assignment.rank() != 3 || assignment.dim(0) != tokens.dim(0) ||
      assignment.dim(2) != tokens.dim(1)) {
    throw DimensionError("assignment " + shape_string(assignment.shape()) +
                         " does not match tokens " + shape_string(tokens.shape()));
  }
  // W_V is linear, so the weighted mean is taken in token space first.
  const Tensor num = matmul(assignment, tokens);                   // [B, m, C]
  const Tensor den = add_scalar(sum(assignment, 2, true), 1e-8);   // [B, m, 1]
  return bank.project_out(matmul(div(num, den), bank.stage(stage).w_v));
}

Tensor stage_pipeline(const ClusterBank& bank, std::size_t stage, const Tensor& tokens,
                      const ClusterConfig& cfg, RngStream* rng) {
  check_tokens(bank, stage, tokens);
  if (bank.stage(stage).skip) return bank.project_out(matmul(tokens, bank.stage(stage).w_v));
  return reduce(assign(bank, stage, tokens, cfg, rng), tokens, bank, stage);
}

}  // namespace mamkit
