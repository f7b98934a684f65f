// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/model.hpp"

#include "mamkit/ops.hpp"

namespace mamkit {

using nlohmann::json;

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["backbone"] = {{"channels", cfg.backbone.channels},
                   {"input_channels", cfg.backbone.input_channels},
                   {"height", cfg.backbone.height},
                   {"width", cfg.backbone.width},
                   {"residual_blocks", cfg.backbone.residual_blocks}};
  j["mam"] = {{"rates", cfg.mam.rates},
              {"temperature", cfg.mam.temperature},
              {"model_width", cfg.mam.model_width},
              {"depth", cfg.mam.depth},
              {"heads", cfg.mam.heads},
              {"ff_mult", cfg.mam.ff_mult}};
  j["init_seed"] = cfg.init_seed;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  const auto& b = j.at("backbone");
  c.backbone.channels = b.at("channels").get<std::array<std::size_t, kNumStages>>();
  c.backbone.input_channels = b.at("input_channels").get<std::size_t>();
  c.backbone.height = b.at("height").get<std::size_t>();
  c.backbone.width = b.at("width").get<std::size_t>();
  c.backbone.residual_blocks = b.at("residual_blocks").get<std::size_t>();
  const auto& m = j.at("mam");
  c.mam.rates = m.at("rates").get<std::array<double, kNumStages>>();
  c.mam.temperature = m.at("temperature").get<double>();
  c.mam.model_width = m.at("model_width").get<std::size_t>();
  c.mam.depth = m.at("depth").get<std::size_t>();
  c.mam.heads = m.at("heads").get<std::size_t>();
  c.mam.ff_mult = m.at("ff_mult").get<std::size_t>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

namespace {

ClusterConfig make_cluster_config(const MamConfig& m, AssignMode mode) {
  ClusterConfig c;
  c.rates = m.rates;
  c.temperature = m.temperature;
  c.mode = mode;
  return c;
}

EncoderConfig make_encoder_config(const MamConfig& m) {
  EncoderConfig e;
  e.width = m.model_width;
  e.depth = m.depth;
  e.heads = m.heads;
  e.ff_mult = m.ff_mult;
  return e;
}

}  // namespace

RetouchDetector::RetouchDetector(const ModelConfig& cfg)
    : cfg_(cfg),
      init_(cfg.init_seed, "init"),
      backbone_(store_, "backbone", cfg.backbone, init_),
      clusters_(store_, "clusters", cfg.backbone.channels,
                stage_token_counts(cfg.backbone.height, cfg.backbone.width),
                make_cluster_config(cfg.mam, AssignMode::kEvalDeterministicHard),
                cfg.mam.model_width, init_),
      encoder_(store_, "encoder", make_encoder_config(cfg.mam), kNumStages, init_) {}

ClusterConfig RetouchDetector::cluster_config(AssignMode mode) const {
  return make_cluster_config(cfg_.mam, mode);
}

HeadOutputs RetouchDetector::forward(const Tensor& images, AssignMode mode, RngStream* rng) const {
  return forward_features(backbone_.forward(images), mode, rng);
}

HeadOutputs RetouchDetector::forward_features(const std::vector<Tensor>& features, AssignMode mode,
                                              RngStream* rng) const {
  std::vector<Tensor> tokens;
  tokens.reserve(features.size());
  for (const auto& f : features) tokens.push_back(patchify(f));
  return forward_tokens(tokens, mode, rng);
}

HeadOutputs RetouchDetector::forward_tokens(const std::vector<Tensor>& tokens, AssignMode mode,
                                            RngStream* rng) const {
  if (tokens.size() != kNumStages) {
    throw DimensionError("expected " + std::to_string(kNumStages) + " stage token sets, got " +
                         std::to_string(tokens.size()));
  }
  const ClusterConfig cc = cluster_config(mode);
  std::vector<Tensor> reduced;
  for (std::size_t l = 0; l < kNumStages; ++l) {
    reduced.push_back(stage_pipeline(clusters_, l, tokens[l], cc, rng));
  }
  return encoder_.predict(encoder_.encode(encoder_.assemble(reduced)));
}

Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw DimensionError("images_to_tensor: empty batch");
  const auto& first = images[0];
  const auto h = static_cast<std::size_t>(first.height);
  const auto w = static_cast<std::size_t>(first.width);
  const std::size_t plane = h * w;
  std::vector<double> v(images.size() * 3 * plane);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto& img = images[b];
    if (!img.same_shape(first) || img.channels != 3) {
      throw DimensionError("images_to_tensor: batch images must share one RGB shape");
    }
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        v[(b * 3 + c) * plane + p] = img.pixels[p * 3 + c] / 127.5 - 1.0;
      }
    }
  }
  return Tensor({images.size(), 3, h, w}, std::move(v));
}

}  // namespace mamkit
