// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/backbone.hpp"

#include "mamkit/ops.hpp"

namespace mamkit {

void BackboneConfig::validate() const {
  if (height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0) {
    throw DimensionError("backbone input " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not a multiple of 16");
  }
}

namespace {

Backbone::Conv make_conv(ParameterStore& store, const std::string& name, std::size_t in,
                         std::size_t out, RngStream& init) {
  Backbone::Conv c;
  c.weight = store.add_gaussian(name + ".weight", {out, in, 3, 3}, fan_in_std(in * 9),
                                ParamGroup::kConvolutional, init);
  c.bias = store.add_constant(name + ".bias", {out}, 0.0, ParamGroup::kConvolutional);
  return c;
}

}  // namespace

Backbone::Backbone(ParameterStore& store, const std::string& prefix, const BackboneConfig& cfg,
                   RngStream& init)
    : cfg_(cfg) {
  cfg.validate();
  std::size_t in = cfg.input_channels;
  for (std::size_t l = 0; l < kNumStages; ++l) {
    const std::string p = prefix + ".stage" + std::to_string(l);
    Stage s;
    s.down = make_conv(store, p + ".down", in, cfg.channels[l], init);
    for (std::size_t b = 0; b < cfg.residual_blocks; ++b) {
      s.blocks.push_back(
          make_conv(store, p + ".block" + std::to_string(b), cfg.channels[l], cfg.channels[l], init));
    }
    s.norm_gain = store.add_constant(p + ".norm.gain", {cfg.channels[l]}, 1.0, ParamGroup::kConvolutional);
    s.norm_bias = store.add_constant(p + ".norm.bias", {cfg.channels[l]}, 0.0, ParamGroup::kConvolutional);
    stages_.push_back(std::move(s));
    in = cfg.channels[l];
  }
}

std::vector<Tensor> Backbone::forward(const Tensor& images) const {
  return forward(images, kNumStages);
}

std::vector<Tensor> Backbone::forward(const Tensor& images, std::size_t stages) const {
  if (images.rank() != 4 || images.dim(1) != cfg_.input_channels || images.dim(2) % 16 != 0 ||
      images.dim(3) % 16 != 0) {
    throw DimensionError("backbone expects [B, " + std::to_string(cfg_.input_channels) +
                         ", H, W] with H, W multiples of 16, got " + shape_string(images.shape()));
  }
  std::vector<Tensor> out;
  Tensor x = images;
  for (std::size_t l = 0; l < stages && l < stages_.size(); ++l) {
    const auto& s = stages_[l];
    x = gelu(conv2d(x, s.down.weight, s.down.bias, 2, 1));
    for (const auto& b : s.blocks) x = gelu(add(x, conv2d(x, b.weight, b.bias, 1, 1)));
    const auto h = x.dim(2), w = x.dim(3);
    out.push_back(tokens_to_nchw(layer_norm(nchw_to_tokens(x), s.norm_gain, s.norm_bias), h, w));
  }
  return out;
}

}  // namespace mamkit
