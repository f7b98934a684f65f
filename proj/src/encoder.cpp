// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/encoder.hpp"

#include "mamkit/ops.hpp"

namespace mamkit {

void EncoderConfig::validate() const {
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw ArgumentError("model width " + std::to_string(width) + " not divisible by " +
                        std::to_string(heads) + " heads");
  }
  if (ff_mult == 0) throw ArgumentError("feed-forward expansion must be positive");
}

Annotation HeadOutputs::predicted(std::size_t b) const {
  std::array<int, kNumTypes> cls{};
  for (std::size_t t = 0; t < kNumTypes; ++t) {
    const auto row = logits[t].values().subspan(b * kNumLevels, kNumLevels);
    int best = 0;
    for (int l = 1; l < static_cast<int>(kNumLevels); ++l) {
      if (row[l] > row[best]) best = l;
    }
    cls[t] = best;
  }
  return Annotation::from_classes(cls);
}

MultiGranularityEncoder::MultiGranularityEncoder(ParameterStore& store, const std::string& prefix,
                                                 const EncoderConfig& cfg, std::size_t stages,
                                                 RngStream& init)
    : cfg_(cfg), stages_(stages) {
  cfg.validate();
  const auto g = ParamGroup::kTransformer;
  const std::size_t d = cfg.width, f = cfg.width * cfg.ff_mult;
  cls_ = store.add_gaussian(prefix + ".cls", {kNumTypes, d}, 0.02, g, init);
  level_embed_ = store.add_gaussian(prefix + ".level_embed", {stages + 1, d}, 0.02, g, init);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::string p = prefix + ".layer" + std::to_string(i);
    Layer L;
    L.ln1_g = store.add_constant(p + ".ln1_g", {d}, 1.0, g);
    L.ln1_b = store.add_constant(p + ".ln1_b", {d}, 0.0, g);
    L.w_qkv = store.add_gaussian(p + ".w_qkv", {d, 3 * d}, fan_in_std(d), g, init);
    L.w_proj = store.add_gaussian(p + ".w_proj", {d, d}, fan_in_std(d), g, init);
    L.b_proj = store.add_constant(p + ".b_proj", {d}, 0.0, g);
    L.ln2_g = store.add_constant(p + ".ln2_g", {d}, 1.0, g);
    L.ln2_b = store.add_constant(p + ".ln2_b", {d}, 0.0, g);
    L.w_ff1 = store.add_gaussian(p + ".w_ff1", {d, f}, fan_in_std(d), g, init);
    L.b_ff1 = store.add_constant(p + ".b_ff1", {f}, 0.0, g);
    L.w_ff2 = store.add_gaussian(p + ".w_ff2", {f, d}, fan_in_std(f), g, init);
    L.b_ff2 = store.add_constant(p + ".b_ff2", {d}, 0.0, g);
    layers_.push_back(std::move(L));
  }
  final_g_ = store.add_constant(prefix + ".final_g", {d}, 1.0, g);
  final_b_ = store.add_constant(prefix + ".final_b", {d}, 0.0, g);
  for (std::size_t t = 0; t < kNumTypes; ++t) {
    const std::string p = prefix + ".head" + std::to_string(t);
    Head h;
    h.w1 = store.add_gaussian(p + ".w1", {d, d}, fan_in_std(d), g, init);
    h.b1 = store.add_constant(p + ".b1", {d}, 0.0, g);
    h.w2 = store.add_gaussian(p + ".w2", {d, kNumLevels}, fan_in_std(d), g, init);
    h.b2 = store.add_constant(p + ".b2", {kNumLevels}, 0.0, g);
    heads_.push_back(std::move(h));
  }
}

std::vector<std::size_t> MultiGranularityEncoder::level_layout(
    const std::vector<std::size_t>& counts) const {
  std::vector<std::size_t> idx(kNumTypes, stages_);
  for (std::size_t l = 0; l < counts.size(); ++l) idx.insert(idx.end(), counts[l], l);
  return idx;
}

Tensor MultiGranularityEncoder::assemble(const std::vector<Tensor>& reduced) const {
  if (reduced.empty()) throw DimensionError("assemble needs at least one stage");
  if (reduced.size() != stages_) {
    throw DimensionError("assemble expects " + std::to_string(stages_) + " stages, got " +
                         std::to_string(reduced.size()));
  }
  const std::size_t batch = reduced[0].dim(0);
  std::vector<std::size_t> counts;
  std::vector<Tensor> parts{broadcast_to(cls_, {batch, kNumTypes, cfg_.width})};
  for (const auto& r : reduced) {
    if (r.rank() != 3 || r.dim(0) != batch || r.dim(2) != cfg_.width) {
      throw DimensionError("reduced tokens must be [" + std::to_string(batch) + ", m, " +
                           std::to_string(cfg_.width) + "], got " + shape_string(r.shape()));
    }
    counts.push_back(r.dim(1));
    parts.push_back(r);
  }
  const auto layout = level_layout(counts);
  return add(concat(parts, 1), index_select(level_embed_, 0, layout));
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

}  // namespace

Tensor MultiGranularityEncoder::encode(const Tensor& sequence,
                                       std::vector<std::vector<double>>* attention_maps) const {
  const std::size_t d = cfg_.width;
  Tensor x = sequence;
  for (const auto& L : layers_) {
    const Tensor qkv = matmul(layer_norm(x, L.ln1_g, L.ln1_b), L.w_qkv);
    std::vector<double>* probs = nullptr;
    if (attention_maps) probs = &attention_maps->emplace_back();
    const Tensor a = attention(slice(qkv, 2, 0, d), slice(qkv, 2, d, 2 * d),
                               slice(qkv, 2, 2 * d, 3 * d), cfg_.heads, probs);
    x = add(x, linear(a, L.w_proj, L.b_proj));
    const Tensor h = gelu(linear(layer_norm(x, L.ln2_g, L.ln2_b), L.w_ff1, L.b_ff1));
    x = add(x, linear(h, L.w_ff2, L.b_ff2));
  }
  return x;
}

HeadOutputs MultiGranularityEncoder::predict(const Tensor& encoded) const {
  if (encoded.rank() != 3 || encoded.dim(1) < kNumTypes || encoded.dim(2) != cfg_.width) {
    throw DimensionError("predict expects [B, T, width], got " + shape_string(encoded.shape()));
  }
  const Tensor cls = layer_norm(slice(encoded, 1, 0, kNumTypes), final_g_, final_b_);
  HeadOutputs out;
  for (std::size_t t = 0; t < kNumTypes; ++t) {
    const auto& h = heads_[t];
    out.logits[t] = linear(gelu(linear(select(cls, 1, t), h.w1, h.b1)), h.w2, h.b2);
  }
  return out;
}

Tensor level_loss(const HeadOutputs& outputs, std::span<const Annotation> truth) {
  const std::size_t batch = outputs.batch();
  if (truth.size() != batch) {
    throw DimensionError("loss: " + std::to_string(truth.size()) + " annotations for batch of " +
                         std::to_string(batch));
  }
  Tensor total;
  for (std::size_t t = 0; t < kNumTypes; ++t) {
    std::vector<int> cls(batch);
    for (std::size_t b = 0; b < batch; ++b) cls[b] = truth[b].level(t).cls();
    const Tensor ce = cross_entropy_from_logits(outputs.logits[t], cls);
    total = total.defined() ? add(total, ce) : ce;
  }
  return scale(total, 1.0 / static_cast<double>(batch));
}

}  // namespace mamkit
