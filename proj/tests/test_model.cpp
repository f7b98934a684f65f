// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mamkit/backbone.hpp"
#include "mamkit/clustering.hpp"
#include "mamkit/encoder.hpp"
#include "mamkit/gradcheck.hpp"
#include "mamkit/model.hpp"
#include "mamkit/ops.hpp"
#include "test_util.hpp"

using namespace mamkit;
using mamkit::testing::random_tensor;

namespace {

ModelConfig small_model(std::size_t size = 32, std::size_t width = 16) {
  ModelConfig cfg;
  cfg.backbone.height = cfg.backbone.width = size;
  cfg.backbone.channels = {4, 6, 8, 10};
  cfg.mam.model_width = width;
  cfg.mam.heads = 2;
  cfg.mam.depth = 1;
  cfg.init_seed = 5;
  return cfg;
}

std::vector<Tensor> random_stage_tokens(const ModelConfig& cfg, std::size_t batch, RngStream& rng) {
  const auto n = stage_token_counts(cfg.backbone.height, cfg.backbone.width);
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < kNumStages; ++l) {
    out.push_back(random_tensor({batch, n[l], cfg.backbone.channels[l]}, rng));
  }
  return out;
}

// Reorders axis 1 of a [B, n, C] tensor.
Tensor permute_tokens(const Tensor& t, const std::vector<std::size_t>& perm) {
  return index_select(t, 1, perm);
}

double max_logit_change(const HeadOutputs& a, const HeadOutputs& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < kNumTypes; ++t) {
    for (std::size_t i = 0; i < a.logits[t].numel(); ++i) {
      worst = std::max(worst, std::abs(a.logits[t].at(i) - b.logits[t].at(i)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("token and cluster counts") {
  const ClusterConfig def;
  CHECK(cluster_counts(stage_token_counts(224, 224), def.rates) == std::array<std::size_t, 4>{196, 196, 196, 196});
  CHECK(cluster_counts(stage_token_counts(32, 32), def.rates) == std::array<std::size_t, 4>{4, 4, 4, 4});
  CHECK(stage_token_counts(64, 64) == std::array<std::size_t, 4>{1024, 256, 64, 16});
  CHECK(cluster_counts({10, 7, 3, 1}, {1, 1, 1, 1}) == std::array<std::size_t, 4>{10, 7, 3, 1});
  CHECK(cluster_counts({10, 7, 3, 1}, {0.01, 0.01, 0.01, 0.01}) == std::array<std::size_t, 4>{1, 1, 1, 1});

  ClusterConfig bad;
  bad.rates[2] = 0.0;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  bad.rates[2] = 1.5;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  ClusterConfig cold;
  cold.temperature = 0.0;
  CHECK_THROWS_AS(cold.validate(), ArgumentError);
}

TEST_CASE("patchify is a raster-order reshape") {
  // [1, C=2, 2, 2]: channel 0 holds 0..3, channel 1 holds 10..13.
  Tensor x({1, 2, 2, 2}, {0, 1, 2, 3, 10, 11, 12, 13});
  const auto t = patchify(x);
  REQUIRE(t.shape() == Shape{1, 4, 2});
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(t.at(j * 2) == static_cast<double>(j));
    CHECK(t.at(j * 2 + 1) == static_cast<double>(10 + j));
  }
  const auto back = tokens_to_nchw(t, 2, 2);
  for (std::size_t i = 0; i < 8; ++i) CHECK(back.at(i) == x.at(i));
}

TEST_CASE("assignment columns are normalized") {
  RngStream rng(1, "assign");
  const Tensor logits = scale(random_tensor({3, 5, 9}, rng), 4.0);
  const auto soft = assign_from_logits(logits, AssignMode::kSoft, 1.0, nullptr);
  const auto col = sum(soft, 1);
  for (double v : col.values()) CHECK(std::abs(v - 1.0) < 1e-12);

  RngStream g(2, "gumbel");
  for (auto mode : {AssignMode::kEvalDeterministicHard, AssignMode::kTrainStochasticHard}) {
    const auto hard = assign_from_logits(logits, mode, 1.0, &g);
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t j = 0; j < 9; ++j) {
        int ones = 0;
        for (std::size_t i = 0; i < 5; ++i) {
          const double v = hard.at((b * 5 + i) * 9 + j);
          CHECK((v == 0.0 || v == 1.0));
          ones += v == 1.0;
        }
        CHECK(ones == 1);
      }
    }
  }
}

TEST_CASE("single cluster takes every column") {
  RngStream rng(3, "single");
  const auto a = assign_from_logits(scale(random_tensor({2, 1, 6}, rng), 50.0),
                                    AssignMode::kEvalDeterministicHard, 1.0, nullptr);
  for (double v : a.values()) CHECK(v == 1.0);
}

TEST_CASE("zero temperature soft assignment is the argmax") {
  RngStream rng(4, "tau");
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 2 + rng.below(6), n = 1 + rng.below(8);
    const Tensor logits = random_tensor({1, m, n}, rng);
    const auto hard = assign_from_logits(logits, AssignMode::kEvalDeterministicHard, 1.0, nullptr);
    const auto cold = assign_from_logits(logits, AssignMode::kSoft, 1e-6, nullptr);
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < m; ++i) {
        if (logits.at(i * n + j) > logits.at(best * n + j)) best = i;
      }
      for (std::size_t i = 0; i < m; ++i) {
        REQUIRE(hard.at(i * n + j) == (i == best ? 1.0 : 0.0));
        REQUIRE(std::abs(cold.at(i * n + j) - hard.at(i * n + j)) < 1e-9);
      }
    }
  }
}

TEST_CASE("argmax ties go to the lowest cluster") {
  const auto a = assign_from_logits(Tensor({1, 3, 1}, {0.5, 0.5, 0.5}), AssignMode::kEvalDeterministicHard, 1.0,
                                    nullptr);
  CHECK(a.at(0) == 1.0);
  CHECK(a.at(1) == 0.0);
}

TEST_CASE("reduce equals a per-cluster weighted mean") {
  ParameterStore store;
  RngStream init(5, "bank");
  ClusterConfig cfg;
  cfg.rates = {0.25, 0.5, 0.5, 1.0};
  const std::array<std::size_t, 4> channels{3, 4, 5, 6}, tokens{8, 4, 2, 1};
  ClusterBank bank(store, "c", channels, tokens, cfg, 5, init);
  RngStream rng(6, "reduce");
  const std::size_t B = 2, n = 8, C = 3, D = 5;
  const Tensor g = random_tensor({B, n, C}, rng);
  const std::size_t m = bank.stage(0).clusters;
  REQUIRE(m == 2);
  const auto A = assign(bank, 0, g, ClusterConfig{cfg.rates, 1.0, AssignMode::kSoft}, nullptr);
  const auto s = reduce(A, g, bank, 0);
  REQUIRE(s.shape() == Shape{B, m, D});

  const auto wv = bank.stage(0).w_v.values();
  const auto wo = bank.w_o().values();
  const auto bo = bank.b_o().values();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> acc(D, 0.0);
      double mass = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double a = A.at((b * m + i) * n + j);
        mass += a;
        for (std::size_t d = 0; d < D; ++d) {
          double v = 0.0;
          for (std::size_t c = 0; c < C; ++c) v += g.at((b * n + j) * C + c) * wv[c * D + d];
          acc[d] += a * v;
        }
      }
      for (std::size_t e = 0; e < D; ++e) {
        double out = bo[e];
        for (std::size_t d = 0; d < D; ++d) out += acc[d] / (mass + 1e-8) * wo[d * D + e];
        CHECK(std::abs(s.at((b * m + i) * D + e) - out) < 1e-10);
      }
    }
  }

  // An empty hard cluster yields the projection of the zero vector.
  Tensor empty({1, 2, 8}, 0.0);
  for (std::size_t j = 0; j < 8; ++j) empty.mutable_values()[j] = 1.0;
  const auto z = reduce(empty, slice(g, 0, 0, 1), bank, 0);
  for (std::size_t e = 0; e < D; ++e) {
    CHECK(std::isfinite(z.at(D + e)));
    CHECK(z.at(D + e) == bo[e]);
  }
}

TEST_CASE("skip stage maps every token and ignores temperature and noise") {
  ParameterStore store;
  RngStream init(7, "bank");
  ClusterConfig cfg;  // last stage has rate 1
  const std::array<std::size_t, 4> channels{2, 2, 2, 3}, tokens{64, 16, 4, 5};
  ClusterBank bank(store, "c", channels, tokens, cfg, 4, init);
  REQUIRE(bank.stage(3).skip);
  RngStream rng(8, "x");
  const Tensor g = random_tensor({2, 5, 3}, rng);
  ClusterConfig train = cfg;
  train.mode = AssignMode::kTrainStochasticHard;
  train.temperature = 0.1;
  RngStream noise(9, "n");
  const auto a = stage_pipeline(bank, 3, g, cfg, nullptr);
  const auto b = stage_pipeline(bank, 3, g, train, &noise);
  REQUIRE(a.shape() == Shape{2, 5, 4});
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
  const auto direct = bank.project_out(matmul(g, bank.stage(3).w_v));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == direct.at(i));
}

TEST_CASE("clustering gradient through the soft path") {
  ParameterStore store;
  RngStream init(10, "bank");
  ClusterConfig cfg;
  cfg.rates = {0.5, 0.5, 0.5, 1.0};
  cfg.mode = AssignMode::kSoft;
  ClusterBank bank(store, "c", {3, 3, 3, 3}, {6, 4, 2, 1}, cfg, 4, init);
  for (const auto& e : store.entries()) {
    RngStream r(11, e.name);
    for (auto& v : Tensor(e.tensor).mutable_values()) v = 2.0 * r.uniform() - 1.0;
  }
  RngStream rng(12, "tok");
  Tensor g = random_tensor({2, 6, 3}, rng, true);
  const Tensor w = random_tensor({2, 3, 4}, rng);
  std::vector<Tensor> leaves{g};
  for (const auto& e : store.entries()) leaves.push_back(e.tensor);
  const auto r = grad_check_leaves([&] { return sum_all(mul(stage_pipeline(bank, 0, g, cfg, nullptr), w)); },
                                   leaves);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("encoder sequence layout") {
  for (auto [size, length] : {std::pair<std::size_t, std::size_t>{224, 788}, {32, 20}}) {
    const auto m = cluster_counts(stage_token_counts(size, size), ClusterConfig{}.rates);
    ParameterStore store;
    RngStream init(1, "enc");
    MultiGranularityEncoder enc(store, "e", EncoderConfig{8, 1, 2, 2}, 4, init);
    std::vector<Tensor> reduced;
    for (auto c : m) reduced.push_back(Tensor({1, c, 8}, 0.0));
    const auto seq = enc.assemble(reduced);
    CHECK(seq.shape() == Shape{1, length, 8});
    const auto layout = enc.level_layout({m.begin(), m.end()});
    REQUIRE(layout.size() == length);
    for (std::size_t p = 0; p < 4; ++p) CHECK(layout[p] == 4);
    std::size_t pos = 4;
    for (std::size_t l = 0; l < 4; ++l) {
      for (std::size_t k = 0; k < m[l]; ++k) CHECK(layout[pos++] == l);
    }
  }
  ParameterStore store;
  RngStream init(1, "enc");
  MultiGranularityEncoder enc(store, "e", EncoderConfig{8, 1, 2, 2}, 4, init);
  CHECK_THROWS(enc.assemble({}));
  CHECK_THROWS_AS(enc.assemble({Tensor({1, 2, 7}), Tensor({1, 2, 7}), Tensor({1, 2, 7}), Tensor({1, 2, 7})}),
                  DimensionError);
  CHECK_THROWS_AS(EncoderConfig({10, 1, 3, 2}).validate(), ArgumentError);
}

TEST_CASE("attention rows sum to one and zero depth is the identity") {
  ParameterStore store;
  RngStream init(2, "enc");
  MultiGranularityEncoder enc(store, "e", EncoderConfig{8, 2, 2, 2}, 4, init);
  RngStream rng(3, "x");
  const Tensor x = random_tensor({2, 7, 8}, rng);
  std::vector<std::vector<double>> maps;
  enc.encode(x, &maps);
  REQUIRE(maps.size() == 2);
  for (const auto& mp : maps) {
    REQUIRE(mp.size() == 2 * 2 * 7 * 7);
    for (std::size_t row = 0; row < 2 * 2 * 7; ++row) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) s += mp[row * 7 + c];
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }

  ParameterStore store0;
  MultiGranularityEncoder flat(store0, "e", EncoderConfig{8, 0, 2, 2}, 4, init);
  const auto y = flat.encode(x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("encoder layer gradient") {
  ParameterStore store;
  RngStream init(4, "enc");
  MultiGranularityEncoder enc(store, "e", EncoderConfig{8, 1, 2, 2}, 4, init);
  RngStream rng(5, "x");
  Tensor x = random_tensor({2, 6, 8}, rng, true);
  const Tensor w = random_tensor({2, 6, 8}, rng);
  std::vector<Tensor> leaves{x};
  for (const auto& e : store.entries()) leaves.push_back(e.tensor);
  const auto r = grad_check_leaves([&] { return sum_all(mul(enc.encode(x), w)); }, leaves);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("loss values") {
  HeadOutputs uniform;
  for (auto& l : uniform.logits) l = Tensor({3, 4}, 0.7);
  const std::vector<Annotation> truth{Annotation::from_classes({0, 1, 2, 3}), Annotation{},
                                      Annotation::from_classes({3, 3, 0, 1})};
  CHECK(level_loss(uniform, truth).item() == doctest::Approx(4.0 * std::log(4.0)).epsilon(1e-13));

  HeadOutputs saturated;
  for (std::size_t t = 0; t < 4; ++t) {
    std::vector<double> v(12, 0.0);
    for (std::size_t b = 0; b < 3; ++b) v[b * 4 + truth[b].level(t).cls()] = 40.0;
    saturated.logits[t] = Tensor({3, 4}, v);
  }
  const double sat = level_loss(saturated, truth).item();
  CHECK(sat >= 0.0);
  CHECK(sat < 1e-7);

  RngStream rng(6, "loss");
  HeadOutputs random;
  for (auto& l : random.logits) l = scale(random_tensor({3, 4}, rng), 3.0);
  double expected = 0.0;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t t = 0; t < 4; ++t) {
      double z = 0.0;
      for (std::size_t k = 0; k < 4; ++k) z += std::exp(random.logits[t].at(b * 4 + k));
      expected -= std::log(std::exp(random.logits[t].at(b * 4 + truth[b].level(t).cls())) / z);
    }
  }
  CHECK(level_loss(random, truth).item() == doctest::Approx(expected / 3.0).epsilon(1e-13));
}

TEST_CASE("backbone extents, determinism, and gradient") {
  BackboneConfig cfg;
  ParameterStore store;
  RngStream init(7, "bb");
  Backbone bb(store, "b", cfg, init);
  RngStream rng(8, "img");
  const Tensor img = random_tensor({1, 3, 64, 64}, rng);
  const auto f = bb.forward(img);
  const std::size_t side[4] = {32, 16, 8, 4};
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(f[l].shape() == Shape{1, cfg.channels[l], side[l], side[l]});
  }
  const auto g = bb.forward(img);
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t i = 0; i < f[l].numel(); ++i) REQUIRE(f[l].at(i) == g[l].at(i));
  }
  BackboneConfig odd = cfg;
  odd.height = 40;
  CHECK_THROWS_AS(odd.validate(), DimensionError);

  BackboneConfig tiny{{2, 3, 4, 5}, 2, 16, 16, 1};
  ParameterStore s2;
  Backbone small(s2, "b", tiny, init);
  Tensor x = random_tensor({1, 2, 16, 16}, rng, true);
  const Tensor w = random_tensor({1, 3, 4, 4}, rng);
  std::vector<Tensor> leaves{x};
  for (const auto& e : s2.entries()) leaves.push_back(e.tensor);
  const auto r = grad_check_leaves([&] { return sum_all(mul(small.forward(x, 2)[1], w)); }, leaves);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("clustering accepts any features honouring the stage shape contract") {
  const auto cfg = small_model();
  RetouchDetector model(cfg);
  RngStream rng(9, "stub");
  std::vector<Tensor> features;
  for (std::size_t l = 0; l < 4; ++l) {
    const std::size_t side = 32 >> (l + 1);
    features.push_back(random_tensor({2, cfg.backbone.channels[l], side, side}, rng));
  }
  const auto out = model.forward_features(features, AssignMode::kEvalDeterministicHard, nullptr);
  for (const auto& l : out.logits) {
    CHECK(l.shape() == Shape{2, 4});
    for (double v : l.values()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("within-stage permutations leave eval logits unchanged") {
  const auto cfg = small_model();
  RetouchDetector model(cfg);
  RngStream rng(10, "perm");
  const auto tokens = random_stage_tokens(cfg, 2, rng);
  const auto base = model.forward_tokens(tokens, AssignMode::kEvalDeterministicHard, nullptr);
  const auto soft_base = model.forward_tokens(tokens, AssignMode::kSoft, nullptr);
  for (int trial = 0; trial < 10; ++trial) {
    auto permuted = tokens;
    for (std::size_t l = 0; l < 4; ++l) {
      std::vector<std::size_t> perm(tokens[l].dim(1));
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      permuted[l] = permute_tokens(tokens[l], perm);
    }
    CHECK(max_logit_change(base, model.forward_tokens(permuted, AssignMode::kEvalDeterministicHard, nullptr)) < 1e-9);
    CHECK(max_logit_change(soft_base, model.forward_tokens(permuted, AssignMode::kSoft, nullptr)) < 1e-9);
  }
}

TEST_CASE("swapping reduced tokens across stages changes a logit") {
  const auto cfg = small_model();
  RetouchDetector model(cfg);
  RngStream rng(11, "swap");
  const auto tokens = random_stage_tokens(cfg, 1, rng);
  const auto cc = model.cluster_config(AssignMode::kEvalDeterministicHard);
  std::vector<Tensor> reduced;
  for (std::size_t l = 0; l < 4; ++l) reduced.push_back(stage_pipeline(model.clusters(), l, tokens[l], cc, nullptr));
  const auto& enc = model.encoder();
  const auto base = enc.predict(enc.encode(enc.assemble(reduced)));
  std::swap(reduced[0], reduced[1]);
  const auto swapped = enc.predict(enc.encode(enc.assemble(reduced)));
  CHECK(max_logit_change(base, swapped) > 1e-6);
}

TEST_CASE("heads have disjoint parameters") {
  const auto cfg = small_model();
  RetouchDetector model(cfg);
  RngStream rng(12, "heads");
  const auto tokens = random_stage_tokens(cfg, 2, rng);
  const auto base = model.forward_tokens(tokens, AssignMode::kEvalDeterministicHard, nullptr);
  for (std::size_t t = 0; t < 4; ++t) {
    const auto saved = model.params().snapshot();
    const auto& h = model.encoder().head(t);
    for (Tensor p : {h.w1, h.b1, h.w2, h.b2}) {
      auto v = p.mutable_values();
      std::fill(v.begin(), v.end(), 0.0);
    }
    const auto out = model.forward_tokens(tokens, AssignMode::kEvalDeterministicHard, nullptr);
    for (std::size_t u = 0; u < 4; ++u) {
      bool changed = false;
      for (std::size_t i = 0; i < out.logits[u].numel(); ++i) changed |= out.logits[u].at(i) != base.logits[u].at(i);
      INFO("zeroed head ", t, ", observed head ", u);
      CHECK(changed == (u == t));
    }
    model.params().restore(saved);
  }
}

TEST_CASE("parameter groups partition the model") {
  RetouchDetector model(small_model());
  const auto conv = model.params().group(ParamGroup::kConvolutional);
  const auto tr = model.params().group(ParamGroup::kTransformer);
  CHECK(conv.size() + tr.size() == model.params().entries().size());
  for (const auto& e : model.params().entries()) {
    const bool is_backbone = e.name.rfind("backbone.", 0) == 0;
    CHECK((e.group == ParamGroup::kConvolutional) == is_backbone);
  }
}

TEST_CASE("full model logits are finite and the batch is independent") {
  const auto cfg = small_model();
  RetouchDetector model(cfg);
  RngStream rng(13, "img");
  const Tensor imgs = random_tensor({3, 3, 32, 32}, rng);
  const auto all = model.forward(imgs, AssignMode::kEvalDeterministicHard, nullptr);
  const auto one = model.forward(slice(imgs, 0, 1, 2), AssignMode::kEvalDeterministicHard, nullptr);
  for (std::size_t t = 0; t < 4; ++t) {
    for (double v : all.logits[t].values()) CHECK(std::isfinite(v));
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(all.logits[t].at(4 + k) - one.logits[t].at(k)) < 1e-12);
  }
}
