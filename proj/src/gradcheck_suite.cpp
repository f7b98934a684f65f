// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/gradcheck_suite.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>
#include <cstdio>

#include "mamkit/model.hpp"
#include "mamkit/ops.hpp"

namespace mamkit {

bool GradCheckReport::passed() const { return failures().empty(); }

std::vector<const GradCheckEntry*> GradCheckReport::failures() const {
  std::vector<const GradCheckEntry*> out;
  for (const auto& e : entries) {
    if (!e.passed) out.push_back(&e);
  }
  return out;
}

namespace {

class Suite {
 public:
  explicit Suite(const GradCheckSuiteOptions& o) : opt_(o), rng_(o.seed, "gradcheck") {}

  Tensor random(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = lo + (hi - lo) * rng_.uniform();
    return Tensor::parameter(std::move(shape), std::move(v));
  }

  // Fixed random read-out so every output coordinate contributes an O(1) gradient.
  std::function<Tensor(const Tensor&)> readout(const Shape& shape) {
    Tensor w = random(shape).detach();
    return [w](const Tensor& y) { return sum_all(mul(y, w)); };
  }

  void leaves(const std::string& name, const std::function<Tensor()>& loss, std::vector<Tensor> params) {
    GradCheckEntry e;
    e.name = name;
    try {
      e.result = grad_check_leaves(loss, std::move(params), opt_.eps);
      e.passed = e.result.max_relative_error < opt_.tolerance;
    } catch (const std::exception& ex) {
      e.result.max_relative_error = INFINITY;
      e.name += std::string(" (") + ex.what() + ")";
    }
    report.entries.push_back(e);
  }

  // Unary op check on one input with a random read-out of its output.
  void unary(const std::string& name, Shape in, const std::function<Tensor(const Tensor&)>& op,
             double lo = -1.0, double hi = 1.0) {
    Tensor x = random(std::move(in), lo, hi);
    const auto r = readout(op(x.detach()).shape());
    leaves(name, [=] { return r(op(x)); }, {x});
  }

  void multi(const std::string& name, std::vector<Tensor> inputs,
             const std::function<Tensor(const std::vector<Tensor>&)>& op) {
    std::vector<Tensor> detached;
    for (const auto& t : inputs) detached.push_back(t.detach());
    const auto r = readout(op(detached).shape());
    leaves(name, [=] { return r(op(inputs)); }, inputs);
  }

  GradCheckReport report;

 private:
  GradCheckSuiteOptions opt_;
  RngStream rng_;
};

// Deliberately wrong backward pass, used to prove the suite can fail.
Tensor sign_flipped_identity(const Tensor& x) {
  Buffer v(x.values().begin(), x.values().end());
  return Tensor::from_op(x.shape(), std::move(v), {x}, [](detail::Node& n) {
    double* g = n.inputs[0]->grad_ptr();
    if (!g) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
  });
}

void op_checks(Suite& s) {
  using V = std::vector<Tensor>;
  s.multi("add (broadcast)", {s.random({3, 4}), s.random({4})}, [](const V& t) { return add(t[0], t[1]); });
  s.multi("sub (broadcast)", {s.random({2, 3, 4}), s.random({3, 1})}, [](const V& t) { return sub(t[0], t[1]); });
  s.multi("mul (broadcast)", {s.random({2, 3, 4}), s.random({1, 3, 4})}, [](const V& t) { return mul(t[0], t[1]); });
  s.multi("div (broadcast)", {s.random({3, 4}), s.random({3, 1}, 0.5, 2.0)}, [](const V& t) { return div(t[0], t[1]); });
  s.unary("scale", {3, 5}, [](const Tensor& x) { return scale(x, -1.7); });
  s.unary("add_scalar", {3, 5}, [](const Tensor& x) { return add_scalar(x, 0.3); });
  s.unary("broadcast_to", {1, 4}, [](const Tensor& x) { return broadcast_to(x, {3, 4}); });
  s.multi("matmul 2x2", {s.random({3, 4}), s.random({4, 5})}, [](const V& t) { return matmul(t[0], t[1]); });
  s.multi("matmul 3x3", {s.random({2, 3, 4}), s.random({2, 4, 5})}, [](const V& t) { return matmul(t[0], t[1]); });
  s.multi("matmul 3x2", {s.random({2, 3, 4}), s.random({4, 5})}, [](const V& t) { return matmul(t[0], t[1]); });
  s.multi("matmul 2x3", {s.random({3, 4}), s.random({2, 4, 5})}, [](const V& t) { return matmul(t[0], t[1]); });
  s.unary("transpose", {2, 3, 4}, [](const Tensor& x) { return transpose(x); });
  s.unary("reshape", {2, 3, 4}, [](const Tensor& x) { return reshape(x, {6, 4}); });
  s.unary("softmax axis 1", {2, 4, 3}, [](const Tensor& x) { return softmax(x, 1); }, -2.0, 2.0);
  s.unary("softmax last axis", {3, 5}, [](const Tensor& x) { return softmax(x, 1); }, -2.0, 2.0);
  s.unary("sum", {2, 3, 4}, [](const Tensor& x) { return sum(x, 1); });
  s.unary("mean keepdim", {2, 3, 4}, [](const Tensor& x) { return mean(x, 2, true); });
  s.unary("sum_all", {2, 3}, [](const Tensor& x) { return sum_all(x); });
  s.unary("gelu", {4, 5}, [](const Tensor& x) { return gelu(x); }, -3.0, 3.0);
  s.multi("layer_norm", {s.random({3, 6}, -2.0, 2.0), s.random({6}), s.random({6})},
          [](const V& t) { return layer_norm(t[0], t[1], t[2]); });
  s.multi("concat", {s.random({2, 3, 2}), s.random({2, 1, 2}), s.random({2, 2, 2})},
          [](const V& t) { return concat(t, 1); });
  s.unary("slice", {2, 5, 3}, [](const Tensor& x) { return slice(x, 1, 1, 4); });
  s.unary("select", {2, 5, 3}, [](const Tensor& x) { return select(x, 1, 2); });
  s.unary("index_select (repeats)", {4, 3}, [](const Tensor& x) {
    const std::vector<std::size_t> idx{2, 0, 2, 3, 3, 3};
    return index_select(x, 0, idx);
  });
  s.multi("conv2d stride 1", {s.random({2, 2, 5, 5}), s.random({3, 2, 3, 3}), s.random({3})},
          [](const V& t) { return conv2d(t[0], t[1], t[2], 1, 1); });
  s.multi("conv2d stride 2", {s.random({2, 2, 6, 6}), s.random({3, 2, 3, 3}), s.random({3})},
          [](const V& t) { return conv2d(t[0], t[1], t[2], 2, 1); });
  s.unary("nchw_to_tokens", {2, 3, 2, 4}, [](const Tensor& x) { return nchw_to_tokens(x); });
  s.unary("tokens_to_nchw", {2, 8, 3}, [](const Tensor& x) { return tokens_to_nchw(x, 2, 4); });
  s.multi("attention", {s.random({2, 5, 6}), s.random({2, 5, 6}), s.random({2, 5, 6})},
          [](const V& t) { return attention(t[0], t[1], t[2], 2); });
  s.unary("cross_entropy", {3, 5}, [](const Tensor& x) {
    const std::vector<int> labels{4, 0, 2};
    return cross_entropy(x, labels);
  }, -2.0, 2.0);
  s.unary("cross_entropy_from_logits", {3, 4}, [](const Tensor& x) {
    const std::vector<int> labels{1, 3, 0};
    return cross_entropy_from_logits(x, labels);
  }, -2.0, 2.0);

  // The straight-through op must differentiate exactly like its soft input.
  {
    Tensor x = s.random({2, 4, 3}, -2.0, 2.0);
    Tensor w = s.random({2, 4, 3}).detach();
    const auto soft = [=] { return sum_all(mul(softmax(x, 1), w)); };
    s.leaves("straight_through_onehot (soft derivative)", soft, {x});
    x.zero_grad();
    sum_all(mul(straight_through_onehot(softmax(x, 1), 1), w)).backward();
    const std::vector<double> st(x.grad().begin(), x.grad().end());
    x.zero_grad();
    soft().backward();
    double worst = 0.0;
    for (std::size_t i = 0; i < st.size(); ++i) worst = std::max(worst, std::abs(st[i] - x.grad()[i]));
    auto& e = s.report.entries.back();
    if (worst != 0.0) {
      e.passed = false;
      e.name += " [straight-through gradient differs from soft]";
    }
    x.zero_grad();
  }
}

ModelConfig toy_model_config() {
  ModelConfig m;
  m.backbone.channels = {2, 3, 4, 5};
  m.backbone.height = 16;
  m.backbone.width = 16;
  m.mam.rates = {0.25, 0.25, 0.5, 1.0};  // 16, 4, 2 and 1 clusters
  m.mam.model_width = 8;
  m.mam.heads = 2;
  m.mam.depth = 1;
  m.mam.ff_mult = 2;
  m.init_seed = 11;
  return m;
}

std::vector<Tensor> params_with_prefix(const ParameterStore& store, const std::string& prefix) {
  std::vector<Tensor> out;
  for (const auto& e : store.entries()) {
    if (e.name.rfind(prefix, 0) == 0) out.push_back(e.tensor);
  }
  return out;
}

std::vector<Annotation> toy_truth() {
  return {Annotation::from_classes({0, 2, 1, 3}), Annotation::from_classes({3, 0, 0, 1})};
}

void module_checks(Suite& s) {
  auto model = std::make_shared<RetouchDetector>(toy_model_config());
  const auto& store = model->params();
  // Unit-scale centres keep the assignment gradients well above roundoff.
  for (std::size_t l = 0; l < kNumStages; ++l) {
    Tensor c = model->clusters().stage(l).centres;
    if (!c.defined()) continue;
    const Tensor fresh = s.random(c.shape());
    std::copy(fresh.values().begin(), fresh.values().end(), c.mutable_values().begin());
  }
  const ClusterConfig soft = model->cluster_config(AssignMode::kSoft);

  {
    Tensor tokens = s.random({2, 16, 3});
    const auto r = s.readout({2, 4, 8});
    auto params = params_with_prefix(store, "clusters.stage1");
    params.push_back(model->clusters().w_o());
    params.push_back(model->clusters().b_o());
    params.push_back(tokens);
    s.leaves("clustering assign+reduce (soft)",
             [=] { return r(stage_pipeline(model->clusters(), 1, tokens, soft, nullptr)); }, params);
  }
  {
    Tensor tokens = s.random({2, 4, 5});
    const auto r = s.readout({2, 4, 8});
    auto params = params_with_prefix(store, "clusters.stage3");
    params.push_back(model->clusters().w_o());
    params.push_back(tokens);
    s.leaves("clustering skip path",
             [=] { return r(stage_pipeline(model->clusters(), 3, tokens, soft, nullptr)); }, params);
  }
  {
    std::vector<Tensor> reduced;
    for (std::size_t l = 0; l < kNumStages; ++l) reduced.push_back(s.random({2, 3, 8}));
    auto params = params_with_prefix(store, "encoder");
    params.insert(params.end(), reduced.begin(), reduced.end());
    const auto truth = toy_truth();
    s.leaves("encoder layer + heads + loss", [=] {
      const auto& enc = model->encoder();
      return level_loss(enc.predict(enc.encode(enc.assemble(reduced))), truth);
    }, params);
  }
  {
    Tensor images = s.random({2, 3, 16, 16});
    const auto r = s.readout({2, 3, 4, 4});
    auto params = params_with_prefix(store, "backbone.stage0");
    const auto more = params_with_prefix(store, "backbone.stage1");
    params.insert(params.end(), more.begin(), more.end());
    params.push_back(images);
    s.leaves("backbone two stages",
             [=] { return r(model->backbone().forward(images, 2).back()); }, params);
  }
  {
    Tensor images = s.random({2, 3, 16, 16});
    std::vector<Tensor> params;
    for (const auto& e : store.entries()) params.push_back(e.tensor);
    params.push_back(images);
    const auto truth = toy_truth();
    s.leaves("pipeline backbone->MAM->loss (soft)", [=] {
      return level_loss(model->forward(images, AssignMode::kSoft, nullptr), truth);
    }, params);
  }
}

}  // namespace

GradCheckReport gradcheck_all(const GradCheckSuiteOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  Suite s(options);
  op_checks(s);
  module_checks(s);
  if (options.inject_sign_flip) {
    s.unary("injected sign-flipped backward", {3, 4}, sign_flipped_identity);
  }
  s.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return std::move(s.report);
}

nlohmann::json gradcheck_report_to_json(const GradCheckReport& report) {
  nlohmann::json j;
  j["passed"] = report.passed();
  j["seconds"] = report.seconds;
  j["checks"] = nlohmann::json::array();
  for (const auto& e : report.entries) {
    j["checks"].push_back({{"name", e.name},
                           {"passed", e.passed},
                           {"max_relative_error", e.result.max_relative_error},
                           {"worst_tensor", e.result.worst_tensor},
                           {"worst_index", e.result.worst_index},
                           {"analytic", e.result.analytic},
                           {"numeric", e.result.numeric},
                           {"coordinates", e.result.coordinates}});
  }
  return j;
}

std::string format_gradcheck_entry(const GradCheckEntry& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s %-44s rel %.3e  (%zu coords; worst tensor %zu index %zu: %.6e vs %.6e)",
                e.passed ? "ok  " : "FAIL", e.name.c_str(), e.result.max_relative_error,
                e.result.coordinates, e.result.worst_tensor, e.result.worst_index,
                e.result.analytic, e.result.numeric);
  return buf;
}

}  // namespace mamkit
