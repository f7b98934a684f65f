// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/optim.hpp"

#include <cmath>

namespace mamkit {

void Adam::add_group(std::vector<Tensor> params, double learning_rate) {
  Group g{{}, learning_rate};
  for (auto& p : params) {
    const std::size_t n = p.numel();
    g.slots.push_back(Slot{std::move(p), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
  groups_.push_back(std::move(g));
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (auto& g : groups_) {
    for (auto& s : g.slots) {
      auto w = s.param.mutable_values();
      const auto grad = s.param.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = grad.empty() ? 0.0 : grad[i];
        s.m[i] = options_.beta1 * s.m[i] + (1.0 - options_.beta1) * gi;
        s.v[i] = options_.beta2 * s.v[i] + (1.0 - options_.beta2) * gi * gi;
        if (g.lr == 0.0) continue;
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        w[i] -= g.lr * mhat / (std::sqrt(vhat) + options_.eps);
      }
    }
  }
}

void Adam::zero_grad() {
  for (auto& g : groups_) {
    for (auto& s : g.slots) s.param.zero_grad();
  }
}

}  // namespace mamkit
