// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mamkit {

namespace {

constexpr double kFloor = 1e-12;

double scalar_of(const Tensor& y, std::size_t tensor, std::size_t coord) {
  if (y.numel() != 1) throw DimensionError("grad_check: function must be scalar-valued");
  const double v = y.item();
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: non-finite value at tensor " + std::to_string(tensor) +
                       " coordinate " + std::to_string(coord));
  }
  return v;
}

void record(GradCheckResult& r, std::size_t tensor, std::size_t coord, double analytic,
            double numeric) {
  if (!std::isfinite(analytic)) {
    throw NumericError("grad_check: non-finite gradient at tensor " + std::to_string(tensor) +
                       " coordinate " + std::to_string(coord));
  }
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kFloor});
  const double rel = std::abs(analytic - numeric) / denom;
  ++r.coordinates;
  if (rel > r.max_relative_error || r.coordinates == 1) {
    r.max_relative_error = rel;
    r.worst_tensor = tensor;
    r.worst_index = coord;
    r.analytic = analytic;
    r.numeric = numeric;
  }
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& function,
                           const Tensor& point, double eps) {
  const std::vector<double> base(point.values().begin(), point.values().end());
  Tensor x = Tensor::parameter(point.shape(), base);
  Tensor y = function(x);
  scalar_of(y, 0, 0);
  y.backward();
  std::vector<double> analytic(base.size(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  GradCheckResult result;
  std::vector<double> probe = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    probe[i] = base[i] + eps;
    const double up = scalar_of(function(Tensor(point.shape(), probe)), 0, i);
    probe[i] = base[i] - eps;
    const double down = scalar_of(function(Tensor(point.shape(), probe)), 0, i);
    probe[i] = base[i];
    record(result, 0, i, analytic[i], (up - down) / (2.0 * eps));
  }
  return result;
}

GradCheckResult grad_check_leaves(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                  double eps) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor y = loss();
  scalar_of(y, 0, 0);
  y.backward();

  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t];
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = scalar_of(loss(), t, i);
      values[i] = saved - eps;
      const double down = scalar_of(loss(), t, i);
      values[i] = saved;
      record(result, t, i, analytic[i], (up - down) / (2.0 * eps));
    }
  }
  return result;
}

}  // namespace mamkit
