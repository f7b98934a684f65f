// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mamkit/tensor.hpp"

namespace mamkit {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;  // index into the checked tensor list
  std::size_t worst_index = 0;   // flat coordinate inside that tensor
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(x+eps) - f(x-eps)) / 2eps, coordinate by coordinate.
/// Relative error is |a - n| / max(|a|, |n|, 1e-12).
/// Throws NumericError naming the coordinate if any evaluation is non-finite.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& function,
                           const Tensor& point, double eps = 1e-5);

/// Same check over a set of leaf tensors perturbed in place; `loss` must read
/// them on every call. Existing gradients on `params` are overwritten.
GradCheckResult grad_check_leaves(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                                  double eps = 1e-5);

}  // namespace mamkit
