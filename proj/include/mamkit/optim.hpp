// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "mamkit/tensor.hpp"

namespace mamkit {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction and per-group learning rates.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void add_group(std::vector<Tensor> params, double learning_rate);
  /// Applies one update from the accumulated gradients; parameters without a
  /// gradient are left untouched (their moments still decay).
  void step();
  void zero_grad();
  std::uint64_t steps() const { return steps_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
  };
  struct Group {
    std::vector<Slot> slots;
    double lr;
  };
  AdamOptions options_;
  std::vector<Group> groups_;
  std::uint64_t steps_ = 0;
};

}  // namespace mamkit
