// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mamkit/rng.hpp"
#include "mamkit/tensor.hpp"

namespace mamkit {

/// Learning-rate group of a parameter.
enum class ParamGroup { kConvolutional, kTransformer };

/// Ordered registry of named trainable tensors.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    ParamGroup group;
  };

  Tensor add(std::string name, Shape shape, std::vector<double> values, ParamGroup group);
  Tensor add_gaussian(std::string name, Shape shape, double stddev, ParamGroup group, RngStream& rng);
  Tensor add_constant(std::string name, Shape shape, double value, ParamGroup group);

  const std::vector<Entry>& entries() const { return entries_; }
  const Entry* find(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  std::vector<Tensor> group(ParamGroup g) const;
  std::size_t scalar_count() const;

  void zero_grad();
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<Entry> entries_;
};

/// Gaussian init with deviation fan_in^-1/2.
inline double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace mamkit
