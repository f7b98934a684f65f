// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/params.hpp"

#include <algorithm>
#include <stdexcept>

namespace mamkit {

Tensor ParameterStore::add(std::string name, Shape shape, std::vector<double> values,
                           ParamGroup group) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name " + name);
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  entries_.push_back(Entry{std::move(name), t, group});
  return t;
}

Tensor ParameterStore::add_gaussian(std::string name, Shape shape, double stddev, ParamGroup group,
                                    RngStream& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * rng.normal();
  return add(std::move(name), std::move(shape), std::move(v), group);
}

Tensor ParameterStore::add_constant(std::string name, Shape shape, double value, ParamGroup group) {
  std::vector<double> v(shape_numel(shape), value);
  return add(std::move(name), std::move(shape), std::move(v), group);
}

const ParameterStore::Entry* ParameterStore::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Entry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  const Entry* e = find(name);
  if (!e) throw std::out_of_range("no parameter named " + name);
  return e->tensor;
}

std::vector<Tensor> ParameterStore::group(ParamGroup g) const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) {
    if (e.group == g) out.push_back(e.tensor);
  }
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<std::vector<double>> ParameterStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

void ParameterStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw std::invalid_argument("snapshot size mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].tensor.mutable_values();
    if (dst.size() != values[i].size()) {
      throw std::invalid_argument("snapshot shape mismatch for " + entries_[i].name);
    }
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace mamkit
