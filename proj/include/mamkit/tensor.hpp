// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mamkit {

using Shape = std::vector<std::size_t>;

// Storage is aligned to the widest vector register so that vectorized kernels
// split their work the same way on every call; results are then bitwise
// reproducible.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode graph. Values are immutable after the op
// that produced them returns; only `grad` is written during backward.
struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Lazily allocated, zero-filled gradient storage.
  Buffer& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
  // Null when this node does not take part in differentiation.
  double* grad_ptr() { return requires_grad ? grad_buffer().data() : nullptr; }
};

}  // namespace detail

/// Dense row-major tensor of doubles with optional reverse-mode gradient.
///
/// Copies share storage (handle semantics). Gradients accumulate additively
/// across backward passes until zero_grad() is called.
class Tensor {
 public:
  using BackwardFn = std::function<void(detail::Node&)>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor parameter(Shape shape, std::vector<double> values);

  /// Builds the output of a differentiable op. The backward closure is kept
  /// only if some input requires a gradient.
  static Tensor from_op(Shape shape, Buffer values,
                        const std::vector<Tensor>& inputs, BackwardFn backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Direct write access; meant for optimizers and test fixtures.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Seeds d(self)/d(self) = 1 and propagates to every reachable input.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

}  // namespace mamkit
