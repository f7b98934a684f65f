// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mamkit/rng.hpp"
#include "mamkit/tensor.hpp"

namespace mamkit {

class LabelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Elementwise arithmetic with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
/// Materializes x broadcast to `shape`; the gradient sums over broadcast axes.
Tensor broadcast_to(const Tensor& x, const Shape& shape);

/// Matrix product. Accepts 2-D x 2-D, batched 3-D x 3-D, and a 2-D operand on
/// either side of a 3-D one (shared across the batch).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor sum_all(const Tensor& x);

/// Exact (erf) GELU.
Tensor gelu(const Tensor& x);
/// Normalizes over the last axis, then applies gamma * x + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
/// slice of width one with that axis removed.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);
/// Gathers entries along `axis`; indices may repeat (gradients scatter-add).
Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices);

/// 2-D convolution on NCHW input with square kernels, zero padding.
/// weight: [out, in, k, k]; bias: [out].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// [B, C, H, W] -> [B, H*W, C] in raster order.
Tensor nchw_to_tokens(const Tensor& x);
/// Inverse of nchw_to_tokens.
Tensor tokens_to_nchw(const Tensor& tokens, std::size_t height, std::size_t width);

/// One-hot of the argmax along `axis` (ties go to the lowest index). The
/// backward pass is the identity, so the op differentiates like its input.
Tensor straight_through_onehot(const Tensor& soft, std::size_t axis);

/// Multi-head scaled dot-product self-attention core over q, k, v of shape
/// [B, T, D]. When `probabilities` is non-null it receives [B, heads, T, T].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::vector<double>* probabilities = nullptr);

/// Per-row -log softmax(logits)[label] for logits [B, K]; result is [B].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Level classification loss: exactly four logits per row ([4] or [B, 4]),
/// classes in 0..3. Returns the sum over rows as a scalar.
Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> classes);

/// -ln(-ln u) with u clamped to [1e-12, 1 - 1e-12].
double gumbel_from_uniform(double u);
/// i.i.d. standard Gumbel samples drawn from `rng`.
Tensor gumbel_noise(const Shape& shape, RngStream& rng);

}  // namespace mamkit
