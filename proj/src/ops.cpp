// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mamkit {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMat>;
using MutMat = Eigen::Map<RowMat>;
using Strided = Eigen::OuterStride<>;
using ConstStridedMat = Eigen::Map<const RowMat, 0, Strided>;
using MutStridedMat = Eigen::Map<RowMat, 0, Strided>;

const Buffer& in_value(const Node& n, std::size_t i) { return n.inputs[i]->value; }
double* in_grad(Node& n, std::size_t i) { return n.inputs[i]->grad_ptr(); }

void check_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_string(x.shape()));
  }
}

// outer x len x inner decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max<std::size_t>({a.size(), b.size(), 1});
  Broadcast p;
  p.out.resize(r);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t off_a = r - a.size(), off_b = r - b.size();
    const std::size_t da = i >= off_a ? a[i - off_a] : 1;
    const std::size_t db = i >= off_b ? b[i - off_b] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " +
                           shape_string(b));
    }
    p.out[i] = std::max(da, db);
    if (i >= off_a && da != 1) p.stride_a[i] = sa[i - off_a];
    if (i >= off_b && db != 1) p.stride_b[i] = sb[i - off_b];
  }
  return p;
}

template <class F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const std::size_t r = p.out.size();
  const std::size_t inner = p.out[r - 1];
  const std::size_t ia_step = p.stride_a[r - 1], ib_step = p.stride_b[r - 1];
  const std::size_t outer = shape_numel(p.out) / inner;
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0, o = 0;
  for (std::size_t k = 0; k < outer; ++k) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ia + j * ia_step, ib + j * ib_step);
    o += inner;
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.stride_a[d] * p.out[d];
      ib -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

// b is either a's full shape or a trailing block of it: a = outer x inner, b = inner.
bool suffix_broadcast(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  std::size_t skip = 0;
  while (skip < b.size() && b[skip] == 1) ++skip;  // leading unit axes of b are harmless
  for (std::size_t i = skip; i < b.size(); ++i) {
    if (b[i] != a[a.size() - b.size() + i]) return false;
  }
  return true;
}

template <BinaryKind kind>
double apply(double x, double y) {
  if constexpr (kind == BinaryKind::kAdd) return x + y;
  if constexpr (kind == BinaryKind::kSub) return x - y;
  if constexpr (kind == BinaryKind::kMul) return x * y;
  return x / y;
}

// out[o * inner + j] = a[o * inner + j] (op) b[j]; b may also span all of a.
template <BinaryKind kind>
Tensor binary_suffix(const Tensor& a, const Tensor& b) {
  const std::size_t inner = b.numel(), outer = a.numel() / inner;
  Buffer out(a.numel());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t o = 0; o < outer; ++o) {
    const double* ar = av + o * inner;
    double* orow = out.data() + o * inner;
    for (std::size_t j = 0; j < inner; ++j) orow[j] = apply<kind>(ar[j], bv[j]);
  }
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [inner, outer](Node& n) {
    const double* g = n.grad.data();
    const double* av = in_value(n, 0).data();
    const double* bv = in_value(n, 1).data();
    double* ga = in_grad(n, 0);
    double* gb = in_grad(n, 1);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* gr = g + o * inner;
      const double* ar = av + o * inner;
      if (ga) {
        double* gar = ga + o * inner;
        for (std::size_t j = 0; j < inner; ++j) {
          if constexpr (kind == BinaryKind::kAdd || kind == BinaryKind::kSub) gar[j] += gr[j];
          if constexpr (kind == BinaryKind::kMul) gar[j] += gr[j] * bv[j];
          if constexpr (kind == BinaryKind::kDiv) gar[j] += gr[j] / bv[j];
        }
      }
      if (gb) {
        for (std::size_t j = 0; j < inner; ++j) {
          if constexpr (kind == BinaryKind::kAdd) gb[j] += gr[j];
          if constexpr (kind == BinaryKind::kSub) gb[j] -= gr[j];
          if constexpr (kind == BinaryKind::kMul) gb[j] += gr[j] * ar[j];
          if constexpr (kind == BinaryKind::kDiv) gb[j] -= gr[j] * ar[j] / (bv[j] * bv[j]);
        }
      }
    }
  });
}

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  if (suffix_broadcast(a.shape(), b.shape())) {
    switch (kind) {
      case BinaryKind::kAdd: return binary_suffix<BinaryKind::kAdd>(a, b);
      case BinaryKind::kSub: return binary_suffix<BinaryKind::kSub>(a, b);
      case BinaryKind::kMul: return binary_suffix<BinaryKind::kMul>(a, b);
      case BinaryKind::kDiv: return binary_suffix<BinaryKind::kDiv>(a, b);
    }
  }
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  Buffer out(shape_numel(plan.out));
  const auto av = a.values();
  const auto bv = b.values();
  switch (kind) {
    case BinaryKind::kAdd:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] + bv[j]; });
      break;
    case BinaryKind::kSub:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] - bv[j]; });
      break;
    case BinaryKind::kMul:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] * bv[j]; });
      break;
    case BinaryKind::kDiv:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] / bv[j]; });
      break;
  }
  Shape shape = plan.out;
  return Tensor::from_op(std::move(shape), std::move(out), {a, b}, [plan, kind](Node& n) {
    const auto& g = n.grad;
    const auto& av = in_value(n, 0);
    const auto& bv = in_value(n, 1);
    double* ga = in_grad(n, 0);
    double* gb = in_grad(n, 1);
    for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      switch (kind) {
        case BinaryKind::kAdd:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] += g[o];
          break;
        case BinaryKind::kSub:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] -= g[o];
          break;
        case BinaryKind::kMul:
          if (ga) ga[i] += g[o] * bv[j];
          if (gb) gb[j] += g[o] * av[i];
          break;
        case BinaryKind::kDiv:
          if (ga) ga[i] += g[o] / bv[j];
          if (gb) gb[j] -= g[o] * av[i] / (bv[j] * bv[j]);
          break;
      }
    });
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kDiv, "div"); }

Tensor scale(const Tensor& x, double factor) {
  Buffer out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= factor;
  return Tensor::from_op(x.shape(), std::move(out), {x}, [factor](Node& n) {
    double* gx = in_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += factor * n.grad[i];
  });
}

Tensor add_scalar(const Tensor& x, double offset) {
  Buffer out(x.values().begin(), x.values().end());
  for (auto& v : out) v += offset;
  return Tensor::from_op(x.shape(), std::move(out), {x}, [](Node& n) {
    double* gx = in_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i];
  });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  auto plan = plan_broadcast(x.shape(), shape, "broadcast_to");
  if (plan.out != shape) {
    throw DimensionError("broadcast_to: cannot broadcast " + shape_string(x.shape()) + " to " +
                         shape_string(shape));
  }
  Buffer out(shape_numel(shape));
  const auto xv = x.values();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { out[o] = xv[i]; });
  return Tensor::from_op(shape, std::move(out), {x}, [plan](Node& n) {
    double* gx = in_grad(n, 0);
    for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { gx[i] += n.grad[o]; });
  });
}

// ---------------------------------------------------------------------------
// Matrix products

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto fail = [&] {
    throw DimensionError("matmul: incompatible shapes " + shape_string(sa) + " and " +
                         shape_string(sb));
  };
  if (sa.size() < 2 || sa.size() > 3 || sb.size() < 2 || sb.size() > 3) fail();
  const std::size_t ba = sa.size() == 3 ? sa[0] : 0;
  const std::size_t bb = sb.size() == 3 ? sb[0] : 0;
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t k2 = sb[sb.size() - 2], n = sb.back();
  if (k != k2) fail();
  if (ba && bb && ba != bb) fail();
  const std::size_t batch = std::max<std::size_t>({ba, bb, 1});
  const bool batched = ba || bb;

  // A 3-D left operand against a shared right operand is one tall GEMM.
  const bool flat = ba && !bb;
  const std::size_t rows = flat ? batch * m : m;
  const std::size_t loops = flat ? 1 : batch;
  const std::size_t step_a = ba && !flat ? m * k : 0;
  const std::size_t step_b = bb ? k * n : 0;
  const std::size_t step_c = flat ? 0 : m * n;

  Buffer out(batch * m * n);
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  for (std::size_t i = 0; i < loops; ++i) {
    MutMat(out.data() + i * step_c, rows, n).noalias() =
        ConstMat(ap + i * step_a, rows, k) * ConstMat(bp + i * step_b, k, n);
  }
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return Tensor::from_op(std::move(shape), std::move(out), {a, b},
                         [=](Node& nd) {
                           const double* av = in_value(nd, 0).data();
                           const double* bv = in_value(nd, 1).data();
                           double* ga = in_grad(nd, 0);
                           double* gb = in_grad(nd, 1);
                           const double* g = nd.grad.data();
                           for (std::size_t i = 0; i < loops; ++i) {
                             ConstMat gc(g + i * step_c, rows, n);
                             if (ga) {
                               MutMat(ga + i * step_a, rows, k).noalias() +=
                                   gc * ConstMat(bv + i * step_b, k, n).transpose();
                             }
                             if (gb) {
                               MutMat(gb + i * step_b, k, n).noalias() +=
                                   ConstMat(av + i * step_a, rows, k).transpose() * gc;
                             }
                           }
                         });
}

Tensor transpose(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("transpose: needs rank >= 2, got " + shape_string(s));
  const std::size_t r = s[s.size() - 2], c = s.back();
  const std::size_t batch = x.numel() / (r * c);
  Shape shape = s;
  std::swap(shape[shape.size() - 2], shape.back());
  Buffer out(x.numel());
  const double* xv = x.values().data();
  for (std::size_t b = 0; b < batch; ++b) {
    MutMat(out.data() + b * r * c, c, r) = ConstMat(xv + b * r * c, r, c).transpose();
  }
  return Tensor::from_op(std::move(shape), std::move(out), {x}, [=](Node& n) {
    double* gx = in_grad(n, 0);
    for (std::size_t b = 0; b < batch; ++b) {
      MutMat(gx + b * r * c, r, c) += ConstMat(n.grad.data() + b * r * c, c, r).transpose();
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  Buffer out(x.values().begin(), x.values().end());
  return Tensor::from_op(std::move(shape), std::move(out), {x}, [](Node& n) {
    double* gx = in_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations

Tensor softmax(const Tensor& x, std::size_t axis) {
  check_axis(x, axis, "softmax");
  const auto sp = split_axis(x.shape(), axis);
  const auto xv = x.values();
  Buffer out(x.numel());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mx = xv[base];
      for (std::size_t l = 1; l < sp.len; ++l) mx = std::max(mx, xv[base + l * sp.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const double e = std::exp(xv[base + l * sp.inner] - mx);
        out[base + l * sp.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] /= total;
    }
  }
  Tensor y = Tensor::from_op(x.shape(), std::move(out), {x}, [sp](Node& n) {
    double* gx = in_grad(n, 0);
    const auto& y = n.value;
    const auto& g = n.grad;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.len * sp.inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < sp.len; ++l) dot += g[base + l * sp.inner] * y[base + l * sp.inner];
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t i = base + l * sp.inner;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
  return y;
}

namespace {

Tensor reduce_axis(const Tensor& x, std::size_t axis, bool keepdim, double factor, const char* op) {
  check_axis(x, axis, op);
  const auto sp = split_axis(x.shape(), axis);
  const auto xv = x.values();
  Buffer out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t l = 0; l < sp.len; ++l) {
      const double* row = xv.data() + (o * sp.len + l) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t in = 0; in < sp.inner; ++in) dst[in] += row[in];
    }
  }
  for (auto& v : out) v *= factor;
  Shape shape = x.shape();
  if (keepdim) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (shape.empty()) shape.push_back(1);
  }
  return Tensor::from_op(std::move(shape), std::move(out), {x}, [sp, factor](Node& n) {
    double* gx = in_grad(n, 0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t l = 0; l < sp.len; ++l) {
        double* row = gx + (o * sp.len + l) * sp.inner;
        const double* g = n.grad.data() + o * sp.inner;
        for (std::size_t in = 0; in < sp.inner; ++in) row[in] += factor * g[in];
      }
    }
  });
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
  return reduce_axis(x, axis, keepdim, 1.0, "sum");
}

Tensor mean(const Tensor& x, std::size_t axis, bool keepdim) {
  check_axis(x, axis, "mean");
  return reduce_axis(x, axis, keepdim, 1.0 / static_cast<double>(x.dim(axis)), "mean");
}

Tensor sum_all(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return Tensor::from_op(Shape{1}, {total}, {x}, [](Node& n) {
    double* gx = in_grad(n, 0);
    const double g = n.grad[0];
    for (std::size_t i = 0; i < n.inputs[0]->value.size(); ++i) gx[i] += g;
  });
}

Tensor gelu(const Tensor& x) {
  Buffer out(x.numel());
  Buffer cdf(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    cdf[i] = 0.5 * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
    out[i] = xv[i] * cdf[i];
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [cdf = std::move(cdf)](Node& n) {
    double* gx = in_grad(n, 0);
    const auto& xv = in_value(n, 0);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      gx[i] += n.grad[i] * (cdf[i] + v * inv_sqrt_2pi * std::exp(-0.5 * v * v));
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: input " + shape_string(x.shape()) + " with gamma " +
                         shape_string(gamma.shape()) + " and beta " + shape_string(beta.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  Buffer out(x.numel());
  Buffer xhat(x.numel());
  Buffer rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rstd[r];
      xhat[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return Tensor::from_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& n) {
        double* gx = in_grad(n, 0);
        double* gg = in_grad(n, 1);
        double* gb = in_grad(n, 2);
        const auto& gamma = in_value(n, 1);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = n.grad.data() + r * d;
          const double* h = xhat.data() + r * d;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[j] * gamma[j];
            mean_dh += dh;
            mean_dh_h += dh * h[j];
            if (gg) gg[j] += g[j] * h[j];
            if (gb) gb[j] += g[j];
          }
          mean_dh *= inv_d;
          mean_dh_h *= inv_d;
          if (gx) {
            for (std::size_t j = 0; j < d; ++j) {
              gx[r * d + j] += rstd[r] * (g[j] * gamma[j] - mean_dh - h[j] * mean_dh_h);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Structural ops

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  check_axis(parts[0], axis, "concat");
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == shape.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == shape[i];
    if (!ok) {
      throw DimensionError("concat: " + shape_string(parts[0].shape()) + " with " +
                           shape_string(s) + " along axis " + std::to_string(axis));
    }
    total += s[axis];
  }
  shape[axis] = total;
  const auto sp = split_axis(shape, axis);
  Buffer out(shape_numel(shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * sp.inner;
    const auto pv = p.values();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pv.data() + o * w, w, out.data() + o * total * sp.inner + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  return Tensor::from_op(std::move(shape), std::move(out), parts, [sp, total, widths](Node& n) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::size_t w = widths[k];
      if (double* gp = in_grad(n, k)) {
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const double* g = n.grad.data() + o * total * sp.inner + offset;
          for (std::size_t i = 0; i < w; ++i) gp[o * w + i] += g[i];
        }
      }
      offset += w;
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  check_axis(x, axis, "slice");
  if (begin >= end || end > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " +
                         shape_string(x.shape()));
  }
  const auto sp = split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t w = (end - begin) * sp.inner;
  const std::size_t src_w = sp.len * sp.inner;
  const std::size_t off = begin * sp.inner;
  Buffer out(sp.outer * w);
  const auto xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xv.data() + o * src_w + off, w, out.data() + o * w);
  }
  return Tensor::from_op(std::move(shape), std::move(out), {x}, [=](Node& n) {
    double* gx = in_grad(n, 0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < w; ++i) gx[o * src_w + off + i] += n.grad[o * w + i];
    }
  });
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  Tensor s = slice(x, axis, index, index + 1);
  Shape shape = s.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape.push_back(1);
  return reshape(s, std::move(shape));
}

Tensor index_select(const Tensor& x, std::size_t axis, std::span<const std::size_t> indices) {
  check_axis(x, axis, "index_select");
  if (indices.empty()) throw DimensionError("index_select: empty index list");
  const auto sp = split_axis(x.shape(), axis);
  for (auto i : indices) {
    if (i >= sp.len) {
      throw DimensionError("index_select: index " + std::to_string(i) + " out of range for " +
                           shape_string(x.shape()));
    }
  }
  Shape shape = x.shape();
  shape[axis] = indices.size();
  const std::size_t cnt = indices.size();
  Buffer out(sp.outer * cnt * sp.inner);
  const auto xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t k = 0; k < cnt; ++k) {
      std::copy_n(xv.data() + (o * sp.len + indices[k]) * sp.inner, sp.inner,
                  out.data() + (o * cnt + k) * sp.inner);
    }
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor::from_op(std::move(shape), std::move(out), {x}, [sp, idx](Node& n) {
    double* gx = in_grad(n, 0);
    const std::size_t cnt = idx.size();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t k = 0; k < cnt; ++k) {
        double* dst = gx + (o * sp.len + idx[k]) * sp.inner;
        const double* g = n.grad.data() + (o * cnt + k) * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += g[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;
  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_h * out_w; }
};

void im2col(const double* img, const ConvGeometry& g, double* cols) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.padding);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.width);
            row[oy * g.out_w + ox] =
                inside ? img[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                             static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* img) {
  const std::size_t p = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            img[(c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix)] +=
                row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[1] != sx[1] || sw[2] != sw[3] ||
      bias.numel() != sw[0] || stride == 0) {
    throw DimensionError("conv2d: input " + shape_string(sx) + " with weight " + shape_string(sw) +
                         " and bias " + shape_string(bias.shape()));
  }
  const std::size_t batch = sx[0];
  const std::size_t out_c = sw[0];
  if (sx[2] + 2 * padding < sw[2] || sx[3] + 2 * padding < sw[3]) {
    throw DimensionError("conv2d: kernel " + shape_string(sw) + " larger than padded input " +
                         shape_string(sx));
  }
  ConvGeometry g{sx[1], sx[2], sx[3], sw[2], stride, padding, 0, 0};
  g.out_h = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel) / stride + 1;
  const std::size_t patch = g.patch(), pos = g.positions();
  const std::size_t in_size = g.channels * g.height * g.width;

  Buffer cols(batch * patch * pos);
  Buffer out(batch * out_c * pos);
  const double* xv = x.values().data();
  ConstMat w(weight.values().data(), out_c, patch);
  Eigen::Map<const Eigen::VectorXd> b(bias.values().data(), static_cast<Eigen::Index>(out_c));
  for (std::size_t i = 0; i < batch; ++i) {
    double* c = cols.data() + i * patch * pos;
    im2col(xv + i * in_size, g, c);
    MutMat y(out.data() + i * out_c * pos, out_c, pos);
    y.noalias() = w * ConstMat(c, patch, pos);
    y.colwise() += b;
  }
  Shape shape{batch, out_c, g.out_h, g.out_w};
  return Tensor::from_op(
      std::move(shape), std::move(out), {x, weight, bias},
      [g, batch, out_c, in_size, cols = std::move(cols)](Node& n) {
        const std::size_t patch = g.patch(), pos = g.positions();
        double* gx = in_grad(n, 0);
        double* gw = in_grad(n, 1);
        double* gb = in_grad(n, 2);
        ConstMat w(in_value(n, 1).data(), out_c, patch);
        Buffer dcols(gx ? patch * pos : 0);
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMat gy(n.grad.data() + i * out_c * pos, out_c, pos);
          ConstMat c(cols.data() + i * patch * pos, patch, pos);
          if (gw) MutMat(gw, out_c, patch).noalias() += gy * c.transpose();
          if (gb) {
            Eigen::Map<Eigen::VectorXd>(gb, static_cast<Eigen::Index>(out_c)) += gy.rowwise().sum();
          }
          if (gx) {
            MutMat(dcols.data(), patch, pos).noalias() = w.transpose() * gy;
            col2im_add(dcols.data(), g, gx + i * in_size);
          }
        }
      });
}

Tensor nchw_to_tokens(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw DimensionError("nchw_to_tokens: expected rank 4, got " + shape_string(s));
  const std::size_t batch = s[0], ch = s[1], hw = s[2] * s[3];
  Buffer out(x.numel());
  const double* xv = x.values().data();
  for (std::size_t b = 0; b < batch; ++b) {
    MutMat(out.data() + b * hw * ch, hw, ch) = ConstMat(xv + b * ch * hw, ch, hw).transpose();
  }
  return Tensor::from_op(Shape{batch, hw, ch}, std::move(out), {x}, [=](Node& n) {
    double* gx = in_grad(n, 0);
    for (std::size_t b = 0; b < batch; ++b) {
      MutMat(gx + b * ch * hw, ch, hw) += ConstMat(n.grad.data() + b * hw * ch, hw, ch).transpose();
    }
  });
}

Tensor tokens_to_nchw(const Tensor& tokens, std::size_t height, std::size_t width) {
  const Shape& s = tokens.shape();
  if (s.size() != 3 || s[1] != height * width) {
    throw DimensionError("tokens_to_nchw: " + shape_string(s) + " is not " +
                         std::to_string(height) + "x" + std::to_string(width) + " tokens");
  }
  const std::size_t batch = s[0], ch = s[2];
  Tensor t = transpose(tokens);
  return reshape(t, Shape{batch, ch, height, width});
}

Tensor straight_through_onehot(const Tensor& soft, std::size_t axis) {
  check_axis(soft, axis, "straight_through_onehot");
  const auto sp = split_axis(soft.shape(), axis);
  const auto sv = soft.values();
  Buffer out(soft.numel(), 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      std::size_t best = 0;
      for (std::size_t l = 1; l < sp.len; ++l) {
        if (sv[base + l * sp.inner] > sv[base + best * sp.inner]) best = l;
      }
      out[base + best * sp.inner] = 1.0;
    }
  }
  return Tensor::from_op(soft.shape(), std::move(out), {soft}, [](Node& n) {
    double* gx = in_grad(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Attention

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::vector<double>* probabilities) {
  const Shape& s = q.shape();
  if (s.size() != 3 || k.shape() != s || v.shape() != s || heads == 0 || s[2] % heads != 0) {
    throw DimensionError("attention: q " + shape_string(s) + ", k " + shape_string(k.shape()) +
                         ", v " + shape_string(v.shape()) + " with " + std::to_string(heads) +
                         " heads");
  }
  const std::size_t batch = s[0], len = s[1], width = s[2], hd = width / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(hd));
  const Strided stride(static_cast<Eigen::Index>(width));
  const auto ti = static_cast<Eigen::Index>(len), hi = static_cast<Eigen::Index>(hd);

  Buffer probs(batch * heads * len * len);
  Buffer out(q.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * len * width + h * hd;
      ConstStridedMat qh(q.values().data() + off, ti, hi, stride);
      ConstStridedMat kh(k.values().data() + off, ti, hi, stride);
      ConstStridedMat vh(v.values().data() + off, ti, hi, stride);
      MutMat p(probs.data() + (b * heads + h) * len * len, ti, ti);
      p.noalias() = scl * (qh * kh.transpose());
      for (Eigen::Index r = 0; r < ti; ++r) {
        const double mx = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - mx).exp();
        p.row(r) /= p.row(r).sum();
      }
      MutStridedMat(out.data() + off, ti, hi, stride).noalias() = p * vh;
    }
  }
  if (probabilities) probabilities->assign(probs.begin(), probs.end());
  return Tensor::from_op(
      s, std::move(out), {q, k, v},
      [=, probs = std::move(probs)](Node& n) {
        const double* qv = in_value(n, 0).data();
        const double* kv = in_value(n, 1).data();
        const double* vv = in_value(n, 2).data();
        double* gq = in_grad(n, 0);
        double* gk = in_grad(n, 1);
        double* gv = in_grad(n, 2);
        RowMat dp(ti, ti);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = b * len * width + h * hd;
            ConstMat p(probs.data() + (b * heads + h) * len * len, ti, ti);
            ConstStridedMat go(n.grad.data() + off, ti, hi, stride);
            ConstStridedMat vh(vv + off, ti, hi, stride);
            if (gv) MutStridedMat(gv + off, ti, hi, stride).noalias() += p.transpose() * go;
            dp.noalias() = go * vh.transpose();
            for (Eigen::Index r = 0; r < ti; ++r) {
              const double dot = dp.row(r).dot(p.row(r));
              dp.row(r) = (p.row(r).array() * (dp.row(r).array() - dot)).matrix();
            }
            dp *= scl;
            if (gq) {
              MutStridedMat(gq + off, ti, hi, stride).noalias() +=
                  dp * ConstStridedMat(kv + off, ti, hi, stride);
            }
            if (gk) {
              MutStridedMat(gk + off, ti, hi, stride).noalias() +=
                  dp.transpose() * ConstStridedMat(qv + off, ti, hi, stride);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Losses and noise

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_string(s) + " with " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t rows = s[0], classes = s[1];
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw LabelError("cross_entropy: class " + std::to_string(l) + " outside 0.." +
                       std::to_string(classes - 1));
    }
  }
  const auto lv = logits.values();
  Buffer probs(logits.numel());
  Buffer out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = lv.data() + r * classes;
    const double mx = *std::max_element(row, row + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(row[c] - mx);
    const double log_z = mx + std::log(total);
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(row[c] - log_z);
    out[r] = log_z - row[static_cast<std::size_t>(labels[r])];
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return Tensor::from_op(Shape{rows}, std::move(out), {logits},
                         [classes, lab, probs = std::move(probs)](Node& n) {
                           double* gx = in_grad(n, 0);
                           for (std::size_t r = 0; r < lab.size(); ++r) {
                             const double g = n.grad[r];
                             for (std::size_t c = 0; c < classes; ++c) {
                               const double target = static_cast<int>(c) == lab[r] ? 1.0 : 0.0;
                               gx[r * classes + c] += g * (probs[r * classes + c] - target);
                             }
                           }
                         });
}

Tensor cross_entropy_from_logits(const Tensor& logits, std::span<const int> classes) {
  constexpr std::size_t kLevels = 4;
  if (logits.shape().back() != kLevels) {
    throw DimensionError("cross_entropy_from_logits: expected four logits per row, got " +
                         shape_string(logits.shape()));
  }
  for (int c : classes) {
    if (c < 0 || c > 3) throw LabelError("level class " + std::to_string(c) + " outside 0..3");
  }
  const std::size_t rows = logits.numel() / kLevels;
  return sum_all(cross_entropy(reshape(logits, Shape{rows, kLevels}), classes));
}

double gumbel_from_uniform(double u) {
  constexpr double kClamp = 1e-12;
  u = std::clamp(u, kClamp, 1.0 - kClamp);
  return -std::log(-std::log(u));
}

Tensor gumbel_noise(const Shape& shape, RngStream& rng) {
  Buffer out(shape_numel(shape));
  for (auto& v : out) v = gumbel_from_uniform(rng.uniform());
  return Tensor::from_op(shape, std::move(out), {}, nullptr);
}

}  // namespace mamkit
