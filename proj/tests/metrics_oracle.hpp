// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

// Naive re-evaluation of the TP/TN/AC indicators as exact fractions, used to
// cross-check aggregate().

#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mamkit/metrics.hpp"

namespace mamkit::testing {

struct Fraction {
  std::uint64_t num = 0, den = 0;
};

struct OracleReport {
  std::array<std::array<Fraction, 3>, 4> per_type{};  // [type][tp, tn, ac]
  std::array<Fraction, 3> sum{};
};

inline OracleReport brute_force(const std::vector<PredictionRecord>& records) {
  OracleReport o;
  for (const auto& r : records) {
    const auto y = r.truth.classes();
    const auto p = r.predicted.classes();
    bool any_on = false, any_off = false, all_on_hit = true, all_off_hit = true, exact = true;
    for (int t = 0; t < 4; ++t) {
      auto& cell = o.per_type[t];
      if (y[t] != 0) {
        cell[0].den += 1;
        if (p[t] != 0) cell[0].num += 1;
        any_on = true;
        if (p[t] == 0) all_on_hit = false;
      } else {
        cell[1].den += 1;
        if (p[t] == 0) cell[1].num += 1;
        any_off = true;
        if (p[t] != 0) all_off_hit = false;
      }
      cell[2].den += 1;
      if (p[t] == y[t]) cell[2].num += 1;
      if (p[t] != y[t]) exact = false;
    }
    if (any_on) {
      o.sum[0].den += 1;
      if (all_on_hit) o.sum[0].num += 1;
    }
    if (any_off) {
      o.sum[1].den += 1;
      if (all_off_hit) o.sum[1].num += 1;
    }
    o.sum[2].den += 1;
    if (exact) o.sum[2].num += 1;
  }
  return o;
}

// Equal as rationals: identical counts, the value is num/den when defined and
// absent exactly when den = 0.
inline bool same_cell(const MetricCell& c, const Fraction& f) {
  if (c.numerator != f.num || c.denominator != f.den) return false;
  if (f.den == 0) return !c.value.has_value();
  if (!c.value) return false;
  return *c.value == static_cast<double>(f.num) / static_cast<double>(f.den);
}

inline bool matches_oracle(const MetricsReport& m, const OracleReport& o) {
  for (int t = 0; t < 4; ++t) {
    const auto& b = m.per_type[t];
    if (!same_cell(b.tp, o.per_type[t][0]) || !same_cell(b.tn, o.per_type[t][1]) ||
        !same_cell(b.ac, o.per_type[t][2])) {
      return false;
    }
  }
  return same_cell(m.sum.tp, o.sum[0]) && same_cell(m.sum.tn, o.sum[1]) && same_cell(m.sum.ac, o.sum[2]);
}

}  // namespace mamkit::testing
