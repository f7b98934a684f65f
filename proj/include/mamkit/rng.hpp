// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace mamkit {

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

/// Named, seeded random stream. The draw sequence is a function of
/// (seed, label) only; conversions to floating point and integer ranges are
/// done here rather than through <random> distributions so that sequences are
/// identical across standard library implementations.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label);

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer on [lo, hi] inclusive.
  int uniform_int(int lo, int hi);
  bool bernoulli(double p);
  /// Standard normal via Box-Muller (one draw pair per call, no caching).
  double normal();

  /// Child stream labelled "<label>/<suffix>" on the same seed.
  RngStream child(std::string_view suffix) const;

 private:
  std::uint64_t seed_;
  std::string label_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace mamkit
