// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mamkit/rng.hpp"

namespace mamkit {

class LevelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The four retouching operations in canonical annotation order.
enum class RetouchType : int { kSmooth = 0, kEyeEnlarge = 1, kFaceLift = 2, kWhiten = 3 };

inline constexpr std::size_t kNumTypes = 4;
inline constexpr std::size_t kNumLevels = 4;
inline constexpr std::array<RetouchType, kNumTypes> kRetouchTypes{
    RetouchType::kSmooth, RetouchType::kEyeEnlarge, RetouchType::kFaceLift, RetouchType::kWhiten};

std::string_view type_name(RetouchType t);
/// Short symbol used in combination names: S, E, L, W.
char type_symbol(RetouchType t);

/// Quantized retouching strength: class 0..3 <-> magnitude 0/30/60/90.
class Level {
 public:
  constexpr Level() = default;
  static Level from_class(int cls);
  static Level from_magnitude(int magnitude);

  constexpr int cls() const { return cls_; }
  constexpr int magnitude() const { return cls_ * 30; }
  constexpr bool on() const { return cls_ != 0; }
  friend constexpr bool operator==(Level, Level) = default;

 private:
  constexpr explicit Level(int cls) : cls_(cls) {}
  int cls_ = 0;
};

/// One level per retouching type.
class Annotation {
 public:
  Annotation() = default;
  static Annotation from_classes(const std::array<int, kNumTypes>& classes);
  static Annotation from_magnitudes(const std::array<int, kNumTypes>& magnitudes);
  /// Parses the textual form produced by to_text().
  static Annotation parse(std::string_view text);

  Level operator[](RetouchType t) const { return levels_[static_cast<std::size_t>(t)]; }
  Level level(std::size_t i) const { return levels_.at(i); }
  void set(RetouchType t, Level l) { levels_[static_cast<std::size_t>(t)] = l; }
  std::array<int, kNumTypes> classes() const;
  /// Number of applied operations (non-zero levels).
  int subset_kind() const;
  /// "{Smooth: 0, EyeEnlarge: 2, FaceLift: 0, Whiten: 3}"
  std::string to_text() const;

  friend bool operator==(const Annotation&, const Annotation&) = default;

 private:
  std::array<Level, kNumTypes> levels_{};
};

enum class SourceApi { kMegvii, kTencent, kAlibaba, kNone };
enum class Split { kTrain, kVal, kTest };
enum class CleaningCategory {
  kBlurOrBadLighting,
  kCosplayFilteredOrHeavyMakeup,
  kIncompleteFace,
  kInfantOrBaby,
  kFakeFace,
};

std::string_view api_name(SourceApi api);
std::optional<SourceApi> parse_api(std::string_view name);
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);
std::string_view cleaning_name(CleaningCategory c);
std::optional<CleaningCategory> parse_cleaning(std::string_view name);

inline constexpr int kMaxFfhqIndex = 69999;

struct ManifestRecord {
  int id = 0;  // FFHQ index
  SourceApi api = SourceApi::kNone;
  int kind = 0;
  Annotation annotation;
  std::string path;
  std::optional<Split> split;
  std::set<CleaningCategory> exclusions;
  int version = 0;

  bool excluded() const { return !exclusions.empty(); }
  /// Applied types as a symbol string in canonical order ("" for kind 0).
  std::string combination() const;
};

/// Checks the single-record invariants; returns one message per violation.
std::vector<std::string> record_violations(const ManifestRecord& r);

using TypeCombination = std::vector<RetouchType>;

/// All type combinations of a subset kind in canonical (lexicographic) order:
/// C(4,k) combinations for k = 1..3 and the single quadruple for k = 4.
std::vector<TypeCombination> subset_combinations(int kind);
/// Retouched versions materialized per combination (2 for the quadruple).
int versions_per_combination(int kind);

/// 80/10/10 train/val/test assignment of original image ids by a seeded
/// permutation. Every record derived from an id inherits the id's split.
class SplitAssigner {
 public:
  SplitAssigner(std::vector<int> universe, std::uint64_t seed);

  /// Throws ArgumentError for ids outside the universe.
  Split split_of(int id) const;
  bool contains(int id) const { return assignment_.count(id) != 0; }
  std::array<std::size_t, 3> counts() const { return counts_; }

 private:
  std::unordered_map<int, Split> assignment_;
  std::array<std::size_t, 3> counts_{};
};

/// Split of an FFHQ index when the universe is all of 0..69999.
Split split_of_index(int ffhq_index, std::uint64_t split_seed);

/// True for records subject to reduced sampling: non-retouched originals, and
/// single-operated Tencent or Alibaba images.
bool reduced_sampling_eligible(const ManifestRecord& r);
/// Keeps each eligible record with probability 1/3; others pass through.
std::vector<ManifestRecord> reduced_sampling(std::span<const ManifestRecord> records,
                                             RngStream& rng);

}  // namespace mamkit
