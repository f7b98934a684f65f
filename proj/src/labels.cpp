// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/labels.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <numeric>

namespace mamkit {

namespace {

constexpr std::array<std::string_view, kNumTypes> kTypeNames{"Smooth", "EyeEnlarge", "FaceLift",
                                                            "Whiten"};
constexpr std::array<std::string_view, 4> kApiNames{"Megvii", "Tencent", "Alibaba", "none"};
constexpr std::array<std::string_view, 3> kSplitNames{"train", "val", "test"};
constexpr std::array<std::string_view, 5> kCleaningNames{
    "BlurOrBadLighting", "CosplayFilteredOrHeavyMakeup", "IncompleteFace", "InfantOrBaby",
    "FakeFace"};

template <class E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<E>(i);
  }
  return std::nullopt;
}

}  // namespace

std::string_view type_name(RetouchType t) { return kTypeNames[static_cast<std::size_t>(t)]; }

char type_symbol(RetouchType t) {
  constexpr std::array<char, kNumTypes> symbols{'S', 'E', 'L', 'W'};
  return symbols[static_cast<std::size_t>(t)];
}

Level Level::from_class(int cls) {
  if (cls < 0 || cls > 3) throw LevelError("level class " + std::to_string(cls) + " outside 0..3");
  return Level(cls);
}

Level Level::from_magnitude(int magnitude) {
  if (magnitude < 0 || magnitude > 90 || magnitude % 30 != 0) {
    throw LevelError("retouching magnitude " + std::to_string(magnitude) +
                     " is not one of 0, 30, 60, 90");
  }
  return Level(magnitude / 30);
}

Annotation Annotation::from_classes(const std::array<int, kNumTypes>& classes) {
  Annotation a;
  for (std::size_t i = 0; i < kNumTypes; ++i) a.levels_[i] = Level::from_class(classes[i]);
  return a;
}

Annotation Annotation::from_magnitudes(const std::array<int, kNumTypes>& magnitudes) {
  Annotation a;
  for (std::size_t i = 0; i < kNumTypes; ++i) a.levels_[i] = Level::from_magnitude(magnitudes[i]);
  return a;
}

Annotation Annotation::parse(std::string_view text) {
  auto fail = [&](const std::string& why) {
    throw LevelError("malformed annotation '" + std::string(text) + "': " + why);
  };
  auto skip_ws = [&](std::size_t& i) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  std::size_t i = 0;
  skip_ws(i);
  if (i >= text.size() || text[i] != '{') fail("expected '{'");
  ++i;
  Annotation a;
  for (std::size_t t = 0; t < kNumTypes; ++t) {
    skip_ws(i);
    const auto name = kTypeNames[t];
    if (text.substr(i, name.size()) != name) fail("expected " + std::string(name));
    i += name.size();
    skip_ws(i);
    if (i >= text.size() || text[i] != ':') fail("expected ':'");
    ++i;
    skip_ws(i);
    if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i]))) fail("expected level");
    int v = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      v = v * 10 + (text[i] - '0');
      if (v > 1000) fail("level too large");
      ++i;
    }
    a.levels_[t] = Level::from_class(v);
    skip_ws(i);
    const char expect = t + 1 == kNumTypes ? '}' : ',';
    if (i >= text.size() || text[i] != expect) fail(std::string("expected '") + expect + "'");
    ++i;
  }
  skip_ws(i);
  if (i != text.size()) fail("trailing characters");
  return a;
}

std::array<int, kNumTypes> Annotation::classes() const {
  std::array<int, kNumTypes> out{};
  for (std::size_t i = 0; i < kNumTypes; ++i) out[i] = levels_[i].cls();
  return out;
}

int Annotation::subset_kind() const {
  return static_cast<int>(std::count_if(levels_.begin(), levels_.end(),
                                        [](Level l) { return l.on(); }));
}

std::string Annotation::to_text() const {
  std::string s = "{";
  for (std::size_t i = 0; i < kNumTypes; ++i) {
    if (i) s += ", ";
    s += kTypeNames[i];
    s += ": ";
    s += std::to_string(levels_[i].cls());
  }
  s += '}';
  return s;
}

std::string_view api_name(SourceApi api) { return kApiNames[static_cast<std::size_t>(api)]; }
std::optional<SourceApi> parse_api(std::string_view name) {
  return lookup<SourceApi>(kApiNames, name);
}
std::string_view split_name(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }
std::optional<Split> parse_split(std::string_view name) { return lookup<Split>(kSplitNames, name); }
std::string_view cleaning_name(CleaningCategory c) {
  return kCleaningNames[static_cast<std::size_t>(c)];
}
std::optional<CleaningCategory> parse_cleaning(std::string_view name) {
  return lookup<CleaningCategory>(kCleaningNames, name);
}

std::string ManifestRecord::combination() const {
  std::string s;
  for (auto t : kRetouchTypes) {
    if (annotation[t].on()) s += type_symbol(t);
  }
  return s;
}

std::vector<std::string> record_violations(const ManifestRecord& r) {
  std::vector<std::string> v;
  if (r.id < 0 || r.id > kMaxFfhqIndex) {
    v.push_back("id " + std::to_string(r.id) + " outside 0..69999");
  }
  if (r.kind < 0 || r.kind > 4) v.push_back("kind " + std::to_string(r.kind) + " outside 0..4");
  if (r.kind != r.annotation.subset_kind()) {
    v.push_back("kind " + std::to_string(r.kind) + " but annotation has " +
                std::to_string(r.annotation.subset_kind()) + " non-zero levels");
  }
  if ((r.api == SourceApi::kNone) != (r.kind == 0)) {
    v.push_back("api " + std::string(api_name(r.api)) + " inconsistent with kind " +
                std::to_string(r.kind) + " (api none iff non-retouched)");
  }
  if (r.api == SourceApi::kAlibaba && r.kind > 1) {
    v.push_back("Alibaba records are single-operated, got kind " + std::to_string(r.kind));
  }
  if (r.version < 0) v.push_back("negative version " + std::to_string(r.version));
  if (r.kind == 4 && r.version > 1) {
    v.push_back("quad-operated version " + std::to_string(r.version) + " outside 0..1");
  }
  if (r.path.empty()) v.push_back("empty path");
  if (!r.excluded() && !r.split) v.push_back("record is not excluded but has no split");
  return v;
}

std::vector<TypeCombination> subset_combinations(int kind) {
  if (kind < 1 || kind > 4) {
    throw ArgumentError("subset kind " + std::to_string(kind) + " outside 1..4");
  }
  std::vector<TypeCombination> out;
  // Bitmask enumeration, then lexicographic sort on canonical indices.
  for (unsigned mask = 1; mask < (1u << kNumTypes); ++mask) {
    if (std::popcount(mask) != kind) continue;
    TypeCombination c;
    for (std::size_t i = 0; i < kNumTypes; ++i) {
      if (mask & (1u << i)) c.push_back(kRetouchTypes[i]);
    }
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end());
  return out;
}

int versions_per_combination(int kind) {
  if (kind < 1 || kind > 4) {
    throw ArgumentError("subset kind " + std::to_string(kind) + " outside 1..4");
  }
  return kind == 4 ? 2 : 1;
}

SplitAssigner::SplitAssigner(std::vector<int> universe, std::uint64_t seed) {
  std::sort(universe.begin(), universe.end());
  universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
  RngStream rng(seed, "split");
  for (std::size_t i = universe.size(); i > 1; --i) {
    std::swap(universe[i - 1], universe[rng.below(i)]);
  }
  const auto n = static_cast<double>(universe.size());
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * n));
  const auto n_val = std::min(universe.size() - n_train, static_cast<std::size_t>(std::llround(0.1 * n)));
  for (std::size_t i = 0; i < universe.size(); ++i) {
    const Split s = i < n_train ? Split::kTrain : i < n_train + n_val ? Split::kVal : Split::kTest;
    assignment_.emplace(universe[i], s);
    ++counts_[static_cast<std::size_t>(s)];
  }
}

Split SplitAssigner::split_of(int id) const {
  auto it = assignment_.find(id);
  if (it == assignment_.end()) {
    throw ArgumentError("id " + std::to_string(id) + " is not in the split universe");
  }
  return it->second;
}

Split split_of_index(int ffhq_index, std::uint64_t split_seed) {
  if (ffhq_index < 0 || ffhq_index > kMaxFfhqIndex) {
    throw ArgumentError("FFHQ index " + std::to_string(ffhq_index) + " outside 0..69999");
  }
  static thread_local std::optional<std::pair<std::uint64_t, SplitAssigner>> cache;
  if (!cache || cache->first != split_seed) {
    std::vector<int> all(kMaxFfhqIndex + 1);
    std::iota(all.begin(), all.end(), 0);
    cache.emplace(split_seed, SplitAssigner(std::move(all), split_seed));
  }
  return cache->second.split_of(ffhq_index);
}

bool reduced_sampling_eligible(const ManifestRecord& r) {
  if (r.kind == 0) return true;
  return r.kind == 1 && (r.api == SourceApi::kTencent || r.api == SourceApi::kAlibaba);
}

std::vector<ManifestRecord> reduced_sampling(std::span<const ManifestRecord> records,
                                             RngStream& rng) {
  std::vector<ManifestRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!reduced_sampling_eligible(r) || rng.bernoulli(1.0 / 3.0)) out.push_back(r);
  }
  return out;
}

}  // namespace mamkit
