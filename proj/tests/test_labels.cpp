// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "mamkit/image.hpp"
#include "mamkit/labels.hpp"
#include "mamkit/manifest.hpp"
#include "mamkit/synth.hpp"

using namespace mamkit;

TEST_CASE("level quantization is a bijection on four magnitudes") {
  for (int c = 0; c < 4; ++c) {
    CHECK(Level::from_class(c).magnitude() == 30 * c);
    CHECK(Level::from_magnitude(30 * c).cls() == c);
  }
  for (int m : {-30, 1, 15, 29, 45, 89, 120}) CHECK_THROWS_AS(Level::from_magnitude(m), LevelError);
  for (int c : {-1, 4}) CHECK_THROWS_AS(Level::from_class(c), LevelError);
}

TEST_CASE("annotation text form and round trip") {
  const auto a = Annotation::from_magnitudes({0, 60, 0, 90});
  CHECK(a.to_text() == "{Smooth: 0, EyeEnlarge: 2, FaceLift: 0, Whiten: 3}");
  CHECK(Annotation::parse(a.to_text()) == a);
  CHECK(a.subset_kind() == 2);
  CHECK(Annotation{}.subset_kind() == 0);
  CHECK_THROWS_AS(Annotation::from_magnitudes({0, 45, 0, 0}), LevelError);
  for (int i = 0; i < 256; ++i) {
    const auto b = Annotation::from_classes({i & 3, (i >> 2) & 3, (i >> 4) & 3, (i >> 6) & 3});
    CHECK(Annotation::parse(b.to_text()) == b);
  }
}

TEST_CASE("subset combinations") {
  const auto pairs = subset_combinations(2);
  std::set<std::string> names;
  for (const auto& c : pairs) {
    std::string s;
    for (auto t : c) s += type_symbol(t);
    names.insert(s);
  }
  CHECK(names == std::set<std::string>{"SE", "SL", "SW", "EL", "EW", "LW"});
  CHECK(subset_combinations(1).size() == 4);
  CHECK(subset_combinations(3).size() == 4);
  CHECK(subset_combinations(4).size() == 1);
  CHECK(versions_per_combination(4) == 2);
  CHECK(versions_per_combination(2) == 1);
  CHECK_THROWS_AS(subset_combinations(0), ArgumentError);
  CHECK_THROWS_AS(subset_combinations(5), ArgumentError);
}

TEST_CASE("record invariants") {
  ManifestRecord r;
  r.id = 5;
  r.api = SourceApi::kTencent;
  r.path = "x.png";
  r.split = Split::kTrain;
  CHECK_FALSE(record_violations(r).empty());  // all-zero annotation with an API

  r.api = SourceApi::kAlibaba;
  r.annotation = Annotation::from_classes({1, 0, 2, 0});
  r.kind = 2;
  CHECK_FALSE(record_violations(r).empty());  // Alibaba applies one operation at a time

  r.api = SourceApi::kMegvii;
  CHECK(record_violations(r).empty());
  r.kind = 3;
  CHECK_FALSE(record_violations(r).empty());  // kind disagrees with the annotation
}

TEST_CASE("split sizes over the cleaned universe") {
  std::vector<int> ids(58158);
  for (int i = 0; i < 58158; ++i) ids[i] = i + (i / 5);  // sparse ids below 70000
  SplitAssigner s(ids, 17);
  const auto c = s.counts();
  CHECK(std::abs(static_cast<long>(c[0]) - 46526) <= 1);
  CHECK(std::abs(static_cast<long>(c[1]) - 5816) <= 1);
  CHECK(std::abs(static_cast<long>(c[2]) - 5816) <= 1);
  CHECK(c[0] + c[1] + c[2] == 58158);

  SplitAssigner again(ids, 17);
  for (int i = 0; i < 58158; i += 97) CHECK(s.split_of(ids[i]) == again.split_of(ids[i]));
  CHECK_THROWS_AS(s.split_of(69999), ArgumentError);
}

TEST_CASE("retouched versions inherit the split of their original") {
  auto set = synth_generate(300, 8);
  std::vector<ManifestRecord> records = set.records;
  // Add retouched siblings for every id.
  const auto originals = records;
  for (auto r : originals) {
    r.api = SourceApi::kTencent;
    r.annotation = Annotation::from_classes({0, 0, 0, 1});
    r.kind = 1;
    records.push_back(r);
  }
  assign_splits(records, 3);
  std::map<int, Split> seen;
  for (const auto& r : records) {
    REQUIRE(r.split.has_value());
    auto [it, fresh] = seen.emplace(r.id, *r.split);
    if (!fresh) CHECK(it->second == *r.split);
  }
}

TEST_CASE("reduced sampling keeps one third of eligible records") {
  std::vector<ManifestRecord> records(30000);
  for (int i = 0; i < 30000; ++i) records[i].id = i;
  RngStream rng(12, "reduce");
  const auto kept = reduced_sampling(records, rng);
  const double sigma = std::sqrt(30000.0 * (1.0 / 3.0) * (2.0 / 3.0));
  CHECK(std::abs(static_cast<double>(kept.size()) - 10000.0) <= 3.0 * sigma);

  ManifestRecord m;
  m.api = SourceApi::kMegvii;
  m.kind = 3;
  m.annotation = Annotation::from_classes({1, 1, 1, 0});
  std::vector<ManifestRecord> ineligible(500, m);
  CHECK(reduced_sampling(ineligible, rng).size() == 500);

  ManifestRecord single;
  single.api = SourceApi::kMegvii;
  single.kind = 1;
  single.annotation = Annotation::from_classes({0, 2, 0, 0});
  CHECK_FALSE(reduced_sampling_eligible(single));
  single.api = SourceApi::kTencent;
  CHECK(reduced_sampling_eligible(single));
}

TEST_CASE("psnr closed form and identical sentinel") {
  Image a(8, 8, 3, 100);
  Image b = a;
  for (auto& p : b.pixels) p += 1;
  REQUIRE(psnr(a, b).has_value());
  CHECK(*psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-12));
  CHECK(*psnr(a, b) == doctest::Approx(48.13).epsilon(1e-4));
  CHECK_FALSE(psnr(a, a).has_value());
}

TEST_CASE("manifest validation") {
  const auto set = synth_generate(40, 2);
  std::stringstream ok;
  write_manifest(ok, set.records);
  CHECK(validate_manifest(ok).ok());

  std::stringstream dup;
  write_manifest(dup, {set.records[3], set.records[3]});
  const auto d = validate_manifest(dup);
  REQUIRE(d.diagnostics.size() == 1);
  CHECK(d.diagnostics[0].line == 2);

  std::stringstream bad("{\"id\": 1, \"api\": \"Tencent\", \"kind\": 0, \"smooth\": 0, \"eye_enlarge\": 0, "
                        "\"face_lift\": 0, \"whiten\": 0, \"path\": \"a.png\", \"split\": \"train\", "
                        "\"exclusions\": [], \"version\": 0}\nnot json\n");
  const auto b = validate_manifest(bad);
  CHECK(b.diagnostics.size() == 2);
}

TEST_CASE("record json round trip") {
  const auto set = synth_generate(30, 4);
  for (const auto& r : set.records) {
    const auto back = record_from_json(record_to_json(r));
    CHECK(record_to_json(back) == record_to_json(r));
  }
}
