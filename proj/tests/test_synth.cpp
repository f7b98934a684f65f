// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mamkit/manifest.hpp"
#include "mamkit/synth.hpp"

using namespace mamkit;

TEST_CASE("factor tables are strictly monotone") {
  const SyntheticSpec s;
  for (std::size_t l = 1; l < kNumLevels; ++l) {
    CHECK(s.eye_scale[l] > s.eye_scale[l - 1]);
    CHECK(s.face_width_scale[l] < s.face_width_scale[l - 1]);
    CHECK(s.brightness[l] > s.brightness[l - 1]);
    CHECK(s.smooth_radius[l] > s.smooth_radius[l - 1]);
  }
}

TEST_CASE("level zero renders the base face") {
  SyntheticSpec identity;
  identity.eye_scale.fill(1.0);
  identity.face_width_scale.fill(1.0);
  identity.brightness.fill(0.0);
  identity.smooth_radius.fill(0.0);
  const auto base = render_face(SyntheticSpec{}, 5, 12, Annotation{});
  const auto same = render_face(identity, 5, 12, Annotation::from_classes({3, 2, 1, 3}));
  CHECK(base.pixels == same.pixels);
  CHECK(base.width == 64);
  CHECK(base.channels == 3);
}

TEST_CASE("each factor changes the image") {
  const auto base = render_face(SyntheticSpec{}, 5, 12, Annotation{});
  for (int t = 0; t < 4; ++t) {
    std::array<int, 4> cls{};
    cls[t] = 1;
    CHECK(render_face(SyntheticSpec{}, 5, 12, Annotation::from_classes(cls)).pixels != base.pixels);
  }
}

TEST_CASE("generation is deterministic") {
  const auto a = synth_generate(50, 77);
  const auto b = synth_generate(50, 77);
  REQUIRE(a.images.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(a.images[i].pixels == b.images[i].pixels);
    CHECK(record_to_json(a.records[i]) == record_to_json(b.records[i]));
  }
  const auto c = synth_generate(50, 78);
  CHECK(c.images[0].pixels != a.images[0].pixels);
}

TEST_CASE("positive levels and subset kinds are uniform") {
  RngStream rng(31, "synth/levels");
  const int n = 10000;
  std::array<std::array<int, 4>, 4> levels{};
  std::array<int, 5> kinds{};
  for (int i = 0; i < n; ++i) {
    const auto a = sample_annotation(rng);
    ++kinds[a.subset_kind()];
    for (std::size_t t = 0; t < 4; ++t) ++levels[t][a.level(t).cls()];
  }
  for (std::size_t t = 0; t < 4; ++t) {
    const int on = levels[t][1] + levels[t][2] + levels[t][3];
    const double sigma = std::sqrt(on * (1.0 / 3.0) * (2.0 / 3.0));
    for (int l = 1; l <= 3; ++l) CHECK(std::abs(levels[t][l] - on / 3.0) <= 3.0 * sigma);
  }
  const double ks = std::sqrt(n * 0.2 * 0.8);
  for (int k : kinds) CHECK(std::abs(k - n * 0.2) <= 3.0 * ks);
}

TEST_CASE("synthetic manifests validate and split 80/10/10") {
  const auto set = synth_generate(1000, 4);
  std::size_t counts[3] = {};
  for (const auto& r : set.records) ++counts[static_cast<int>(*r.split)];
  CHECK(std::abs(static_cast<long>(counts[0]) - 800) <= 1);
  CHECK(std::abs(static_cast<long>(counts[1]) - 100) <= 1);
  CHECK(std::abs(static_cast<long>(counts[2]) - 100) <= 1);

  const auto dir = std::filesystem::temp_directory_path() / "mamkit_synth_test";
  std::filesystem::remove_all(dir);
  write_synthetic_set(synth_generate(25, 4), dir);
  const auto report = validate_manifest_file(dir / "manifest.jsonl");
  CHECK(report.ok());
  CHECK(report.records.size() == 25);
  CHECK(std::filesystem::exists(dir / report.records[0].path));
  std::filesystem::remove_all(dir);

  const auto fixed = synth_generate(30, 4, {}, SplitSizes{20, 5, 5});
  std::size_t f[3] = {};
  for (const auto& r : fixed.records) ++f[static_cast<int>(*r.split)];
  CHECK(f[0] == 20);
  CHECK(f[1] == 5);
  CHECK(f[2] == 5);
}
