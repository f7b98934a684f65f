// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mamkit/image.hpp"
#include "mamkit/labels.hpp"
#include "mamkit/rng.hpp"

namespace mamkit {

/// Procedural four-factor face task. Level l of each type selects the l-th
/// entry of the matching factor table.
struct SyntheticSpec {
  int size = 64;
  std::array<double, kNumLevels> eye_scale{1.0, 1.15, 1.3, 1.45};
  std::array<double, kNumLevels> face_width_scale{1.0, 0.92, 0.84, 0.76};
  std::array<double, kNumLevels> brightness{0.0, 12.0, 24.0, 36.0};
  std::array<double, kNumLevels> smooth_radius{0.0, 0.75, 1.5, 2.25};

  double face_half_width = 22.0;   // at size 64
  double face_half_height = 26.0;
  double eye_radius = 4.0;
  double eye_spacing = 0.42;       // eye offset as a fraction of the face half-width
  double noise_std = 24.0;
  double jitter = 2.0;             // max centre offset in pixels
  std::array<double, 3> skin{176.0, 138.0, 118.0};
  std::array<double, 3> eye{40.0, 32.0, 30.0};
  std::array<double, 3> background{72.0, 92.0, 112.0};
};

/// Renders face `id`. The texture noise and placement depend on (seed, id)
/// only, so annotations change nothing but the four factors.
Image render_face(const SyntheticSpec& spec, std::uint64_t seed, int id, const Annotation& a);

/// Subset kind uniform over 0..4, combination uniform within the kind,
/// positive levels uniform over 1..3.
Annotation sample_annotation(RngStream& rng);

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};

struct SyntheticSet {
  std::vector<ManifestRecord> records;
  std::vector<Image> images;
};

/// Draws `n` annotated faces with ids 0..n-1. Splits follow `sizes` in a
/// seeded shuffled order when given, else the 80/10/10 assigner.
SyntheticSet synth_generate(std::size_t n, std::uint64_t seed, const SyntheticSpec& spec = {},
                            std::optional<SplitSizes> sizes = std::nullopt);

/// Writes images/<id>.png under `dir` plus manifest.jsonl with relative paths.
void write_synthetic_set(const SyntheticSet& set, const std::filesystem::path& dir);

}  // namespace mamkit
