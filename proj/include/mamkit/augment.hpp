// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "mamkit/image.hpp"
#include "mamkit/labels.hpp"
#include "mamkit/rng.hpp"

namespace mamkit {

struct AugmentConfig {
  double blur_probability = 0.5;
  int min_kernel = 3;
  int max_kernel = 7;
  double jpeg_probability = 0.5;
  int min_quality = 80;
  int max_quality = 95;
};

/// Every random choice made by one lossy round trip; enough to replay it.
struct AugmentRecord {
  bool blurred = false;
  int kernel_size = 3;
  double angle_degrees = 0.0;
  bool jpeg = false;
  int quality = 95;

  friend bool operator==(const AugmentRecord&, const AugmentRecord&) = default;
};

nlohmann::json augment_record_to_json(const AugmentRecord& r);

/// size x size line kernel through the centre at `angle_degrees`, weights
/// summing to one. Throws ArgumentError for sizes outside 3..7.
std::vector<double> motion_blur_kernel(int size, double angle_degrees);

/// Correlates each channel of a floating-point planar-interleaved image
/// with the motion kernel (reflect-101 borders). No clamping.
std::vector<double> motion_blur(std::span<const double> pixels, int width, int height,
                                int channels, int size, double angle_degrees);
/// 8-bit variant: rounded to nearest and clamped to 0..255.
Image motion_blur(const Image& img, int size, double angle_degrees);

AugmentRecord sample_augment(RngStream& rng, const AugmentConfig& cfg = {});
/// Deterministic replay of a sampled record.
Image apply_augment(const Image& img, const AugmentRecord& record);

struct AugmentResult {
  Image image;
  AugmentRecord record;
};

/// Optional motion blur followed by a PNG or JPEG encode/decode.
AugmentResult lossy_roundtrip(const Image& img, RngStream& rng, const AugmentConfig& cfg = {});

}  // namespace mamkit
