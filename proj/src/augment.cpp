// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mamkit {

nlohmann::json augment_record_to_json(const AugmentRecord& r) {
  return {{"blurred", r.blurred},
          {"kernel_size", r.kernel_size},
          {"angle", r.angle_degrees},
          {"format", r.jpeg ? "jpeg" : "png"},
          {"quality", r.quality}};
}

std::vector<double> motion_blur_kernel(int size, double angle_degrees) {
  if (size < 3 || size > 7) {
    throw ArgumentError("motion blur kernel size " + std::to_string(size) + " outside 3..7");
  }
  const auto n = static_cast<std::size_t>(size);
  std::vector<double> k(n * n, 0.0);
  const double centre = (size - 1) / 2.0;
  const double rad = angle_degrees * std::numbers::pi / 180.0;
  const double dx = std::cos(rad), dy = -std::sin(rad);
  // Dense sampling along the segment; each covered cell gets weight one.
  const int samples = 8 * size + 1;
  for (int s = 0; s < samples; ++s) {
    const double t = -centre + (size - 1) * static_cast<double>(s) / (samples - 1);
    const long x = std::lround(centre + t * dx);
    const long y = std::lround(centre + t * dy);
    if (x < 0 || y < 0 || x >= size || y >= size) continue;
    k[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)] = 1.0;
  }
  double total = 0.0;
  for (double v : k) total += v;
  for (double& v : k) v /= total;
  return k;
}

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

std::vector<double> motion_blur(std::span<const double> pixels, int width, int height,
                                int channels, int size, double angle_degrees) {
  const auto kernel = motion_blur_kernel(size, angle_degrees);
  const int anchor = size / 2;
  std::vector<double> out(pixels.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int ky = 0; ky < size; ++ky) {
        const int sy = reflect101(y + ky - anchor, height);
        for (int kx = 0; kx < size; ++kx) {
          const double w = kernel[static_cast<std::size_t>(ky * size + kx)];
          if (w == 0.0) continue;
          const int sx = reflect101(x + kx - anchor, width);
          const std::size_t src = (static_cast<std::size_t>(sy) * width + sx) * channels;
          const std::size_t dst = (static_cast<std::size_t>(y) * width + x) * channels;
          for (int c = 0; c < channels; ++c) out[dst + c] += w * pixels[src + c];
        }
      }
    }
  }
  return out;
}

Image motion_blur(const Image& img, int size, double angle_degrees) {
  std::vector<double> src(img.pixels.begin(), img.pixels.end());
  const auto blurred = motion_blur(src, img.width, img.height, img.channels, size, angle_degrees);
  Image out = img;
  for (std::size_t i = 0; i < blurred.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(blurred[i]), 0L, 255L));
  }
  return out;
}

AugmentRecord sample_augment(RngStream& rng, const AugmentConfig& cfg) {
  AugmentRecord r;
  r.blurred = rng.bernoulli(cfg.blur_probability);
  r.kernel_size = rng.uniform_int(cfg.min_kernel, cfg.max_kernel);
  r.angle_degrees = 180.0 * rng.uniform();
  r.jpeg = rng.bernoulli(cfg.jpeg_probability);
  r.quality = rng.uniform_int(cfg.min_quality, cfg.max_quality);
  return r;
}

Image apply_augment(const Image& img, const AugmentRecord& record) {
  Image work = record.blurred ? motion_blur(img, record.kernel_size, record.angle_degrees) : img;
  if (record.jpeg) return decode_jpeg(encode_jpeg(work, record.quality));
  return decode_png(encode_png(work));
}

AugmentResult lossy_roundtrip(const Image& img, RngStream& rng, const AugmentConfig& cfg) {
  AugmentResult r;
  r.record = sample_augment(rng, cfg);
  r.image = apply_augment(img, r.record);
  return r;
}

}  // namespace mamkit
