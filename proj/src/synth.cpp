// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mamkit/manifest.hpp"

namespace mamkit {

namespace {

constexpr int kSupersample = 4;

// Separable Gaussian blur with clamped borders; sigma 0 is the identity.
std::vector<double> gaussian_blur(const std::vector<double>& src, int n, double sigma) {
  if (sigma <= 0.0) return src;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double total = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& w : k) w /= total;
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * src[y * n + std::clamp(x + i, 0, n - 1)];
      tmp[y * n + x] = s;
    }
  }
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp[std::clamp(y + i, 0, n - 1) * n + x];
      out[y * n + x] = s;
    }
  }
  return out;
}

}  // namespace

Image render_face(const SyntheticSpec& spec, std::uint64_t seed, int id, const Annotation& a) {
  const int n = spec.size;
  const double unit = n / 64.0;
  RngStream rng(seed, "face/" + std::to_string(id));
  const double cx = n / 2.0 + spec.jitter * unit * (2.0 * rng.uniform() - 1.0);
  const double cy = n / 2.0 + 1.0 * unit + spec.jitter * unit * (2.0 * rng.uniform() - 1.0);
  std::vector<double> noise(static_cast<std::size_t>(n) * n);
  for (auto& v : noise) v = spec.noise_std * rng.normal();

  const auto lvl = [&](RetouchType t) { return static_cast<std::size_t>(a[t].cls()); };
  noise = gaussian_blur(noise, n, spec.smooth_radius[lvl(RetouchType::kSmooth)]);
  const double fa = spec.face_half_width * unit * spec.face_width_scale[lvl(RetouchType::kFaceLift)];
  const double fb = spec.face_half_height * unit;
  const double er = spec.eye_radius * unit * spec.eye_scale[lvl(RetouchType::kEyeEnlarge)];
  const double ex = spec.eye_spacing * fa;
  const double ey = cy - 0.25 * fb;
  const double lift = spec.brightness[lvl(RetouchType::kWhiten)];

  Image img(n, n, 3);
  const double step = 1.0 / kSupersample;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      int in_face = 0, in_eye = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = x + (sx + 0.5) * step, py = y + (sy + 0.5) * step;
          const double u = (px - cx) / fa, v = (py - cy) / fb;
          if (u * u + v * v > 1.0) continue;
          ++in_face;
          const double dl = std::hypot(px - (cx - ex), py - ey);
          const double dr = std::hypot(px - (cx + ex), py - ey);
          if (std::min(dl, dr) <= er) ++in_eye;
        }
      }
      const double cf = in_face * step * step;
      const double ce = in_face ? static_cast<double>(in_eye) / in_face : 0.0;
      const double tex = noise[static_cast<std::size_t>(y) * n + x];
      for (int c = 0; c < 3; ++c) {
        const double skin = spec.skin[c] + lift + tex;
        const double inside = (1.0 - ce) * skin + ce * spec.eye[c];
        const double v = (1.0 - cf) * spec.background[c] + cf * inside;
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

Annotation sample_annotation(RngStream& rng) {
  const int kind = static_cast<int>(rng.below(5));
  Annotation a;
  if (kind == 0) return a;
  const auto combos = subset_combinations(kind);
  const auto& combo = combos[rng.below(combos.size())];
  for (auto t : combo) a.set(t, Level::from_class(rng.uniform_int(1, 3)));
  return a;
}

SyntheticSet synth_generate(std::size_t n, std::uint64_t seed, const SyntheticSpec& spec,
                            std::optional<SplitSizes> sizes) {
  if (n == 0) throw ArgumentError("synth_generate: n must be positive");
  if (n > static_cast<std::size_t>(kMaxFfhqIndex) + 1) {
    throw ArgumentError("synth_generate: at most 70000 images");
  }
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<Split> split(n, Split::kTrain);
  if (sizes) {
    if (sizes->train + sizes->val + sizes->test != n) {
      throw ArgumentError("synth_generate: split sizes do not add up to n");
    }
    std::vector<int> order = ids;
    RngStream rng(seed, "synth/split");
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i = 0; i < n; ++i) {
      split[order[i]] = i < sizes->train ? Split::kTrain
                        : i < sizes->train + sizes->val ? Split::kVal
                                                        : Split::kTest;
    }
  } else {
    const SplitAssigner assigner(ids, seed);
    for (std::size_t i = 0; i < n; ++i) split[i] = assigner.split_of(ids[i]);
  }

  SyntheticSet set;
  RngStream labels(seed, "synth/annotations");
  char name[32];
  for (std::size_t i = 0; i < n; ++i) {
    ManifestRecord r;
    r.id = ids[i];
    r.annotation = sample_annotation(labels);
    r.kind = r.annotation.subset_kind();
    r.api = r.kind == 0 ? SourceApi::kNone : SourceApi::kMegvii;
    std::snprintf(name, sizeof name, "images/%05d.png", r.id);
    r.path = name;
    r.split = split[i];
    set.images.push_back(render_face(spec, seed, r.id, r.annotation));
    set.records.push_back(std::move(r));
  }
  return set;
}

void write_synthetic_set(const SyntheticSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    write_png(dir / set.records[i].path, set.images[i]);
  }
  write_manifest_file(dir / "manifest.jsonl", set.records);
}

}  // namespace mamkit
