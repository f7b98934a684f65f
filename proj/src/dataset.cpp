// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/dataset.hpp"

#include "mamkit/manifest.hpp"

namespace mamkit {

std::vector<Sample>& Dataset::split(Split s) {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  throw ArgumentError("unknown split");
}

const std::vector<Sample>& Dataset::split(Split s) const {
  return const_cast<Dataset&>(*this).split(s);
}

Dataset load_dataset(const std::vector<ManifestRecord>& records,
                     const std::filesystem::path& image_root) {
  Dataset d;
  for (const auto& r : records) {
    if (r.excluded() || !r.split) continue;
    const std::filesystem::path p = std::filesystem::path(r.path).is_absolute()
                                        ? std::filesystem::path(r.path)
                                        : image_root / r.path;
    Sample s;
    s.id = r.id;
    s.truth = r.annotation;
    try {
      s.image = read_image(p);
    } catch (const std::exception& e) {
      throw DataError("record " + std::to_string(r.id) + ": " + e.what());
    }
    if (s.image.channels != 3) throw DataError("record " + std::to_string(r.id) + " is not RGB");
    d.split(*r.split).push_back(std::move(s));
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& manifest) {
  return load_dataset(read_manifest_file(manifest), manifest.parent_path());
}

}  // namespace mamkit
