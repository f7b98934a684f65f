// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include "mamkit/image.hpp"
#include "mamkit/labels.hpp"

namespace mamkit {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  int id = 0;
  Annotation truth;
  Image image;
};

struct Dataset {
  std::vector<Sample> train, val, test;

  std::vector<Sample>& split(Split s);
  const std::vector<Sample>& split(Split s) const;
};

/// Non-excluded records of each split with their decoded images. Relative
/// paths resolve against `image_root`.
Dataset load_dataset(const std::vector<ManifestRecord>& records,
                     const std::filesystem::path& image_root);
/// Reads and validates the manifest; images resolve against its directory.
Dataset load_dataset(const std::filesystem::path& manifest);

}  // namespace mamkit
