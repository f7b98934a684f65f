// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mamkit/model.hpp"

namespace mamkit {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Versioned container: magic, version, JSON header, then named tensors with
/// raw little-endian 64-bit values.
struct CheckpointFile {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::json header;
  std::vector<NamedTensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file);
CheckpointFile decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Header holds {"model": config, "extra": extra}.
void save_checkpoint(const std::filesystem::path& path, const RetouchDetector& model,
                     const nlohmann::json& extra = nlohmann::json::object());
/// Rebuilds the model from the header config and overwrites every parameter.
std::unique_ptr<RetouchDetector> load_checkpoint(const std::filesystem::path& path,
                                                 nlohmann::json* extra = nullptr);

}  // namespace mamkit
