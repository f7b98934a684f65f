// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mamkit/gradcheck.hpp"

namespace mamkit {

struct GradCheckEntry {
  std::string name;
  GradCheckResult result;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double seconds = 0.0;

  bool passed() const;
  std::vector<const GradCheckEntry*> failures() const;
};

struct GradCheckSuiteOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  /// Adds an op whose backward pass has the wrong sign.
  bool inject_sign_flip = false;
};

/// Every differentiable op, each module, and the backbone-to-loss pipeline
/// (soft assignment) at toy sizes.
GradCheckReport gradcheck_all(const GradCheckSuiteOptions& options = {});

nlohmann::json gradcheck_report_to_json(const GradCheckReport& report);
std::string format_gradcheck_entry(const GradCheckEntry& e);

}  // namespace mamkit
