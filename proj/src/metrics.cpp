// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/metrics.hpp"

#include <fstream>
#include <string>

namespace mamkit {

using nlohmann::json;

ImageFlags image_flags(const Annotation& truth, const Annotation& predicted) {
  bool any_on = false, any_off = false;
  bool tp = true, tn = true, ac = true;
  for (auto t : kRetouchTypes) {
    const Level y = truth[t];
    const Level p = predicted[t];
    if (y.on()) {
      any_on = true;
      tp = tp && p.on();
    } else {
      any_off = true;
      tn = tn && !p.on();
    }
    ac = ac && y == p;
  }
  ImageFlags f;
  if (any_on) f.tp = tp;
  if (any_off) f.tn = tn;
  f.ac = ac;
  return f;
}

namespace {

struct Counter {
  std::uint64_t num = 0, den = 0;
  void add(bool defined, bool hit) {
    if (!defined) return;
    ++den;
    if (hit) ++num;
  }
  MetricCell cell() const {
    MetricCell c;
    c.numerator = num;
    c.denominator = den;
    if (den) c.value = static_cast<double>(num) / static_cast<double>(den);
    return c;
  }
};

}  // namespace

MetricsReport aggregate(std::span<const PredictionRecord> records) {
  if (records.empty()) throw AggregationError("aggregate: no prediction records");
  std::array<std::array<Counter, 3>, kNumTypes> per{};
  std::array<Counter, 3> whole{};
  for (const auto& r : records) {
    for (std::size_t i = 0; i < kNumTypes; ++i) {
      const Level y = r.truth.level(i);
      const Level p = r.predicted.level(i);
      per[i][0].add(y.on(), p.on());
      per[i][1].add(!y.on(), !p.on());
      per[i][2].add(true, y == p);
    }
    const auto f = image_flags(r.truth, r.predicted);
    whole[0].add(f.tp.has_value(), f.tp.value_or(false));
    whole[1].add(f.tn.has_value(), f.tn.value_or(false));
    whole[2].add(true, f.ac);
  }
  MetricsReport rep;
  rep.images = records.size();
  for (std::size_t i = 0; i < kNumTypes; ++i) {
    rep.per_type[i] = {per[i][0].cell(), per[i][1].cell(), per[i][2].cell()};
  }
  rep.sum = {whole[0].cell(), whole[1].cell(), whole[2].cell()};
  return rep;
}

namespace {

template <class F>
void for_each_cell(MetricsReport& r, F&& f) {
  for (auto& b : r.per_type) {
    f(b.tp);
    f(b.tn);
    f(b.ac);
  }
  f(r.sum.tp);
  f(r.sum.tn);
  f(r.sum.ac);
}

std::vector<const MetricCell*> cells_of(const MetricsReport& r) {
  std::vector<const MetricCell*> out;
  for (const auto& b : r.per_type) {
    out.insert(out.end(), {&b.tp, &b.tn, &b.ac});
  }
  out.insert(out.end(), {&r.sum.tp, &r.sum.tn, &r.sum.ac});
  return out;
}

}  // namespace

MetricsReport average_trials(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw AggregationError("average_trials: no reports");
  MetricsReport out = reports[0];
  std::vector<MetricCell*> dst;
  for_each_cell(out, [&](MetricCell& c) { dst.push_back(&c); });
  for (auto* c : dst) {
    c->numerator = 0;
    c->denominator = 0;
    if (c->value) c->value = 0.0;
  }
  out.images = 0;
  for (std::size_t t = 0; t < reports.size(); ++t) {
    const auto src = cells_of(reports[t]);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (src[i]->value.has_value() != dst[i]->value.has_value()) {
        throw AggregationError("average_trials: trial " + std::to_string(t) +
                               " differs in which cells are defined");
      }
      dst[i]->numerator += src[i]->numerator;
      dst[i]->denominator += src[i]->denominator;
      if (src[i]->value) *dst[i]->value += *src[i]->value;
    }
    out.images += reports[t].images;
  }
  const double n = static_cast<double>(reports.size());
  for (auto* c : dst) {
    if (c->value) *c->value /= n;
  }
  return out;
}

namespace {

json block_json(const IndicatorBlock& b) {
  json j;
  auto put = [&](const char* name, const MetricCell& c) {
    j[name] = c.value ? json(*c.value) : json(nullptr);
    j[std::string(name) + "_num"] = c.numerator;
    j[std::string(name) + "_den"] = c.denominator;
  };
  put("tp", b.tp);
  put("tn", b.tn);
  put("ac", b.ac);
  return j;
}

std::array<int, kNumTypes> read_levels(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != kNumTypes) {
    throw ArgumentError(std::string("field '") + key + "' must hold four class indices");
  }
  std::array<int, kNumTypes> out{};
  for (std::size_t i = 0; i < kNumTypes; ++i) {
    if (!v[i].is_number_integer()) throw ArgumentError(std::string("field '") + key + "' must be integers");
    out[i] = v[i].get<int>();
  }
  return out;
}

}  // namespace

json report_to_json(const MetricsReport& report) {
  json j;
  for (auto t : kRetouchTypes) j[std::string(type_name(t))] = block_json(report.of(t));
  j["sum"] = block_json(report.sum);
  j["images"] = report.images;
  return j;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PredictionRecord r;
      r.id = j.at("id").get<int>();
      r.predicted = Annotation::from_classes(read_levels(j, "pred"));
      r.truth = Annotation::from_classes(read_levels(j, "truth"));
      out.push_back(r);
    } catch (const std::exception& e) {
      throw ArgumentError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

json prediction_to_json(const PredictionRecord& r) {
  json j;
  j["id"] = r.id;
  j["pred"] = r.predicted.classes();
  j["truth"] = r.truth.classes();
  return j;
}

}  // namespace mamkit
