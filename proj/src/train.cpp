// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/train.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "mamkit/checkpoint.hpp"
#include "mamkit/optim.hpp"

namespace mamkit {

using nlohmann::json;

json epoch_log_to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"val_loss", e.val_loss},
          {"val_metrics", report_to_json(e.val_metrics)}};
}

ModelConfig model_config_for(const TrainConfig& cfg, int height, int width) {
  ModelConfig m;
  m.backbone.height = static_cast<std::size_t>(height);
  m.backbone.width = static_cast<std::size_t>(width);
  m.mam.rates = cfg.rates;
  m.mam.temperature = cfg.temperature;
  m.mam.model_width = cfg.model_width;
  m.mam.depth = cfg.depth;
  m.mam.heads = cfg.heads;
  m.init_seed = cfg.seed;
  return m;
}

namespace {

std::string key(const std::string& prefix, std::size_t a) { return prefix + "/" + std::to_string(a); }

std::vector<Image> augmented_batch(std::span<const Sample> samples,
                                   std::span<const std::size_t> indices, std::uint64_t seed,
                                   const std::string& label, const AugmentConfig& augment) {
  std::vector<Image> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    RngStream rng(seed, key(label, static_cast<std::size_t>(samples[i].id)));
    out.push_back(lossy_roundtrip(samples[i].image, rng, augment).image);
  }
  return out;
}

}  // namespace

Prediction predict_split(const RetouchDetector& model, std::span<const Sample> samples,
                         std::uint64_t seed, const std::string& label, std::size_t batch_size,
                         const AugmentConfig& augment) {
  Prediction p;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto images = augmented_batch(samples, idx, seed, label, augment);
    const auto out = model.forward(images_to_tensor(images), AssignMode::kEvalDeterministicHard, nullptr);
    std::vector<Annotation> truth;
    for (auto i : idx) truth.push_back(samples[i].truth);
    total += level_loss(out, truth).item() * static_cast<double>(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) {
      p.records.push_back({samples[idx[b]].id, out.predicted(b), samples[idx[b]].truth});
    }
  }
  p.loss = total / static_cast<double>(samples.size());
  return p;
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const TrainOptions& options) {
  if (data.train.empty()) throw DataError("training split is empty");
  const auto& img = data.train.front().image;
  return train(cfg, std::make_unique<RetouchDetector>(model_config_for(cfg, img.height, img.width)),
               data, options);
}

TrainResult train(const TrainConfig& cfg, std::unique_ptr<RetouchDetector> model,
                  const Dataset& data, const TrainOptions& options) {
  cfg.validate();
  if (data.train.empty()) throw DataError("training split is empty");
  if (data.val.empty()) throw DataError("validation split is empty");

  Adam opt(AdamOptions{cfg.beta1, cfg.beta2, 1e-8});
  opt.add_group(model->params().group(ParamGroup::kConvolutional), cfg.lr_cnn);
  opt.add_group(model->params().group(ParamGroup::kTransformer), cfg.lr_transformer);

  std::ofstream log_out;
  if (options.run_log) {
    log_out.open(*options.run_log);
    if (!log_out) throw ArgumentError("cannot write run log " + options.run_log->string());
  }

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  auto best = model->params().snapshot();
  std::size_t stale = 0;
  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle(cfg.seed, key("shuffle", epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    const std::string aug_label = key("augment/train", epoch);
    double total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_no) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(n, start + cfg.batch_size) - start);
      const auto images = augmented_batch(data.train, idx, cfg.seed, aug_label, options.augment);
      std::vector<Annotation> truth;
      for (auto i : idx) truth.push_back(data.train[i].truth);
      RngStream gumbel(cfg.seed, key(key("gumbel", epoch), batch_no));
      const auto out = model->forward(images_to_tensor(images), AssignMode::kTrainStochasticHard, &gumbel);
      const Tensor loss = level_loss(out, truth);
      loss.backward();
      opt.step();
      opt.zero_grad();
      total += loss.item() * static_cast<double>(idx.size());
    }

    EpochLog e;
    e.epoch = epoch;
    e.train_loss = total / static_cast<double>(n);
    const auto val = predict_split(*model, data.val, cfg.seed, "augment/val", cfg.batch_size, options.augment);
    e.val_loss = val.loss;
    e.val_metrics = aggregate(val.records);
    e.improved = e.val_loss < result.best_val_loss;
    if (e.improved) {
      result.best_val_loss = e.val_loss;
      result.best_epoch = epoch;
      best = model->params().snapshot();
      stale = 0;
      if (options.checkpoint) {
        save_checkpoint(*options.checkpoint, *model,
                        {{"train_config", config_to_json(cfg)}, {"epoch", epoch}, {"val_loss", e.val_loss}});
      }
    } else {
      ++stale;
    }
    result.log.push_back(e);
    if (log_out) log_out << epoch_log_to_json(e).dump() << "\n" << std::flush;
    if (options.on_epoch) options.on_epoch(e);
    if (stale >= cfg.patience) break;
  }
  model->params().restore(best);
  result.model = std::move(model);
  return result;
}

double EvaluationResult::tp_spread() const {
  double lo = 1.0, hi = 0.0;
  for (const auto& t : trials) {
    const double v = t.sum.tp.value.value_or(0.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return trials.empty() ? 0.0 : hi - lo;
}

EvaluationResult evaluate(const RetouchDetector& model, std::span<const Sample> samples,
                          std::size_t trials, std::uint64_t seed, std::size_t batch_size,
                          const AugmentConfig& augment) {
  if (trials == 0) throw ArgumentError("evaluate: trials must be at least 1");
  if (samples.empty()) throw DataError("evaluate: no samples");
  EvaluationResult r;
  for (std::size_t t = 0; t < trials; ++t) {
    r.predictions.push_back(predict_split(model, samples, seed, key("eval/trial", t), batch_size, augment));
    r.trials.push_back(aggregate(r.predictions.back().records));
  }
  r.averaged = average_trials(r.trials);
  return r;
}

json evaluation_to_json(const EvaluationResult& r) {
  json j;
  j["averaged"] = report_to_json(r.averaged);
  j["trials"] = json::array();
  for (std::size_t t = 0; t < r.trials.size(); ++t) {
    json tj = report_to_json(r.trials[t]);
    tj["loss"] = r.predictions[t].loss;
    j["trials"].push_back(tj);
  }
  j["tp_spread"] = r.tp_spread();
  return j;
}

}  // namespace mamkit
