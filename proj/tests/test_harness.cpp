// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mamkit/checkpoint.hpp"
#include "mamkit/config.hpp"
#include "mamkit/synth.hpp"
#include "mamkit/train.hpp"

using namespace mamkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Dataset to_dataset(const SyntheticSet& set) {
  Dataset d;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    const auto& r = set.records[i];
    d.split(*r.split).push_back({r.id, r.annotation, set.images[i]});
  }
  return d;
}

Dataset tiny_data(std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.size = 32;
  return to_dataset(synth_generate(48, seed, spec, SplitSizes{32, 8, 8}));
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.model_width = 16;
  c.depth = 1;
  c.heads = 2;
  c.epochs = 2;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("config keys, parsing, and errors") {
  const std::vector<std::string> expected{"batch_size", "lr_cnn", "lr_transformer", "epochs", "patience", "rates",
                                          "temperature", "model_width", "depth", "heads", "seed"};
  CHECK(config_keys() == expected);

  const auto r = parse_rates("1/64, 1/16,0.25,1");
  CHECK(r[0] == 1.0 / 64);
  CHECK(r[1] == 1.0 / 16);
  CHECK(r[2] == 0.25);
  CHECK(r[3] == 1.0);
  CHECK_THROWS_AS(parse_rates("1,2"), ArgumentError);

  TrainConfig c;
  CHECK_THROWS_AS(apply_config_value(c, "learning_rate", "1"), ArgumentError);
  CHECK_THROWS_AS(apply_config_value(c, "batch_size", "eight"), ArgumentError);
  apply_config_text(c, "# comment\nbatch_size = 4\n\nlr_cnn=0.001\n", "inline");
  CHECK(c.batch_size == 4);
  CHECK(c.lr_cnn == 0.001);

  TrainConfig round;
  apply_config_text(round, config_to_text(c), "round");
  CHECK(config_to_json(round) == config_to_json(c));
}

TEST_CASE("flags override the file and the environment overrides both") {
  TempDir dir("mamkit_cfg_test");
  const auto file = dir.path / "train.cfg";
  std::ofstream(file) << "seed = 1\nepochs = 5\nheads = 8\n";

  unsetenv("MAMKIT_SEED");
  auto c = resolve_config(file, {{"epochs", "7"}});
  CHECK(c.seed == 1);
  CHECK(c.epochs == 7);
  CHECK(c.heads == 8);

  c = resolve_config(file, {{"seed", "2"}});
  CHECK(c.seed == 2);

  setenv("MAMKIT_SEED", "3", 1);
  c = resolve_config(file, {{"seed", "2"}});
  CHECK(c.seed == 3);
  unsetenv("MAMKIT_SEED");

  CHECK_THROWS_AS(resolve_config(dir.path / "missing.cfg", {}), ArgumentError);
  CHECK_THROWS_AS(resolve_config(std::nullopt, {{"batch_size", "0"}}), ArgumentError);
}

TEST_CASE("initial loss is near four times ln 4") {
  TrainConfig cfg;  // default model
  SyntheticSpec spec;
  const auto set = synth_generate(32, 5, spec);
  RetouchDetector model(model_config_for(cfg, 64, 64));
  std::vector<Image> images(set.images.begin(), set.images.end());
  std::vector<Annotation> truth;
  for (const auto& r : set.records) truth.push_back(r.annotation);
  RngStream g(1, "gumbel");
  const auto out = model.forward(images_to_tensor(images), AssignMode::kTrainStochasticHard, &g);
  const double loss = level_loss(out, truth).item();
  CHECK(std::abs(loss - 4.0 * std::log(4.0)) < 0.5);
}

TEST_CASE("zero learning rates leave every parameter unchanged") {
  auto cfg = tiny_config();
  cfg.lr_cnn = 0.0;
  cfg.lr_transformer = 0.0;
  const auto data = tiny_data();
  const auto result = train(cfg, data);
  RetouchDetector fresh(model_config_for(cfg, 32, 32));
  const auto a = result.model->params().snapshot();
  const auto b = fresh.params().snapshot();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("empty splits are data errors") {
  auto data = tiny_data();
  auto no_val = data;
  no_val.val.clear();
  CHECK_THROWS_AS(train(tiny_config(), no_val), DataError);
  auto no_train = data;
  no_train.train.clear();
  CHECK_THROWS_AS(train(tiny_config(), no_train), DataError);
}

TEST_CASE("run log, early exit, and checkpoint") {
  TempDir dir("mamkit_train_test");
  auto cfg = tiny_config();
  cfg.epochs = 4;
  cfg.patience = 1;
  TrainOptions opts;
  opts.run_log = dir.path / "log.jsonl";
  opts.checkpoint = dir.path / "best.ckpt";
  const auto data = tiny_data();
  const auto result = train(cfg, data, opts);

  std::ifstream in(*opts.run_log);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"epoch", "train_loss", "val_loss", "val_metrics"}) CHECK(j.contains(k));
    CHECK(j["epoch"] == ++lines);
  }
  CHECK(lines == result.log.size());

  for (const auto& e : result.log) CHECK(result.best_val_loss <= e.val_loss);
  const auto again = predict_split(*result.model, data.val, cfg.seed, "augment/val", cfg.batch_size);
  CHECK(again.loss == result.best_val_loss);

  const auto loaded = load_checkpoint(*opts.checkpoint);
  const auto from_disk = predict_split(*loaded, data.val, cfg.seed, "augment/val", cfg.batch_size);
  CHECK(from_disk.loss == result.best_val_loss);
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("mamkit_ckpt_test");
  RetouchDetector model(model_config_for(tiny_config(), 32, 32));
  for (const auto& e : model.params().entries()) {
    RngStream r(4, e.name);
    for (auto& v : Tensor(e.tensor).mutable_values()) v = r.normal();
  }
  save_checkpoint(dir.path / "m.ckpt", model, {{"note", "x"}});
  nlohmann::json extra;
  const auto back = load_checkpoint(dir.path / "m.ckpt", &extra);
  CHECK(extra["note"] == "x");
  CHECK(back->params().snapshot() == model.params().snapshot());
  CHECK(model_config_to_json(back->config()) == model_config_to_json(model.config()));

  const auto data = tiny_data();
  const auto a = evaluate(model, data.test, 2, 5);
  const auto b = evaluate(*back, data.test, 2, 5);
  CHECK(evaluation_to_json(a) == evaluation_to_json(b));

  auto bytes = read_file(dir.path / "m.ckpt");
  bytes.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(bytes), CheckpointError);
  bytes.resize(20);
  CHECK_THROWS_AS(decode_checkpoint(bytes), CheckpointError);
  CHECK_THROWS(load_checkpoint(dir.path / "absent.ckpt"));
}

TEST_CASE("evaluation trials") {
  const auto data = tiny_data();
  RetouchDetector model(model_config_for(tiny_config(), 32, 32));
  AugmentConfig off;
  off.blur_probability = 0.0;
  off.jpeg_probability = 0.0;
  const auto r = evaluate(model, data.test, 5, 1, 8, off);
  REQUIRE(r.trials.size() == 5);
  for (const auto& t : r.trials) CHECK(report_to_json(t) == report_to_json(r.trials[0]));
  CHECK(r.tp_spread() == 0.0);

  const auto p = predict_split(model, data.test, 1, "fixed", 8);
  const auto q = predict_split(model, data.test, 1, "fixed", 8);
  CHECK(p.loss == q.loss);

  CHECK_THROWS_AS(evaluate(model, data.test, 0, 1), ArgumentError);

  // Averaged report equals averaging the per-trial aggregates by hand.
  const auto five = evaluate(model, data.test, 5, 2);
  std::vector<MetricsReport> by_hand;
  for (const auto& pred : five.predictions) by_hand.push_back(aggregate(pred.records));
  CHECK(report_to_json(average_trials(by_hand)) == report_to_json(five.averaged));
}

TEST_CASE("prediction files round trip through the metrics reader") {
  TempDir dir("mamkit_pred_test");
  const auto data = tiny_data();
  RetouchDetector model(model_config_for(tiny_config(), 32, 32));
  const auto p = predict_split(model, data.test, 1, "x", 8);
  {
    std::ofstream out(dir.path / "pred.jsonl");
    for (const auto& r : p.records) out << prediction_to_json(r).dump() << "\n";
  }
  const auto back = read_predictions(dir.path / "pred.jsonl");
  CHECK(report_to_json(aggregate(back)) == report_to_json(aggregate(p.records)));
}

TEST_CASE("dataset loading skips excluded records") {
  TempDir dir("mamkit_data_test");
  SyntheticSpec spec;
  spec.size = 32;
  auto set = synth_generate(20, 6, spec);
  set.records[0].exclusions.insert(CleaningCategory::kFakeFace);
  write_synthetic_set(set, dir.path);
  const auto d = load_dataset(dir.path / "manifest.jsonl");
  CHECK(d.train.size() + d.val.size() + d.test.size() == 19);
  CHECK_THROWS_AS(load_dataset(dir.path / "nope.jsonl"), std::exception);
}
