// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mamkit/augment.hpp"
#include "mamkit/checkpoint.hpp"
#include "mamkit/config.hpp"
#include "mamkit/dataset.hpp"
#include "mamkit/gradcheck_suite.hpp"
#include "mamkit/manifest.hpp"
#include "mamkit/metrics.hpp"
#include "mamkit/synth.hpp"
#include "mamkit/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mamkit;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// --- synth ----------------------------------------------------------------

struct SynthArgs {
  std::size_t n = 2650;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::size_t> sizes;
};

int run_synth(const SynthArgs& a) {
  std::optional<SplitSizes> sizes;
  if (!a.sizes.empty()) {
    if (a.sizes.size() != 3) throw ArgumentError("--sizes takes train,val,test");
    sizes = SplitSizes{a.sizes[0], a.sizes[1], a.sizes[2]};
  }
  const auto set = synth_generate(a.n, a.seed, {}, sizes);
  write_synthetic_set(set, a.out);
  std::cout << "wrote " << set.records.size() << " records to " << a.out << "\n";
  return 0;
}

// --- train / eval ---------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::optional<std::string> config;
  std::map<std::string, std::string> flags;  // filled by per-key options
  std::vector<std::string> sets;             // key=value
  std::string checkpoint = "model.ckpt";
  std::optional<std::string> run_log;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& key : config_keys()) {
    auto it = a.flags.find(key);
    if (it != a.flags.end() && !it->second.empty()) overrides.emplace_back(key, it->second);
  }
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  std::optional<fs::path> config_path;
  if (a.config) config_path = *a.config;
  const TrainConfig cfg = resolve_config(config_path, overrides);

  const Dataset data = load_dataset(fs::path(a.manifest));
  TrainOptions opts;
  opts.checkpoint = a.checkpoint;
  if (a.run_log) opts.run_log = *a.run_log;
  if (!a.quiet) {
    opts.on_epoch = [](const EpochLog& e) {
      const auto& s = e.val_metrics.sum;
      std::fprintf(stderr, "epoch %zu  train %.4f  val %.4f  TP %.4f  TN %.4f  AC %.4f%s\n", e.epoch,
                   e.train_loss, e.val_loss, s.tp.value.value_or(0.0), s.tn.value.value_or(0.0),
                   s.ac.value.value_or(0.0), e.improved ? "  *" : "");
    };
  }
  const auto result = train(cfg, data, opts);
  std::cout << json{{"best_epoch", result.best_epoch},
                    {"best_val_loss", result.best_val_loss},
                    {"epochs_run", result.log.size()},
                    {"checkpoint", a.checkpoint}}
                   .dump()
            << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  std::size_t trials = 5;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

int run_eval(const EvalArgs& a) {
  if (!fs::exists(a.checkpoint)) throw ArgumentError("checkpoint not found: " + a.checkpoint);
  json extra;
  const auto model = load_checkpoint(a.checkpoint, &extra);
  const auto split = parse_split(a.split);
  if (!split) throw ArgumentError("unknown split '" + a.split + "'");

  std::uint64_t seed = a.seed.value_or(0);
  if (!a.seed && extra.contains("train_config")) seed = extra["train_config"].value("seed", std::uint64_t{0});
  if (const char* env = std::getenv("MAMKIT_SEED")) seed = std::stoull(env);

  const Dataset data = load_dataset(fs::path(a.manifest));
  const auto result = evaluate(*model, data.split(*split), a.trials, seed);
  const json j = evaluation_to_json(result);
  if (a.out_dir) {
    fs::create_directories(*a.out_dir);
    const fs::path dir(*a.out_dir);
    write_json(dir / "report.json", j["averaged"]);
    std::ofstream pred(dir / "predictions.jsonl");
    for (std::size_t t = 0; t < result.trials.size(); ++t) {
      write_json(dir / ("trial_" + std::to_string(t) + ".json"), j["trials"][t]);
      for (const auto& r : result.predictions[t].records) {
        json pj = prediction_to_json(r);
        pj["trial"] = t;
        pred << pj.dump() << "\n";
      }
    }
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

// --- metrics --------------------------------------------------------------

int run_metrics(const std::string& pred, std::size_t trials) {
  if (trials == 0) throw ArgumentError("--trials must be at least 1");
  const auto records = read_predictions(pred);

  // Records tagged with "trial" are grouped by it; untagged files are cut
  // into `trials` equal consecutive runs.
  std::vector<std::optional<std::size_t>> tags;
  {
    std::ifstream in(pred);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const json j = json::parse(line);
      tags.push_back(j.contains("trial") ? std::optional<std::size_t>(j["trial"].get<std::size_t>())
                                         : std::nullopt);
    }
  }
  std::map<std::size_t, std::vector<PredictionRecord>> groups;
  const bool tagged = !tags.empty() && std::all_of(tags.begin(), tags.end(), [](auto& t) { return t.has_value(); });
  if (tagged) {
    for (std::size_t i = 0; i < records.size(); ++i) groups[*tags[i]].push_back(records[i]);
  } else {
    if (records.size() % trials != 0) {
      throw ArgumentError(std::to_string(records.size()) + " predictions do not divide into " +
                          std::to_string(trials) + " trials");
    }
    const std::size_t per = records.size() / trials;
    for (std::size_t i = 0; i < records.size(); ++i) groups[i / per].push_back(records[i]);
  }
  std::vector<MetricsReport> reports;
  for (const auto& [t, recs] : groups) reports.push_back(aggregate(recs));
  json j = report_to_json(reports.size() == 1 ? reports.front() : average_trials(reports));
  if (reports.size() > 1) {
    j["trials"] = json::array();
    for (const auto& r : reports) j["trials"].push_back(report_to_json(r));
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

// --- manifest -------------------------------------------------------------

int run_manifest_validate(const std::string& file) {
  const auto report = validate_manifest_file(file);
  for (const auto& d : report.diagnostics) {
    std::cerr << file << ":" << d.line << ": " << d.message << "\n";
  }
  std::cout << json{{"lines", report.lines}, {"records", report.records.size()},
                    {"errors", report.diagnostics.size()}, {"ok", report.ok()}}
                   .dump()
            << "\n";
  return report.ok() ? 0 : kExitFailure;
}

int run_manifest_split(const std::string& file, std::uint64_t seed, const std::optional<std::string>& out) {
  auto records = read_manifest_file(file);
  assign_splits(records, seed);
  if (out) {
    write_manifest_file(*out, records);
  } else {
    write_manifest(std::cout, records);
  }
  return 0;
}

int run_manifest_stats(const std::string& file, const std::optional<std::string>& images) {
  const auto records = read_manifest_file(file);
  std::optional<fs::path> root;
  if (images) root = *images;
  std::cout << stats_to_json(manifest_stats(records, root)).dump(2) << "\n";
  return 0;
}

// --- augment --------------------------------------------------------------

int run_augment(const std::string& in_dir, const std::string& out_dir, std::uint64_t seed) {
  if (!fs::is_directory(in_dir)) throw ArgumentError("not a directory: " + in_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(out_dir);
  std::ofstream log(fs::path(out_dir) / "augment.jsonl");
  if (!log) throw ArgumentError("cannot write into " + out_dir);
  for (const auto& f : files) {
    const auto name = f.stem().string();
    RngStream rng(seed, "augment/" + name);
    const auto result = lossy_roundtrip(read_image(f), rng);
    const fs::path target = fs::path(out_dir) / (name + ".png");
    write_png(target, result.image);
    json j = augment_record_to_json(result.record);
    j["file"] = target.filename().string();
    log << j.dump() << "\n";
  }
  std::cout << "augmented " << files.size() << " images\n";
  return 0;
}

// --- gradcheck ------------------------------------------------------------

int run_gradcheck(bool as_json) {
  const auto report = gradcheck_all();
  if (as_json) {
    std::cout << gradcheck_report_to_json(report).dump(2) << "\n";
  } else {
    for (const auto& e : report.entries) std::cout << format_gradcheck_entry(e) << "\n";
    std::cout << (report.passed() ? "all checks passed" : "FAILED") << " in " << report.seconds << " s\n";
  }
  return report.passed() ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mamkit: multi-granularity retouching detection toolkit"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "synthetic four-factor data");
  synth->require_subcommand(1);
  SynthArgs synth_args;
  auto* synth_gen = synth->add_subcommand("generate", "render faces and write a manifest");
  synth_gen->add_option("-n,--count", synth_args.n, "number of images")->check(CLI::PositiveNumber);
  synth_gen->add_option("--seed", synth_args.seed);
  synth_gen->add_option("--out", synth_args.out, "output directory")->required();
  synth_gen->add_option("--sizes", synth_args.sizes, "explicit train val test counts")->delimiter(',');

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a detector");
  train_cmd->add_option("--manifest", train_args.manifest)->required();
  train_cmd->add_option("--config", train_args.config, "key = value config file");
  for (const auto& key : config_keys()) {
    train_cmd->add_option("--" + dashed(key), train_args.flags[key], "overrides " + key);
  }
  train_cmd->add_option("--set", train_args.sets, "key=value override");
  train_cmd->add_option("--checkpoint", train_args.checkpoint, "best-validation checkpoint path");
  train_cmd->add_option("--run-log", train_args.run_log, "per-epoch JSON lines");
  train_cmd->add_flag("-q,--quiet", train_args.quiet);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "multi-trial evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--manifest", eval_args.manifest)->required();
  eval_cmd->add_option("--split", eval_args.split);
  eval_cmd->add_option("--trials", eval_args.trials);
  eval_cmd->add_option("--seed", eval_args.seed);
  eval_cmd->add_option("--out", eval_args.out_dir, "directory for averaged and per-trial reports");

  auto* metrics = app.add_subcommand("metrics", "evaluation indicators");
  metrics->require_subcommand(1);
  std::string pred_file;
  std::size_t metric_trials = 1;
  auto* metrics_eval = metrics->add_subcommand("eval", "indicators from a prediction file");
  metrics_eval->add_option("--pred", pred_file)->required();
  metrics_eval->add_option("--trials", metric_trials);

  auto* manifest = app.add_subcommand("manifest", "dataset manifest tools");
  manifest->require_subcommand(1);
  std::string manifest_file;
  std::uint64_t split_seed = 0;
  std::optional<std::string> split_out, stats_images;
  auto* m_validate = manifest->add_subcommand("validate");
  m_validate->add_option("file", manifest_file)->required();
  auto* m_split = manifest->add_subcommand("split");
  m_split->add_option("file", manifest_file)->required();
  m_split->add_option("--seed", split_seed)->required();
  m_split->add_option("--out", split_out);
  auto* m_stats = manifest->add_subcommand("stats");
  m_stats->add_option("file", manifest_file)->required();
  m_stats->add_option("--images", stats_images, "image root for PSNR averages");

  std::string aug_in, aug_out;
  std::uint64_t aug_seed = 0;
  auto* augment = app.add_subcommand("augment", "blur and JPEG re-encoding");
  augment->add_option("--in", aug_in)->required();
  augment->add_option("--out", aug_out)->required();
  augment->add_option("--seed", aug_seed)->required();

  bool gc_json = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_flag("--json", gc_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth_gen) return run_synth(synth_args);
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*metrics_eval) return run_metrics(pred_file, metric_trials);
    if (*m_validate) return run_manifest_validate(manifest_file);
    if (*m_split) return run_manifest_split(manifest_file, split_seed, split_out);
    if (*m_stats) return run_manifest_stats(manifest_file, stats_images);
    if (*augment) return run_augment(aug_in, aug_out, aug_seed);
    if (*gradcheck) return run_gradcheck(gc_json);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
