// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mamkit/labels.hpp"

namespace mamkit {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ArgumentError("batch_size must be positive");
  if (lr_cnn < 0 || lr_transformer < 0) throw ArgumentError("learning rates must be non-negative");
  if (epochs == 0) throw ArgumentError("epochs must be positive");
  ClusterConfig c;
  c.rates = rates;
  c.temperature = temperature;
  c.validate();
  if (model_width == 0 || heads == 0 || model_width % heads != 0) {
    throw ArgumentError("model_width must be a positive multiple of heads");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{"batch_size", "lr_cnn",      "lr_transformer",
                                             "epochs",     "patience",    "rates",
                                             "temperature", "model_width", "depth",
                                             "heads",      "seed"};
  return keys;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const std::string t = trim(text);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) {
    throw ArgumentError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return v;
}

double parse_fraction(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) return parse_number<double>("rates", text);
  const double num = parse_number<double>("rates", text.substr(0, slash));
  const double den = parse_number<double>("rates", text.substr(slash + 1));
  if (den == 0) throw ArgumentError("config key 'rates': zero denominator in '" + text + "'");
  return num / den;
}

}  // namespace

std::array<double, kNumStages> parse_rates(const std::string& text) {
  std::array<double, kNumStages> r{};
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == kNumStages) throw ArgumentError("rates: expected four entries, got more");
    r[i++] = parse_fraction(trim(part));
  }
  if (i != kNumStages) throw ArgumentError("rates: expected four entries, got " + std::to_string(i));
  return r;
}

void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "lr_cnn") cfg.lr_cnn = parse_number<double>(key, value);
  else if (key == "lr_transformer") cfg.lr_transformer = parse_number<double>(key, value);
  else if (key == "epochs") cfg.epochs = parse_number<std::size_t>(key, value);
  else if (key == "patience") cfg.patience = parse_number<std::size_t>(key, value);
  else if (key == "rates") cfg.rates = parse_rates(value);
  else if (key == "temperature") cfg.temperature = parse_number<double>(key, value);
  else if (key == "model_width") cfg.model_width = parse_number<std::size_t>(key, value);
  else if (key == "depth") cfg.depth = parse_number<std::size_t>(key, value);
  else if (key == "heads") cfg.heads = parse_number<std::size_t>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else throw ArgumentError("unknown config key '" + key + "'");
}

void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError(origin + ":" + std::to_string(n) + ": expected key = value");
    }
    try {
      apply_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ArgumentError& e) {
      throw ArgumentError(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

TrainConfig resolve_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig cfg;
  if (file) apply_config_file(cfg, *file);
  for (const auto& [k, v] : overrides) apply_config_value(cfg, k, v);
  if (const char* env = std::getenv("MAMKIT_SEED"); env && *env) {
    try {
      apply_config_value(cfg, "seed", env);
    } catch (const ArgumentError& e) {
      throw ArgumentError(std::string("MAMKIT_SEED: ") + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string config_to_text(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "batch_size = " << cfg.batch_size << "\n"
      << "lr_cnn = " << cfg.lr_cnn << "\n"
      << "lr_transformer = " << cfg.lr_transformer << "\n"
      << "epochs = " << cfg.epochs << "\n"
      << "patience = " << cfg.patience << "\n"
      << "rates = " << cfg.rates[0] << "," << cfg.rates[1] << "," << cfg.rates[2] << ","
      << cfg.rates[3] << "\n"
      << "temperature = " << cfg.temperature << "\n"
      << "model_width = " << cfg.model_width << "\n"
      << "depth = " << cfg.depth << "\n"
      << "heads = " << cfg.heads << "\n"
      << "seed = " << cfg.seed << "\n";
  return out.str();
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size}, {"lr_cnn", cfg.lr_cnn},
          {"lr_transformer", cfg.lr_transformer}, {"beta1", cfg.beta1},
          {"beta2", cfg.beta2}, {"epochs", cfg.epochs},
          {"patience", cfg.patience}, {"rates", cfg.rates},
          {"temperature", cfg.temperature}, {"model_width", cfg.model_width},
          {"depth", cfg.depth}, {"heads", cfg.heads},
          {"seed", cfg.seed}};
}

}  // namespace mamkit
