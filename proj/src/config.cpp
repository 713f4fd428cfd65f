// SPDX-License-Identifier: Apache-2.0
#include "finetype/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "finetype/errors.hpp"

namespace finetype {

std::string to_string(ModelKind kind) { return kind == ModelKind::mention ? "mention" : "e2e"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "mention") return ModelKind::mention;
  if (s == "e2e") return ModelKind::e2e;
  throw ConfigError("unknown model '" + s + "' (expected mention or e2e)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::size_t TrainConfig::effective_batch_size() const {
  if (batch_size) return batch_size;
  return model == ModelKind::mention ? 100 : 10;
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "model") model = parse_model_kind(v);
  else if (key == "attention") attention = parse_attention(v);
  else if (key == "embedding") embedding = v;
  else if (key == "lr") lr = parse_double(key, v);
  else if (key == "hidden") hidden = parse_unsigned<std::size_t>(key, v);
  else if (key == "dropout") dropout = parse_double(key, v);
  else if (key == "batch_size") batch_size = parse_unsigned<std::size_t>(key, v);
  else if (key == "window" || key == "window_W") window = parse_unsigned<std::size_t>(key, v);
  else if (key == "max_seq_len") max_seq_len = parse_unsigned<std::size_t>(key, v);
  else if (key == "seed") seed = parse_unsigned<std::uint64_t>(key, v);
  else if (key == "max_epochs") max_epochs = parse_unsigned<std::size_t>(key, v);
  else if (key == "patience") patience = parse_unsigned<std::size_t>(key, v);
  else if (key == "embedding_dim") embedding_dim = parse_unsigned<std::size_t>(key, v);
  else if (key == "checkpoint_dtype") {
    if (v != "f64" && v != "f32") throw ConfigError("checkpoint_dtype must be f64 or f32");
    checkpoint_dtype = v;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_pairs() const {
  return {
      {"model", to_string(model)},
      {"attention", to_string(attention)},
      {"embedding", embedding},
      {"lr", format_double(lr)},
      {"hidden", std::to_string(hidden)},
      {"dropout", format_double(dropout)},
      {"batch_size", std::to_string(effective_batch_size())},
      {"window", std::to_string(window)},
      {"max_seq_len", std::to_string(max_seq_len)},
      {"seed", std::to_string(seed)},
      {"max_epochs", std::to_string(max_epochs)},
      {"patience", std::to_string(patience)},
      {"embedding_dim", std::to_string(embedding_dim)},
      {"checkpoint_dtype", checkpoint_dtype},
  };
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (hidden == 0) throw ConfigError("hidden must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (window == 0) throw ConfigError("window must be at least 1");
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be at least 1");
  if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
}

TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

void apply_env_overrides(TrainConfig& config) {
  if (const char* s = std::getenv("FINETYPE_SEED"); s && *s) {
    config.seed = parse_unsigned<std::uint64_t>("FINETYPE_SEED", trim(s));
  }
}

std::string format_config(const TrainConfig& config) {
  std::ostringstream os;
  for (const auto& [k, v] : config.to_pairs()) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace finetype
