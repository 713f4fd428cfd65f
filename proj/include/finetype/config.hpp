// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "finetype/mention_model.hpp"

namespace finetype {

enum class ModelKind { mention, e2e };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

/// Training configuration. Defaults are the published hyperparameters;
/// batch_size == 0 means "the model's default" (100 mention, 10 e2e).
struct TrainConfig {
  ModelKind model = ModelKind::mention;
  AttentionKind attention = AttentionKind::none;
  std::string embedding = "uniform:300";
  double lr = 1e-4;
  std::size_t hidden = 768;
  double dropout = 0.5;
  std::size_t batch_size = 0;
  std::size_t window = 10;
  std::size_t max_seq_len = 100;
  std::uint64_t seed = 1;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  /// Expected embedding dimension; 0 accepts whatever the provider reports.
  std::size_t embedding_dim = 0;
  std::string checkpoint_dtype = "f64";

  std::size_t effective_batch_size() const;

  /// Sets one field from its textual form. Unknown keys and unparsable
  /// values raise ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Every field as key/value text, in a fixed order.
  std::vector<std::pair<std::string, std::string>> to_pairs() const;
  /// Throws ConfigError for out-of-range values.
  void validate() const;
};

/// Reads "key = value" lines ('#' starts a comment) over base.
TrainConfig load_config_file(const std::filesystem::path& path, TrainConfig base = {});
/// Applies FINETYPE_SEED when set.
void apply_env_overrides(TrainConfig& config);
/// The resolved config in the same format load_config_file reads.
std::string format_config(const TrainConfig& config);

}  // namespace finetype
