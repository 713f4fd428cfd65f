// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "finetype/checkpoint.hpp"
#include "finetype/config.hpp"
#include "finetype/dataset.hpp"
#include "finetype/e2e_model.hpp"
#include "finetype/embedding.hpp"
#include "finetype/mention_model.hpp"
#include "finetype/metrics.hpp"

namespace finetype {

enum class EvalMode { entity_level, all_token, e2e_as_mention };

std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& s);

/// A trained model of either kind with its label vocabulary and config.
class TypingModel {
 public:
  TypingModel(TrainConfig config, LabelVocab vocab, std::size_t embed_dim, Rng& init_rng);
  static TypingModel load(const std::filesystem::path& path);

  ModelKind kind() const noexcept { return config_.model; }
  const TrainConfig& config() const noexcept { return config_; }
  const LabelVocab& vocab() const noexcept { return vocab_; }
  std::size_t embed_dim() const noexcept { return embed_dim_; }

  MentionModel& mention() { return *mention_; }
  const MentionModel& mention() const { return *mention_; }
  E2EModel& e2e() { return *e2e_; }
  const E2EModel& e2e() const { return *e2e_; }
  ParamStore& params();
  const ParamStore& params() const;

  std::map<std::string, std::string> metadata() const;
  void save(const std::filesystem::path& path) const;
  std::string encode() const;

 private:
  TypingModel() = default;
  TrainConfig config_;
  LabelVocab vocab_;
  std::size_t embed_dim_ = 0;
  std::unique_ptr<MentionModel> mention_;
  std::unique_ptr<E2EModel> e2e_;
};

/// One line of a mention-model prediction file.
struct MentionPredictionRecord {
  std::string doc_id;
  std::size_t mention_index = 0;
  LabelSet labels;
  std::vector<double> scores;
};

/// One line of an e2e prediction file.
struct TokenPredictionRecord {
  std::string doc_id;
  std::size_t token_index = 0;
  LabelSet labels;
  std::vector<double> scores;
};

/// Context triples for every mention of corpus, in extraction order.
std::vector<ContextTriple> mention_triples(const Corpus& corpus, const EmbeddingProvider& provider,
                                           std::size_t window);

std::vector<MentionPredictionRecord> predict_mentions(const MentionModel& model, const Corpus& corpus,
                                                      const EmbeddingProvider& provider,
                                                      std::size_t window);

/// Embedded sentence truncated to max_seq_len wordpieces.
struct E2EExample {
  EmbeddedSequence embedded;
  std::size_t words = 0;
  std::size_t truncated_mentions = 0;
};

E2EExample prepare_e2e_example(const Document& doc, const EmbeddingProvider& provider,
                               std::size_t max_seq_len);

/// Word-level predictions for every document. Words whose pieces were all
/// truncated get zero scores and no labels.
std::vector<TokenPredictionRecord> predict_tokens(const E2EModel& model, const Corpus& corpus,
                                                  const EmbeddingProvider& provider,
                                                  std::size_t max_seq_len);

void write_predictions(const std::filesystem::path& path,
                       const std::vector<MentionPredictionRecord>& records, const LabelVocab& vocab);
void write_predictions(const std::filesystem::path& path,
                       const std::vector<TokenPredictionRecord>& records, const LabelVocab& vocab);

/// Mention model, one unit per gold mention.
MetricReport evaluate_mention_predictions(const std::vector<MentionPredictionRecord>& preds,
                                          const Corpus& corpus, const LabelVocab& vocab);
std::vector<DocTokenPredictions> group_token_predictions(
    const std::vector<TokenPredictionRecord>& records, const Corpus& corpus);

/// Runs the model over corpus and scores it. Throws UsageError when the mode
/// does not fit the model kind (entity_level needs a mention model; the
/// other two need e2e).
MetricReport evaluate(const TypingModel& model, const Corpus& corpus,
                      const EmbeddingProvider& provider, EvalMode mode);

/// Scores a prediction file written by write_predictions.
MetricReport evaluate_prediction_file(const std::filesystem::path& path, const Corpus& corpus,
                                      const LabelVocab& vocab, EvalMode mode);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimizer steps so far
  double train_loss = 0.0;
  MetricReport dev;
};

struct TrainRunRecord {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::filesystem::path checkpoint;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::size_t oov_labels = 0;
  std::size_t truncated_mentions = 0;
};

struct TrainOptions {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Stop after this many optimizer steps (0 = no limit).
  std::size_t max_steps = 0;
};

/// Trains config.model on train, selecting the epoch with the best dev
/// micro-F1 (earliest on ties) and saving it to checkpoint. Throws
/// NumericError on divergence; the best checkpoint so far stays on disk.
TrainRunRecord train(const TrainConfig& config, const Corpus& train_corpus, const Corpus& dev_corpus,
                     const EmbeddingProvider& provider, const std::filesystem::path& checkpoint,
                     const TrainOptions& options = {});

}  // namespace finetype
