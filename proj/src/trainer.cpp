// SPDX-License-Identifier: Apache-2.0
#include "finetype/trainer.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <json.hpp>

#include "finetype/context.hpp"
#include "finetype/errors.hpp"

namespace finetype {

using nlohmann::json;

std::string to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::entity_level: return "entity_level";
    case EvalMode::all_token: return "all_token";
    case EvalMode::e2e_as_mention: return "e2e_as_mention";
  }
  return "entity_level";
}

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "entity_level") return EvalMode::entity_level;
  if (s == "all_token") return EvalMode::all_token;
  if (s == "e2e_as_mention") return EvalMode::e2e_as_mention;
  throw UsageError("unknown evaluation mode '" + s + "' (expected entity_level, all_token, e2e_as_mention)");
}

namespace {

// Runs f(i) for i in [0, n) across OpenMP threads. Each call writes only its
// own output slot, so results do not depend on scheduling. The first
// exception caught is rethrown on the calling thread.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(finetype_parallel_for_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

// ---------------------------------------------------------------------------
// TypingModel
// ---------------------------------------------------------------------------

TypingModel::TypingModel(TrainConfig config, LabelVocab vocab, std::size_t embed_dim, Rng& init_rng)
    : config_(std::move(config)), vocab_(std::move(vocab)), embed_dim_(embed_dim) {
  if (vocab_.size() == 0) throw DataError("cannot build a model with an empty label vocabulary");
  if (config_.model == ModelKind::mention) {
    mention_ = std::make_unique<MentionModel>(
        MentionModelDims{embed_dim_, config_.hidden, vocab_.size(), config_.attention}, init_rng);
    mention_->set_dropout(config_.dropout);
  } else {
    e2e_ = std::make_unique<E2EModel>(E2EModelDims{embed_dim_, config_.hidden, vocab_.size()}, init_rng);
    e2e_->set_dropout(config_.dropout);
  }
}

ParamStore& TypingModel::params() { return mention_ ? mention_->params() : e2e_->params(); }
const ParamStore& TypingModel::params() const { return mention_ ? mention_->params() : e2e_->params(); }

std::map<std::string, std::string> TypingModel::metadata() const {
  std::map<std::string, std::string> meta;
  meta["model"] = to_string(config_.model);
  meta["embed_dim"] = std::to_string(embed_dim_);
  meta["labels"] = json(vocab_.labels()).dump();
  meta["adam_steps"] = std::to_string(params().step_count());
  for (const auto& [k, v] : config_.to_pairs()) meta["config." + k] = v;
  return meta;
}

std::string TypingModel::encode() const {
  return encode_checkpoint(params(), metadata(),
                           config_.checkpoint_dtype == "f32" ? StorageType::f32 : StorageType::f64);
}

void TypingModel::save(const std::filesystem::path& path) const {
  save_checkpoint(path, params(), metadata(),
                  config_.checkpoint_dtype == "f32" ? StorageType::f32 : StorageType::f64);
}

TypingModel TypingModel::load(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = ck.meta.find(key);
    if (it == ck.meta.end()) throw DataError("checkpoint " + path.string() + " lacks metadata '" + key + "'");
    return it->second;
  };
  TypingModel m;
  for (const auto& [k, v] : ck.meta) {
    if (k.rfind("config.", 0) == 0) m.config_.set(k.substr(7), v);
  }
  m.config_.model = parse_model_kind(need("model"));
  m.embed_dim_ = std::stoull(need("embed_dim"));
  m.vocab_ = LabelVocab(json::parse(need("labels")).get<std::vector<std::string>>());
  if (auto it = ck.meta.find("adam_steps"); it != ck.meta.end()) {
    ck.params.set_step_count(std::stoull(it->second));
  }
  if (m.config_.model == ModelKind::mention) {
    m.mention_ = std::make_unique<MentionModel>(
        MentionModelDims{m.embed_dim_, m.config_.hidden, m.vocab_.size(), m.config_.attention},
        std::move(ck.params));
    m.mention_->set_dropout(m.config_.dropout);
  } else {
    m.e2e_ = std::make_unique<E2EModel>(E2EModelDims{m.embed_dim_, m.config_.hidden, m.vocab_.size()},
                                        std::move(ck.params));
    m.e2e_->set_dropout(m.config_.dropout);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Mention-model inference
// ---------------------------------------------------------------------------

std::vector<ContextTriple> mention_triples(const Corpus& corpus, const EmbeddingProvider& provider,
                                           std::size_t window) {
  std::vector<std::size_t> first(corpus.size() + 1, 0);
  for (std::size_t i = 0; i < corpus.size(); ++i) first[i + 1] = first[i] + corpus[i].mentions.size();
  std::vector<ContextTriple> out(first.back());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const auto& doc = corpus[i];
    if (doc.mentions.empty()) return;
    const auto emb = provider.embed(doc);
    for (std::size_t m = 0; m < doc.mentions.size(); ++m) {
      out[first[i] + m] =
          build_context_triple(emb.seq, emb.vectors, doc.mentions[m].start, doc.mentions[m].end, window);
    }
  });
  return out;
}

namespace {

constexpr std::size_t kInferenceBatch = 256;

std::vector<MentionPredictionRecord> score_mentions(const MentionModel& model, const Corpus& corpus,
                                                    const std::vector<ContextTriple>& triples) {
  const auto refs = extract_mention_examples(corpus);
  std::vector<MentionPredictionRecord> out(refs.size());
  for (std::size_t lo = 0; lo < refs.size(); lo += kInferenceBatch) {
    const std::size_t hi = std::min(refs.size(), lo + kInferenceBatch);
    const auto batch = MentionBatch::from_triples(std::span(triples).subspan(lo, hi - lo));
    const Tensor scores = model.score(batch);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto row = scores.row(i - lo);
      out[i] = {refs[i].doc->doc_id, refs[i].mention_index, mention_predict(row),
                std::vector<double>(row.begin(), row.end())};
    }
  }
  return out;
}

}  // namespace

std::vector<MentionPredictionRecord> predict_mentions(const MentionModel& model, const Corpus& corpus,
                                                      const EmbeddingProvider& provider,
                                                      std::size_t window) {
  return score_mentions(model, corpus, mention_triples(corpus, provider, window));
}

MetricReport evaluate_mention_predictions(const std::vector<MentionPredictionRecord>& preds,
                                          const Corpus& corpus, const LabelVocab& vocab) {
  std::unordered_map<std::string, std::unordered_map<std::size_t, const MentionPredictionRecord*>> by_doc;
  for (const auto& p : preds) by_doc[p.doc_id][p.mention_index] = &p;
  GoldIndexer gold_index(vocab);
  std::vector<EvalUnit> units;
  for (const auto& doc : corpus) {
    for (std::size_t m = 0; m < doc.mentions.size(); ++m) {
      auto d = by_doc.find(doc.doc_id);
      if (d == by_doc.end() || !d->second.count(m)) {
        throw DataError("no prediction for mention " + std::to_string(m) + " of '" + doc.doc_id + "'");
      }
      std::vector<std::size_t> gold;
      for (const auto& l : doc.mentions[m].labels) gold.push_back(gold_index.index(l));
      units.push_back({make_label_set(std::move(gold)), make_label_set(d->second.at(m)->labels), doc.doc_id, m});
    }
  }
  return evaluate_units(units);
}

// ---------------------------------------------------------------------------
// E2E inference
// ---------------------------------------------------------------------------

E2EExample prepare_e2e_example(const Document& doc, const EmbeddingProvider& provider,
                               std::size_t max_seq_len) {
  E2EExample ex{provider.embed(doc), doc.tokens.size(), 0};
  auto& seq = ex.embedded.seq;
  if (seq.size() > max_seq_len) {
    for (const auto& m : doc.mentions) {
      // A mention is lost when its first piece falls past the cut.
      std::size_t first_piece = seq.size();
      for (std::size_t p = 0; p < seq.size(); ++p) {
        if (!seq.is_pad[p] && seq.word_index[p] == m.start) {
          first_piece = p;
          break;
        }
      }
      if (first_piece >= max_seq_len) ++ex.truncated_mentions;
    }
    seq.pieces.resize(max_seq_len);
    seq.word_index.resize(max_seq_len);
    seq.is_pad.resize(max_seq_len);
    const std::size_t d = ex.embedded.vectors.cols();
    std::vector<double> kept(ex.embedded.vectors.ptr(), ex.embedded.vectors.ptr() + max_seq_len * d);
    ex.embedded.vectors = Tensor({max_seq_len, d}, std::move(kept));
  }
  return ex;
}

namespace {

// Word-level scores of one sentence from its wordpiece score rows.
Tensor word_scores_for(const E2EExample& ex, const Tensor& piece_scores) {
  const auto& seq = ex.embedded.seq;
  const std::size_t covered = seq.word_count();
  const Tensor covered_scores = concat_layer(piece_scores, seq.word_index, seq.is_pad, covered);
  if (covered == ex.words) return covered_scores;
  Tensor full({ex.words, piece_scores.cols()});
  std::copy_n(covered_scores.ptr(), covered_scores.numel(), full.ptr());
  return full;
}

std::vector<TokenPredictions> predict_examples(const E2EModel& model,
                                               const std::vector<E2EExample>& examples) {
  std::vector<TokenPredictions> out(examples.size());
  const std::size_t n_labels = model.dims().labels;
  for (std::size_t lo = 0; lo < examples.size(); lo += 32) {
    const std::size_t hi = std::min(examples.size(), lo + 32);
    std::vector<const Tensor*> sentences;
    for (std::size_t i = lo; i < hi; ++i) sentences.push_back(&examples[i].embedded.vectors);
    const E2EBatch batch = E2EBatch::pack(sentences);
    const Tensor scores = model.score(batch);
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t b = i - lo;
      Tensor piece_scores({batch.lengths[b], n_labels});
      for (std::size_t t = 0; t < batch.lengths[b]; ++t) {
        std::copy_n(scores.ptr() + batch.row(t, b) * n_labels, n_labels, piece_scores.ptr() + t * n_labels);
      }
      out[i] = e2e_predict(word_scores_for(examples[i], piece_scores));
    }
  }
  return out;
}

std::vector<E2EExample> prepare_all(const Corpus& corpus, const EmbeddingProvider& provider,
                                    std::size_t max_seq_len) {
  std::vector<E2EExample> out(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) { out[i] = prepare_e2e_example(corpus[i], provider, max_seq_len); });
  return out;
}

std::vector<DocTokenPredictions> to_doc_predictions(const Corpus& corpus,
                                                    const std::vector<TokenPredictions>& preds) {
  std::vector<DocTokenPredictions> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    DocTokenPredictions d{corpus[i].doc_id, {}};
    for (const auto& l : preds[i].word_labels) d.labels.push_back(make_label_set(l));
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::vector<TokenPredictionRecord> predict_tokens(const E2EModel& model, const Corpus& corpus,
                                                  const EmbeddingProvider& provider,
                                                  std::size_t max_seq_len) {
  const auto examples = prepare_all(corpus, provider, max_seq_len);
  const auto preds = predict_examples(model, examples);
  std::vector<TokenPredictionRecord> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t t = 0; t < corpus[i].tokens.size(); ++t) {
      const auto row = preds[i].word_scores.row(t);
      out.push_back({corpus[i].doc_id, t, make_label_set(preds[i].word_labels[t]),
                     std::vector<double>(row.begin(), row.end())});
    }
  }
  return out;
}

std::vector<DocTokenPredictions> group_token_predictions(const std::vector<TokenPredictionRecord>& records,
                                                         const Corpus& corpus) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<DocTokenPredictions> out;
  for (const auto& doc : corpus) {
    slot[doc.doc_id] = out.size();
    out.push_back({doc.doc_id, std::vector<LabelSet>(doc.tokens.size())});
  }
  std::vector<std::vector<bool>> seen;
  for (const auto& d : out) seen.emplace_back(d.labels.size(), false);
  for (const auto& r : records) {
    auto it = slot.find(r.doc_id);
    if (it == slot.end()) continue;
    auto& d = out[it->second];
    if (r.token_index >= d.labels.size()) {
      throw DataError("prediction for token " + std::to_string(r.token_index) + " of '" + r.doc_id +
                      "' is out of range");
    }
    d.labels[r.token_index] = r.labels;
    seen[it->second][r.token_index] = true;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t t = 0; t < seen[i].size(); ++t) {
      if (!seen[i][t]) throw DataError("no prediction for token " + std::to_string(t) + " of '" + out[i].doc_id + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction files
// ---------------------------------------------------------------------------

namespace {

json labels_json(const LabelSet& labels, const LabelVocab& vocab) {
  json arr = json::array();
  for (auto l : labels) arr.push_back(vocab.label(l));
  return arr;
}

LabelSet labels_from_json(const json& arr, const LabelVocab& vocab, const std::string& origin,
                          std::size_t line) {
  std::vector<std::size_t> out;
  for (const auto& l : arr) {
    const auto idx = vocab.find(l.get<std::string>());
    if (!idx) throw ParseError(origin, line, "predicted label '" + l.get<std::string>() + "' is not in the model vocabulary");
    out.push_back(*idx);
  }
  return make_label_set(std::move(out));
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_predictions(const std::filesystem::path& path, const std::vector<MentionPredictionRecord>& records,
                       const LabelVocab& vocab) {
  auto out = open_out(path);
  for (const auto& r : records) {
    out << json{{"doc_id", r.doc_id},
                {"mention_index", r.mention_index},
                {"predicted_labels", labels_json(r.labels, vocab)},
                {"scores", r.scores}}
               .dump()
        << '\n';
  }
}

void write_predictions(const std::filesystem::path& path, const std::vector<TokenPredictionRecord>& records,
                       const LabelVocab& vocab) {
  auto out = open_out(path);
  for (const auto& r : records) {
    out << json{{"doc_id", r.doc_id},
                {"token_index", r.token_index},
                {"predicted_labels", labels_json(r.labels, vocab)},
                {"scores", r.scores}}
               .dump()
        << '\n';
  }
}

MetricReport evaluate_prediction_file(const std::filesystem::path& path, const Corpus& corpus,
                                      const LabelVocab& vocab, EvalMode mode) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prediction file " + path.string());
  std::vector<MentionPredictionRecord> mentions;
  std::vector<TokenPredictionRecord> tokens;
  std::string line;
  std::size_t line_no = 0;
  const std::string origin = path.string();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto labels = labels_from_json(j.at("predicted_labels"), vocab, origin, line_no);
      auto scores = j.at("scores").get<std::vector<double>>();
      if (j.contains("mention_index")) {
        mentions.push_back({j.at("doc_id").get<std::string>(), j.at("mention_index").get<std::size_t>(), labels,
                            std::move(scores)});
      } else {
        tokens.push_back({j.at("doc_id").get<std::string>(), j.at("token_index").get<std::size_t>(), labels,
                          std::move(scores)});
      }
    } catch (const json::exception& e) {
      throw ParseError(origin, line_no, std::string("malformed prediction record: ") + e.what());
    }
  }
  if (mode == EvalMode::entity_level) {
    if (!tokens.empty()) throw UsageError("entity_level evaluation needs mention-model predictions");
    return evaluate_mention_predictions(mentions, corpus, vocab);
  }
  if (!mentions.empty()) throw UsageError(to_string(mode) + " evaluation needs e2e predictions");
  const auto grouped = group_token_predictions(tokens, corpus);
  return mode == EvalMode::all_token ? evaluate_all_tokens(grouped, corpus, vocab)
                                     : evaluate_e2e_as_mention_level(grouped, corpus, vocab);
}

MetricReport evaluate(const TypingModel& model, const Corpus& corpus, const EmbeddingProvider& provider,
                      EvalMode mode) {
  if (provider.dim() != model.embed_dim()) {
    throw ConfigError("embedding dimension " + std::to_string(provider.dim()) + " does not match the model's " +
                      std::to_string(model.embed_dim()));
  }
  if (model.kind() == ModelKind::mention) {
    if (mode != EvalMode::entity_level) {
      throw UsageError("mode " + to_string(mode) + " needs an e2e checkpoint; mention models use entity_level");
    }
    return evaluate_mention_predictions(
        predict_mentions(model.mention(), corpus, provider, model.config().window), corpus, model.vocab());
  }
  if (mode == EvalMode::entity_level) {
    throw UsageError("entity_level needs a mention checkpoint; use all_token or e2e_as_mention for e2e");
  }
  const auto examples = prepare_all(corpus, provider, model.config().max_seq_len);
  const auto grouped = to_doc_predictions(corpus, predict_examples(model.e2e(), examples));
  return mode == EvalMode::all_token ? evaluate_all_tokens(grouped, corpus, model.vocab())
                                     : evaluate_e2e_as_mention_level(grouped, corpus, model.vocab());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

// Distinct streams derived from the run seed.
constexpr std::uint64_t kShuffleStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kDropoutStream = 0xd1b54a32d192ed03ULL;

struct EarlyStopper {
  double best = -1.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;

  /// Returns true when this epoch is the new best.
  bool observe(std::size_t epoch, double score) {
    if (score > best) {
      best = score;
      best_epoch = epoch;
      since_best = 0;
      return true;
    }
    ++since_best;
    return false;
  }
  bool should_stop(std::size_t patience) const { return since_best > 0 && since_best >= patience; }
};

void check_loss(double loss, std::size_t step, const std::filesystem::path& checkpoint) {
  if (!std::isfinite(loss)) {
    throw NumericError("training diverged (loss " + std::to_string(loss) + ") at step " + std::to_string(step) +
                       "; last good checkpoint kept at " + checkpoint.string());
  }
}

}  // namespace

TrainRunRecord train(const TrainConfig& config, const Corpus& train_corpus, const Corpus& dev_corpus,
                     const EmbeddingProvider& provider, const std::filesystem::path& checkpoint,
                     const TrainOptions& options) {
  config.validate();
  if (config.embedding_dim && config.embedding_dim != provider.dim()) {
    throw ConfigError("embedding_dim is " + std::to_string(config.embedding_dim) + " but the provider yields " +
                      std::to_string(provider.dim()));
  }
  if (train_corpus.empty()) throw DataError("training corpus is empty");
  if (dev_corpus.empty()) throw DataError("development corpus is empty");

  TrainRunRecord record;
  record.config = config;
  record.seed = config.seed;
  record.checkpoint = checkpoint;

  LabelVocab vocab = LabelVocab::from_corpus(train_corpus);
  if (vocab.size() == 0) throw DataError("training corpus has no labelled mentions");
  Rng init_rng(config.seed);
  Rng shuffle_rng(config.seed ^ kShuffleStream);
  Rng dropout_rng(config.seed ^ kDropoutStream);
  TypingModel model(config, vocab, provider.dim(), init_rng);
  const AdamConfig adam{config.lr};
  const std::size_t batch_size = config.effective_batch_size();
  const std::size_t n_labels = vocab.size();

  std::size_t steps = 0;
  EarlyStopper stopper;
  bool step_budget_spent = false;

  auto finish_epoch = [&](std::size_t epoch, double loss_sum, std::size_t batches, const MetricReport& dev) {
    EpochRecord rec{epoch, steps, batches ? loss_sum / static_cast<double>(batches) : 0.0, dev};
    record.epochs.push_back(rec);
    if (stopper.observe(epoch, dev.micro.f1)) model.save(checkpoint);
    if (options.on_epoch) options.on_epoch(rec);
  };

  if (config.model == ModelKind::mention) {
    const auto refs = extract_mention_examples(train_corpus);
    if (refs.empty()) throw DataError("training corpus has no mentions");
    const auto triples = mention_triples(train_corpus, provider, config.window);
    const auto dev_triples = mention_triples(dev_corpus, provider, config.window);
    if (dev_triples.empty()) throw DataError("development corpus has no mentions");
    Tensor targets({refs.size(), n_labels});
    OovCounter oov;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      for (const auto& l : refs[i].mention().labels) {
        if (auto idx = vocab.find(l)) targets(i, *idx) = 1.0;
        else oov.add(l);
      }
    }
    record.oov_labels = oov.count;

    std::vector<std::size_t> order(refs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 1; epoch <= config.max_epochs && !step_budget_spent; ++epoch) {
      shuffle_rng.shuffle(order);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
        const std::size_t hi = std::min(order.size(), lo + batch_size);
        std::vector<const ContextTriple*> batch_triples;
        Tensor batch_targets({hi - lo, n_labels});
        for (std::size_t i = lo; i < hi; ++i) {
          batch_triples.push_back(&triples[order[i]]);
          std::copy_n(targets.ptr() + order[i] * n_labels, n_labels, batch_targets.ptr() + (i - lo) * n_labels);
        }
        const double loss = model.mention().train_batch(MentionBatch::from_triples(batch_triples), batch_targets,
                                                        nn::Mode::train, dropout_rng);
        check_loss(loss, steps + 1, checkpoint);
        model.params().adam_step(adam);
        ++steps;
        loss_sum += loss;
        ++batches;
        if (options.max_steps && steps >= options.max_steps) {
          step_budget_spent = true;
          break;
        }
      }
      const auto dev = evaluate_mention_predictions(score_mentions(model.mention(), dev_corpus, dev_triples),
                                                    dev_corpus, vocab);
      finish_epoch(epoch, loss_sum, batches, dev);
      if (stopper.should_stop(config.patience)) break;
    }
  } else {
    const auto examples = prepare_all(train_corpus, provider, config.max_seq_len);
    const auto dev_examples = prepare_all(dev_corpus, provider, config.max_seq_len);
    std::vector<Tensor> targets;
    OovCounter oov;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      record.truncated_mentions += examples[i].truncated_mentions;
      const Tensor word_targets = token_label_matrix(train_corpus[i], vocab, &oov);
      const auto& seq = examples[i].embedded.seq;
      Tensor piece_targets({seq.size(), n_labels});
      for (std::size_t p = 0; p < seq.size(); ++p) {
        if (seq.is_pad[p]) continue;
        std::copy_n(word_targets.ptr() + seq.word_index[p] * n_labels, n_labels, piece_targets.ptr() + p * n_labels);
      }
      targets.push_back(std::move(piece_targets));
    }
    record.oov_labels = oov.count;

    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 1; epoch <= config.max_epochs && !step_budget_spent; ++epoch) {
      shuffle_rng.shuffle(order);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
        const std::size_t hi = std::min(order.size(), lo + batch_size);
        std::vector<const Tensor*> sentences;
        for (std::size_t i = lo; i < hi; ++i) sentences.push_back(&examples[order[i]].embedded.vectors);
        const E2EBatch batch = E2EBatch::pack(sentences);
        Tensor batch_targets({batch.steps() * batch.size(), n_labels});
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const Tensor& t = targets[order[lo + b]];
          for (std::size_t s = 0; s < batch.lengths[b]; ++s) {
            std::copy_n(t.ptr() + s * n_labels, n_labels, batch_targets.ptr() + batch.row(s, b) * n_labels);
          }
        }
        const double loss = model.e2e().train_batch(batch, batch_targets, nn::Mode::train, dropout_rng);
        check_loss(loss, steps + 1, checkpoint);
        model.params().adam_step(adam);
        ++steps;
        loss_sum += loss;
        ++batches;
        if (options.max_steps && steps >= options.max_steps) {
          step_budget_spent = true;
          break;
        }
      }
      const auto grouped = to_doc_predictions(dev_corpus, predict_examples(model.e2e(), dev_examples));
      finish_epoch(epoch, loss_sum, batches, evaluate_all_tokens(grouped, dev_corpus, vocab));
      if (stopper.should_stop(config.patience)) break;
    }
  }
  record.best_epoch = stopper.best_epoch;
  return record;
}

}  // namespace finetype
