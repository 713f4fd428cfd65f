// SPDX-License-Identifier: Apache-2.0
// finetype: train, evaluate and inspect fine-grained entity typing models.
//
// Exit status: 0 ok, 1 usage or configuration error, 2 data error,
// 3 gradient check failure.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "finetype/config.hpp"
#include "finetype/dataset.hpp"
#include "finetype/errors.hpp"
#include "finetype/gradcheck_suite.hpp"
#include "finetype/kernels.hpp"
#include "finetype/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace finetype;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitGradcheck = 3;

// Training knobs that can be given as flags. Each overrides the config file
// only when present on the command line.
struct ConfigFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void add(CLI::App* app, const std::string& key, const std::string& flag, const std::string& help) {
    options[key] = app->add_option(flag, values[key], help);
  }
  void apply(TrainConfig& c, bool include_seed) const {
    for (const auto& [key, opt] : options) {
      if (key == "seed" && !include_seed) continue;
      if (opt->count()) c.set(key, values.at(key));
    }
  }
};

void print_resolved(const std::string& title, const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::cout << "# resolved " << title << "\n";
  for (const auto& [k, v] : pairs) std::cout << k << " = " << v << "\n";
  std::cout << std::flush;
}

Corpus load_required(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError("--" + what + " is required");
  LoadReport rep;
  Corpus c = load_corpus(path, &rep);
  if (!rep.overlapping_docs.empty()) {
    std::cerr << "note: " << rep.overlapping_docs.size() << " document(s) in " << path
              << " have overlapping mentions\n";
  }
  return c;
}

std::unique_ptr<EmbeddingProvider> provider_for(const std::string& spec, const TrainConfig& c) {
  return make_provider(spec, c.embedding_dim ? c.embedding_dim : 300);
}

EvalMode default_mode(const TypingModel& m) {
  return m.kind() == ModelKind::mention ? EvalMode::entity_level : EvalMode::all_token;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained entity typing: mention-level and end-to-end models"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads for the parallel kernels (0 = runtime default)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and save the best checkpoint");
  std::string config_path, corpus_path, dev_path, checkpoint_path = "model.ckpt", out_path;
  std::size_t max_steps = 0;
  ConfigFlags flags;
  train_cmd->add_option("--config", config_path, "key = value config file");
  train_cmd->add_option("--corpus", corpus_path, "training corpus (JSON lines)");
  train_cmd->add_option("--dev", dev_path, "development corpus; without it the corpus is split 80/10/10");
  train_cmd->add_option("--checkpoint", checkpoint_path, "where to save the best checkpoint")->capture_default_str();
  train_cmd->add_option("--out", out_path, "write the run record (JSON) here");
  train_cmd->add_option("--max-steps", max_steps, "stop after this many optimizer steps");
  flags.add(train_cmd, "model", "--model", "mention | e2e");
  flags.add(train_cmd, "attention", "--attention", "none | scalar | dynamic");
  flags.add(train_cmd, "embedding", "--embedding", "uniform[:dim[:vocab]] | vectors:PATH | contextual:PATH");
  flags.add(train_cmd, "seed", "--seed", "random seed");
  flags.add(train_cmd, "lr", "--lr", "Adam learning rate");
  flags.add(train_cmd, "hidden", "--hidden", "hidden size");
  flags.add(train_cmd, "dropout", "--dropout", "dropout probability");
  flags.add(train_cmd, "batch_size", "--batch-size", "batch size (0 = model default)");
  flags.add(train_cmd, "window", "--window", "context window size");
  flags.add(train_cmd, "max_seq_len", "--max-seq-len", "wordpiece limit per sentence");
  flags.add(train_cmd, "max_epochs", "--max-epochs", "epoch limit");
  flags.add(train_cmd, "patience", "--patience", "epochs without dev improvement before stopping");
  flags.add(train_cmd, "embedding_dim", "--embedding-dim", "expected embedding dimension");
  flags.add(train_cmd, "checkpoint_dtype", "--checkpoint-dtype", "f64 | f32");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint or a prediction file on a corpus");
  std::string eval_mode, predictions_path, embedding_override;
  eval_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  eval_cmd->add_option("--corpus", corpus_path, "corpus to score")->required();
  eval_cmd->add_option("--mode", eval_mode, "entity_level | all_token | e2e_as_mention");
  eval_cmd->add_option("--predictions", predictions_path, "score this prediction file instead of running the model");
  eval_cmd->add_option("--embedding", embedding_override, "override the checkpoint's embedding spec");
  eval_cmd->add_option("--out", out_path, "write the report (JSON) here");

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "Write per-mention or per-token predictions");
  pred_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  pred_cmd->add_option("--corpus", corpus_path, "corpus to label")->required();
  pred_cmd->add_option("--out", out_path, "prediction file (JSON lines)")->required();
  pred_cmd->add_option("--embedding", embedding_override, "override the checkpoint's embedding spec");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  std::string gc_model = "mention", gc_attention = "dynamic";
  std::uint64_t gc_seed = 1;
  std::size_t gc_seeds = 1;
  double gc_tol = 1e-4;
  gc_cmd->add_option("--model", gc_model, "mention | e2e | layers")->capture_default_str();
  gc_cmd->add_option("--attention", gc_attention, "attention for the mention model")->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed, "first seed")->capture_default_str();
  gc_cmd->add_option("--seeds", gc_seeds, "number of consecutive seeds")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_tol, "maximum relative error")->capture_default_str();

  // split
  auto* split_cmd = app.add_subcommand("split", "Build a modified train/dev/test split");
  std::string split_kind = "m_ontonotes_like", aux_path, out_dir = ".";
  split_cmd->add_option("--kind", split_kind, "m_ontonotes_like | m_wiki_like")->capture_default_str();
  split_cmd->add_option("--corpus", corpus_path, "source corpus (the original test set for m_wiki_like)")->required();
  split_cmd->add_option("--aux", aux_path, "original training corpus (m_wiki_like)");
  split_cmd->add_option("--out", out_dir, "output directory")->capture_default_str();

  // report
  auto* report_cmd = app.add_subcommand("report", "Corpus statistics");
  report_cmd->add_option("--corpus", corpus_path, "corpus file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (threads > 0) kernels::set_thread_count(threads);

    if (*train_cmd) {
      TrainConfig config;
      if (!config_path.empty()) config = load_config_file(config_path, config);
      flags.apply(config, false);
      apply_env_overrides(config);
      flags.apply(config, true);
      config.validate();
      print_resolved("config", config.to_pairs());

      Corpus train_corpus = load_required(corpus_path, "corpus");
      Corpus dev_corpus;
      if (!dev_path.empty()) {
        dev_corpus = load_required(dev_path, "dev");
      } else {
        auto split = make_modified_split(train_corpus, SplitKind::m_ontonotes_like);
        train_corpus = std::move(split.train);
        dev_corpus = std::move(split.dev);
      }
      const auto provider = provider_for(config.embedding, config);
      TrainOptions opts;
      opts.max_steps = max_steps;
      opts.on_epoch = [](const EpochRecord& r) {
        std::cout << "epoch " << r.epoch << "  steps " << r.steps << "  loss " << r.train_loss << "  dev acc "
                  << r.dev.strict_acc << "  ma-f1 " << r.dev.macro.f1 << "  mi-f1 " << r.dev.micro.f1 << std::endl;
      };
      const auto rec = train(config, train_corpus, dev_corpus, *provider, checkpoint_path, opts);
      std::cout << "best epoch " << rec.best_epoch << " saved to " << checkpoint_path << "\n";
      if (rec.oov_labels) std::cout << "note: " << rec.oov_labels << " gold label(s) outside the vocabulary\n";
      if (rec.truncated_mentions) {
        std::cout << "note: " << rec.truncated_mentions << " mention(s) truncated by max_seq_len\n";
      }
      if (!out_path.empty()) {
        nlohmann::json j;
        j["best_epoch"] = rec.best_epoch;
        j["checkpoint"] = rec.checkpoint.string();
        j["seed"] = rec.seed;
        j["truncated_mentions"] = rec.truncated_mentions;
        j["oov_labels"] = rec.oov_labels;
        for (const auto& [k, v] : rec.config.to_pairs()) j["config"][k] = v;
        for (const auto& e : rec.epochs) {
          j["epochs"].push_back({{"epoch", e.epoch}, {"steps", e.steps}, {"train_loss", e.train_loss},
                                 {"dev", nlohmann::json::parse(report_json(e.dev))}});
        }
        write_text(out_path, j.dump(2));
      }
      return 0;
    }

    if (*eval_cmd || *pred_cmd) {
      const TypingModel model = TypingModel::load(checkpoint_path);
      const std::string spec = embedding_override.empty() ? model.config().embedding : embedding_override;
      auto pairs = model.config().to_pairs();
      pairs.emplace_back("checkpoint", checkpoint_path);
      pairs.emplace_back("embedding_in_use", spec);
      const Corpus corpus = load_required(corpus_path, "corpus");

      if (*pred_cmd) {
        print_resolved("config", pairs);
        const auto provider = provider_for(spec, model.config());
        if (model.kind() == ModelKind::mention) {
          write_predictions(out_path, predict_mentions(model.mention(), corpus, *provider, model.config().window),
                            model.vocab());
        } else {
          write_predictions(out_path, predict_tokens(model.e2e(), corpus, *provider, model.config().max_seq_len),
                            model.vocab());
        }
        std::cout << "predictions written to " << out_path << "\n";
        return 0;
      }

      const EvalMode mode = eval_mode.empty() ? default_mode(model) : parse_eval_mode(eval_mode);
      pairs.emplace_back("mode", to_string(mode));
      if (!predictions_path.empty()) pairs.emplace_back("predictions", predictions_path);
      print_resolved("config", pairs);
      MetricReport report;
      if (!predictions_path.empty()) {
        report = evaluate_prediction_file(predictions_path, corpus, model.vocab(), mode);
      } else {
        const auto provider = provider_for(spec, model.config());
        report = evaluate(model, corpus, *provider, mode);
      }
      print_report_table(std::cout, corpus_path + " (" + to_string(mode) + ")", report);
      if (!out_path.empty()) write_text(out_path, report_json(report));
      return 0;
    }

    if (*gc_cmd) {
      print_resolved("gradcheck", {{"model", gc_model},
                                   {"attention", gc_attention},
                                   {"seed", std::to_string(gc_seed)},
                                   {"seeds", std::to_string(gc_seeds)},
                                   {"tolerance", std::to_string(gc_tol)}});
      GradCheckOptions opts;
      opts.tolerance = gc_tol;
      if (gc_model != "mention" && gc_model != "e2e" && gc_model != "layers") {
        throw UsageError("--model must be mention, e2e or layers");
      }
      const AttentionKind attention = parse_attention(gc_attention);
      bool all_passed = true;
      auto show = [&](const std::string& what, std::uint64_t seed, const GradCheckReport& r) {
        for (const auto& p : r.params) {
          std::cout << what << "  seed " << seed << "  " << p.name << "  max_rel_err " << p.max_relative_error
                    << (p.passed ? "  ok" : "  FAIL") << "\n";
        }
        all_passed = all_passed && r.passed();
      };
      for (std::uint64_t seed = gc_seed; seed < gc_seed + gc_seeds; ++seed) {
        if (gc_model == "mention") show("mention/" + to_string(attention), seed, gradcheck_mention_model(attention, seed, opts));
        else if (gc_model == "e2e") show("e2e", seed, gradcheck_e2e_model(seed, opts));
        else
          for (auto c : all_layer_cases()) show(to_string(c), seed, gradcheck_layer(c, seed, opts));
      }
      std::cout << (all_passed ? "gradcheck passed" : "gradcheck FAILED") << std::endl;
      return all_passed ? 0 : kExitGradcheck;
    }

    if (*split_cmd) {
      print_resolved("split", {{"kind", split_kind}, {"corpus", corpus_path}, {"aux", aux_path}, {"out", out_dir}});
      SplitKind kind;
      if (split_kind == "m_ontonotes_like") kind = SplitKind::m_ontonotes_like;
      else if (split_kind == "m_wiki_like") kind = SplitKind::m_wiki_like;
      else throw UsageError("--kind must be m_ontonotes_like or m_wiki_like");
      const Corpus corpus = load_required(corpus_path, "corpus");
      std::optional<Corpus> aux;
      if (!aux_path.empty()) aux = load_required(aux_path, "aux");
      const auto split = make_modified_split(corpus, kind, aux ? &*aux : nullptr);
      fs::create_directories(out_dir);
      write_corpus(fs::path(out_dir) / "train.jsonl", split.train);
      write_corpus(fs::path(out_dir) / "dev.jsonl", split.dev);
      write_corpus(fs::path(out_dir) / "test.jsonl", split.test);
      std::cout << "train " << split.train.size() << "  dev " << split.dev.size() << "  test " << split.test.size()
                << "\n";
      return 0;
    }

    if (*report_cmd) {
      print_resolved("report", {{"corpus", corpus_path}});
      LoadReport rep;
      const Corpus corpus = load_corpus(corpus_path, &rep);
      const auto s = corpus_stats(corpus);
      std::cout << "documents        " << s.documents << "\n"
                << "mentions         " << s.mentions << "\n"
                << "tokens           " << s.tokens << "\n"
                << "entity tokens    " << s.entity_tokens << "\n"
                << "distinct labels  " << s.distinct_labels << "\n"
                << "overlapping docs " << s.overlapping_docs << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
