// SPDX-License-Identifier: Apache-2.0
#include "finetype/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "finetype/errors.hpp"

namespace finetype {

LabelSet make_label_set(std::vector<std::size_t> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

double harmonic_mean(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

namespace {

void require_units(const std::vector<EvalUnit>& units) {
  if (units.empty()) throw Error("evaluation needs at least one unit");
}

std::size_t intersection_size(const LabelSet& a, const LabelSet& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

}  // namespace

double strict_accuracy(const std::vector<EvalUnit>& units) {
  require_units(units);
  std::size_t hits = 0;
  for (const auto& u : units) hits += u.gold == u.pred ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(units.size());
}

PRF loose_macro(const std::vector<EvalUnit>& units) {
  require_units(units);
  double p_sum = 0.0, r_sum = 0.0;
  for (const auto& u : units) {
    const double hit = static_cast<double>(intersection_size(u.gold, u.pred));
    if (u.pred.empty()) {
      p_sum += u.gold.empty() ? 1.0 : 0.0;
    } else {
      p_sum += hit / static_cast<double>(u.pred.size());
    }
    if (u.gold.empty()) {
      r_sum += u.pred.empty() ? 1.0 : 0.0;
    } else {
      r_sum += hit / static_cast<double>(u.gold.size());
    }
  }
  const double n = static_cast<double>(units.size());
  PRF out{p_sum / n, r_sum / n, 0.0};
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

PRF loose_micro(const std::vector<EvalUnit>& units) {
  require_units(units);
  std::size_t hit = 0, pred = 0, gold = 0;
  for (const auto& u : units) {
    hit += intersection_size(u.gold, u.pred);
    pred += u.pred.size();
    gold += u.gold.size();
  }
  PRF out;
  out.precision = pred ? static_cast<double>(hit) / static_cast<double>(pred) : 0.0;
  out.recall = gold ? static_cast<double>(hit) / static_cast<double>(gold) : 0.0;
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

MetricReport evaluate_units(const std::vector<EvalUnit>& units) {
  return {strict_accuracy(units), loose_macro(units), loose_micro(units), units.size()};
}

std::size_t GoldIndexer::index(const std::string& label) {
  if (auto i = vocab_.find(label)) return *i;
  ++oov_hits_;
  auto it = std::find(extra_.begin(), extra_.end(), label);
  if (it == extra_.end()) {
    extra_.push_back(label);
    return vocab_.size() + extra_.size() - 1;
  }
  return vocab_.size() + static_cast<std::size_t>(it - extra_.begin());
}

namespace {

const DocTokenPredictions& find_prediction(
    const std::unordered_map<std::string, const DocTokenPredictions*>& by_id, const Document& doc) {
  auto it = by_id.find(doc.doc_id);
  if (it == by_id.end()) throw DataError("no predictions for document '" + doc.doc_id + "'");
  if (it->second->labels.size() != doc.tokens.size()) {
    throw DataError("predictions for '" + doc.doc_id + "' cover " +
                    std::to_string(it->second->labels.size()) + " tokens, document has " +
                    std::to_string(doc.tokens.size()));
  }
  return *it->second;
}

std::unordered_map<std::string, const DocTokenPredictions*> index_predictions(
    const std::vector<DocTokenPredictions>& preds) {
  std::unordered_map<std::string, const DocTokenPredictions*> by_id;
  for (const auto& p : preds) by_id.emplace(p.doc_id, &p);
  return by_id;
}

}  // namespace

MetricReport evaluate_e2e_as_mention_level(const std::vector<DocTokenPredictions>& preds,
                                           const Corpus& documents, const LabelVocab& vocab,
                                           std::vector<EvalUnit>* units_out) {
  const auto by_id = index_predictions(preds);
  GoldIndexer gold_index(vocab);
  std::vector<EvalUnit> units;
  for (const auto& doc : documents) {
    if (doc.mentions.empty()) continue;
    const auto& p = find_prediction(by_id, doc);
    for (std::size_t m = 0; m < doc.mentions.size(); ++m) {
      const auto& mention = doc.mentions[m];
      EvalUnit u;
      u.doc_id = doc.doc_id;
      u.position = m;
      std::vector<std::size_t> gold, pred;
      for (const auto& l : mention.labels) gold.push_back(gold_index.index(l));
      for (std::size_t t = mention.start; t < mention.end; ++t) {
        pred.insert(pred.end(), p.labels[t].begin(), p.labels[t].end());
      }
      u.gold = make_label_set(std::move(gold));
      u.pred = make_label_set(std::move(pred));
      units.push_back(std::move(u));
    }
  }
  auto report = evaluate_units(units);
  if (units_out) *units_out = std::move(units);
  return report;
}

MetricReport evaluate_all_tokens(const std::vector<DocTokenPredictions>& preds,
                                 const Corpus& documents, const LabelVocab& vocab,
                                 std::vector<EvalUnit>* units_out) {
  const auto by_id = index_predictions(preds);
  GoldIndexer gold_index(vocab);
  std::vector<EvalUnit> units;
  for (const auto& doc : documents) {
    const auto& p = find_prediction(by_id, doc);
    std::vector<std::vector<std::size_t>> gold(doc.tokens.size());
    for (const auto& mention : doc.mentions) {
      for (const auto& l : mention.labels) {
        const auto idx = gold_index.index(l);
        for (std::size_t t = mention.start; t < mention.end; ++t) gold[t].push_back(idx);
      }
    }
    for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
      units.push_back({make_label_set(std::move(gold[t])), make_label_set(p.labels[t]), doc.doc_id, t});
    }
  }
  auto report = evaluate_units(units);
  if (units_out) *units_out = std::move(units);
  return report;
}

void print_report_table(std::ostream& os, const std::string& title, const MetricReport& r) {
  const auto flags = os.flags();
  os << std::fixed << std::setprecision(3);
  os << title << " (" << r.unit_count << " units)\n";
  os << "  Acc    Ma-F1  Mi-F1\n";
  os << "  " << r.strict_acc << "  " << r.macro.f1 << "  " << r.micro.f1 << '\n';
  os << "  macro P/R " << r.macro.precision << " / " << r.macro.recall << "   micro P/R "
     << r.micro.precision << " / " << r.micro.recall << '\n';
  os.flags(flags);
}

std::string report_json(const MetricReport& r) {
  nlohmann::json j{{"strict_acc", r.strict_acc},
                   {"macro_p", r.macro.precision},
                   {"macro_r", r.macro.recall},
                   {"macro_f1", r.macro.f1},
                   {"micro_p", r.micro.precision},
                   {"micro_r", r.micro.recall},
                   {"micro_f1", r.micro.f1},
                   {"unit_count", r.unit_count}};
  return j.dump();
}

}  // namespace finetype
