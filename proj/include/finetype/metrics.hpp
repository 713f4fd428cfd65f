// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "finetype/dataset.hpp"

namespace finetype {

/// Sorted, duplicate-free set of label indices.
using LabelSet = std::vector<std::size_t>;

LabelSet make_label_set(std::vector<std::size_t> labels);

/// One scored prediction: a mention (entity level) or a token (all-token).
struct EvalUnit {
  LabelSet gold;
  LabelSet pred;
  std::string doc_id;
  std::size_t position = 0;
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  double strict_acc = 0.0;
  PRF macro;
  PRF micro;
  std::size_t unit_count = 0;
};

double harmonic_mean(double p, double r);

/// Fraction of units whose predicted set equals the gold set (empty == empty
/// counts as a match).
double strict_accuracy(const std::vector<EvalUnit>& units);

/// Mean of per-unit precision and recall, F1 of the means. A unit with both
/// sets empty scores P = R = 1; an empty prediction against nonempty gold
/// scores 0 for both; a nonempty prediction against empty gold scores R = 0.
PRF loose_macro(const std::vector<EvalUnit>& units);

/// Corpus-level P = Σ|g∩p| / Σ|p|, R = Σ|g∩p| / Σ|g|; a zero denominator
/// yields 0 for that component.
PRF loose_micro(const std::vector<EvalUnit>& units);

/// All three; throws Error("evaluation...") for an empty unit list.
MetricReport evaluate_units(const std::vector<EvalUnit>& units);

/// Maps gold label strings to indices, assigning fresh indices ≥ N to labels
/// the vocabulary lacks so they count as unpredictable gold.
class GoldIndexer {
 public:
  explicit GoldIndexer(const LabelVocab& vocab) : vocab_(vocab) {}
  std::size_t index(const std::string& label);
  std::size_t oov_count() const noexcept { return oov_hits_; }

 private:
  const LabelVocab& vocab_;
  std::vector<std::string> extra_;
  std::size_t oov_hits_ = 0;
};

/// Per-document word-level predictions for the e2e model.
struct DocTokenPredictions {
  std::string doc_id;
  std::vector<LabelSet> labels;  // one per token
};

/// One unit per gold mention: gold = its labels, pred = union of the
/// predicted sets of its tokens. Tokens outside gold mentions are ignored.
MetricReport evaluate_e2e_as_mention_level(const std::vector<DocTokenPredictions>& preds,
                                           const Corpus& documents, const LabelVocab& vocab,
                                           std::vector<EvalUnit>* units_out = nullptr);

/// One unit per token: gold = union of covering mentions' labels.
MetricReport evaluate_all_tokens(const std::vector<DocTokenPredictions>& preds,
                                 const Corpus& documents, const LabelVocab& vocab,
                                 std::vector<EvalUnit>* units_out = nullptr);

/// "Acc  Ma-F1  Mi-F1" table with precision/recall breakdown.
void print_report_table(std::ostream& os, const std::string& title, const MetricReport& r);
std::string report_json(const MetricReport& r);

}  // namespace finetype
