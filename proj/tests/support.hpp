// SPDX-License-Identifier: Apache-2.0
// Test-only oracles and synthetic corpora. The oracles are written with
// plain nested loops over std::vector and share no code with the library's
// kernels or layers.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "finetype/dataset.hpp"
#include "finetype/embedding.hpp"
#include "finetype/metrics.hpp"
#include "finetype/rng.hpp"
#include "finetype/tensor.hpp"

namespace finetype::testing {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.uniform(-scale, scale);
  return t;
}

inline Mat naive_affine(const Mat& x, const Mat& w, const std::vector<double>& b) {
  Mat y(x.size(), std::vector<double>(w[0].size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w[0].size(); ++j) {
      double s = b.empty() ? 0.0 : b[j];
      for (std::size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][j];
      y[i][j] = s;
    }
  return y;
}

inline double oracle_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// GRU parameters as plain arrays, gate formulation
/// z=σ(xWz+hUz+bz), r=σ(xWr+hUr+br), h̃=tanh(xWh+(r⊙h)Uh+bh), h'=(1−z)h+zh̃.
struct ScalarGru {
  Mat wz, wr, wh, uz, ur, uh;
  std::vector<double> bz, br, bh;

  std::vector<double> step(const std::vector<double>& x, const std::vector<double>& h) const {
    const std::size_t hd = h.size();
    std::vector<double> out(hd);
    std::vector<double> z(hd), r(hd);
    for (std::size_t j = 0; j < hd; ++j) {
      double az = bz[j], ar = br[j];
      for (std::size_t k = 0; k < x.size(); ++k) {
        az += x[k] * wz[k][j];
        ar += x[k] * wr[k][j];
      }
      for (std::size_t k = 0; k < hd; ++k) {
        az += h[k] * uz[k][j];
        ar += h[k] * ur[k][j];
      }
      z[j] = oracle_sigmoid(az);
      r[j] = oracle_sigmoid(ar);
    }
    for (std::size_t j = 0; j < hd; ++j) {
      double ah = bh[j];
      for (std::size_t k = 0; k < x.size(); ++k) ah += x[k] * wh[k][j];
      for (std::size_t k = 0; k < hd; ++k) ah += r[k] * h[k] * uh[k][j];
      out[j] = (1.0 - z[j]) * h[j] + z[j] * std::tanh(ah);
    }
    return out;
  }

  /// Whole sequence from a zero state; returns one hidden vector per step.
  Mat run(const Mat& xs, bool reverse) const {
    Mat out(xs.size());
    std::vector<double> h(bz.size(), 0.0);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const std::size_t t = reverse ? xs.size() - 1 - k : k;
      h = step(xs[t], h);
      out[t] = h;
    }
    return out;
  }
};

/// Brute-force set metrics over explicit std::set labels.
struct BruteMetrics {
  double strict, macro_p, macro_r, macro_f1, micro_p, micro_r, micro_f1;
};

inline BruteMetrics brute_metrics(const std::vector<std::pair<std::set<int>, std::set<int>>>& units) {
  auto f1 = [](double p, double r) { return p + r == 0 ? 0.0 : 2 * p * r / (p + r); };
  double strict = 0, mp = 0, mr = 0;
  double hits = 0, preds = 0, golds = 0;
  for (const auto& [gold, pred] : units) {
    std::set<int> inter;
    for (int g : gold)
      if (pred.count(g)) inter.insert(g);
    if (gold == pred) strict += 1;
    if (pred.empty()) mp += gold.empty() ? 1 : 0;
    else mp += double(inter.size()) / double(pred.size());
    if (gold.empty()) mr += pred.empty() ? 1 : 0;
    else mr += double(inter.size()) / double(gold.size());
    hits += double(inter.size());
    preds += double(pred.size());
    golds += double(gold.size());
  }
  const double n = double(units.size());
  BruteMetrics m{};
  m.strict = strict / n;
  m.macro_p = mp / n;
  m.macro_r = mr / n;
  m.macro_f1 = f1(m.macro_p, m.macro_r);
  m.micro_p = preds ? hits / preds : 0;
  m.micro_r = golds ? hits / golds : 0;
  m.micro_f1 = f1(m.micro_p, m.micro_r);
  return m;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("finetype_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> w{"the", "a", "said", "on", "in", "was", "of",
                                          "and", "to", "with", "after", "reported"};
  return w;
}

/// 20 sentences, 5 labels. Each sentence has one entity word whose label set
/// is a fixed function of the word (multi-label for some words).
inline Corpus overfit_corpus() {
  const std::vector<std::pair<std::string, std::vector<std::string>>> entities{
      {"Obama", {"/person", "/person/politician"}},
      {"Paris", {"/location"}},
      {"Google", {"/organization"}},
      {"Picasso", {"/person", "/person/artist"}},
      {"Berlin", {"/location"}},
      {"Merkel", {"/person", "/person/politician"}},
      {"Intel", {"/organization"}},
      {"Monet", {"/person", "/person/artist"}},
      {"Rome", {"/location"}},
      {"Sony", {"/organization"}},
  };
  Rng rng(7);
  Corpus corpus;
  const auto& fill = filler_words();
  for (std::size_t i = 0; i < 20; ++i) {
    Document d;
    d.doc_id = "overfit-" + std::to_string(i);
    const std::size_t len = 5 + rng.below(4);
    const std::size_t pos = rng.below(len);
    for (std::size_t t = 0; t < len; ++t) {
      d.tokens.push_back(t == pos ? entities[i % entities.size()].first : fill[rng.below(fill.size())]);
    }
    d.mentions.push_back({pos, pos + 1, entities[i % entities.size()].second});
    corpus.push_back(std::move(d));
  }
  return corpus;
}

/// In-memory word vectors with components in (−1, 1) for every token of the
/// corpus, keyed by a stable hash.
inline std::unique_ptr<WordVectorProvider> word_vectors_for(const Corpus& corpus, std::size_t dim,
                                                           std::uint64_t salt = 0) {
  std::unordered_map<std::string, std::vector<double>> table;
  for (const auto& d : corpus) {
    for (const auto& t : d.tokens) {
      if (table.count(t)) continue;
      Rng rng(fnv1a64(t) ^ salt);
      std::vector<double> v(dim);
      for (auto& x : v) x = rng.uniform(-1.0, 1.0);
      table.emplace(t, std::move(v));
    }
  }
  return std::make_unique<WordVectorProvider>(dim, std::move(table), "<memory>");
}

/// Sentences with ≤10% entity tokens: 20 tokens each, one single-token mention.
inline Corpus sparse_entity_corpus(std::size_t docs = 50) {
  Rng rng(11);
  Corpus corpus;
  const auto& fill = filler_words();
  for (std::size_t i = 0; i < docs; ++i) {
    Document d;
    d.doc_id = "sparse-" + std::to_string(i);
    for (std::size_t t = 0; t < 20; ++t) d.tokens.push_back(fill[rng.below(fill.size())]);
    const std::size_t pos = rng.below(20);
    d.tokens[pos] = "Entity" + std::to_string(i % 7);
    d.mentions.push_back({pos, pos + 1, {i % 2 ? "/person" : "/location"}});
    corpus.push_back(std::move(d));
  }
  return corpus;
}

/// Polysemy corpus: every sentence contains "bank" typed by a cue word
/// elsewhere in the sentence (finance cue → /organization, nature cue →
/// /location). Train and test draw cues from disjoint pools, so only an
/// embedding that already encodes the sense can type the test occurrences.
struct PolysemyData {
  Corpus train, test;
};

inline PolysemyData polysemy_corpus(std::size_t n_train = 40, std::size_t n_test = 40) {
  const std::vector<std::string> finance_train{"loan", "deposit", "credit", "mortgage"};
  const std::vector<std::string> finance_test{"interest", "savings", "account", "cash"};
  const std::vector<std::string> nature_train{"river", "shore", "fishing", "muddy"};
  const std::vector<std::string> nature_test{"stream", "grassy", "canoe", "reeds"};
  Rng rng(23);
  const auto& fill = filler_words();
  auto make = [&](std::size_t i, bool test) {
    const bool finance = i % 2 == 0;
    const auto& pool = finance ? (test ? finance_test : finance_train) : (test ? nature_test : nature_train);
    Document d;
    d.doc_id = std::string(test ? "poly-test-" : "poly-train-") + std::to_string(i);
    const std::size_t len = 6 + rng.below(3);
    for (std::size_t t = 0; t < len; ++t) d.tokens.push_back(fill[rng.below(fill.size())]);
    const std::size_t bank = 1 + rng.below(len - 2);
    std::size_t cue = rng.below(len);
    while (cue == bank) cue = rng.below(len);
    d.tokens[bank] = "bank";
    d.tokens[cue] = pool[rng.below(pool.size())];
    d.mentions.push_back({bank, bank + 1, {finance ? "/organization" : "/location"}});
    return d;
  };
  PolysemyData data;
  for (std::size_t i = 0; i < n_train; ++i) data.train.push_back(make(i, false));
  for (std::size_t i = 0; i < n_test; ++i) data.test.push_back(make(i, true));
  return data;
}

/// Hand-built contextual store for the polysemy corpus: every piece gets its
/// word's base vector; "bank" additionally carries a sense direction chosen
/// by the sentence's cue, and cue words carry their sense direction too.
inline std::unique_ptr<ContextualStore> polysemy_store(const Corpus& corpus, std::size_t dim) {
  const std::set<std::string> finance{"loan", "deposit", "credit", "mortgage",
                                      "interest", "savings", "account", "cash"};
  const std::set<std::string> nature{"river", "shore", "fishing", "muddy",
                                     "stream", "grassy", "canoe", "reeds"};
  std::vector<double> finance_dir(dim, 0.0), nature_dir(dim, 0.0);
  finance_dir[0] = 1.0;
  nature_dir[1] = 1.0;
  std::unordered_map<std::string, StoreRecord> records;
  for (const auto& d : corpus) {
    bool is_finance = false;
    for (const auto& t : d.tokens) is_finance |= finance.count(t) > 0;
    StoreRecord rec;
    rec.vectors = Tensor({d.tokens.size(), dim});
    for (std::size_t w = 0; w < d.tokens.size(); ++w) {
      rec.seq.push(d.tokens[w], w);
      Rng rng(fnv1a64(d.tokens[w]));
      for (std::size_t k = 0; k < dim; ++k) rec.vectors(w, k) = rng.uniform(-0.1, 0.1);
      const std::vector<double>* dir = nullptr;
      if (d.tokens[w] == "bank") dir = is_finance ? &finance_dir : &nature_dir;
      else if (finance.count(d.tokens[w])) dir = &finance_dir;
      else if (nature.count(d.tokens[w])) dir = &nature_dir;
      if (dir) {
        for (std::size_t k = 0; k < dim; ++k) rec.vectors(w, k) += (*dir)[k];
      }
    }
    records.emplace(d.doc_id, std::move(rec));
  }
  return std::make_unique<ContextualStore>(dim, std::move(records), "<polysemy fixture>");
}

}  // namespace finetype::testing
