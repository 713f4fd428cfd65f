// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "finetype/tensor.hpp"

namespace finetype {

/// A typed span over word indices [start, end).
struct Mention {
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<std::string> labels;

  bool covers(std::size_t token) const { return token >= start && token < end; }
  bool operator==(const Mention&) const = default;
};

/// One sentence with its gold mentions. The corpus treats each record as a
/// single sentence-document.
struct Document {
  std::string doc_id;
  std::vector<std::string> tokens;
  std::vector<Mention> mentions;

  bool operator==(const Document&) const = default;
};

using Corpus = std::vector<Document>;

struct LoadReport {
  std::size_t documents = 0;
  std::size_t mentions = 0;
  /// Documents containing at least one pair of overlapping mentions.
  std::vector<std::string> overlapping_docs;
};

/// Reads line-delimited JSON records
///   {"doc_id"?: str, "tokens": [str], "mentions": [{"start", "end", "labels"}]}
/// Missing doc_id becomes "<file stem>-<line number>". Blank lines are skipped.
Corpus load_corpus(const std::filesystem::path& path, LoadReport* report = nullptr);
Corpus parse_corpus(std::istream& in, const std::string& stem, LoadReport* report = nullptr);

/// Writes the same format load_corpus reads, always including doc_id.
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
void write_corpus(std::ostream& out, const Corpus& corpus);

/// Dense label indexing. Built from the training split only; labels seen
/// later are counted, never silently added.
class LabelVocab {
 public:
  LabelVocab() = default;
  explicit LabelVocab(std::vector<std::string> labels);
  static LabelVocab from_corpus(const Corpus& corpus);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  std::optional<std::size_t> find(const std::string& label) const;

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class SplitKind { m_ontonotes_like, m_wiki_like };

struct SplitSpec {
  Corpus train, dev, test;
  enum class Provenance { original, modified } provenance = Provenance::modified;
};

struct SplitSizes {
  std::size_t train, dev, test;
  bool operator==(const SplitSizes&) const = default;
};

/// Sizes for the modified split of n test documents: dev = test = ceil(n/10),
/// train takes the rest. Throws DataError for n < 3.
SplitSizes modified_split_sizes(std::size_t n);

/// m_ontonotes_like: carve train/dev/test from corpus_test in order.
/// m_wiki_like: train = first 50,000 of aux, dev = the following 434,
/// test = corpus_test unchanged. aux is required for m_wiki_like.
SplitSpec make_modified_split(const Corpus& corpus_test, SplitKind kind,
                              const Corpus* aux = nullptr);

inline constexpr std::size_t kWikiTrainDocs = 50000;
inline constexpr std::size_t kWikiDevDocs = 434;

struct MentionRef {
  const Document* doc;
  std::size_t mention_index;
  const Mention& mention() const { return doc->mentions[mention_index]; }
};

/// One example per mention, in document order then mention order.
std::vector<MentionRef> extract_mention_examples(const Corpus& split);

struct OovCounter {
  std::size_t count = 0;
  std::unordered_map<std::string, std::size_t> by_label;
  void add(const std::string& label) {
    ++count;
    ++by_label[label];
  }
};

/// [tokens × N] 0/1 matrix: row t is the union of the labels of every
/// mention covering t. Labels absent from vocab are counted in oov.
/// Returns a tensor with at least one column (N ≥ 1 required).
Tensor token_label_matrix(const Document& doc, const LabelVocab& vocab, OovCounter* oov = nullptr);

struct CorpusStats {
  std::size_t documents = 0;
  std::size_t mentions = 0;
  std::size_t tokens = 0;
  std::size_t entity_tokens = 0;
  std::size_t distinct_labels = 0;
  std::size_t overlapping_docs = 0;
};

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace finetype
