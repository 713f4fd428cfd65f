// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "finetype/dataset.hpp"
#include "finetype/tensor.hpp"
#include "finetype/wordpiece.hpp"

namespace finetype {

enum class EmbeddingKind { uniform, word_vectors, contextual_store };

std::string to_string(EmbeddingKind kind);

/// A document's wordpieces and their frozen input vectors [T×d].
struct EmbeddedSequence {
  WordpieceSeq seq;
  Tensor vectors;
};

/// Frozen embedding source. Implementations are immutable after
/// construction, so embed() may be called concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingKind kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual EmbeddedSequence embed(const Document& doc) const = 0;
  /// Spec string that recreates this provider (see make_provider).
  virtual std::string describe() const = 0;
};

/// Each distinct wordpiece string maps to a fixed vector drawn from
/// uniform(−0.1, 0.1), seeded by a stable hash of the string. With a
/// wordpiece vocabulary words are split first; without one, each word is a
/// single piece.
class UniformProvider final : public EmbeddingProvider {
 public:
  UniformProvider(std::size_t dim, std::shared_ptr<const WordpieceVocab> vocab = nullptr,
                  std::uint64_t salt = 0, std::string vocab_path = {});
  EmbeddingKind kind() const override { return EmbeddingKind::uniform; }
  std::size_t dim() const override { return dim_; }
  EmbeddedSequence embed(const Document& doc) const override;
  std::string describe() const override;

  std::vector<double> piece_vector(const std::string& piece) const;

 private:
  std::size_t dim_;
  std::shared_ptr<const WordpieceVocab> vocab_;
  std::uint64_t salt_;
  std::string vocab_path_;
};

/// Word-level lookup table in GloVe text format. No wordpiece splitting;
/// out-of-vocabulary words embed as the zero vector.
class WordVectorProvider final : public EmbeddingProvider {
 public:
  WordVectorProvider(std::size_t dim, std::unordered_map<std::string, std::vector<double>> table,
                     std::string source = {});
  EmbeddingKind kind() const override { return EmbeddingKind::word_vectors; }
  std::size_t dim() const override { return dim_; }
  EmbeddedSequence embed(const Document& doc) const override;
  std::string describe() const override;

  std::size_t vocab_size() const noexcept { return table_.size(); }
  /// nullptr when the token is unknown.
  const std::vector<double>* lookup(const std::string& token) const;

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<double>> table_;
  std::string source_;
};

struct WordVectorLoadReport {
  std::size_t lines = 0;
  std::vector<std::string> duplicates;
};

/// Parses "token v1 … vd" lines; d is taken from the first line. Ragged rows
/// raise ParseError with the line number; duplicate tokens keep the last row.
std::unique_ptr<WordVectorProvider> load_word_vectors(const std::filesystem::path& path,
                                                      WordVectorLoadReport* report = nullptr);

inline constexpr int kContextualStoreVersion = 1;

struct StoreRecord {
  WordpieceSeq seq;
  Tensor vectors;
};

/// Per-document contextual vectors produced offline. The stored wordpiece
/// segmentation is used verbatim.
class ContextualStore final : public EmbeddingProvider {
 public:
  ContextualStore(std::size_t dim, std::unordered_map<std::string, StoreRecord> records,
                  std::string source = {});
  EmbeddingKind kind() const override { return EmbeddingKind::contextual_store; }
  std::size_t dim() const override { return dim_; }
  EmbeddedSequence embed(const Document& doc) const override;
  std::string describe() const override;

  bool contains(const std::string& doc_id) const { return records_.count(doc_id) != 0; }
  std::size_t size() const noexcept { return records_.size(); }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, StoreRecord> records_;
  std::string source_;
};

/// Reads a line-delimited store, plain or gzip-compressed:
///   {"format_version": 1, "dim": d}                              (header)
///   {"doc_id": s, "pieces": [..], "word_index": [..], "vectors": [[..]]}
std::unique_ptr<ContextualStore> load_contextual_store(const std::filesystem::path& path);

/// Writes a plain-text store (used for fixtures and tests).
void write_contextual_store(const std::filesystem::path& path, std::size_t dim,
                            const std::vector<std::pair<std::string, StoreRecord>>& records);

/// Builds a provider from a spec string:
///   uniform[:<dim>[:<wordpiece vocab path>]]   (dim defaults to default_dim)
///   vectors:<path>                              GloVe-format word vectors
///   contextual:<path>                           contextual store
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec,
                                                 std::size_t default_dim = 300);

}  // namespace finetype
