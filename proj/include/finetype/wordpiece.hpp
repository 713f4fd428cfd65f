// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "finetype/dataset.hpp"

namespace finetype {

inline constexpr std::string_view kUnkPiece = "[UNK]";
inline constexpr std::string_view kPadPiece = "[PAD]";
inline constexpr std::size_t kDefaultMaxWordChars = 100;

/// WordPiece vocabulary in BERT's one-piece-per-line format.
/// Continuation pieces carry a "##" prefix.
class WordpieceVocab {
 public:
  WordpieceVocab() = default;
  /// Throws ConfigError unless [UNK] and [PAD] are present.
  explicit WordpieceVocab(std::vector<std::string> pieces);
  static WordpieceVocab load(const std::filesystem::path& path);

  bool contains(std::string_view piece) const { return pieces_.count(std::string(piece)) != 0; }
  std::size_t size() const noexcept { return pieces_.size(); }

 private:
  std::unordered_set<std::string> pieces_;
};

/// Greedy longest-match-first segmentation of one word. Lengths are counted
/// in UTF-8 code points. Words longer than max_word_chars, or with any
/// unmatched segment, become a single [UNK]. Empty word → DataError.
std::vector<std::string> wordpiece_tokenize(std::string_view word, const WordpieceVocab& vocab,
                                            std::size_t max_word_chars = kDefaultMaxWordChars);

/// Wordpieces of a sentence with their source word positions.
struct WordpieceSeq {
  std::vector<std::string> pieces;
  std::vector<std::size_t> word_index;
  std::vector<unsigned char> is_pad;

  std::size_t size() const noexcept { return pieces.size(); }
  void push(std::string piece, std::size_t word, bool pad = false) {
    pieces.push_back(std::move(piece));
    word_index.push_back(word);
    is_pad.push_back(pad ? 1 : 0);
  }
  /// Number of source words covered (1 + largest non-pad word index).
  std::size_t word_count() const;
};

/// Tokenizes every word of doc. With vocab == nullptr each word is one piece.
WordpieceSeq tokenize_document(const Document& doc, const WordpieceVocab* vocab,
                               std::size_t max_word_chars = kDefaultMaxWordChars);

/// Throws DataError unless word_index is non-decreasing, starts at 0, steps
/// by at most one, and pieces/word_index/is_pad have equal length.
void validate_wordpiece_seq(const WordpieceSeq& seq, const std::string& what);

}  // namespace finetype
