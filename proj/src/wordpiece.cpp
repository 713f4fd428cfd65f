// SPDX-License-Identifier: Apache-2.0
#include "finetype/wordpiece.hpp"

#include <fstream>

#include "finetype/errors.hpp"

namespace finetype {

WordpieceVocab::WordpieceVocab(std::vector<std::string> pieces)
    : pieces_(std::make_move_iterator(pieces.begin()), std::make_move_iterator(pieces.end())) {
  if (!contains(kUnkPiece) || !contains(kPadPiece)) {
    throw ConfigError("wordpiece vocabulary must contain [UNK] and [PAD]");
  }
}

WordpieceVocab WordpieceVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open wordpiece vocabulary " + path.string());
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) pieces.push_back(line);
  }
  return WordpieceVocab(std::move(pieces));
}

namespace {

// Byte offsets of code point starts, plus the end offset.
std::vector<std::size_t> codepoint_bounds(std::string_view s) {
  std::vector<std::size_t> b;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) b.push_back(i);
  }
  b.push_back(s.size());
  return b;
}

}  // namespace

std::vector<std::string> wordpiece_tokenize(std::string_view word, const WordpieceVocab& vocab,
                                            std::size_t max_word_chars) {
  if (word.empty()) throw DataError("wordpiece_tokenize: empty word");
  const auto bounds = codepoint_bounds(word);
  const std::size_t chars = bounds.size() - 1;
  if (chars > max_word_chars) return {std::string(kUnkPiece)};

  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < chars) {
    bool matched = false;
    for (std::size_t end = chars; end > start; --end) {
      std::string candidate(word.substr(bounds[start], bounds[end] - bounds[start]));
      if (start > 0) candidate.insert(0, "##");
      if (vocab.contains(candidate)) {
        out.push_back(std::move(candidate));
        start = end;
        matched = true;
        break;
      }
    }
    if (!matched) return {std::string(kUnkPiece)};
  }
  return out;
}

std::size_t WordpieceSeq::word_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (!is_pad[i]) n = std::max(n, word_index[i] + 1);
  }
  return n;
}

WordpieceSeq tokenize_document(const Document& doc, const WordpieceVocab* vocab,
                               std::size_t max_word_chars) {
  WordpieceSeq seq;
  for (std::size_t w = 0; w < doc.tokens.size(); ++w) {
    if (!vocab) {
      seq.push(doc.tokens[w], w);
      continue;
    }
    for (auto& piece : wordpiece_tokenize(doc.tokens[w], *vocab, max_word_chars)) {
      seq.push(std::move(piece), w);
    }
  }
  return seq;
}

void validate_wordpiece_seq(const WordpieceSeq& seq, const std::string& what) {
  if (seq.word_index.size() != seq.pieces.size() || seq.is_pad.size() != seq.pieces.size()) {
    throw DataError(what + ": pieces, word_index and pad flags differ in length");
  }
  std::size_t expected_next = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.is_pad[i]) continue;
    const std::size_t w = seq.word_index[i];
    if (w != expected_next && w + 1 != expected_next) {
      throw DataError(what + ": word_index jumps to " + std::to_string(w) + " at piece " +
                      std::to_string(i));
    }
    expected_next = w + 1;
  }
}

}  // namespace finetype
