// SPDX-License-Identifier: Apache-2.0
#include "finetype/context.hpp"

#include "finetype/errors.hpp"

namespace finetype {

ContextWindows context_windows(const WordpieceSeq& seq, std::size_t start, std::size_t end,
                               std::size_t window) {
  if (window == 0) throw ConfigError("context window size must be at least 1");
  if (start >= end || end > seq.word_count()) {
    throw DataError("mention span [" + std::to_string(start) + ", " + std::to_string(end) +
                    ") out of bounds for " + std::to_string(seq.word_count()) + " words");
  }
  std::optional<std::size_t> first, last;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.is_pad[i]) continue;
    const auto w = seq.word_index[i];
    if (w >= start && w < end) {
      if (!first) first = i;
      last = i;
    }
  }
  if (!first) throw DataError("mention span has no wordpieces");

  auto real = [&](std::size_t i) -> std::optional<std::size_t> {
    return seq.is_pad[i] ? std::nullopt : std::optional<std::size_t>(i);
  };

  ContextWindows w;
  w.left.assign(window, std::nullopt);
  for (std::size_t k = 0; k < window && k < *first; ++k) {
    w.left[window - 1 - k] = real(*first - 1 - k);
  }
  w.right.assign(window, std::nullopt);
  for (std::size_t k = 0; k < window && *last + 1 + k < seq.size(); ++k) {
    w.right[k] = real(*last + 1 + k);
  }
  w.mention.assign(window, std::nullopt);
  for (std::size_t k = 0; k < window && *first + k <= *last; ++k) {
    w.mention[k] = real(*first + k);
  }
  return w;
}

namespace {
std::vector<double> average(const std::vector<std::optional<std::size_t>>& slots, const Tensor& emb) {
  const std::size_t d = emb.cols();
  std::vector<double> out(d, 0.0);
  std::size_t count = 0;
  // Running mean: a window of identical vectors averages to that vector exactly.
  for (const auto& s : slots) {
    if (!s) continue;
    const auto row = emb.row(*s);
    ++count;
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t k = 0; k < d; ++k) out[k] += (row[k] - out[k]) * inv;
  }
  return out;
}
}  // namespace

ContextTriple build_context_triple(const WordpieceSeq& seq, const Tensor& emb, std::size_t start,
                                   std::size_t end, std::size_t window) {
  require_rank(emb, 2, "build_context_triple");
  if (emb.rows() != seq.size()) {
    throw DimensionError("build_context_triple: " + std::to_string(seq.size()) +
                         " pieces but embeddings " + shape_str(emb.shape()));
  }
  const auto w = context_windows(seq, start, end, window);
  return {average(w.left, emb), average(w.right, emb), average(w.mention, emb), window};
}

}  // namespace finetype
