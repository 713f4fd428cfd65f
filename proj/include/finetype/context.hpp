// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "finetype/tensor.hpp"
#include "finetype/wordpiece.hpp"

namespace finetype {

/// Piece positions of the three fixed-size windows around a mention;
/// std::nullopt marks a [PAD] slot. Each window has exactly W slots.
struct ContextWindows {
  std::vector<std::optional<std::size_t>> left, right, mention;
};

/// Averaged left, right and mention context embeddings, each of length d.
struct ContextTriple {
  std::vector<double> left, right, mention;
  std::size_t window = 0;
};

/// left: the W pieces before the mention's first piece (padded on the left);
/// right: the W pieces after its last piece (padded on the right);
/// mention: its first W pieces (padded on the right).
/// span is a word range [start, end). Out-of-bounds spans → DataError.
ContextWindows context_windows(const WordpieceSeq& seq, std::size_t start, std::size_t end,
                               std::size_t window);

/// Averages each window over its non-pad slots; an all-pad window is zero.
ContextTriple build_context_triple(const WordpieceSeq& seq, const Tensor& emb, std::size_t start,
                                   std::size_t end, std::size_t window);

}  // namespace finetype
