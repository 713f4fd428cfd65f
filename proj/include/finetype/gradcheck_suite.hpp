// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "finetype/grad_check.hpp"
#include "finetype/mention_model.hpp"

namespace finetype {

// Random small instances for the finite-difference harness. Every instance
// is fully determined by its seed. Dropout, where present, runs in train
// mode with a mask re-drawn from a fixed seed on every evaluation.

enum class LayerCase { linear_sigmoid_bce, relu, tanh, softmax, dropout, gru_cell, bigru };

std::string to_string(LayerCase c);
std::vector<LayerCase> all_layer_cases();

GradCheckReport gradcheck_layer(LayerCase c, std::uint64_t seed, const GradCheckOptions& opts = {});

/// Full mention model, batch 2, 5 labels.
GradCheckReport gradcheck_mention_model(AttentionKind attention, std::uint64_t seed,
                                        const GradCheckOptions& opts = {});

/// Full E2EET: two sentences (lengths 6 and 4, so padding is exercised),
/// 4 labels, hidden 5.
GradCheckReport gradcheck_e2e_model(std::uint64_t seed, const GradCheckOptions& opts = {});

}  // namespace finetype
