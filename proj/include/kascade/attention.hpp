// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kascade/trace.hpp"
#include "kascade/types.hpp"

namespace kascade {

// Max-subtracted softmax accumulated in double. Throws InvalidArgument on an
// empty row.
std::vector<double> softmax_row(std::span<const double> scores);

// Scaled logits q . k_j / sqrt(d) of one query row over the keys it may see.
std::vector<double> attention_scores(const AttentionTrace& trace, std::size_t layer,
                                     std::size_t query_head, std::size_t row, bool causal);

AttentionMatrix head_probabilities(const AttentionTrace& trace, std::size_t layer,
                                   std::size_t query_head, bool causal);

struct DenseAttention {
  std::vector<AttentionMatrix> probs;  // [Hq]
  std::vector<float> output;           // [Hq][N][d]
};

DenseAttention dense_attention(const AttentionTrace& trace, std::size_t layer, bool causal);

// Output only; avoids holding the probability matrices.
std::vector<float> dense_output(const AttentionTrace& trace, std::size_t layer, bool causal);

// Positions of the k largest weights, ties toward the smaller position,
// returned in ascending order. k >= length returns every position.
TopKIndexSet oracle_topk_indices(std::span<const double> weights, std::size_t k);
TopKIndexSet oracle_topk_indices(const AttentionDistribution& p, std::size_t k);

struct SparseAttention {
  std::vector<float> output;            // [Hq][N][d]
  std::vector<double> mass_recovered;   // [Hq][N]
  std::vector<std::uint8_t> fallback;   // [Hq][N], 1 where the diagonal key was used
  std::vector<float> dense_output;      // [Hq][N][d], filled on request
};

// Attention restricted to each row's tile set (intersected with the row's
// causal range), renormalized over the selected keys. A row left with no
// keys attends to its own position and is flagged.
SparseAttention topk_attention(const AttentionTrace& trace, std::size_t layer,
                               const TileSelection& selection, bool causal,
                               bool with_dense_output = false);

}  // namespace kascade
