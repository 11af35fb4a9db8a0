// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kascade/sparsity.hpp"
#include "kascade/trace.hpp"
#include "kascade/types.hpp"

namespace kascade {

enum class HeadMapMode { remapped, identity, all_heads_pooled };

// map[j] is the anchor kv head whose Top-k sets reuse kv head j borrows.
// Many-to-one is allowed; unused in all_heads_pooled mode.
struct HeadMap {
  std::size_t reuse_layer = 0;
  std::size_t anchor_layer = 0;
  std::vector<std::size_t> map;
  HeadMapMode mode = HeadMapMode::remapped;

  bool operator==(const HeadMap&) const = default;
};

// values[i * H + j]: anchor head i's sets scored against reuse head j.
struct HeadSimilarity {
  std::size_t num_kv_heads = 0;
  std::vector<double> values;

  double at(std::size_t anchor_head, std::size_t reuse_head) const {
    return values[anchor_head * num_kv_heads + reuse_head];
  }
};

HeadSimilarity head_similarity(std::span<const AttentionTrace> traces, std::size_t anchor_layer,
                               std::size_t reuse_layer, std::size_t k,
                               TokenAggregation aggregation = TokenAggregation::mean);

// Column-wise argmax, ties toward the smaller anchor head.
HeadMap compute_head_map(const HeadSimilarity& sims, std::size_t anchor_layer,
                         std::size_t reuse_layer);

HeadMap identity_head_map(std::size_t num_kv_heads, std::size_t anchor_layer,
                          std::size_t reuse_layer);

// One shared set from the mean of the per-kv-head pooled distributions.
TopKIndexSet pooled_all_heads_topk(const std::vector<std::vector<double>>& per_head, std::size_t k);

// Head-mapped similarity matrix plus the head similarity of every pair
// a <= b, so plans can pick their head maps without recomputation.
struct PlanningSimilarity {
  SimilarityMatrix matrix;
  std::vector<HeadSimilarity> pairs;  // [a * L + b], filled for a <= b

  const HeadSimilarity& pair(std::size_t anchor_layer, std::size_t reuse_layer) const {
    return pairs[anchor_layer * matrix.num_layers + reuse_layer];
  }
};

PlanningSimilarity planning_similarity(std::span<const AttentionTrace> traces, std::size_t k,
                                       TokenAggregation token_aggregation);

}  // namespace kascade
