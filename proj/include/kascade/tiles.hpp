// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kascade/trace.hpp"
#include "kascade/types.hpp"

namespace kascade {

// k = min(max(floor(fraction * L), k_min), L).
struct KBudgetPolicy {
  double fraction = 0.1;
  std::size_t k_min = 128;

  bool operator==(const KBudgetPolicy&) const = default;
};

enum class Pooling { post_softmax, pre_softmax };

inline constexpr std::size_t kDefaultPrefillTileSize = 128;

std::size_t k_budget(const KBudgetPolicy& policy, std::size_t visible_keys);

// Mean of T query vectors stored row-major as [T][dim].
std::vector<float> pool_presoftmax(std::span<const float> queries, std::size_t dim);

// Mean of row distributions, each zero-extended to the longest row.
std::vector<double> pool_postsoftmax(const std::vector<std::span<const double>>& rows);

// Prefill: ceil(N / tile_size) contiguous token tiles per kv head.
// Decode: one tile per token per kv head holding its Hq/Hkv query heads;
// tile_size is ignored and reported as the group size.
TileSpec make_tiles(std::size_t seq_len, Phase phase, std::size_t num_query_heads,
                    std::size_t num_kv_heads, std::size_t tile_size = kDefaultPrefillTileSize);

// Pooled scores of every tile of one kv head, in token order. Each vector
// covers the keys visible to the tile: positions < end_token when causal.
// Post-softmax pools the per-query distributions of all query heads of the
// group over the tile's tokens; pre-softmax pools their query vectors and
// takes one softmax.
std::vector<std::vector<double>> pooled_tile_distributions(const AttentionTrace& trace,
                                                           std::size_t layer,
                                                           const TileSpec& spec,
                                                           std::size_t kv_head,
                                                           Pooling pooling, bool causal);

// Per-kv-head, per-tile Top-k sets for an anchor layer. The budget of a tile
// is k_budget(policy, visible keys of that tile).
TileSelection select_tile_topk(const AttentionTrace& trace, std::size_t layer,
                               const TileSpec& spec, Pooling pooling,
                               const KBudgetPolicy& policy, bool causal);

}  // namespace kascade
