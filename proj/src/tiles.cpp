// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/tiles.hpp"

#include <algorithm>
#include <cmath>

#include "kascade/attention.hpp"
#include "kascade/error.hpp"
#include "kascade/parallel.hpp"

namespace kascade {

std::size_t k_budget(const KBudgetPolicy& policy, std::size_t visible_keys) {
  if (visible_keys == 0) throw InvalidArgument("k_budget: need at least one key");
  if (!(policy.fraction > 0.0 && policy.fraction <= 1.0) || policy.k_min == 0) {
    throw InvalidArgument("k_budget: fraction must be in (0, 1] and k_min >= 1");
  }
  // The epsilon keeps exact products such as 0.29 * 100 from rounding down.
  const auto scaled = static_cast<std::size_t>(
      std::floor(policy.fraction * static_cast<double>(visible_keys) + 1e-9));
  return std::min(std::max(scaled, policy.k_min), visible_keys);
}

std::vector<float> pool_presoftmax(std::span<const float> queries, std::size_t dim) {
  if (dim == 0 || queries.empty() || queries.size() % dim != 0) {
    throw InvalidArgument("pool_presoftmax: expected a non-empty [T][dim] tile");
  }
  const std::size_t count = queries.size() / dim;
  std::vector<double> acc(dim, 0.0);
  for (std::size_t t = 0; t < count; ++t) {
    for (std::size_t c = 0; c < dim; ++c) acc[c] += queries[t * dim + c];
  }
  std::vector<float> pooled(dim);
  for (std::size_t c = 0; c < dim; ++c) pooled[c] = static_cast<float>(acc[c] / count);
  return pooled;
}

std::vector<double> pool_postsoftmax(const std::vector<std::span<const double>>& rows) {
  if (rows.empty()) throw InvalidArgument("pool_postsoftmax: empty tile");
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.size());
  std::vector<double> pooled(width, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) pooled[j] += r[j];
  }
  for (double& p : pooled) p /= static_cast<double>(rows.size());
  return pooled;
}

TileSpec make_tiles(std::size_t seq_len, Phase phase, std::size_t num_query_heads,
                    std::size_t num_kv_heads, std::size_t tile_size) {
  if (num_kv_heads == 0 || num_query_heads % num_kv_heads != 0) {
    throw InvalidArgument("make_tiles: query heads must be a positive multiple of kv heads");
  }
  if (tile_size == 0) throw InvalidArgument("make_tiles: tile_size must be >= 1");
  TileSpec spec;
  spec.phase = phase;
  spec.seq_len = seq_len;
  spec.num_kv_heads = num_kv_heads;
  if (phase == Phase::decode) {
    spec.tile_size = num_query_heads / num_kv_heads;
    spec.tokens_per_tile = 1;
  } else {
    spec.tile_size = tile_size;
    spec.tokens_per_tile = tile_size;
  }
  for (std::size_t g = 0; g < num_kv_heads; ++g) {
    for (std::size_t start = 0; start < seq_len; start += spec.tokens_per_tile) {
      spec.tiles.push_back({start, std::min(start + spec.tokens_per_tile, seq_len), g});
    }
  }
  return spec;
}

std::vector<std::vector<double>> pooled_tile_distributions(const AttentionTrace& trace,
                                                           std::size_t layer,
                                                           const TileSpec& spec,
                                                           std::size_t kv_head,
                                                           Pooling pooling, bool causal) {
  const auto& d = trace.dims;
  const std::size_t group = d.group_size();
  const std::size_t first_head = kv_head * group;
  const std::size_t per_head = spec.tiles_per_head();
  std::vector<std::vector<double>> pooled(per_head);

  if (pooling == Pooling::post_softmax) {
    std::vector<AttentionMatrix> probs;
    probs.reserve(group);
    for (std::size_t r = 0; r < group; ++r) {
      probs.push_back(head_probabilities(trace, layer, first_head + r, causal));
    }
    std::vector<std::span<const double>> rows;
    for (std::size_t t = 0; t < per_head; ++t) {
      const Tile& tile = spec.tiles[kv_head * per_head + t];
      rows.clear();
      for (std::size_t tok = tile.start_token; tok < tile.end_token; ++tok) {
        for (const auto& p : probs) rows.push_back(p.row(tok));
      }
      pooled[t] = pool_postsoftmax(rows);
    }
    return pooled;
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
  std::vector<float> tile_queries;
  for (std::size_t t = 0; t < per_head; ++t) {
    const Tile& tile = spec.tiles[kv_head * per_head + t];
    tile_queries.clear();
    for (std::size_t tok = tile.start_token; tok < tile.end_token; ++tok) {
      for (std::size_t r = 0; r < group; ++r) {
        const auto q = trace.q_row(layer, first_head + r, tok);
        tile_queries.insert(tile_queries.end(), q.begin(), q.end());
      }
    }
    const auto query = pool_presoftmax(tile_queries, d.head_dim);
    const std::size_t visible = causal ? tile.end_token : d.seq_len;
    std::vector<double> scores(visible);
    for (std::size_t j = 0; j < visible; ++j) {
      const auto key = trace.k_row(layer, kv_head, j);
      double acc = 0.0;
      for (std::size_t c = 0; c < d.head_dim; ++c) acc += static_cast<double>(query[c]) * key[c];
      scores[j] = acc * scale;
    }
    pooled[t] = softmax_row(scores);
  }
  return pooled;
}

TileSelection select_tile_topk(const AttentionTrace& trace, std::size_t layer,
                               const TileSpec& spec, Pooling pooling,
                               const KBudgetPolicy& policy, bool causal) {
  TileSelection selection;
  selection.spec = spec;
  selection.sets.resize(spec.tiles.size());
  const std::size_t per_head = spec.tiles_per_head();
  parallel_for(spec.num_kv_heads, [&](std::size_t g) {
    const auto pooled = pooled_tile_distributions(trace, layer, spec, g, pooling, causal);
    for (std::size_t t = 0; t < per_head; ++t) {
      const std::size_t id = g * per_head + t;
      auto set = oracle_topk_indices(pooled[t], k_budget(policy, pooled[t].size()));
      set.kv_head = g;
      set.tile_id = id;
      selection.sets[id] = std::move(set);
    }
  });
  return selection;
}

}  // namespace kascade
