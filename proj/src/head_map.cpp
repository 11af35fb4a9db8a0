// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/head_map.hpp"

#include <algorithm>
#include <numeric>

#include "kascade/attention.hpp"
#include "kascade/error.hpp"
#include "kascade/parallel.hpp"
#include "kascade/tiles.hpp"

namespace kascade {

namespace {

// GQA-pooled distribution of every token for one layer: [kv_head][token].
using PooledLayer = std::vector<std::vector<std::vector<double>>>;

PooledLayer pooled_layer(const AttentionTrace& trace, std::size_t layer, const TileSpec& decode) {
  PooledLayer pooled(trace.dims.num_kv_heads);
  for (std::size_t g = 0; g < trace.dims.num_kv_heads; ++g) {
    pooled[g] = pooled_tile_distributions(trace, layer, decode, g, Pooling::post_softmax, true);
  }
  return pooled;
}

// Per-token Top-k sets of every layer: [layer][kv_head][token].
using TokenSets = std::vector<std::vector<std::vector<TopKIndexSet>>>;

TokenSets token_sets(const AttentionTrace& trace, const TileSpec& decode, std::size_t k,
                     std::span<const std::size_t> layers_needed) {
  const auto& d = trace.dims;
  TokenSets sets(d.num_layers);
  parallel_for(layers_needed.size(), [&](std::size_t i) {
    const std::size_t l = layers_needed[i];
    const auto pooled = pooled_layer(trace, l, decode);
    sets[l].resize(d.num_kv_heads);
    for (std::size_t g = 0; g < d.num_kv_heads; ++g) {
      sets[l][g].reserve(d.seq_len);
      for (const auto& p : pooled[g]) sets[l][g].push_back(oracle_topk_indices(p, k));
    }
  });
  return sets;
}

void check_traces(std::span<const AttentionTrace> traces) {
  if (traces.empty()) throw InvalidArgument("head similarity: no traces");
  for (const auto& t : traces) {
    if (t.dims.num_layers != traces[0].dims.num_layers ||
        t.dims.num_kv_heads != traces[0].dims.num_kv_heads) {
      throw InvalidArgument("head similarity: traces disagree on layer or kv-head count");
    }
  }
}

// Token-aggregated head similarity of (anchor, reuse) for one prompt; adds
// into sums/counts so prompts can be averaged.
void accumulate_head_pair(const PooledLayer& reuse_pooled, const TokenSets& sets,
                          std::size_t anchor, std::size_t reuse, TokenAggregation aggregation,
                          std::vector<double>& sums, std::vector<std::size_t>& counts) {
  const std::size_t heads = reuse_pooled.size();
  for (std::size_t i = 0; i < heads; ++i) {
    for (std::size_t j = 0; j < heads; ++j) {
      TokenAggregator agg(aggregation);
      const auto& tokens = reuse_pooled[j];
      for (std::size_t q = 0; q < tokens.size(); ++q) {
        agg.add(sim_score(tokens[q], sets[anchor][i][q], sets[reuse][j][q]));
      }
      if (auto value = agg.result()) {
        sums[i * heads + j] += *value;
        ++counts[i * heads + j];
      }
    }
  }
}

HeadSimilarity finish(std::size_t heads, const std::vector<double>& sums,
                      const std::vector<std::size_t>& counts) {
  HeadSimilarity result;
  result.num_kv_heads = heads;
  result.values.assign(heads * heads, 0.0);
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (counts[i] > 0) result.values[i] = sums[i] / static_cast<double>(counts[i]);
  }
  return result;
}

}  // namespace

HeadSimilarity head_similarity(std::span<const AttentionTrace> traces, std::size_t anchor_layer,
                               std::size_t reuse_layer, std::size_t k,
                               TokenAggregation aggregation) {
  check_traces(traces);
  const auto& d0 = traces[0].dims;
  if (anchor_layer >= d0.num_layers || reuse_layer >= d0.num_layers) {
    throw InvalidArgument("head_similarity: layer out of range");
  }
  if (k == 0) throw InvalidArgument("head_similarity: k must be >= 1");
  const std::size_t heads = d0.num_kv_heads;
  std::vector<double> sums(heads * heads, 0.0);
  std::vector<std::size_t> counts(heads * heads, 0);
  for (const auto& trace : traces) {
    const auto& d = trace.dims;
    const auto decode = make_tiles(d.seq_len, Phase::decode, d.num_query_heads, d.num_kv_heads);
    const std::size_t needed[] = {anchor_layer, reuse_layer};
    const auto sets = token_sets(trace, decode, k,
                                 std::span(needed, anchor_layer == reuse_layer ? 1 : 2));
    const auto reuse_pooled = pooled_layer(trace, reuse_layer, decode);
    accumulate_head_pair(reuse_pooled, sets, anchor_layer, reuse_layer, aggregation, sums, counts);
  }
  return finish(heads, sums, counts);
}

HeadMap compute_head_map(const HeadSimilarity& sims, std::size_t anchor_layer,
                         std::size_t reuse_layer) {
  const std::size_t heads = sims.num_kv_heads;
  if (sims.values.size() != heads * heads) {
    throw InvalidArgument("compute_head_map: matrix is not square");
  }
  HeadMap map;
  map.anchor_layer = anchor_layer;
  map.reuse_layer = reuse_layer;
  map.mode = HeadMapMode::remapped;
  map.map.resize(heads);
  for (std::size_t j = 0; j < heads; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < heads; ++i) {
      if (sims.at(i, j) > sims.at(best, j)) best = i;
    }
    map.map[j] = best;
  }
  return map;
}

HeadMap identity_head_map(std::size_t num_kv_heads, std::size_t anchor_layer,
                          std::size_t reuse_layer) {
  HeadMap map;
  map.anchor_layer = anchor_layer;
  map.reuse_layer = reuse_layer;
  map.mode = HeadMapMode::identity;
  map.map.resize(num_kv_heads);
  std::iota(map.map.begin(), map.map.end(), std::size_t{0});
  return map;
}

TopKIndexSet pooled_all_heads_topk(const std::vector<std::vector<double>>& per_head,
                                   std::size_t k) {
  if (per_head.empty()) throw InvalidArgument("pooled_all_heads_topk: no heads");
  std::size_t width = 0;
  for (const auto& p : per_head) width = std::max(width, p.size());
  std::vector<double> pooled(width, 0.0);
  for (const auto& p : per_head) {
    for (std::size_t j = 0; j < p.size(); ++j) pooled[j] += p[j];
  }
  for (double& w : pooled) w /= static_cast<double>(per_head.size());
  return oracle_topk_indices(pooled, k);
}

PlanningSimilarity planning_similarity(std::span<const AttentionTrace> traces, std::size_t k,
                                       TokenAggregation token_aggregation) {
  check_traces(traces);
  if (k == 0) throw InvalidArgument("planning_similarity: k must be >= 1");
  const std::size_t layers = traces[0].dims.num_layers;
  const std::size_t heads = traces[0].dims.num_kv_heads;

  std::vector<std::size_t> all_layers(layers);
  std::iota(all_layers.begin(), all_layers.end(), std::size_t{0});

  std::vector<TileSpec> decode;
  std::vector<TokenSets> sets;
  for (const auto& trace : traces) {
    const auto& d = trace.dims;
    decode.push_back(make_tiles(d.seq_len, Phase::decode, d.num_query_heads, d.num_kv_heads));
    sets.push_back(token_sets(trace, decode.back(), k, all_layers));
  }

  PlanningSimilarity result;
  result.pairs.resize(layers * layers);
  result.matrix = SimilarityMatrix::zeros(layers);
  result.matrix.k_used = k;
  result.matrix.token_aggregation = token_aggregation;
  std::vector<std::size_t> undefined(layers, 0);

  // Column b at a time: head similarity (token mean) of every pair (a, b)
  // over all prompts picks the head maps, then per-token similarity with
  // reuse heads routed through them is averaged over reuse heads and
  // aggregated over tokens and prompts.
  parallel_for(layers, [&](std::size_t b) {
    std::vector<PooledLayer> reuse_pooled;
    for (std::size_t p = 0; p < traces.size(); ++p) {
      reuse_pooled.push_back(pooled_layer(traces[p], b, decode[p]));
    }
    for (std::size_t a = 0; a <= b; ++a) {
      std::vector<double> sums(heads * heads, 0.0);
      std::vector<std::size_t> counts(heads * heads, 0);
      for (std::size_t p = 0; p < traces.size(); ++p) {
        accumulate_head_pair(reuse_pooled[p], sets[p], a, b, TokenAggregation::mean, sums,
                             counts);
      }
      result.pairs[a * layers + b] = finish(heads, sums, counts);
      const auto map = compute_head_map(result.pairs[a * layers + b], a, b).map;

      double entry_sum = 0.0;
      std::size_t entry_count = 0;
      for (std::size_t p = 0; p < traces.size(); ++p) {
        TokenAggregator agg(token_aggregation);
        for (std::size_t q = 0; q < traces[p].dims.seq_len; ++q) {
          double sum = 0.0;
          std::size_t defined = 0;
          for (std::size_t j = 0; j < heads; ++j) {
            const auto s =
                sim_score(reuse_pooled[p][j][q], sets[p][a][map[j]][q], sets[p][b][j][q]);
            if (s) {
              sum += *s;
              ++defined;
            }
          }
          agg.add(defined > 0 ? std::optional<double>(sum / static_cast<double>(defined))
                              : std::nullopt);
        }
        undefined[b] += agg.undefined();
        if (auto value = agg.result()) {
          entry_sum += *value;
          ++entry_count;
        }
      }
      if (entry_count > 0) {
        result.matrix.at(a, b) = entry_sum / static_cast<double>(entry_count);
      }
    }
  });
  for (auto u : undefined) result.matrix.undefined_scores += u;
  return result;
}

}  // namespace kascade
