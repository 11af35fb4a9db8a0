// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "kascade/error.hpp"
#include "kascade/parallel.hpp"

namespace kascade {

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

void check_layer(const AttentionTrace& trace, std::size_t layer) {
  if (layer >= trace.dims.num_layers) {
    throw InvalidArgument("layer " + std::to_string(layer) + " out of range (L=" +
                          std::to_string(trace.dims.num_layers) + ")");
  }
}

// Writes softmax(scores) to probs. Returns false on non-finite input.
bool softmax_into(std::span<const double> scores, std::span<double> probs) {
  double max_score = -INFINITY;
  for (double s : scores) {
    if (!std::isfinite(s)) return false;
    max_score = std::max(max_score, s);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    probs[j] = std::exp(scores[j] - max_score);
    sum += probs[j];
  }
  for (double& p : probs) p /= sum;
  return true;
}

void accumulate_output(const AttentionTrace& trace, std::size_t layer, std::size_t kv_head,
                       std::span<const std::uint32_t> keys, std::span<const double> probs,
                       std::span<float> out) {
  std::vector<double> acc(out.size(), 0.0);
  for (std::size_t j = 0; j < keys.size(); ++j) {
    const auto v = trace.v_row(layer, kv_head, keys[j]);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += probs[j] * v[c];
  }
  for (std::size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<float>(acc[c]);
}

void accumulate_output_prefix(const AttentionTrace& trace, std::size_t layer,
                              std::size_t kv_head, std::span<const double> probs,
                              std::span<float> out) {
  std::vector<double> acc(out.size(), 0.0);
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const auto v = trace.v_row(layer, kv_head, j);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += probs[j] * v[c];
  }
  for (std::size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<float>(acc[c]);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kScoreBlockRows = 128;

// One layer's keys of a kv head widened to double, [N][d].
RowMatrix widen_keys(const AttentionTrace& trace, std::size_t layer, std::size_t kv_head) {
  const auto& d = trace.dims;
  RowMatrix m(d.seq_len, d.head_dim);
  for (std::size_t t = 0; t < d.seq_len; ++t) {
    const auto row = trace.k_row(layer, kv_head, t);
    for (std::size_t c = 0; c < d.head_dim; ++c) m(t, c) = row[c];
  }
  return m;
}

// Calls fn(row, scores) for every query row of one head, in row order. The
// scores cover the visible keys and are computed a block of rows at a time.
template <typename Fn>
void for_each_score_row(const AttentionTrace& trace, std::size_t layer, std::size_t head,
                        bool causal, const RowMatrix& keys, Fn&& fn) {
  const auto& d = trace.dims;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
  RowMatrix queries(kScoreBlockRows, d.head_dim);
  RowMatrix scores;
  for (std::size_t first = 0; first < d.seq_len; first += kScoreBlockRows) {
    const std::size_t rows = std::min(kScoreBlockRows, d.seq_len - first);
    const std::size_t width = causal ? first + rows : d.seq_len;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto q = trace.q_row(layer, head, first + r);
      for (std::size_t c = 0; c < d.head_dim; ++c) queries(r, c) = q[c];
    }
    scores.noalias() = queries.topRows(rows) * keys.topRows(width).transpose();
    scores *= scale;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t row = first + r;
      std::span<const double> s(scores.data() + r * width, causal ? row + 1 : width);
      for (double v : s) {
        if (!std::isfinite(v)) throw NumericError(layer, head, row);
      }
      fn(row, s);
    }
  }
}

}  // namespace

std::vector<double> softmax_row(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("softmax_row: empty input");
  std::vector<double> probs(scores.size());
  if (!softmax_into(scores, probs)) throw InvalidArgument("softmax_row: non-finite score");
  return probs;
}

std::vector<double> attention_scores(const AttentionTrace& trace, std::size_t layer,
                                     std::size_t query_head, std::size_t row, bool causal) {
  const auto& d = trace.dims;
  const std::size_t kv = d.kv_head_of(query_head);
  const std::size_t len = causal ? row + 1 : d.seq_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
  const auto q = trace.q_row(layer, query_head, row);
  std::vector<double> scores(len);
  for (std::size_t j = 0; j < len; ++j) scores[j] = dot(q, trace.k_row(layer, kv, j)) * scale;
  return scores;
}

AttentionMatrix head_probabilities(const AttentionTrace& trace, std::size_t layer,
                                   std::size_t query_head, bool causal) {
  check_layer(trace, layer);
  AttentionMatrix probs(trace.dims.seq_len, causal);
  const auto keys = widen_keys(trace, layer, trace.dims.kv_head_of(query_head));
  for_each_score_row(trace, layer, query_head, causal, keys,
                     [&](std::size_t r, std::span<const double> scores) {
                       softmax_into(scores, probs.row(r));
                     });
  return probs;
}

DenseAttention dense_attention(const AttentionTrace& trace, std::size_t layer, bool causal) {
  check_layer(trace, layer);
  const auto& d = trace.dims;
  DenseAttention result;
  result.probs.resize(d.num_query_heads);
  result.output.assign(d.num_query_heads * d.seq_len * d.head_dim, 0.0f);
  parallel_for(d.num_query_heads, [&](std::size_t h) {
    result.probs[h] = head_probabilities(trace, layer, h, causal);
    const std::size_t kv = d.kv_head_of(h);
    for (std::size_t r = 0; r < d.seq_len; ++r) {
      std::span<float> out(result.output.data() + (h * d.seq_len + r) * d.head_dim, d.head_dim);
      accumulate_output_prefix(trace, layer, kv, result.probs[h].row(r), out);
    }
  });
  return result;
}

std::vector<float> dense_output(const AttentionTrace& trace, std::size_t layer, bool causal) {
  check_layer(trace, layer);
  const auto& d = trace.dims;
  std::vector<float> output(d.num_query_heads * d.seq_len * d.head_dim, 0.0f);
  parallel_for(d.num_query_heads, [&](std::size_t h) {
    const std::size_t kv = d.kv_head_of(h);
    const auto keys = widen_keys(trace, layer, kv);
    std::vector<double> probs;
    for_each_score_row(trace, layer, h, causal, keys,
                       [&](std::size_t r, std::span<const double> scores) {
      probs.resize(scores.size());
      softmax_into(scores, probs);
      std::span<float> out(output.data() + (h * d.seq_len + r) * d.head_dim, d.head_dim);
      accumulate_output_prefix(trace, layer, kv, probs, out);
    });
  });
  return output;
}

TopKIndexSet oracle_topk_indices(std::span<const double> weights, std::size_t k) {
  if (k == 0) throw InvalidArgument("oracle_topk_indices: k must be >= 1");
  TopKIndexSet result;
  result.k = k;
  const std::size_t n = weights.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  if (k < n) {
    auto heavier = [&](std::uint32_t a, std::uint32_t b) {
      return weights[a] > weights[b] || (weights[a] == weights[b] && a < b);
    };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                     heavier);
    order.resize(k);
    std::sort(order.begin(), order.end());
  }
  result.indices = std::move(order);
  return result;
}

TopKIndexSet oracle_topk_indices(const AttentionDistribution& p, std::size_t k) {
  auto set = oracle_topk_indices(std::span<const double>(p.weights), k);
  for (auto& i : set.indices) i = p.key_positions[i];
  return set;
}

SparseAttention topk_attention(const AttentionTrace& trace, std::size_t layer,
                               const TileSelection& selection, bool causal,
                               bool with_dense_output) {
  check_layer(trace, layer);
  const auto& d = trace.dims;
  const auto& spec = selection.spec;
  if (spec.seq_len != d.seq_len || spec.num_kv_heads != d.num_kv_heads ||
      selection.sets.size() != spec.tiles_per_head() * spec.num_kv_heads) {
    throw InvalidArgument("topk_attention: tile selection does not match trace dimensions");
  }

  SparseAttention result;
  result.output.assign(d.num_query_heads * d.seq_len * d.head_dim, 0.0f);
  result.mass_recovered.assign(d.num_query_heads * d.seq_len, 0.0);
  result.fallback.assign(d.num_query_heads * d.seq_len, 0);
  if (with_dense_output) result.dense_output.assign(result.output.size(), 0.0f);

  parallel_for(d.num_query_heads, [&](std::size_t h) {
    const std::size_t kv = d.kv_head_of(h);
    std::vector<double> dense_probs;
    std::vector<double> sparse_scores;
    std::vector<double> sparse_probs;
    std::vector<std::uint32_t> keys;
    const auto key_rows = widen_keys(trace, layer, kv);
    for_each_score_row(trace, layer, h, causal, key_rows,
                       [&](std::size_t r, std::span<const double> scores) {
      const std::size_t row_index = h * d.seq_len + r;
      dense_probs.resize(scores.size());
      softmax_into(scores, dense_probs);

      const auto& set = selection.sets[spec.tile_index(kv, r)].indices;
      keys.clear();
      for (std::uint32_t j : set) {
        if (j < scores.size()) keys.push_back(j);
      }
      if (keys.empty()) {
        keys.push_back(static_cast<std::uint32_t>(r));
        result.fallback[row_index] = 1;
      }

      sparse_scores.resize(keys.size());
      sparse_probs.resize(keys.size());
      double mass = 0.0;
      for (std::size_t i = 0; i < keys.size(); ++i) {
        sparse_scores[i] = scores[keys[i]];
        mass += dense_probs[keys[i]];
      }
      softmax_into(sparse_scores, sparse_probs);
      result.mass_recovered[row_index] = std::min(mass, 1.0);

      std::span<float> out(result.output.data() + row_index * d.head_dim, d.head_dim);
      accumulate_output(trace, layer, kv, keys, sparse_probs, out);
      if (with_dense_output) {
        std::span<float> dense(result.dense_output.data() + row_index * d.head_dim, d.head_dim);
        accumulate_output_prefix(trace, layer, kv, dense_probs, dense);
      }
    });
  });
  return result;
}

}  // namespace kascade
