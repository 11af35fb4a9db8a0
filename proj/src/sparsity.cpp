// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "kascade/attention.hpp"
#include "kascade/error.hpp"
#include "kascade/head_map.hpp"
#include "kascade/parallel.hpp"

namespace kascade {

SimilarityMatrix SimilarityMatrix::zeros(std::size_t num_layers) {
  SimilarityMatrix s;
  s.num_layers = num_layers;
  s.values.assign(num_layers * num_layers, 0.0);
  return s;
}

void TokenAggregator::add(std::optional<double> score) {
  if (!score) {
    ++undefined_;
    return;
  }
  min_ = count_ == 0 ? *score : std::min(min_, *score);
  sum_ += *score;
  ++count_;
}

std::optional<double> TokenAggregator::result() const {
  if (count_ == 0) return std::nullopt;
  return mode_ == TokenAggregation::min ? min_ : sum_ / static_cast<double>(count_);
}

std::vector<double> row_mass_coverage(const AttentionMatrix& probs, std::size_t k) {
  std::vector<double> coverage(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto row = probs.row(r);
    const auto set = oracle_topk_indices(row, k);
    double mass = 0.0;
    for (auto j : set.indices) mass += row[j];
    coverage[r] = std::min(mass, 1.0);
  }
  return coverage;
}

std::vector<double> mass_coverage(const std::vector<AttentionMatrix>& probs, std::size_t k) {
  std::vector<double> per_head;
  per_head.reserve(probs.size());
  for (const auto& p : probs) {
    const auto rows = row_mass_coverage(p, k);
    double sum = 0.0;
    for (double c : rows) sum += c;
    per_head.push_back(rows.empty() ? 0.0 : sum / static_cast<double>(rows.size()));
  }
  return per_head;
}

std::vector<double> coverage_table(const AttentionTrace& trace, std::size_t k) {
  const auto& d = trace.dims;
  std::vector<double> table(d.num_layers * d.num_query_heads);
  parallel_for(d.num_layers * d.num_query_heads, [&](std::size_t i) {
    const std::size_t layer = i / d.num_query_heads;
    const std::size_t head = i % d.num_query_heads;
    std::vector<AttentionMatrix> one;
    one.push_back(head_probabilities(trace, layer, head, true));
    table[i] = mass_coverage(one, k)[0];
  });
  return table;
}

AttentionMatrix layer_distribution(const std::vector<AttentionMatrix>& probs) {
  if (probs.empty()) throw InvalidArgument("layer_distribution: no heads");
  AttentionMatrix pooled(probs[0].rows(), probs[0].causal());
  for (const auto& p : probs) {
    if (p.rows() != pooled.rows() || p.causal() != pooled.causal()) {
      throw InvalidArgument("layer_distribution: head shapes differ");
    }
    for (std::size_t r = 0; r < p.rows(); ++r) {
      auto out = pooled.row(r);
      const auto in = p.row(r);
      for (std::size_t j = 0; j < in.size(); ++j) out[j] += in[j];
    }
  }
  const double heads = static_cast<double>(probs.size());
  for (std::size_t r = 0; r < pooled.rows(); ++r) {
    for (double& w : pooled.row(r)) w /= heads;
  }
  return pooled;
}

AttentionMatrix layer_distribution(const AttentionTrace& trace, std::size_t layer) {
  const auto& d = trace.dims;
  AttentionMatrix pooled(d.seq_len, true);
  for (std::size_t h = 0; h < d.num_query_heads; ++h) {
    const auto p = head_probabilities(trace, layer, h, true);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      auto out = pooled.row(r);
      const auto in = p.row(r);
      for (std::size_t j = 0; j < in.size(); ++j) out[j] += in[j];
    }
  }
  const double heads = static_cast<double>(d.num_query_heads);
  for (std::size_t r = 0; r < pooled.rows(); ++r) {
    for (double& w : pooled.row(r)) w /= heads;
  }
  return pooled;
}

std::optional<double> sim_score(std::span<const double> p_b, const TopKIndexSet& i_a,
                                const TopKIndexSet& i_b) {
  // Both masses are summed as unevaluated pairs (hi + lo) and the ratio is
  // refined once, so it is the correctly rounded quotient of the exact sums
  // in all but pathological cases; 0.7 / 0.8 from {0.5, 0.3, 0.2} gives 0.875.
  struct Pair {
    double hi = 0.0;
    double lo = 0.0;
  };
  auto mass = [&](const TopKIndexSet& set) {
    Pair sum;
    for (auto j : set.indices) {
      if (j >= p_b.size()) throw InvalidArgument("sim_score: index outside distribution support");
      const double t = sum.hi + p_b[j];
      const double z = t - sum.hi;
      sum.lo += (sum.hi - (t - z)) + (p_b[j] - z);
      sum.hi = t;
    }
    const double hi = sum.hi + sum.lo;
    return Pair{hi, sum.lo - (hi - sum.hi)};
  };
  const Pair num = mass(i_a);
  const Pair den = mass(i_b);
  if (!(den.hi > 0.0)) return std::nullopt;
  const double q = num.hi / den.hi;
  const double r = std::fma(-q, den.hi, num.hi) + num.lo - q * den.lo;
  return q + r / den.hi;
}

namespace {

void check_same_layers(std::span<const AttentionTrace> traces) {
  if (traces.empty()) throw InvalidArgument("similarity_matrix: no traces");
  for (const auto& t : traces) {
    if (t.dims.num_layers != traces[0].dims.num_layers) {
      throw InvalidArgument("similarity_matrix: traces disagree on layer count");
    }
  }
}

// Layer-pooled matrix for one prompt. Undefined entries are left nullopt.
std::vector<std::optional<double>> layer_pooled_prompt(const AttentionTrace& trace,
                                                       const SimilarityOptions& options,
                                                       std::size_t& undefined) {
  const std::size_t layers = trace.dims.num_layers;
  const std::size_t n = trace.dims.seq_len;

  std::vector<std::vector<TopKIndexSet>> sets(layers, std::vector<TopKIndexSet>(n));
  parallel_for(layers, [&](std::size_t l) {
    const auto p = layer_distribution(trace, l);
    for (std::size_t q = 0; q < n; ++q) sets[l][q] = oracle_topk_indices(p.row(q), options.k);
  });

  std::vector<std::optional<double>> entries(layers * layers);
  std::vector<std::size_t> undefined_per_b(layers, 0);
  parallel_for(layers, [&](std::size_t b) {
    const auto p_b = layer_distribution(trace, b);
    for (std::size_t a = 0; a <= b; ++a) {
      TokenAggregator agg(options.token_aggregation);
      for (std::size_t q = 0; q < n; ++q) agg.add(sim_score(p_b.row(q), sets[a][q], sets[b][q]));
      entries[a * layers + b] = agg.result();
      undefined_per_b[b] += agg.undefined();
    }
  });
  for (auto u : undefined_per_b) undefined += u;
  return entries;
}

}  // namespace

SimilarityMatrix similarity_matrix(std::span<const AttentionTrace> traces,
                                   const SimilarityOptions& options) {
  check_same_layers(traces);
  if (options.k == 0) throw InvalidArgument("similarity_matrix: k must be >= 1");
  if (options.mode == SimilarityMode::head_mapped) {
    return planning_similarity(traces, options.k, options.token_aggregation).matrix;
  }

  const std::size_t layers = traces[0].dims.num_layers;
  SimilarityMatrix result = SimilarityMatrix::zeros(layers);
  result.k_used = options.k;
  result.token_aggregation = options.token_aggregation;

  std::vector<double> sums(layers * layers, 0.0);
  std::vector<std::size_t> counts(layers * layers, 0);
  for (const auto& trace : traces) {
    const auto entries = layer_pooled_prompt(trace, options, result.undefined_scores);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i]) {
        sums[i] += *entries[i];
        ++counts[i];
      }
    }
  }
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (counts[i] > 0) result.values[i] = sums[i] / static_cast<double>(counts[i]);
  }
  return result;
}

LayerImportance layer_importance(std::span<const AttentionTrace> traces) {
  if (traces.empty()) throw InvalidArgument("layer_importance: no traces");
  const std::size_t layers = traces[0].dims.num_layers;
  LayerImportance result;
  result.weights.assign(layers, 0.0);
  std::vector<std::size_t> prompts_per_layer(layers, 0);

  for (const auto& trace : traces) {
    if (!trace.has_hidden_states()) {
      throw UnsupportedOperation("layer_importance: trace '" + trace.prompt_id +
                                 "' has no attention input/output hidden states");
    }
    if (trace.dims.num_layers != layers) {
      throw InvalidArgument("layer_importance: traces disagree on layer count");
    }
    for (std::size_t l = 0; l < layers; ++l) {
      double sum = 0.0;
      std::size_t used = 0;
      for (std::size_t t = 0; t < trace.dims.seq_len; ++t) {
        const auto x = trace.x_row(l, t);
        const auto y = trace.y_row(l, t);
        double xy = 0.0, xx = 0.0, yy = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) {
          xy += static_cast<double>(x[c]) * y[c];
          xx += static_cast<double>(x[c]) * x[c];
          yy += static_cast<double>(y[c]) * y[c];
        }
        const double nx = std::sqrt(xx);
        const double ny = std::sqrt(yy);
        if (nx < 1e-12 || ny < 1e-12) {
          ++result.skipped_tokens;
          continue;
        }
        const double cosine = std::clamp(xy / (nx * ny), -1.0, 1.0);
        sum += 1.0 - cosine;
        ++used;
      }
      if (used > 0) {
        result.weights[l] += sum / static_cast<double>(used);
        ++prompts_per_layer[l];
      }
    }
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (prompts_per_layer[l] > 0) result.weights[l] /= static_cast<double>(prompts_per_layer[l]);
  }
  result.source_prompt_count = traces.size();
  return result;
}

SimilarityMatrix apply_importance(SimilarityMatrix s, const LayerImportance& w) {
  if (w.weights.size() != s.num_layers) {
    throw InvalidArgument("apply_importance: weight vector length differs from layer count");
  }
  for (std::size_t i = 0; i < s.num_layers; ++i) {
    for (std::size_t j = 0; j < s.num_layers; ++j) s.at(i, j) *= w.weights[j];
  }
  s.importance_weighted = true;
  return s;
}

}  // namespace kascade
