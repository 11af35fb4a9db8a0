// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "kascade/trace.hpp"
#include "kascade/types.hpp"

namespace kascade {

enum class TokenAggregation { mean, min };

// How per-token distributions are formed before comparing layers.
//   layer_pooled: mean over all query heads (diagnostic heat map).
//   head_mapped:  GQA-pooled per kv head, reuse heads routed through the best
//                 anchor head, averaged over reuse heads (planning input).
enum class SimilarityMode { layer_pooled, head_mapped };

// Cross-layer similarity S[a][b] (a <= b); entries below the diagonal are 0.
// Prompt aggregation is always the mean.
struct SimilarityMatrix {
  std::size_t num_layers = 0;
  std::vector<double> values;  // [L][L]
  std::size_t k_used = 0;
  TokenAggregation token_aggregation = TokenAggregation::mean;
  bool importance_weighted = false;
  // Per-token scores dropped for a zero denominator.
  std::size_t undefined_scores = 0;

  static SimilarityMatrix zeros(std::size_t num_layers);
  double at(std::size_t a, std::size_t b) const { return values[a * num_layers + b]; }
  double& at(std::size_t a, std::size_t b) { return values[a * num_layers + b]; }

  bool operator==(const SimilarityMatrix&) const = default;
};

struct LayerImportance {
  std::vector<double> weights;  // [L], each in [0, 2]
  std::size_t source_prompt_count = 0;
  std::size_t skipped_tokens = 0;  // zero-norm x or y
};

struct SimilarityOptions {
  std::size_t k = 64;
  TokenAggregation token_aggregation = TokenAggregation::mean;
  SimilarityMode mode = SimilarityMode::layer_pooled;
};

// Running mean or min of per-token scores; undefined scores are skipped.
class TokenAggregator {
 public:
  explicit TokenAggregator(TokenAggregation mode = TokenAggregation::mean) : mode_(mode) {}
  void add(std::optional<double> score);
  std::size_t count() const { return count_; }
  std::size_t undefined() const { return undefined_; }
  // Aggregate of the defined scores, nullopt if there were none.
  std::optional<double> result() const;

 private:
  TokenAggregation mode_;
  double sum_ = 0.0;
  double min_ = 0.0;
  std::size_t count_ = 0;
  std::size_t undefined_ = 0;
};

// Sum of the k largest weights of each row.
std::vector<double> row_mass_coverage(const AttentionMatrix& probs, std::size_t k);

// Mean over rows of row_mass_coverage, one value per head.
std::vector<double> mass_coverage(const std::vector<AttentionMatrix>& probs, std::size_t k);

// mass_coverage for every layer: [L][Hq], causal.
std::vector<double> coverage_table(const AttentionTrace& trace, std::size_t k);

// Mean over heads, row by row.
AttentionMatrix layer_distribution(const std::vector<AttentionMatrix>& probs);
AttentionMatrix layer_distribution(const AttentionTrace& trace, std::size_t layer);

// Share of layer b's own Top-k mass recovered by layer a's set:
// sum(P_b[I_a]) / sum(P_b[I_b]). nullopt when the denominator is zero.
std::optional<double> sim_score(std::span<const double> p_b, const TopKIndexSet& i_a,
                                const TopKIndexSet& i_b);

// All traces must share L (and Hkv in head_mapped mode).
SimilarityMatrix similarity_matrix(std::span<const AttentionTrace> traces,
                                   const SimilarityOptions& options);

// Mean over tokens, then prompts, of 1 - cos(x_l, y_l). Throws
// UnsupportedOperation when a trace has no hidden states.
LayerImportance layer_importance(std::span<const AttentionTrace> traces);

// S'[i][j] = w[j] * S[i][j].
SimilarityMatrix apply_importance(SimilarityMatrix s, const LayerImportance& w);

}  // namespace kascade
