// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/planner.hpp"

#include <limits>

#include "kascade/digest.hpp"
#include "kascade/error.hpp"

namespace kascade {

namespace {

// seg[i][j] = S[i][i] + ... + S[i][j-1], accumulated left to right.
std::vector<double> segment_sums(const SimilarityMatrix& s) {
  const std::size_t n = s.num_layers;
  std::vector<double> seg((n + 1) * (n + 1), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = i + 1; j <= n; ++j) {
      acc += s.at(i, j - 1);
      seg[i * (n + 1) + j] = acc;
    }
  }
  return seg;
}

double segment(const SimilarityMatrix& s, std::size_t begin, std::size_t end) {
  double acc = 0.0;
  for (std::size_t l = begin; l < end; ++l) acc += s.at(begin, l);
  return acc;
}

void check_budget(const SimilarityMatrix& s, std::size_t budget) {
  if (s.num_layers == 0 || s.values.size() != s.num_layers * s.num_layers) {
    throw InvalidArgument("anchor selection: malformed similarity matrix");
  }
  if (budget == 0 || budget > s.num_layers) {
    throw InvalidArgument("anchor selection: budget M=" + std::to_string(budget) +
                          " must be in [1, L=" + std::to_string(s.num_layers) + "]");
  }
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    result = result * (n - k + i) / i;
    if (result > cap) return cap + 1;
  }
  return result;
}

}  // namespace

void validate_anchors(const std::vector<std::size_t>& anchors, std::size_t num_layers) {
  if (anchors.empty() || anchors[0] != 0) {
    throw InvalidArgument("anchor set must start with layer 0");
  }
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (anchors[i] >= num_layers) throw InvalidArgument("anchor layer out of range");
    if (i > 0 && anchors[i] <= anchors[i - 1]) {
      throw InvalidArgument("anchor layers must be strictly increasing");
    }
  }
}

double objective(const SimilarityMatrix& s, const std::vector<std::size_t>& anchors) {
  validate_anchors(anchors, s.num_layers);
  double total = 0.0;
  for (std::size_t m = 0; m < anchors.size(); ++m) {
    const std::size_t end = m + 1 < anchors.size() ? anchors[m + 1] : s.num_layers;
    total += segment(s, anchors[m], end);
  }
  return total;
}

AnchorPlanCore select_anchors(const SimilarityMatrix& s, std::size_t budget) {
  check_budget(s, budget);
  const std::size_t n = s.num_layers;
  const auto seg = segment_sums(s);
  constexpr double kUnset = -std::numeric_limits<double>::infinity();

  // best[m][j]: max objective of m anchors whose segments cover [0, j);
  // sets[m][j]: lexicographically smallest anchor set achieving it.
  std::vector<std::vector<double>> best(budget + 1, std::vector<double>(n + 1, kUnset));
  std::vector<std::vector<std::vector<std::size_t>>> sets(
      budget + 1, std::vector<std::vector<std::size_t>>(n + 1));
  for (std::size_t j = 1; j <= n; ++j) {
    best[1][j] = 0.0 + seg[j];
    sets[1][j] = {0};
  }
  for (std::size_t m = 2; m <= budget; ++m) {
    for (std::size_t j = m; j <= n; ++j) {
      // The m-th anchor sits at i and covers [i, j).
      for (std::size_t i = m - 1; i < j; ++i) {
        if (best[m - 1][i] == kUnset) continue;
        const double value = best[m - 1][i] + seg[i * (n + 1) + j];
        std::vector<std::size_t> candidate = sets[m - 1][i];
        candidate.push_back(i);
        if (value > best[m][j] || (value == best[m][j] && candidate < sets[m][j])) {
          best[m][j] = value;
          sets[m][j] = std::move(candidate);
        }
      }
    }
  }

  AnchorPlanCore core;
  core.anchors = sets[budget][n];
  core.budget = budget;
  core.objective_value = best[budget][n];
  core.source_digest = similarity_digest(s);
  return core;
}

AnchorPlanCore exhaustive_select(const SimilarityMatrix& s, std::size_t budget) {
  check_budget(s, budget);
  const std::size_t n = s.num_layers;
  if (binomial(n - 1, budget - 1, kExhaustiveLimit) > kExhaustiveLimit) {
    throw UnsupportedOperation("exhaustive_select: more than " +
                               std::to_string(kExhaustiveLimit) + " candidate sets");
  }

  // Combinations of budget-1 layers from 1..n-1 in lexicographic order; only
  // a strictly better value replaces the incumbent.
  std::vector<std::size_t> anchors(budget);
  for (std::size_t m = 0; m < budget; ++m) anchors[m] = m;
  AnchorPlanCore core;
  core.budget = budget;
  core.objective_value = -std::numeric_limits<double>::infinity();
  while (true) {
    const double value = objective(s, anchors);
    if (value > core.objective_value) {
      core.objective_value = value;
      core.anchors = anchors;
    }
    std::size_t pos = budget;
    while (pos > 1 && anchors[pos - 1] == n - budget + pos - 1) --pos;
    if (pos <= 1) break;
    ++anchors[pos - 1];
    for (std::size_t m = pos; m < budget; ++m) anchors[m] = anchors[m - 1] + 1;
  }
  core.source_digest = similarity_digest(s);
  return core;
}

std::string similarity_digest(const SimilarityMatrix& s) {
  Fnv1a hash;
  hash.add(std::uint64_t{s.num_layers});
  hash.add(std::uint64_t{s.k_used});
  hash.add(static_cast<std::uint64_t>(s.token_aggregation));
  hash.add(std::uint64_t{s.importance_weighted ? 1u : 0u});
  for (double v : s.values) hash.add(v);
  return hash.hex();
}

}  // namespace kascade
