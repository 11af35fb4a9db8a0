// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kascade/sparsity.hpp"

namespace kascade {

inline constexpr std::size_t kDefaultAnchorBudget = 5;

// Anchors are 0-based, strictly increasing, and always start at layer 0.
// Anchor a_m covers layers a_m .. a_{m+1}-1; the last one runs to L-1.
struct AnchorPlanCore {
  std::vector<std::size_t> anchors;
  std::size_t budget = 0;
  double objective_value = 0.0;
  std::string source_digest;  // similarity_digest() of the input matrix

  bool operator==(const AnchorPlanCore&) const = default;
};

// Sum over segments of S[a_m][l] for l in the segment. Segment sums are
// accumulated left to right so the planner and the oracle agree bit for bit.
double objective(const SimilarityMatrix& s, const std::vector<std::size_t>& anchors);

// Throws InvalidArgument unless anchors are a valid set for L layers.
void validate_anchors(const std::vector<std::size_t>& anchors, std::size_t num_layers);

// Dynamic program over (anchor count, covered prefix), O(M L^2). Among
// maximizers, returns the lexicographically smallest anchor set.
AnchorPlanCore select_anchors(const SimilarityMatrix& s, std::size_t budget);

// Brute force over all C(L-1, M-1) sets; same tie-break. Throws
// UnsupportedOperation past kExhaustiveLimit candidates.
inline constexpr std::uint64_t kExhaustiveLimit = 1'000'000;
AnchorPlanCore exhaustive_select(const SimilarityMatrix& s, std::size_t budget);

// FNV-1a over the matrix header and values, as 16 hex digits.
std::string similarity_digest(const SimilarityMatrix& s);

}  // namespace kascade
