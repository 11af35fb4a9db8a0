// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "kascade/error.hpp"
#include "kascade/planner.hpp"
#include "oracles.hpp"

using namespace kascade;

namespace {

SimilarityMatrix random_matrix(std::size_t n, std::mt19937& rng, bool coarse = false,
                               bool unit_diagonal = false) {
  auto s = SimilarityMatrix::zeros(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> c(0, 3);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) s.at(a, b) = coarse ? c(rng) / 4.0 : u(rng);
    if (unit_diagonal) s.at(a, a) = 1.0;
  }
  return s;
}

}  // namespace

TEST_CASE("objective hand cases") {
  auto one = SimilarityMatrix::zeros(1);
  one.at(0, 0) = 0.7;
  CHECK(objective(one, {0}) == 0.7);

  auto s = SimilarityMatrix::zeros(3);
  s.values = {1.0, 0.5, 0.25, 0.0, 1.0, 0.75, 0.0, 0.0, 1.0};
  CHECK(objective(s, {0, 2}) == 1.0 + 0.5 + 1.0);
  CHECK(objective(s, {0}) == 1.75);

  auto id = SimilarityMatrix::zeros(6);
  for (std::size_t i = 0; i < 6; ++i) id.at(i, i) = 1.0;
  CHECK(objective(id, {0, 2, 5}) == 3.0);
  CHECK(objective(id, {0, 1, 2, 3}) == 4.0);
}

TEST_CASE("anchor validation") {
  CHECK_NOTHROW(validate_anchors({0, 3, 4}, 5));
  CHECK_THROWS_AS(validate_anchors({}, 5), InvalidArgument);
  CHECK_THROWS_AS(validate_anchors({1, 3}, 5), InvalidArgument);
  CHECK_THROWS_AS(validate_anchors({0, 3, 3}, 5), InvalidArgument);
  CHECK_THROWS_AS(validate_anchors({0, 5}, 5), InvalidArgument);
}

TEST_CASE("select anchors edge cases") {
  std::mt19937 rng(1);
  const auto s = random_matrix(6, rng);
  const auto all = select_anchors(s, 6);
  CHECK(all.anchors == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  CHECK(exhaustive_select(s, 6).anchors == all.anchors);
  const auto single = select_anchors(s, 1);
  CHECK(single.anchors == std::vector<std::size_t>{0});
  double row = 0.0;
  for (std::size_t l = 0; l < 6; ++l) row += s.at(0, l);
  CHECK(single.objective_value == doctest::Approx(row));
  CHECK_THROWS_AS(select_anchors(s, 7), InvalidArgument);
  CHECK_THROWS_AS(select_anchors(s, 0), InvalidArgument);
  CHECK(single.budget == 1);
  CHECK(single.source_digest == similarity_digest(s));
}

TEST_CASE("trailing-segment hand case") {
  // Row 0 all ones; anchor j then scores its own row from j on.
  auto s = SimilarityMatrix::zeros(4);
  for (std::size_t l = 0; l < 4; ++l) s.at(0, l) = 1.0;
  s.at(1, 1) = 1.0;
  s.at(1, 2) = 1.0;
  s.at(1, 3) = 1.0;
  s.at(2, 2) = 1.0;
  s.at(2, 3) = 0.9;
  s.at(3, 3) = 1.0;
  // Every choice ties at 4.0: the lexicographically smallest wins.
  CHECK(exhaustive_select(s, 2).anchors == std::vector<std::size_t>{0, 1});
  CHECK(select_anchors(s, 2).anchors == std::vector<std::size_t>{0, 1});
  s.at(1, 3) = 0.5;
  CHECK(exhaustive_select(s, 2).anchors == std::vector<std::size_t>{0, 3});
  CHECK(select_anchors(s, 2).anchors == std::vector<std::size_t>{0, 3});
}

TEST_CASE("dynamic program matches brute force") {
  std::mt19937 rng(2026);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + trial % 11;
    const std::size_t m = 1 + (trial / 11) % std::min<std::size_t>(n, 5);
    const auto s = random_matrix(n, rng, trial % 3 == 0);
    const auto dp = select_anchors(s, m);
    const auto ex = exhaustive_select(s, m);
    CHECK(dp.objective_value == ex.objective_value);
    CHECK(dp.anchors == ex.anchors);
    CHECK(dp.anchors.size() == m);
    CHECK(dp.objective_value == objective(s, dp.anchors));
    CHECK(dp.objective_value == doctest::Approx(oracle::brute_force_best(s.values, n, m)));
    CHECK(oracle::anchor_objective(s.values, n, dp.anchors) ==
          doctest::Approx(dp.objective_value));
  }
}

TEST_CASE("planner properties") {
  // Budget monotonicity needs each diagonal entry to dominate its column, as
  // in any unweighted similarity matrix: the extra anchor then goes on the
  // last non-anchor layer at no loss.
  std::mt19937 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const auto s = random_matrix(10, rng, false, true);
    double prev = -1.0;
    for (std::size_t m = 1; m <= 10; ++m) {
      const auto plan = select_anchors(s, m);
      CHECK(plan.objective_value >= prev);
      prev = plan.objective_value;
    }
    auto scaled = s;
    for (double& v : scaled.values) v *= 4.0;  // exact in binary
    CHECK(select_anchors(scaled, 4).anchors == select_anchors(s, 4).anchors);
  }
}

TEST_CASE("exhaustive bound") {
  auto s = SimilarityMatrix::zeros(40);
  CHECK_THROWS_AS(exhaustive_select(s, 8), UnsupportedOperation);
}

TEST_CASE("similarity digest") {
  std::mt19937 rng(3);
  auto s = random_matrix(5, rng);
  const auto d = similarity_digest(s);
  CHECK(d.size() == 16);
  CHECK(similarity_digest(s) == d);
  s.at(1, 2) += 1e-12;
  CHECK(similarity_digest(s) != d);
}
