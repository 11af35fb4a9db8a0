// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>

#include "kascade/error.hpp"
#include "kascade/sparsity.hpp"
#include "kascade/synthetic.hpp"
#include "kascade/trace_io.hpp"

using namespace kascade;

TEST_CASE("generation is deterministic and seed dependent") {
  SynthConfig c;
  c.dims = {3, 4, 2, 8, 32, 6};
  c.seed = 99;
  const auto a = generate_synthetic(c);
  CHECK(encode_trace(a) == encode_trace(generate_synthetic(c)));
  c.seed = 100;
  CHECK_FALSE(generate_synthetic(c) == a);
  CHECK_NOTHROW(a.validate_shape());
  CHECK(a.has_hidden_states());
}

TEST_CASE("rho = 1 copies every layer") {
  SynthConfig c;
  c.dims = {4, 4, 2, 8, 16, 0};
  c.layer_correlation = 1.0;
  const auto t = generate_synthetic(c);
  for (std::size_t l = 1; l < 4; ++l) {
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t i = 0; i < 16; ++i) {
        CHECK(std::ranges::equal(t.k_row(l, h, i), t.k_row(0, h, i)));
        CHECK(std::ranges::equal(t.v_row(l, h, i), t.v_row(0, h, i)));
      }
    }
    for (std::size_t h = 0; h < 4; ++h) {
      for (std::size_t i = 0; i < 16; ++i) CHECK(std::ranges::equal(t.q_row(l, h, i), t.q_row(0, h, i)));
    }
  }
}

TEST_CASE("head permutations move whole groups") {
  SynthConfig c;
  c.dims = {2, 6, 3, 4, 8, 0};
  c.layer_correlation = 1.0;
  c.head_permutations = {{0, 1, 2}, {2, 0, 1}};
  const auto t = generate_synthetic(c);
  for (std::size_t h = 0; h < 3; ++h) {
    const std::size_t base = c.head_permutations[1][h];
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(std::ranges::equal(t.k_row(1, h, i), t.k_row(0, base, i)));
      for (std::size_t r = 0; r < 2; ++r) {
        CHECK(std::ranges::equal(t.q_row(1, h * 2 + r, i), t.q_row(0, base * 2 + r, i)));
      }
    }
  }
  const auto perms = random_head_permutations(5, 4, 1);
  CHECK(perms[0] == std::vector<std::size_t>{0, 1, 2, 3});
  for (auto p : perms) {
    std::sort(p.begin(), p.end());
    CHECK(p == std::vector<std::size_t>{0, 1, 2, 3});
  }
  CHECK(random_head_permutations(5, 4, 1) == perms);
}

TEST_CASE("correlation controls cross-layer similarity") {
  SynthConfig c;
  c.dims = {3, 2, 2, 16, 256, 0};
  c.seed = 5;
  c.layer_correlation = 0.95;
  const auto hi = generate_synthetic(c);
  c.layer_correlation = 0.0;
  const auto lo = generate_synthetic(c);
  const SimilarityOptions opts{64, TokenAggregation::mean, SimilarityMode::layer_pooled};
  const auto s_hi = similarity_matrix(std::span(&hi, 1), opts);
  const auto s_lo = similarity_matrix(std::span(&lo, 1), opts);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) CHECK(s_lo.at(a, b) + 0.05 < s_hi.at(a, b));
  }
}

TEST_CASE("hidden states make deeper layers matter less") {
  SynthConfig c;
  c.dims = {4, 2, 1, 4, 64, 32};
  const auto t = generate_synthetic(c);
  const auto w = layer_importance(std::span(&t, 1)).weights;
  CHECK(w[0] > w[3]);
  CHECK(w[0] == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("generator rejects bad configs") {
  SynthConfig c;
  c.dims = {2, 3, 2, 4, 4, 0};
  CHECK_THROWS_AS(generate_synthetic(c), InvalidArgument);
  c.dims = {2, 4, 2, 4, 4, 0};
  c.layer_correlation = 1.5;
  CHECK_THROWS_AS(generate_synthetic(c), InvalidArgument);
  c.layer_correlation = 0.5;
  c.head_permutations = {{0, 1}, {1, 1}};
  CHECK_THROWS_AS(generate_synthetic(c), InvalidArgument);
  c.head_permutations = {{0, 1}};
  CHECK_THROWS_AS(generate_synthetic(c), InvalidArgument);
  c.head_permutations.clear();
  c.heavy_tail_temperature = 0.0;
  CHECK_THROWS_AS(generate_synthetic(c), InvalidArgument);
}
