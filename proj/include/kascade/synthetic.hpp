// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kascade/trace.hpp"

namespace kascade {

// Synthetic traces with controllable cross-layer and cross-head structure.
//
// Keys of layer l are K_l = rho * K_base + sqrt(1 - rho^2) * noise_l, so rho
// sets how much the identity of heavy keys carries over between layers.
// Queries are shared by all layers: each is a scaled sum of a few base keys
// (position 0, its own position, and earlier heavy hitters) plus noise, which
// with small temperatures yields heavy-tailed softmax rows. Values follow
// the same mixing as keys. With rho = 1 every layer is an exact copy of the
// base, up to the optional per-layer kv-head permutation (layer l's kv head h
// holds base head perm[l][h], together with that head's query group).
//
// When dims.model_dim > 0, X/Y hidden states are drawn with
// cos(x_l, y_l) ~ 0.9 * l / (L - 1), so attention matters less deeper in.
struct SynthConfig {
  TraceDims dims;
  std::uint64_t seed = 0;
  double layer_correlation = 0.95;
  std::vector<std::vector<std::size_t>> head_permutations;  // empty or [L][Hkv]
  double heavy_tail_temperature = 0.25;
  std::size_t hot_keys = 4;
  // Hot keys beyond the sink and the diagonal are drawn from a pool of this
  // many positions per kv head (0 = uniform over the visible prefix).
  std::size_t heavy_hitter_pool = 32;
  // Correlation of the query noise of heads sharing a kv head.
  double group_query_correlation = 0.5;
  std::string prompt_id = "synthetic";
};

AttentionTrace generate_synthetic(const SynthConfig& config);

// Random kv-head permutation per layer, layer 0 the identity.
std::vector<std::vector<std::size_t>> random_head_permutations(std::size_t num_layers,
                                                               std::size_t num_kv_heads,
                                                               std::uint64_t seed);

}  // namespace kascade
