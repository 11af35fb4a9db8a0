// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kascade {

struct TraceDims {
  std::size_t num_layers = 0;
  std::size_t num_query_heads = 0;
  std::size_t num_kv_heads = 0;
  std::size_t head_dim = 0;
  std::size_t seq_len = 0;
  // Width of the attention-block hidden states; 0 when X/Y are absent.
  std::size_t model_dim = 0;

  std::size_t group_size() const { return num_query_heads / num_kv_heads; }
  // Query heads h*group_size() .. (h+1)*group_size()-1 read kv head h.
  std::size_t kv_head_of(std::size_t query_head) const {
    return query_head / group_size();
  }

  bool operator==(const TraceDims&) const = default;
};

// Recorded Q/K/V (and optionally attention input/output hidden states) of
// every layer for one prompt. Storage is row-major:
//   q: [layer][query_head][token][dim]
//   k, v: [layer][kv_head][token][dim]
//   x, y: [layer][token][model_dim]
struct AttentionTrace {
  TraceDims dims;
  std::string prompt_id;
  std::vector<float> q;
  std::vector<float> k;
  std::vector<float> v;
  std::vector<float> x;
  std::vector<float> y;

  // Allocates zeroed tensors for `dims`; X/Y allocated when model_dim > 0.
  static AttentionTrace zeros(const TraceDims& dims, std::string prompt_id = {});

  bool has_hidden_states() const { return dims.model_dim > 0 && !x.empty(); }

  std::span<const float> q_row(std::size_t layer, std::size_t head, std::size_t token) const;
  std::span<const float> k_row(std::size_t layer, std::size_t kv_head, std::size_t token) const;
  std::span<const float> v_row(std::size_t layer, std::size_t kv_head, std::size_t token) const;
  std::span<const float> x_row(std::size_t layer, std::size_t token) const;
  std::span<const float> y_row(std::size_t layer, std::size_t token) const;

  std::span<float> q_row(std::size_t layer, std::size_t head, std::size_t token);
  std::span<float> k_row(std::size_t layer, std::size_t kv_head, std::size_t token);
  std::span<float> v_row(std::size_t layer, std::size_t kv_head, std::size_t token);
  std::span<float> x_row(std::size_t layer, std::size_t token);
  std::span<float> y_row(std::size_t layer, std::size_t token);

  // Throws InvalidArgument when the header is inconsistent (zero dims,
  // Hq not a multiple of Hkv) or tensor sizes disagree with it.
  void validate_shape() const;

  bool operator==(const AttentionTrace&) const = default;
};

std::size_t q_size(const TraceDims& dims);
std::size_t kv_size(const TraceDims& dims);
std::size_t hidden_size(const TraceDims& dims);

}  // namespace kascade
