// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/trace.hpp"

#include "kascade/error.hpp"

namespace kascade {

std::size_t q_size(const TraceDims& d) {
  return d.num_layers * d.num_query_heads * d.seq_len * d.head_dim;
}

std::size_t kv_size(const TraceDims& d) {
  return d.num_layers * d.num_kv_heads * d.seq_len * d.head_dim;
}

std::size_t hidden_size(const TraceDims& d) {
  return d.num_layers * d.seq_len * d.model_dim;
}

AttentionTrace AttentionTrace::zeros(const TraceDims& dims, std::string prompt_id) {
  AttentionTrace t;
  t.dims = dims;
  t.prompt_id = std::move(prompt_id);
  t.q.assign(q_size(dims), 0.0f);
  t.k.assign(kv_size(dims), 0.0f);
  t.v.assign(kv_size(dims), 0.0f);
  if (dims.model_dim > 0) {
    t.x.assign(hidden_size(dims), 0.0f);
    t.y.assign(hidden_size(dims), 0.0f);
  }
  return t;
}

namespace {

std::size_t head_offset(const TraceDims& d, std::size_t heads, std::size_t layer,
                        std::size_t head, std::size_t token) {
  return ((layer * heads + head) * d.seq_len + token) * d.head_dim;
}

}  // namespace

std::span<const float> AttentionTrace::q_row(std::size_t l, std::size_t h, std::size_t t) const {
  return {q.data() + head_offset(dims, dims.num_query_heads, l, h, t), dims.head_dim};
}
std::span<const float> AttentionTrace::k_row(std::size_t l, std::size_t h, std::size_t t) const {
  return {k.data() + head_offset(dims, dims.num_kv_heads, l, h, t), dims.head_dim};
}
std::span<const float> AttentionTrace::v_row(std::size_t l, std::size_t h, std::size_t t) const {
  return {v.data() + head_offset(dims, dims.num_kv_heads, l, h, t), dims.head_dim};
}
std::span<const float> AttentionTrace::x_row(std::size_t l, std::size_t t) const {
  return {x.data() + (l * dims.seq_len + t) * dims.model_dim, dims.model_dim};
}
std::span<const float> AttentionTrace::y_row(std::size_t l, std::size_t t) const {
  return {y.data() + (l * dims.seq_len + t) * dims.model_dim, dims.model_dim};
}
std::span<float> AttentionTrace::q_row(std::size_t l, std::size_t h, std::size_t t) {
  return {q.data() + head_offset(dims, dims.num_query_heads, l, h, t), dims.head_dim};
}
std::span<float> AttentionTrace::k_row(std::size_t l, std::size_t h, std::size_t t) {
  return {k.data() + head_offset(dims, dims.num_kv_heads, l, h, t), dims.head_dim};
}
std::span<float> AttentionTrace::v_row(std::size_t l, std::size_t h, std::size_t t) {
  return {v.data() + head_offset(dims, dims.num_kv_heads, l, h, t), dims.head_dim};
}
std::span<float> AttentionTrace::x_row(std::size_t l, std::size_t t) {
  return {x.data() + (l * dims.seq_len + t) * dims.model_dim, dims.model_dim};
}
std::span<float> AttentionTrace::y_row(std::size_t l, std::size_t t) {
  return {y.data() + (l * dims.seq_len + t) * dims.model_dim, dims.model_dim};
}

void AttentionTrace::validate_shape() const {
  const auto& d = dims;
  if (d.num_layers == 0 || d.num_query_heads == 0 || d.num_kv_heads == 0 ||
      d.head_dim == 0 || d.seq_len == 0) {
    throw InvalidArgument("trace dimensions must all be positive");
  }
  if (d.num_query_heads % d.num_kv_heads != 0) {
    throw InvalidArgument("query heads (" + std::to_string(d.num_query_heads) +
                          ") must be a multiple of kv heads (" +
                          std::to_string(d.num_kv_heads) + ")");
  }
  if (q.size() != q_size(d) || k.size() != kv_size(d) || v.size() != kv_size(d)) {
    throw InvalidArgument("Q/K/V tensor sizes disagree with trace dimensions");
  }
  const std::size_t hidden = d.model_dim > 0 ? hidden_size(d) : 0;
  if (x.size() != hidden || y.size() != hidden) {
    throw InvalidArgument("X/Y tensor sizes disagree with trace dimensions");
  }
}

}  // namespace kascade
