// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace kascade {

// A post-softmax row over the keys it may attend to.
struct AttentionDistribution {
  std::vector<double> weights;
  std::vector<std::uint32_t> key_positions;  // strictly increasing
};

// Sorted key positions selected for one tile of one kv head.
struct TopKIndexSet {
  std::size_t kv_head = 0;
  std::size_t tile_id = 0;
  std::vector<std::uint32_t> indices;
  std::size_t k = 0;

  bool operator==(const TopKIndexSet&) const = default;
};

enum class Phase { prefill, decode };

struct Tile {
  std::size_t start_token = 0;  // inclusive
  std::size_t end_token = 0;    // exclusive
  std::size_t kv_head = 0;

  bool operator==(const Tile&) const = default;
};

// Query tiles sharing one Top-k set. Tiles are stored kv-head major: all
// tiles of kv head 0 in token order, then kv head 1, ...
struct TileSpec {
  Phase phase = Phase::prefill;
  std::size_t tile_size = 0;        // queries per tile
  std::size_t tokens_per_tile = 0;  // tile_size in prefill, 1 in decode
  std::size_t seq_len = 0;
  std::size_t num_kv_heads = 0;
  std::vector<Tile> tiles;

  std::size_t tiles_per_head() const {
    return (seq_len + tokens_per_tile - 1) / tokens_per_tile;
  }
  std::size_t tile_index(std::size_t kv_head, std::size_t token) const {
    return kv_head * tiles_per_head() + token / tokens_per_tile;
  }
};

// One Top-k set per tile; sets[i] belongs to spec.tiles[i].
struct TileSelection {
  TileSpec spec;
  std::vector<TopKIndexSet> sets;
};

// Post-softmax probabilities of one head for every query row. Causal rows
// have length row+1, non-causal rows length N; row r holds key positions
// 0..length-1.
class AttentionMatrix {
 public:
  AttentionMatrix() = default;
  AttentionMatrix(std::size_t seq_len, bool causal);

  std::size_t rows() const { return seq_len_; }
  bool causal() const { return causal_; }
  std::size_t row_length(std::size_t r) const { return causal_ ? r + 1 : seq_len_; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + offset(r), row_length(r)};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + offset(r), row_length(r)}; }

 private:
  std::size_t offset(std::size_t r) const { return causal_ ? r * (r + 1) / 2 : r * seq_len_; }

  std::size_t seq_len_ = 0;
  bool causal_ = true;
  std::vector<double> data_;
};

}  // namespace kascade
