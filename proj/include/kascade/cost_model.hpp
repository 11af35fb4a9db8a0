// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kascade/types.hpp"

namespace kascade {

// Per-layer attention time of each layer kind, in ms or relative to a dense
// layer (1.0).
struct KindTimes {
  double anchor0 = 1.0;
  double anchor = 1.0;
  double reuse = 1.0;
};

struct CostParams {
  Phase phase = Phase::decode;
  std::size_t num_layers = 32;
  std::size_t num_anchors = 5;
  double topk_fraction = 0.1;
  std::size_t seq_len = 0;
  double dense_layer_time = 1.0;  // baseline per-layer time, same unit as KindTimes
};

struct CostReport {
  double kascade_time = 0.0;
  double dense_time = 0.0;
  double speedup = 0.0;
  // Contribution of each kind to kascade_time (weights already applied).
  KindTimes weighted;
};

// time = (t_anchor0 + (M-1) t_anchor + (L-M) t_reuse) / L,
// speedup = dense_layer_time / time.
CostReport weighted_pipeline_time(const CostParams& params, const KindTimes& times);

// One measured row: dense baselines and per-kind Kascade times in ms.
struct MeasuredRow {
  Phase phase;
  std::size_t seq_len;
  int topk_percent;
  double fa3_ms;
  double tl_ms;
  double anchor0_ms;
  double anchor_ms;
  double reuse_ms;
  double kascade_ms;     // published weighted time
  double fa3_speedup;    // published
  double tl_speedup;     // published
};

// H100 microbenchmark rows (32 query heads, 8 kv heads, head dim 128, fp16;
// 32 layers with 5 anchors).
std::span<const MeasuredRow> measured_rows();

// "table3-<phase>-<seq>-k<percent>", e.g. table3-decode-131072-k10.
std::string preset_name(const MeasuredRow& row);
std::optional<MeasuredRow> find_preset(const std::string& name);

// Fitted per-pass coefficients, in units of a dense layer:
//   reuse   = fraction + gather
//   anchor  = pass1 + pass2 + topk_slope * fraction + reuse
//   anchor0 = 1 + pass2 + topk_slope * fraction
struct RatioModel {
  double gather = 0.0;
  double pass1 = 0.0;
  double pass2 = 0.0;
  double topk_slope = 0.0;
  double rms_residual = 0.0;
  std::size_t rows_used = 0;
};

// Below this length fixed overheads dominate and the model is unreliable.
inline constexpr std::size_t kRatioModelMinSeqLen = 16384;
// Rows used for fitting.
inline constexpr std::size_t kRatioFitMinSeqLen = 65536;

// Least-squares fit on the measured rows of one phase with seq >= min_seq.
RatioModel fit_ratio_model(Phase phase, std::size_t min_seq = kRatioFitMinSeqLen);

struct RatioPrediction {
  KindTimes ratios;
  bool valid_length = true;  // false when seq_len < kRatioModelMinSeqLen
};

RatioPrediction predict_ratios(Phase phase, double topk_fraction, std::size_t seq_len);

}  // namespace kascade
