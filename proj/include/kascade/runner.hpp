// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kascade/head_map.hpp"
#include "kascade/planner.hpp"
#include "kascade/tiles.hpp"
#include "kascade/trace.hpp"

namespace kascade {

// Everything needed to run sparse attention on a model with L layers:
// which layers select indices, how reuse heads borrow them, and how large
// the selections are.
struct AnchorPlan {
  std::size_t num_layers = 0;
  std::size_t num_kv_heads = 0;
  AnchorPlanCore core;
  // One map per non-anchor layer, ascending by reuse layer; each references
  // the most recent preceding anchor. Optional in all_heads_pooled mode.
  std::vector<HeadMap> head_maps;
  Pooling pooling = Pooling::post_softmax;
  KBudgetPolicy k_policy;
  std::size_t tile_size = kDefaultPrefillTileSize;
  HeadMapMode mode = HeadMapMode::remapped;

  bool operator==(const AnchorPlan&) const = default;
};

// Throws InvalidPlan when the plan cannot drive a trace with these dims.
void validate_plan(const AnchorPlan& plan, const TraceDims& dims);

// The anchor owning `layer`: the largest anchor <= layer.
std::size_t anchor_for(const std::vector<std::size_t>& anchors, std::size_t layer);

// Attaches head maps to an anchor set: best-head maps from `sims` when given
// (mode remapped), identity maps otherwise.
AnchorPlan make_plan(const AnchorPlanCore& core, std::size_t num_layers,
                     std::size_t num_kv_heads, const PlanningSimilarity* sims = nullptr);

struct PlanOptions {
  std::size_t budget = kDefaultAnchorBudget;
  std::size_t similarity_k = 64;
  TokenAggregation token_aggregation = TokenAggregation::min;
  bool use_importance = true;  // silently skipped when traces lack X/Y
  Pooling pooling = Pooling::post_softmax;
  KBudgetPolicy k_policy;
  std::size_t tile_size = kDefaultPrefillTileSize;
  HeadMapMode mode = HeadMapMode::remapped;
};

struct PlanResult {
  AnchorPlan plan;
  SimilarityMatrix similarity;  // as fed to the planner (weighted if used)
  std::optional<LayerImportance> importance;
};

// Head-mapped similarity, optional importance weighting, DP selection and
// head maps for the chosen anchors.
PlanResult plan_from_traces(std::span<const AttentionTrace> traces, const PlanOptions& options);

enum class LayerKind { anchor0, anchor, reuse };

struct LayerReport {
  std::size_t layer = 0;
  LayerKind kind = LayerKind::reuse;
  double output_rel_err_l2 = 0.0;
  std::optional<double> mass_recovered_mean;
  std::size_t fallback_rows = 0;

  bool operator==(const LayerReport&) const = default;
};

struct RunReport {
  std::vector<LayerReport> per_layer;
  double mean_rel_err = 0.0;
  double max_rel_err = 0.0;
  std::optional<double> mean_mass_recovered;
  std::optional<double> mean_reuse_mass_recovered;
  std::string config_digest;

  bool operator==(const RunReport&) const = default;
};

using LayerOutputs = std::vector<std::vector<float>>;  // [L][Hq*N*d]

LayerOutputs run_dense(const AttentionTrace& trace, bool causal = true);

struct KascadeRun {
  LayerOutputs outputs;
  RunReport report;
};

// Layer 0 is dense; other anchors select per-tile Top-k sets from pooled
// distributions and attend over them; reuse layers attend over the latest
// anchor's sets routed through their head maps.
KascadeRun run_kascade(const AttentionTrace& trace, const AnchorPlan& plan, Phase phase,
                       bool causal = true);

// Per-layer ||a - b|| / ||b||. Kinds default to reuse when not given.
RunReport compare(const LayerOutputs& a, const LayerOutputs& b,
                  std::span<const LayerKind> kinds = {});

// Fills the aggregate fields of a report from its per-layer rows.
void summarize(RunReport& report);

const char* to_string(LayerKind kind);
const char* to_string(HeadMapMode mode);
const char* to_string(Pooling pooling);
const char* to_string(Phase phase);
const char* to_string(TokenAggregation aggregation);

}  // namespace kascade
