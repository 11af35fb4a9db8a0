// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/runner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kascade/attention.hpp"
#include "kascade/digest.hpp"
#include "kascade/error.hpp"

namespace kascade {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::anchor0: return "anchor0";
    case LayerKind::anchor: return "anchor";
    case LayerKind::reuse: return "reuse";
  }
  return "?";
}

const char* to_string(HeadMapMode mode) {
  switch (mode) {
    case HeadMapMode::remapped: return "remapped";
    case HeadMapMode::identity: return "identity";
    case HeadMapMode::all_heads_pooled: return "all_heads_pooled";
  }
  return "?";
}

const char* to_string(Pooling pooling) {
  return pooling == Pooling::post_softmax ? "post_softmax" : "pre_softmax";
}

const char* to_string(Phase phase) { return phase == Phase::prefill ? "prefill" : "decode"; }

const char* to_string(TokenAggregation aggregation) {
  return aggregation == TokenAggregation::mean ? "mean" : "min";
}

std::size_t anchor_for(const std::vector<std::size_t>& anchors, std::size_t layer) {
  std::size_t owner = 0;
  for (auto a : anchors) {
    if (a <= layer) owner = a;
  }
  return owner;
}

namespace {

bool is_anchor(const std::vector<std::size_t>& anchors, std::size_t layer) {
  return std::binary_search(anchors.begin(), anchors.end(), layer);
}

const HeadMap* find_map(const AnchorPlan& plan, std::size_t layer) {
  for (const auto& m : plan.head_maps) {
    if (m.reuse_layer == layer) return &m;
  }
  return nullptr;
}

std::string run_digest(const AnchorPlan& plan, Phase phase, bool causal) {
  Fnv1a hash;
  hash.add(std::uint64_t{plan.num_layers});
  hash.add(std::uint64_t{plan.num_kv_heads});
  for (auto a : plan.core.anchors) hash.add(std::uint64_t{a});
  for (const auto& m : plan.head_maps) {
    hash.add(std::uint64_t{m.reuse_layer});
    hash.add(std::uint64_t{m.anchor_layer});
    for (auto h : m.map) hash.add(std::uint64_t{h});
  }
  hash.add(std::string_view(to_string(plan.mode)));
  hash.add(std::string_view(to_string(plan.pooling)));
  hash.add(plan.k_policy.fraction);
  hash.add(std::uint64_t{plan.k_policy.k_min});
  hash.add(std::uint64_t{plan.tile_size});
  hash.add(std::string_view(to_string(phase)));
  hash.add(std::uint64_t{causal ? 1u : 0u});
  return hash.hex();
}

double relative_l2(std::span<const float> a, std::span<const float> b) {
  double diff = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double delta = static_cast<double>(a[i]) - b[i];
    diff += delta * delta;
    ref += static_cast<double>(b[i]) * b[i];
  }
  if (ref == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(diff / ref);
}

// Every kv head's tile at one position gets the same set, selected from the
// mean of the per-kv-head pooled distributions.
TileSelection select_shared_topk(const AttentionTrace& trace, std::size_t layer,
                                 const TileSpec& spec, Pooling pooling,
                                 const KBudgetPolicy& policy, bool causal) {
  const std::size_t per_head = spec.tiles_per_head();
  std::vector<std::vector<std::vector<double>>> pooled(spec.num_kv_heads);
  for (std::size_t g = 0; g < spec.num_kv_heads; ++g) {
    pooled[g] = pooled_tile_distributions(trace, layer, spec, g, pooling, causal);
  }
  TileSelection selection;
  selection.spec = spec;
  selection.sets.resize(spec.tiles.size());
  std::vector<std::vector<double>> column(spec.num_kv_heads);
  for (std::size_t t = 0; t < per_head; ++t) {
    for (std::size_t g = 0; g < spec.num_kv_heads; ++g) column[g] = std::move(pooled[g][t]);
    const auto shared =
        pooled_all_heads_topk(column, k_budget(policy, column[0].size()));
    for (std::size_t g = 0; g < spec.num_kv_heads; ++g) {
      auto& set = selection.sets[g * per_head + t];
      set = shared;
      set.kv_head = g;
      set.tile_id = g * per_head + t;
    }
  }
  return selection;
}

TileSelection route(const TileSelection& anchor, const HeadMap& map) {
  TileSelection routed;
  routed.spec = anchor.spec;
  routed.sets.resize(anchor.sets.size());
  const std::size_t per_head = anchor.spec.tiles_per_head();
  for (std::size_t j = 0; j < anchor.spec.num_kv_heads; ++j) {
    for (std::size_t t = 0; t < per_head; ++t) {
      auto& set = routed.sets[j * per_head + t];
      set = anchor.sets[map.map[j] * per_head + t];
      set.kv_head = j;
      set.tile_id = j * per_head + t;
    }
  }
  return routed;
}

}  // namespace

void validate_plan(const AnchorPlan& plan, const TraceDims& dims) {
  if (plan.num_layers != dims.num_layers || plan.num_kv_heads != dims.num_kv_heads) {
    throw InvalidPlan("plan is for L=" + std::to_string(plan.num_layers) + ", Hkv=" +
                      std::to_string(plan.num_kv_heads) + " but trace has L=" +
                      std::to_string(dims.num_layers) + ", Hkv=" +
                      std::to_string(dims.num_kv_heads));
  }
  try {
    validate_anchors(plan.core.anchors, plan.num_layers);
  } catch (const InvalidArgument& e) {
    throw InvalidPlan(e.what());
  }
  if (plan.tile_size == 0) throw InvalidPlan("tile_size must be >= 1");
  if (!(plan.k_policy.fraction > 0.0 && plan.k_policy.fraction <= 1.0) ||
      plan.k_policy.k_min == 0) {
    throw InvalidPlan("k policy needs fraction in (0, 1] and k_min >= 1");
  }
  for (const auto& m : plan.head_maps) {
    if (m.map.size() != plan.num_kv_heads) {
      throw InvalidPlan("head map for layer " + std::to_string(m.reuse_layer) +
                        " has the wrong number of heads");
    }
    for (auto h : m.map) {
      if (h >= plan.num_kv_heads) {
        throw InvalidPlan("head map for layer " + std::to_string(m.reuse_layer) +
                          " references kv head " + std::to_string(h));
      }
    }
  }
  if (plan.mode == HeadMapMode::all_heads_pooled) return;
  for (std::size_t l = 0; l < plan.num_layers; ++l) {
    if (is_anchor(plan.core.anchors, l)) continue;
    const HeadMap* m = find_map(plan, l);
    if (m == nullptr) throw InvalidPlan("missing head map for reuse layer " + std::to_string(l));
    if (m->anchor_layer != anchor_for(plan.core.anchors, l)) {
      throw InvalidPlan("head map for layer " + std::to_string(l) +
                        " does not reference its preceding anchor");
    }
  }
}

AnchorPlan make_plan(const AnchorPlanCore& core, std::size_t num_layers,
                     std::size_t num_kv_heads, const PlanningSimilarity* sims) {
  validate_anchors(core.anchors, num_layers);
  AnchorPlan plan;
  plan.num_layers = num_layers;
  plan.num_kv_heads = num_kv_heads;
  plan.core = core;
  plan.mode = sims != nullptr ? HeadMapMode::remapped : HeadMapMode::identity;
  for (std::size_t l = 0; l < num_layers; ++l) {
    if (is_anchor(core.anchors, l)) continue;
    const std::size_t a = anchor_for(core.anchors, l);
    plan.head_maps.push_back(sims != nullptr ? compute_head_map(sims->pair(a, l), a, l)
                                             : identity_head_map(num_kv_heads, a, l));
  }
  return plan;
}

PlanResult plan_from_traces(std::span<const AttentionTrace> traces, const PlanOptions& options) {
  if (traces.empty()) throw InvalidArgument("plan: no traces");
  const auto& dims = traces[0].dims;
  if (options.budget == 0 || options.budget > dims.num_layers) {
    throw InvalidArgument("plan: anchor budget M=" + std::to_string(options.budget) +
                          " must be in [1, L=" + std::to_string(dims.num_layers) + "]");
  }
  auto sims = planning_similarity(traces, options.similarity_k, options.token_aggregation);

  PlanResult result;
  result.similarity = sims.matrix;
  const bool have_xy = std::all_of(traces.begin(), traces.end(),
                                   [](const AttentionTrace& t) { return t.has_hidden_states(); });
  if (options.use_importance && have_xy) {
    result.importance = layer_importance(traces);
    result.similarity = apply_importance(result.similarity, *result.importance);
  }
  const auto core = select_anchors(result.similarity, options.budget);
  result.plan = make_plan(core, dims.num_layers, dims.num_kv_heads,
                          options.mode == HeadMapMode::remapped ? &sims : nullptr);
  result.plan.mode = options.mode;
  if (options.mode == HeadMapMode::all_heads_pooled) result.plan.head_maps.clear();
  result.plan.pooling = options.pooling;
  result.plan.k_policy = options.k_policy;
  result.plan.tile_size = options.tile_size;
  return result;
}

LayerOutputs run_dense(const AttentionTrace& trace, bool causal) {
  LayerOutputs outputs(trace.dims.num_layers);
  for (std::size_t l = 0; l < trace.dims.num_layers; ++l) {
    outputs[l] = dense_output(trace, l, causal);
  }
  return outputs;
}

KascadeRun run_kascade(const AttentionTrace& trace, const AnchorPlan& plan, Phase phase,
                       bool causal) {
  trace.validate_shape();
  validate_plan(plan, trace.dims);
  const auto& d = trace.dims;
  const auto spec = make_tiles(d.seq_len, phase, d.num_query_heads, d.num_kv_heads, plan.tile_size);
  const bool shared = plan.mode == HeadMapMode::all_heads_pooled;
  auto select = [&](std::size_t layer) {
    return shared ? select_shared_topk(trace, layer, spec, plan.pooling, plan.k_policy, causal)
                  : select_tile_topk(trace, layer, spec, plan.pooling, plan.k_policy, causal);
  };

  KascadeRun run;
  run.outputs.resize(d.num_layers);
  TileSelection anchor_selection;
  for (std::size_t l = 0; l < d.num_layers; ++l) {
    LayerReport row;
    row.layer = l;
    if (l == 0) {
      row.kind = LayerKind::anchor0;
      run.outputs[0] = dense_output(trace, 0, causal);
      anchor_selection = select(0);
      row.output_rel_err_l2 = 0.0;
      row.mass_recovered_mean = 1.0;
      run.report.per_layer.push_back(row);
      continue;
    }

    TileSelection selection;
    if (is_anchor(plan.core.anchors, l)) {
      row.kind = LayerKind::anchor;
      anchor_selection = select(l);
      selection = anchor_selection;
    } else {
      row.kind = LayerKind::reuse;
      if (shared) {
        selection = anchor_selection;
      } else if (plan.mode == HeadMapMode::identity) {
        selection = route(anchor_selection,
                          identity_head_map(d.num_kv_heads, anchor_for(plan.core.anchors, l), l));
      } else {
        selection = route(anchor_selection, *find_map(plan, l));
      }
    }

    auto sparse = topk_attention(trace, l, selection, causal, true);
    row.output_rel_err_l2 = relative_l2(sparse.output, sparse.dense_output);
    double mass = 0.0;
    for (double m : sparse.mass_recovered) mass += m;
    row.mass_recovered_mean = mass / static_cast<double>(sparse.mass_recovered.size());
    for (auto f : sparse.fallback) row.fallback_rows += f;
    run.outputs[l] = std::move(sparse.output);
    run.report.per_layer.push_back(row);
  }
  run.report.config_digest = run_digest(plan, phase, causal);
  summarize(run.report);
  return run;
}

RunReport compare(const LayerOutputs& a, const LayerOutputs& b, std::span<const LayerKind> kinds) {
  if (a.size() != b.size() || (!kinds.empty() && kinds.size() != a.size())) {
    throw InvalidArgument("compare: layer counts differ");
  }
  RunReport report;
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].size() != b[l].size()) {
      throw InvalidArgument("compare: output shapes differ at layer " + std::to_string(l));
    }
    LayerReport row;
    row.layer = l;
    row.kind = kinds.empty() ? LayerKind::reuse : kinds[l];
    row.output_rel_err_l2 = relative_l2(a[l], b[l]);
    report.per_layer.push_back(row);
  }
  summarize(report);
  return report;
}

void summarize(RunReport& report) {
  report.mean_rel_err = 0.0;
  report.max_rel_err = 0.0;
  report.mean_mass_recovered.reset();
  report.mean_reuse_mass_recovered.reset();
  double mass = 0.0, reuse_mass = 0.0;
  std::size_t mass_n = 0, reuse_n = 0;
  for (const auto& row : report.per_layer) {
    report.mean_rel_err += row.output_rel_err_l2;
    report.max_rel_err = std::max(report.max_rel_err, row.output_rel_err_l2);
    if (row.mass_recovered_mean) {
      mass += *row.mass_recovered_mean;
      ++mass_n;
      if (row.kind == LayerKind::reuse) {
        reuse_mass += *row.mass_recovered_mean;
        ++reuse_n;
      }
    }
  }
  if (!report.per_layer.empty()) {
    report.mean_rel_err /= static_cast<double>(report.per_layer.size());
  }
  if (mass_n > 0) report.mean_mass_recovered = mass / static_cast<double>(mass_n);
  if (reuse_n > 0) report.mean_reuse_mass_recovered = reuse_mass / static_cast<double>(reuse_n);
}

}  // namespace kascade
