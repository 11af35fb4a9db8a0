// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Independent oracles live in oracles.hpp.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "kascade/attention.hpp"
#include "kascade/cost_model.hpp"
#include "kascade/error.hpp"
#include "kascade/runner.hpp"
#include "kascade/serialize.hpp"
#include "kascade/sparsity.hpp"
#include "kascade/synthetic.hpp"
#include "kascade/trace_io.hpp"
#include "oracles.hpp"

using namespace kascade;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records the first failure message; later failures only flip the flag.
void expect(Outcome& o, bool ok, const std::string& what) {
  if (!ok && o.pass) o.detail = what;
  o.pass = o.pass && ok;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SimilarityMatrix random_similarity(std::size_t n, std::mt19937_64& rng) {
  auto s = SimilarityMatrix::zeros(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 4);
  const bool ties = rng() % 4 == 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) s.at(a, b) = ties ? coarse(rng) / 4.0 : u(rng);
  }
  return s;
}

Outcome dp_optimality() {
  Outcome o;
  std::mt19937_64 rng(20260101);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t cases = 0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + rng() % 12;
    const std::size_t m = 1 + rng() % std::min<std::size_t>(n, 5);
    const auto s = random_similarity(n, rng);
    const auto dp = select_anchors(s, m);
    const auto ex = exhaustive_select(s, m);
    expect(o, dp.objective_value == ex.objective_value,
           fmt("objective mismatch on case %.0f", i));
    expect(o, dp.anchors == ex.anchors, fmt("anchor sets differ on case %.0f", i));
    ++cases;
  }
  const double elapsed = seconds_since(t0);
  expect(o, elapsed < 5.0, fmt("took %.2f s", elapsed));
  if (o.pass) o.detail = fmt("%.0f matrices, identical objectives and sets, %.3f s", cases, elapsed);
  return o;
}

Outcome dense_equivalence() {
  Outcome o;
  std::mt19937_64 rng(7);
  double worst_sparse = 0.0;
  double worst_plan = 0.0;
  for (std::uint32_t i = 0; i < 50; ++i) {
    const std::size_t hkv = 1 + rng() % 3;
    const TraceDims d{1 + rng() % 3, hkv * (1 + rng() % 3), hkv, 1 + rng() % 32, 1 + rng() % 64,
                      0};
    const auto t = oracle::random_trace(d, 1000 + i, 2.0f);
    for (bool causal : {true, false}) {
      TileSelection sel;
      sel.spec = make_tiles(d.seq_len, Phase::prefill, d.num_query_heads, d.num_kv_heads,
                            1 + rng() % 16);
      for (std::size_t id = 0; id < sel.spec.tiles.size(); ++id) {
        TopKIndexSet s{sel.spec.tiles[id].kv_head, id, {}, d.seq_len};
        for (std::uint32_t j = 0; j < d.seq_len; ++j) s.indices.push_back(j);
        sel.sets.push_back(s);
      }
      for (std::size_t l = 0; l < d.num_layers; ++l) {
        const auto dense = dense_attention(t, l, causal).output;
        const auto sparse = topk_attention(t, l, sel, causal).output;
        for (std::size_t x = 0; x < dense.size(); ++x) {
          worst_sparse = std::max(worst_sparse, std::abs(static_cast<double>(dense[x]) - sparse[x]));
        }
      }
    }
    AnchorPlanCore core;
    for (std::size_t l = 0; l < d.num_layers; ++l) core.anchors.push_back(l);
    core.budget = d.num_layers;
    auto plan = make_plan(core, d.num_layers, d.num_kv_heads);
    plan.k_policy = {1.0, d.seq_len};
    for (auto phase : {Phase::prefill, Phase::decode}) {
      const auto run = run_kascade(t, plan, phase);
      worst_plan = std::max(worst_plan, run.report.max_rel_err);
      worst_plan = std::max(worst_plan, compare(run.outputs, run_dense(t)).max_rel_err);
    }
  }
  expect(o, worst_sparse <= 1e-6, fmt("top-k vs dense max-abs %.3e", worst_sparse));
  expect(o, worst_plan <= 1e-5, fmt("full plan rel-err %.3e", worst_plan));
  if (o.pass) {
    o.detail = fmt("50 traces: full-budget max-abs %.2e, full-plan max rel-err %.2e",
                   worst_sparse, worst_plan);
  }
  return o;
}

Outcome similarity_sanity() {
  Outcome o;
  const std::vector<double> p{0.5, 0.3, 0.2};
  const auto hand = sim_score(p, TopKIndexSet{0, 0, {0, 2}, 2}, TopKIndexSet{0, 0, {0, 1}, 2});
  expect(o, hand.has_value() && *hand == 0.875, "hand case is not exactly 0.875");
  double worst = 0.0;
  std::size_t diagonals = 0;
  for (std::uint32_t seed = 0; seed < 6; ++seed) {
    const auto t = seed % 2 == 0
                       ? oracle::random_trace({5, 4, 2, 8, 40, 0}, seed, 3.0f)
                       : generate_synthetic({{5, 4, 2, 16, 96, 0}, seed, 0.5 * seed / 5.0});
    for (auto mode : {SimilarityMode::layer_pooled, SimilarityMode::head_mapped}) {
      for (auto agg : {TokenAggregation::mean, TokenAggregation::min}) {
        for (std::size_t k : {1, 8, 64}) {
          const auto s = similarity_matrix(std::span(&t, 1), {k, agg, mode});
          for (std::size_t a = 0; a < 5; ++a) {
            worst = std::max(worst, std::abs(s.at(a, a) - 1.0));
            ++diagonals;
          }
        }
      }
    }
  }
  expect(o, worst <= 1e-6, fmt("diagonal deviates by %.3e", worst));
  if (o.pass) {
    o.detail = fmt("hand case = 0.875 exactly; %.0f diagonal entries within %.1e of 1", diagonals,
                   worst);
  }
  return o;
}

Outcome cost_arithmetic() {
  Outcome o;
  std::size_t rows = 0;
  double worst_time = 0.0;
  double worst_speedup = 0.0;
  for (const auto& row : measured_rows()) {
    if (row.seq_len < 65536) continue;
    CostParams p;
    p.phase = row.phase;
    p.topk_fraction = row.topk_percent / 100.0;
    p.seq_len = row.seq_len;
    p.dense_layer_time = row.tl_ms;
    const auto r = weighted_pipeline_time(p, {row.anchor0_ms, row.anchor_ms, row.reuse_ms});
    const double time_err = std::abs(r.kascade_time - row.kascade_ms) / row.kascade_ms;
    const double speedup_err = std::abs(r.speedup - row.tl_speedup);
    worst_time = std::max(worst_time, time_err);
    worst_speedup = std::max(worst_speedup, speedup_err);
    expect(o, time_err <= 0.005, preset_name(row) + fmt(": time off by %.3f%%", 100 * time_err));
    expect(o, speedup_err <= 0.02, preset_name(row) + fmt(": speedup off by %.4f", speedup_err));
    ++rows;
  }
  const auto preset = find_preset("table3-decode-131072-k10");
  CostParams p;
  p.dense_layer_time = preset->tl_ms;
  const auto r = weighted_pipeline_time(p, {preset->anchor0_ms, preset->anchor_ms, preset->reuse_ms});
  expect(o, std::abs(r.kascade_time - 2.83) <= 0.01 && std::abs(r.speedup - 4.11) <= 0.02,
         "decode/131072/10% example");
  expect(o, rows > 0, "no rows checked");
  if (o.pass) {
    o.detail = fmt("%.0f rows: worst time error %.3f%%, worst speedup error %.4f; "
                   "decode/131072/10%% -> %.3f ms",
                   rows, 100 * worst_time, worst_speedup, r.kascade_time);
    o.detail += fmt(" (speedup %.3f)", r.speedup);
  }
  return o;
}

Outcome k_budget_rule() {
  Outcome o;
  const KBudgetPolicy policy;
  const std::size_t lengths[] = {64, 1000, 1280, 4096};
  const std::size_t expected[] = {64, 128, 128, 409};
  std::string got;
  for (int i = 0; i < 4; ++i) {
    const auto k = k_budget(policy, lengths[i]);
    expect(o, k == expected[i], fmt("L=%.0f gave %.0f", lengths[i], k));
    got += (i ? ", " : "") + std::to_string(lengths[i]) + "->" + std::to_string(k);
  }
  if (o.pass) o.detail = got;
  return o;
}

struct Summary {
  double mean = 0, min = 0, median = 0, max = 0;
};

Summary summarize_values(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  Summary s;
  for (double x : v) s.mean += x / static_cast<double>(v.size());
  s.min = v.front();
  s.max = v.back();
  s.median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  return s;
}

Outcome pooling_property() {
  Outcome o;
  std::vector<double> post, pre;
  for (std::uint64_t seed = 0; seed < 24; ++seed) {
    SynthConfig c;
    c.dims = {4, 4, 2, 32, 512, 0};
    c.seed = 500 + seed;
    const auto t = generate_synthetic(c);
    AnchorPlanCore core;
    core.anchors = {0, 2};
    core.budget = 2;
    auto plan = make_plan(core, 4, 2);
    plan.tile_size = 128;
    plan.k_policy = {0.1, 1};
    for (auto pooling : {Pooling::post_softmax, Pooling::pre_softmax}) {
      plan.pooling = pooling;
      const auto run = run_kascade(t, plan, Phase::prefill);
      double err = 0.0;
      for (std::size_t l = 1; l < 4; ++l) err += run.report.per_layer[l].output_rel_err_l2 / 3.0;
      (pooling == Pooling::post_softmax ? post : pre).push_back(err);
    }
  }
  const auto a = summarize_values(post);
  const auto b = summarize_values(pre);
  expect(o, a.mean <= b.mean, "post-softmax mean error exceeds pre-softmax");
  o.detail = fmt("24 traces, rel-err post-softmax mean %.4f [min %.4f, median %.4f, max %.4f]",
                 a.mean, a.min, a.median, a.max) +
             fmt(" vs pre-softmax mean %.4f [min %.4f, median %.4f, max %.4f]", b.mean, b.min,
                 b.median, b.max);
  return o;
}

Outcome remapping_property() {
  Outcome o;
  double worst_remapped = 1.0;
  double best_identity = 0.0;
  double prefill_remapped = 1.0;
  double prefill_identity = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthConfig c;
    c.dims = {4, 8, 4, 32, 1024, 0};
    c.seed = 900 + seed;
    c.layer_correlation = 1.0;
    c.heavy_tail_temperature = 0.15;
    c.head_permutations = random_head_permutations(4, 4, 31 + seed);
    bool nontrivial = false;
    for (std::size_t l = 1; l < 4; ++l) nontrivial = nontrivial || c.head_permutations[l] != c.head_permutations[0];
    expect(o, nontrivial, "permutations are trivial");
    const auto t = generate_synthetic(c);
    PlanOptions options;
    options.budget = 2;
    const auto plan = plan_from_traces(std::span(&t, 1), options).plan;
    auto identity = plan;
    identity.mode = HeadMapMode::identity;
    // Decode tiles hold a single token, so the mass lost is the mapping's
    // alone. Prefill tiles of 128 queries lose mass to pooling whatever the
    // mapping; there only the ordering is required.
    for (auto phase : {Phase::decode, Phase::prefill}) {
      const double remapped =
          run_kascade(t, plan, phase).report.mean_reuse_mass_recovered.value();
      const double ident =
          run_kascade(t, identity, phase).report.mean_reuse_mass_recovered.value();
      expect(o, ident < remapped, fmt("identity %.5f not below remapped %.5f", ident, remapped));
      if (phase == Phase::decode) {
        worst_remapped = std::min(worst_remapped, remapped);
        best_identity = std::max(best_identity, ident);
        expect(o, remapped >= 0.999, fmt("remapped decode reuse mass %.5f", remapped));
      } else {
        prefill_remapped = std::min(prefill_remapped, remapped);
        prefill_identity = std::max(prefill_identity, ident);
      }
    }
  }
  if (o.pass) {
    o.detail = fmt("3 permuted rho=1 traces, decode: remapped reuse mass >= %.5f, identity <= "
                   "%.5f; prefill tile 128: remapped >= %.4f, identity <= %.4f",
                   worst_remapped, best_identity, prefill_remapped, prefill_identity);
  }
  return o;
}

Outcome sparsity_reproduction() {
  Outcome o;
  SynthConfig c;
  c.dims = {3, 4, 2, 32, 2048, 0};
  c.seed = 2048;
  const auto t = generate_synthetic(c);
  const std::size_t k = t.dims.seq_len / 10;
  double worst_fraction = 1.0;
  double worst_mismatch = 0.0;
  for (std::size_t l = 1; l < t.dims.num_layers; ++l) {
    for (std::size_t h = 0; h < t.dims.num_query_heads; ++h) {
      const auto probs = head_probabilities(t, l, h, true);
      const auto coverage = row_mass_coverage(probs, k);
      std::size_t ok = 0;
      for (std::size_t r = 0; r < probs.rows(); ++r) {
        // Brute force: sort the row, sum the k largest.
        std::vector<double> row(probs.row(r).begin(), probs.row(r).end());
        std::sort(row.begin(), row.end(), std::greater<>());
        double top = 0.0;
        for (std::size_t j = 0; j < std::min(k, row.size()); ++j) top += row[j];
        worst_mismatch = std::max(worst_mismatch, std::abs(top - coverage[r]));
        ok += top >= 0.95;
      }
      worst_fraction = std::min(worst_fraction, static_cast<double>(ok) / probs.rows());
    }
  }
  expect(o, worst_fraction >= 0.90, fmt("only %.3f of rows reach 0.95", worst_fraction));
  expect(o, worst_mismatch <= 1e-9, fmt("library coverage differs from brute force by %.2e",
                                        worst_mismatch));
  if (o.pass) {
    o.detail = fmt("N=2048, k=%.0f: worst (layer, head) has %.1f%% of rows >= 0.95 "
                   "(library vs brute force within %.1e)",
                   k, 100 * worst_fraction, worst_mismatch);
  }
  return o;
}

template <typename Fn>
bool throws_format(Fn&& fn, std::uint64_t offset) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.byte_offset() == offset;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome serialization() {
  Outcome o;
  std::mt19937_64 rng(314);
  for (int i = 0; i < 100; ++i) {
    const std::size_t hkv = 1 + rng() % 4;
    const TraceDims d{1 + rng() % 4, hkv * (1 + rng() % 3), hkv, 1 + rng() % 16,
                      1 + rng() % 24, rng() % 2 ? 1 + rng() % 8 : 0};
    auto t = oracle::random_trace(d, static_cast<std::uint32_t>(rng()), 1e3f);
    t.prompt_id = "prompt-" + std::to_string(i);
    const auto bytes = encode_trace(t);
    const auto back = decode_trace(bytes);
    expect(o, back == t && encode_trace(back) == bytes, fmt("trace %.0f round trip", i));

    const std::size_t layers = 1 + rng() % 40;
    const std::size_t heads = 1 + rng() % 8;
    std::vector<std::size_t> anchors{0};
    for (std::size_t l = 1; l < layers; ++l) {
      if (rng() % 4 == 0) anchors.push_back(l);
    }
    AnchorPlanCore core{anchors, anchors.size(), std::ldexp(static_cast<double>(rng() >> 11), -40),
                        std::to_string(rng())};
    auto plan = make_plan(core, layers, heads);
    for (auto& m : plan.head_maps) {
      for (auto& h : m.map) h = rng() % heads;
      m.mode = HeadMapMode::remapped;
    }
    plan.mode = static_cast<HeadMapMode>(rng() % 3);
    plan.pooling = static_cast<Pooling>(rng() % 2);
    plan.k_policy = {std::ldexp(static_cast<double>(1 + rng() % 1024), -10), 1 + rng() % 256};
    plan.tile_size = 1 + rng() % 256;
    const auto text = plan_to_json(plan).dump(2);
    expect(o, plan_from_json(nlohmann::json::parse(text)) == plan, fmt("plan %.0f round trip", i));
  }

  auto t = oracle::random_trace({2, 4, 2, 4, 6, 3}, 1);
  t.prompt_id = "corrupt";
  const auto good = encode_trace(t);
  auto patched = [&](std::size_t offset, std::uint8_t value) {
    auto b = good;
    b[offset] = value;
    return b;
  };
  struct Case {
    const char* name;
    std::vector<std::uint8_t> bytes;
    std::uint64_t offset;
  };
  std::vector<Case> cases{
      {"magic", patched(0, 'k'), 0},
      {"version", patched(4, 9), 4},
      {"zero layers", patched(6, 0), 6},
      {"zero head dim", patched(18, 0), 18},
      {"head ratio", patched(14, 3), 14},
      {"dtype", patched(26, 2), 26},
      {"flags", patched(27, 0x80), 27},
      {"trailing", [&] { auto b = good; b.push_back(1); return b; }(), good.size()},
      {"truncated", std::vector<std::uint8_t>(good.begin(), good.end() - 5), good.size() - 5},
  };
  for (const auto& c : cases) {
    expect(o, throws_format([&] { decode_trace(c.bytes); }, c.offset),
           std::string("corrupted ") + c.name + " not rejected at its offset");
  }
  auto j = plan_to_json(make_plan({{0, 3}, 2, 0.0, ""}, 6, 2));
  j["head_maps"][1]["map"][0] = -1;
  bool field_error = false;
  try {
    plan_from_json(j);
  } catch (const FormatError& e) {
    field_error = e.field_path() == "$.head_maps[1].map[0]";
  }
  expect(o, field_error, "plan schema violation without field path");
  if (o.pass) {
    o.detail = fmt("100 trace + 100 plan round trips exact; %.0f corrupted headers and a bad "
                   "plan field rejected with FormatError",
                   cases.size());
  }
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"dp-optimality", dp_optimality},
      {"dense-equivalence", dense_equivalence},
      {"similarity-sanity", similarity_sanity},
      {"cost-arithmetic", cost_arithmetic},
      {"k-budget-rule", k_budget_rule},
      {"pooling-property", pooling_property},
      {"remapping-property", remapping_property},
      {"sparsity-reproduction", sparsity_reproduction},
      {"serialization", serialization},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %-22s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures,
              std::size(criteria));
  return failures == 0 ? 0 : 1;
}
