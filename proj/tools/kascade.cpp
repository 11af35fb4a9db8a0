// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// kascade: gen | analyze | plan | run | cost | report.
// Exit codes: 0 ok, 1 usage, 2 data or format error, 3 threshold exceeded.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kascade/cost_model.hpp"
#include "kascade/error.hpp"
#include "kascade/head_map.hpp"
#include "kascade/planner.hpp"
#include "kascade/runner.hpp"
#include "kascade/serialize.hpp"
#include "kascade/sparsity.hpp"
#include "kascade/synthetic.hpp"
#include "kascade/trace_io.hpp"

namespace fs = std::filesystem;
using namespace kascade;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitThreshold = 3;

const std::map<std::string, TokenAggregation> kTokenAgg{{"mean", TokenAggregation::mean},
                                                         {"min", TokenAggregation::min}};
const std::map<std::string, Phase> kPhase{{"prefill", Phase::prefill}, {"decode", Phase::decode}};
const std::map<std::string, HeadMapMode> kMode{{"remapped", HeadMapMode::remapped},
                                               {"identity", HeadMapMode::identity},
                                               {"all-heads-pooled", HeadMapMode::all_heads_pooled}};

// Pooling, head-map mode, tile and budget knobs shared by plan and run. Each
// is optional so run can tell an override from the plan file's value.
struct ExecFlags {
  bool post_softmax = false;
  bool pre_softmax = false;
  std::optional<std::string> mode;
  bool identity = false;
  bool all_heads_pooled = false;
  std::optional<std::size_t> tile_size;
  std::optional<double> fraction;
  std::optional<std::size_t> k_min;

  void attach(CLI::App* app) {
    auto* post = app->add_flag("--post-softmax", post_softmax, "Pool tile distributions after softmax");
    auto* pre = app->add_flag("--pre-softmax", pre_softmax, "Pool tile queries before softmax");
    post->excludes(pre);
    auto* m = app->add_option("--mode", mode, "Head-map mode")
                  ->check(CLI::IsMember({"remapped", "identity", "all-heads-pooled"}));
    auto* id = app->add_flag("--identity", identity, "Same as --mode identity");
    auto* pooled = app->add_flag("--all-heads-pooled", all_heads_pooled,
                                 "Same as --mode all-heads-pooled");
    m->excludes(id)->excludes(pooled);
    id->excludes(pooled);
    app->add_option("--tile-size", tile_size, "Queries per prefill tile")
        ->check(CLI::PositiveNumber);
    app->add_option("--fraction", fraction, "Top-k fraction of visible keys")
        ->check(CLI::Range(0.0, 1.0))
        ->check(CLI::PositiveNumber);
    app->add_option("--k-min", k_min, "Floor on k");
  }

  void apply(AnchorPlan& plan) const {
    if (post_softmax) plan.pooling = Pooling::post_softmax;
    if (pre_softmax) plan.pooling = Pooling::pre_softmax;
    if (mode) plan.mode = kMode.at(*mode);
    if (identity) plan.mode = HeadMapMode::identity;
    if (all_heads_pooled) plan.mode = HeadMapMode::all_heads_pooled;
    if (tile_size) plan.tile_size = *tile_size;
    if (fraction) plan.k_policy.fraction = *fraction;
    if (k_min) plan.k_policy.k_min = *k_min;
  }
};

struct GenArgs {
  std::size_t layers = 0, q_heads = 0, kv_heads = 0, dim = 0, tokens = 0, model_dim = 0;
  double rho = 0.95;
  double temperature = 0.25;
  std::size_t hot_keys = 4;
  std::uint64_t seed = 0;
  bool permute_heads = false;
  std::string prompt_id = "synthetic";
  std::string out;
};

struct AnalyzeArgs {
  std::vector<std::string> traces;
  std::size_t k = 64;
  std::optional<std::size_t> coverage_k;
  std::string token_agg = "mean";
  bool head_mapped = false;
  bool importance = false;
  std::string out_dir = ".";
};

struct PlanArgs {
  std::vector<std::string> traces;
  std::size_t budget = kDefaultAnchorBudget;
  std::size_t k = 64;
  std::string token_agg = "min";
  bool no_importance = false;
  ExecFlags exec;
  std::string out;
};

struct RunArgs {
  std::string trace;
  std::string plan;
  std::string phase = "decode";
  bool non_causal = false;
  ExecFlags exec;
  std::optional<double> fail_above;
  std::string report;
};

struct CostArgs {
  std::optional<std::string> preset;
  bool all_presets = false;
  bool list_presets = false;
  bool predict = false;
  std::string phase = "decode";
  std::size_t layers = 32;
  std::size_t anchors = 5;
  double fraction = 0.1;
  std::size_t seq = 0;
  double dense = 1.0;
  double anchor0 = 1.0, anchor = 1.0, reuse = 1.0;
  std::string json;
  std::string csv;
};

struct ReportArgs {
  std::string path;
  std::optional<double> fail_above;
};

// Human-readable output; moves to stderr when a machine-readable stream
// claims stdout.
std::FILE* text_out = stdout;

// JSON or text to a file, or stdout for "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  if (path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<AttentionTrace> load_all(const std::vector<std::string>& paths) {
  std::vector<AttentionTrace> out;
  for (const auto& p : paths) {
    auto part = read_traces(p);
    if (part.empty()) throw Error("no traces found in " + p);
    for (auto& t : part) out.push_back(std::move(t));
  }
  return out;
}

int cmd_gen(const GenArgs& a) {
  SynthConfig c;
  c.dims = {a.layers, a.q_heads, a.kv_heads, a.dim, a.tokens, a.model_dim};
  c.seed = a.seed;
  c.layer_correlation = a.rho;
  c.heavy_tail_temperature = a.temperature;
  c.hot_keys = a.hot_keys;
  c.prompt_id = a.prompt_id;
  if (a.permute_heads) c.head_permutations = random_head_permutations(a.layers, a.kv_heads, a.seed);
  const auto t = generate_synthetic(c);
  write_trace(a.out, t);
  std::printf("wrote %s\n", a.out.c_str());
  std::printf("  layers %zu, q heads %zu, kv heads %zu, head dim %zu, tokens %zu, model dim %zu\n",
              t.dims.num_layers, t.dims.num_query_heads, t.dims.num_kv_heads, t.dims.head_dim,
              t.dims.seq_len, t.dims.model_dim);
  std::printf("  prompt %s, rho %g, temperature %g, seed %llu%s\n", t.prompt_id.c_str(), a.rho,
              a.temperature, static_cast<unsigned long long>(a.seed),
              a.permute_heads ? ", heads permuted" : "");
  return kExitOk;
}

int cmd_analyze(const AnalyzeArgs& a) {
  const auto traces = load_all(a.traces);
  const auto& first = traces.front();
  const std::size_t L = first.dims.num_layers;
  const std::size_t Hq = first.dims.num_query_heads;
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);

  // Coverage is per trace; the first trace is reported.
  const std::size_t ck = a.coverage_k.value_or(std::max<std::size_t>(1, first.dims.seq_len / 10));
  const auto coverage = coverage_table(first, ck);
  write_text(dir / "coverage.csv", coverage_to_csv(coverage, Hq));

  SimilarityOptions so;
  so.k = a.k;
  so.token_aggregation = kTokenAgg.at(a.token_agg);
  so.mode = a.head_mapped ? SimilarityMode::head_mapped : SimilarityMode::layer_pooled;
  const auto s = similarity_matrix(traces, so);
  write_text(dir / "similarity.csv", similarity_to_csv(s));

  std::optional<LayerImportance> importance;
  if (a.importance) {
    bool have_xy = true;
    for (const auto& t : traces) have_xy = have_xy && t.dims.model_dim > 0;
    if (have_xy) {
      importance = layer_importance(traces);
    } else {
      std::cerr << "warning: traces carry no hidden states; importance weights set to 1\n";
      importance = LayerImportance{std::vector<double>(L, 1.0), traces.size(), 0};
    }
    write_text(dir / "importance.csv", importance_to_csv(*importance));
  }

  nlohmann::json summary{{"traces", traces.size()},
                         {"num_layers", L},
                         {"coverage_k", ck},
                         {"similarity_k", s.k_used},
                         {"token_aggregation", a.token_agg},
                         {"similarity_mode", a.head_mapped ? "head_mapped" : "layer_pooled"},
                         {"undefined_scores", s.undefined_scores},
                         {"coverage", coverage},
                         {"similarity", s.values}};
  if (importance) summary["importance"] = importance->weights;
  write_text(dir / "analysis.json", summary.dump(2) + "\n");

  std::printf("analyzed %zu trace(s), %zu layers, %zu query heads\n", traces.size(), L, Hq);
  std::printf("mass coverage at k=%zu (mean over heads):\n", ck);
  for (std::size_t l = 0; l < L; ++l) {
    double mean = 0.0;
    for (std::size_t h = 0; h < Hq; ++h) mean += coverage[l * Hq + h] / static_cast<double>(Hq);
    std::printf("  layer %-3zu %s\n", l, fixed(mean, 4).c_str());
  }
  std::printf("similarity matrix at k=%zu (%s), upper triangle:\n", s.k_used, a.token_agg.c_str());
  for (std::size_t r = 0; r < L; ++r) {
    std::string line = "  ";
    for (std::size_t c = 0; c < L; ++c) line += c < r ? "      -" : " " + fixed(s.at(r, c), 4);
    std::printf("%s\n", line.c_str());
  }
  if (s.undefined_scores > 0) std::printf("undefined scores skipped: %zu\n", s.undefined_scores);
  if (importance) {
    std::printf("importance weights:");
    for (double w : importance->weights) std::printf(" %s", fixed(w, 4).c_str());
    std::printf("\n");
  }
  std::printf("wrote coverage.csv, similarity.csv%s, analysis.json to %s\n",
              importance ? ", importance.csv" : "", a.out_dir.c_str());
  return kExitOk;
}

int cmd_plan(const PlanArgs& a) {
  const auto traces = load_all(a.traces);
  PlanOptions o;
  o.budget = a.budget;
  o.similarity_k = a.k;
  o.token_aggregation = kTokenAgg.at(a.token_agg);
  o.use_importance = !a.no_importance;
  AnchorPlan defaults;
  a.exec.apply(defaults);
  o.pooling = defaults.pooling;
  o.k_policy = defaults.k_policy;
  o.tile_size = defaults.tile_size;
  o.mode = defaults.mode;

  bool have_xy = true;
  for (const auto& t : traces) have_xy = have_xy && t.dims.model_dim > 0;
  if (o.use_importance && !have_xy) {
    std::cerr << "warning: traces carry no hidden states; planning without importance weights\n";
  }

  const auto result = plan_from_traces(traces, o);
  const auto& plan = result.plan;
  write_plan(a.out, plan);

  std::string anchors;
  for (auto l : plan.core.anchors) anchors += (anchors.empty() ? "" : ",") + std::to_string(l);
  std::printf("anchors %s (M=%zu of %zu layers)\n", anchors.c_str(), plan.core.budget,
              plan.num_layers);
  std::printf("objective %.17g\n", plan.core.objective_value);
  std::printf("objective recomputed %.17g\n", objective(result.similarity, plan.core.anchors));
  std::printf("similarity k=%zu, token aggregation %s, importance %s\n", result.similarity.k_used,
              a.token_agg.c_str(), result.importance ? "applied" : "not applied");
  std::printf("mode %s, pooling %s, tile %zu, k fraction %g, k_min %zu\n", to_string(plan.mode),
              to_string(plan.pooling), plan.tile_size, plan.k_policy.fraction,
              plan.k_policy.k_min);
  for (const auto& m : plan.head_maps) {
    if (m.reuse_layer == m.anchor_layer) continue;
    std::string heads;
    for (auto h : m.map) heads += (heads.empty() ? "" : ",") + std::to_string(h);
    std::printf("  layer %zu <- anchor %zu heads [%s]\n", m.reuse_layer, m.anchor_layer,
                heads.c_str());
  }
  std::printf("wrote %s\n", a.out.c_str());
  return kExitOk;
}

int threshold_exit(const RunReport& r, const std::optional<double>& fail_above) {
  if (fail_above && r.max_rel_err > *fail_above) {
    std::fprintf(stderr, "max rel_err %.6e exceeds --fail-above %.6e\n", r.max_rel_err,
                 *fail_above);
    return kExitThreshold;
  }
  return kExitOk;
}

int cmd_run(const RunArgs& a) {
  if (a.report == "-") text_out = stderr;
  const auto trace = read_trace(a.trace);
  auto plan = read_plan(a.plan);
  a.exec.apply(plan);
  const auto run = run_kascade(trace, plan, kPhase.at(a.phase), !a.non_causal);
  std::fprintf(text_out, "trace %s, phase %s, mode %s, pooling %s\n", trace.prompt_id.c_str(),
              a.phase.c_str(), to_string(plan.mode), to_string(plan.pooling));
  std::fprintf(text_out, "%s", format_report(run.report).c_str());
  if (!a.report.empty()) emit(a.report, report_to_json(run.report).dump(2) + "\n");
  return threshold_exit(run.report, a.fail_above);
}

std::string cost_csv_header() {
  return "name,phase,num_layers,num_anchors,topk_fraction,seq_len,anchor0,anchor,reuse,"
         "dense_time,kascade_time,speedup,published_time,published_speedup\n";
}

std::string cost_csv_row(const std::string& name, const CostParams& p, const KindTimes& t,
                         const CostReport& r, std::optional<double> pub_time,
                         std::optional<double> pub_speedup) {
  auto num = [](double v) { return nlohmann::json(v).dump(); };
  return name + "," + to_string(p.phase) + "," + std::to_string(p.num_layers) + "," +
         std::to_string(p.num_anchors) + "," + num(p.topk_fraction) + "," +
         std::to_string(p.seq_len) + "," + num(t.anchor0) + "," + num(t.anchor) + "," +
         num(t.reuse) + "," + num(r.dense_time) + "," + num(r.kascade_time) + "," +
         num(r.speedup) + "," + (pub_time ? num(*pub_time) : "") + "," +
         (pub_speedup ? num(*pub_speedup) : "") + "\n";
}

CostParams preset_params(const MeasuredRow& row, const CostArgs& a) {
  CostParams p;
  p.phase = row.phase;
  p.num_layers = a.layers;
  p.num_anchors = a.anchors;
  p.topk_fraction = row.topk_percent / 100.0;
  p.seq_len = row.seq_len;
  p.dense_layer_time = row.tl_ms;
  return p;
}

int cmd_cost(const CostArgs& a) {
  if (a.json == "-" || a.csv == "-") text_out = stderr;
  if (a.list_presets) {
    for (const auto& row : measured_rows()) std::fprintf(text_out, "%s\n", preset_name(row).c_str());
    return kExitOk;
  }
  if (a.all_presets) {
    nlohmann::json rows = nlohmann::json::array();
    std::string csv = cost_csv_header();
    std::fprintf(text_out, "%-28s %12s %12s %9s %9s\n", "preset", "kascade_ms", "published", "speedup",
                "published");
    for (const auto& row : measured_rows()) {
      const auto p = preset_params(row, a);
      const KindTimes t{row.anchor0_ms, row.anchor_ms, row.reuse_ms};
      const auto r = weighted_pipeline_time(p, t);
      const auto name = preset_name(row);
      std::fprintf(text_out, "%-28s %12.4f %12.4f %9.3f %9.3f\n", name.c_str(), r.kascade_time,
                  row.kascade_ms, r.speedup, row.tl_speedup);
      auto j = cost_to_json(p, t, r);
      j["name"] = name;
      j["published_time"] = row.kascade_ms;
      j["published_speedup"] = row.tl_speedup;
      rows.push_back(j);
      csv += cost_csv_row(name, p, t, r, row.kascade_ms, row.tl_speedup);
    }
    emit(a.json, rows.dump(2) + "\n");
    emit(a.csv, csv);
    return kExitOk;
  }

  CostParams p;
  KindTimes t{a.anchor0, a.anchor, a.reuse};
  std::string name = "custom";
  std::optional<double> pub_time, pub_speedup;
  if (a.preset) {
    const auto row = find_preset(*a.preset);
    if (!row) throw InvalidArgument("unknown preset " + *a.preset + " (see --list-presets)");
    p = preset_params(*row, a);
    t = {row->anchor0_ms, row->anchor_ms, row->reuse_ms};
    name = *a.preset;
    pub_time = row->kascade_ms;
    pub_speedup = row->tl_speedup;
  } else {
    p.phase = kPhase.at(a.phase);
    p.num_layers = a.layers;
    p.num_anchors = a.anchors;
    p.topk_fraction = a.fraction;
    p.seq_len = a.seq;
    p.dense_layer_time = a.dense;
    if (a.predict) {
      const auto pred = predict_ratios(p.phase, p.topk_fraction, p.seq_len);
      if (!pred.valid_length) {
        std::fprintf(stderr, "warning: seq %zu is below %zu; ratio model unreliable\n",
                     p.seq_len, kRatioModelMinSeqLen);
      }
      t = {pred.ratios.anchor0 * p.dense_layer_time, pred.ratios.anchor * p.dense_layer_time,
           pred.ratios.reuse * p.dense_layer_time};
      name = "predicted";
    }
  }
  const auto r = weighted_pipeline_time(p, t);
  std::fprintf(text_out, "%s: %s, %zu layers, %zu anchors, k %g%%, seq %zu\n", name.c_str(),
              to_string(p.phase), p.num_layers, p.num_anchors, 100 * p.topk_fraction, p.seq_len);
  std::fprintf(text_out, "  %-8s %12s %12s\n", "kind", "time", "weighted");
  std::fprintf(text_out, "  %-8s %12.6f %12.6f\n", "anchor0", t.anchor0, r.weighted.anchor0);
  std::fprintf(text_out, "  %-8s %12.6f %12.6f\n", "anchor", t.anchor, r.weighted.anchor);
  std::fprintf(text_out, "  %-8s %12.6f %12.6f\n", "reuse", t.reuse, r.weighted.reuse);
  std::fprintf(text_out, "  kascade %.6f vs dense %.6f, speedup %.4f\n", r.kascade_time, r.dense_time,
              r.speedup);
  if (pub_time) std::fprintf(text_out, "  published %.4f, speedup %.2f\n", *pub_time, *pub_speedup);
  auto j = cost_to_json(p, t, r);
  j["name"] = name;
  emit(a.json, j.dump(2) + "\n");
  emit(a.csv, cost_csv_header() + cost_csv_row(name, p, t, r, pub_time, pub_speedup));
  return kExitOk;
}

int cmd_report(const ReportArgs& a) {
  const auto text = read_text(a.path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("report is not valid JSON", static_cast<std::uint64_t>(e.byte));
  }
  const auto r = report_from_json(j);
  std::printf("%s", format_report(r).c_str());
  return threshold_exit(r, a.fail_above);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kascade Top-k sparse attention toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic trace");
  g->add_option("--layers", gen.layers, "Layers")->required()->check(CLI::PositiveNumber);
  g->add_option("--q-heads", gen.q_heads, "Query heads")->required()->check(CLI::PositiveNumber);
  g->add_option("--kv-heads", gen.kv_heads, "KV heads")->required()->check(CLI::PositiveNumber);
  g->add_option("--dim", gen.dim, "Head dimension")->required()->check(CLI::PositiveNumber);
  g->add_option("--tokens", gen.tokens, "Sequence length")->required()->check(CLI::PositiveNumber);
  g->add_option("--model-dim", gen.model_dim, "Hidden size of X/Y, 0 for none");
  g->add_option("--rho", gen.rho, "Cross-layer correlation")->check(CLI::Range(0.0, 1.0));
  g->add_option("--temperature", gen.temperature, "Heavy-tail temperature")
      ->check(CLI::PositiveNumber);
  g->add_option("--hot-keys", gen.hot_keys, "Hot keys per row");
  g->add_option("--seed", gen.seed, "Seed");
  g->add_flag("--permute-heads", gen.permute_heads, "Permute kv heads per layer");
  g->add_option("--prompt-id", gen.prompt_id, "Prompt id stored in the header");
  g->add_option("-o,--out", gen.out, "Output trace file")->required();
  g->parse_complete_callback([&] {
    if (gen.q_heads % gen.kv_heads != 0) {
      throw CLI::ValidationError("--q-heads", "must be a multiple of --kv-heads (" +
                                                  std::to_string(gen.q_heads) + " % " +
                                                  std::to_string(gen.kv_heads) + " != 0)");
    }
  });

  AnalyzeArgs an;
  auto* az = app.add_subcommand("analyze", "Sparsity, similarity and importance reports");
  az->add_option("traces", an.traces, "Trace files or directories")->required();
  az->add_option("-k,--k", an.k, "Top-k size for similarity")->check(CLI::PositiveNumber);
  az->add_option("--coverage-k", an.coverage_k, "Top-k size for mass coverage (default N/10)")
      ->check(CLI::PositiveNumber);
  az->add_option("--token-agg", an.token_agg, "Token aggregation")
      ->check(CLI::IsMember({"mean", "min"}));
  az->add_flag("--head-mapped", an.head_mapped, "Score layers through best head maps");
  az->add_flag("--importance", an.importance, "Also compute layer importance weights");
  az->add_option("--out-dir", an.out_dir, "Directory for CSV and JSON outputs");

  PlanArgs pl;
  auto* p = app.add_subcommand("plan", "Select anchor layers and head maps");
  p->add_option("traces", pl.traces, "Trace files or directories")->required();
  p->add_option("-m,--budget", pl.budget, "Anchor budget M")->check(CLI::PositiveNumber);
  p->add_option("-k,--k", pl.k, "Top-k size for similarity")->check(CLI::PositiveNumber);
  p->add_option("--token-agg", pl.token_agg, "Token aggregation")
      ->check(CLI::IsMember({"mean", "min"}));
  p->add_flag("--no-importance", pl.no_importance, "Skip importance weighting");
  pl.exec.attach(p);
  p->add_option("-o,--out", pl.out, "Output plan file")->required();

  RunArgs rn;
  auto* r = app.add_subcommand("run", "Run dense and Kascade attention and compare");
  r->add_option("--trace", rn.trace, "Trace file")->required();
  r->add_option("--plan", rn.plan, "Plan file")->required();
  r->add_option("--phase", rn.phase, "Tiling phase")->check(CLI::IsMember({"prefill", "decode"}));
  r->add_flag("--non-causal", rn.non_causal, "Attend to every key");
  rn.exec.attach(r);
  r->add_option("--fail-above", rn.fail_above, "Exit 3 when max rel_err exceeds this");
  r->add_option("--report", rn.report, "Write the JSON report here, - for stdout");

  CostArgs co;
  auto* c = app.add_subcommand("cost", "Weighted per-layer cost model");
  auto* preset = c->add_option("--preset", co.preset, "Measured row, e.g. table3-decode-131072-k10");
  auto* all = c->add_flag("--all-presets", co.all_presets, "Evaluate every measured row");
  auto* list = c->add_flag("--list-presets", co.list_presets, "List preset names");
  auto* predict = c->add_flag("--predict", co.predict, "Per-kind ratios from the fitted model");
  preset->excludes(all)->excludes(list)->excludes(predict);
  all->excludes(list)->excludes(predict);
  list->excludes(predict);
  c->add_option("--phase", co.phase, "Phase")->check(CLI::IsMember({"prefill", "decode"}));
  c->add_option("--layers", co.layers, "Layers")->check(CLI::PositiveNumber);
  c->add_option("--anchors", co.anchors, "Anchor layers M")->check(CLI::PositiveNumber);
  c->add_option("--fraction", co.fraction, "Top-k fraction")->check(CLI::Range(0.0, 1.0));
  c->add_option("--seq", co.seq, "Sequence length");
  c->add_option("--dense", co.dense, "Dense per-layer time")->check(CLI::PositiveNumber);
  auto* a0 = c->add_option("--anchor0", co.anchor0, "Layer-0 time");
  auto* an1 = c->add_option("--anchor", co.anchor, "Anchor layer time");
  auto* ru = c->add_option("--reuse", co.reuse, "Reuse layer time");
  for (auto* opt : {a0, an1, ru}) {
    opt->check(CLI::NonNegativeNumber)->excludes(preset)->excludes(all)->excludes(predict);
  }
  c->add_option("--json", co.json, "Write JSON here, - for stdout");
  c->add_option("--csv", co.csv, "Write CSV here, - for stdout");

  ReportArgs rp;
  auto* rep = app.add_subcommand("report", "Print a saved run report");
  rep->add_option("report", rp.path, "Report JSON")->required();
  rep->add_option("--fail-above", rp.fail_above, "Exit 3 when max rel_err exceeds this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*az) return cmd_analyze(an);
    if (*p) return cmd_plan(pl);
    if (*r) return cmd_run(rn);
    if (*c) return cmd_cost(co);
    if (*rep) return cmd_report(rp);
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitData;
  } catch (const InvalidPlan& e) {
    std::cerr << "invalid plan: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
