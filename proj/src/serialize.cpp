// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "kascade/error.hpp"

namespace kascade {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw FormatError("expected an object", path);
  auto it = j.find(key);
  if (it == j.end()) throw FormatError("missing field", path + "." + key);
  return *it;
}

std::size_t as_count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    throw FormatError("expected a non-negative integer", path);
  }
  return j.get<std::size_t>();
}

double as_real(const json& j, const std::string& path) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  if (!j.is_number()) throw FormatError("expected a number", path);
  return j.get<double>();
}

std::string as_text(const json& j, const std::string& path) {
  if (!j.is_string()) throw FormatError("expected a string", path);
  return j.get<std::string>();
}

std::vector<std::size_t> as_counts(const json& j, const std::string& path) {
  if (!j.is_array()) throw FormatError("expected an array", path);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(as_count(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

void check_schema(const json& j, const char* name, int version) {
  if (as_text(field(j, "schema", "$"), "$.schema") != name) {
    throw FormatError(std::string("expected schema \"") + name + "\"", "$.schema");
  }
  if (as_count(field(j, "schema_version", "$"), "$.schema_version") !=
      static_cast<std::size_t>(version)) {
    throw FormatError("unsupported schema version", "$.schema_version");
  }
}

HeadMapMode parse_mode(const std::string& text, const std::string& path) {
  if (text == "remapped") return HeadMapMode::remapped;
  if (text == "identity") return HeadMapMode::identity;
  if (text == "all_heads_pooled") return HeadMapMode::all_heads_pooled;
  throw FormatError("unknown head-map mode \"" + text + "\"", path);
}

Pooling parse_pooling(const std::string& text, const std::string& path) {
  if (text == "post_softmax") return Pooling::post_softmax;
  if (text == "pre_softmax") return Pooling::pre_softmax;
  throw FormatError("unknown pooling \"" + text + "\"", path);
}

LayerKind parse_kind(const std::string& text, const std::string& path) {
  if (text == "anchor0") return LayerKind::anchor0;
  if (text == "anchor") return LayerKind::anchor;
  if (text == "reuse") return LayerKind::reuse;
  throw FormatError("unknown layer kind \"" + text + "\"", path);
}

json optional_real(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> parse_optional_real(const json& j, const std::string& path) {
  if (j.is_null()) return std::nullopt;
  return as_real(j, path);
}

std::string real_text(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

json plan_to_json(const AnchorPlan& plan) {
  json maps = json::array();
  for (const auto& m : plan.head_maps) {
    maps.push_back({{"reuse_layer", m.reuse_layer},
                    {"anchor_layer", m.anchor_layer},
                    {"map", m.map},
                    {"mode", to_string(m.mode)}});
  }
  return {{"schema", "kascade-plan"},
          {"schema_version", kPlanSchemaVersion},
          {"num_layers", plan.num_layers},
          {"num_kv_heads", plan.num_kv_heads},
          {"anchors", plan.core.anchors},
          {"budget", plan.core.budget},
          {"objective", plan.core.objective_value},
          {"source_digest", plan.core.source_digest},
          {"mode", to_string(plan.mode)},
          {"pooling", to_string(plan.pooling)},
          {"tile_size", plan.tile_size},
          {"k_policy", {{"fraction", plan.k_policy.fraction}, {"k_min", plan.k_policy.k_min}}},
          {"head_maps", maps}};
}

AnchorPlan plan_from_json(const json& j) {
  check_schema(j, "kascade-plan", kPlanSchemaVersion);
  AnchorPlan plan;
  plan.num_layers = as_count(field(j, "num_layers", "$"), "$.num_layers");
  plan.num_kv_heads = as_count(field(j, "num_kv_heads", "$"), "$.num_kv_heads");
  plan.core.anchors = as_counts(field(j, "anchors", "$"), "$.anchors");
  plan.core.budget = as_count(field(j, "budget", "$"), "$.budget");
  plan.core.objective_value = as_real(field(j, "objective", "$"), "$.objective");
  plan.core.source_digest = as_text(field(j, "source_digest", "$"), "$.source_digest");
  plan.mode = parse_mode(as_text(field(j, "mode", "$"), "$.mode"), "$.mode");
  plan.pooling = parse_pooling(as_text(field(j, "pooling", "$"), "$.pooling"), "$.pooling");
  plan.tile_size = as_count(field(j, "tile_size", "$"), "$.tile_size");
  const auto& policy = field(j, "k_policy", "$");
  plan.k_policy.fraction = as_real(field(policy, "fraction", "$.k_policy"), "$.k_policy.fraction");
  plan.k_policy.k_min = as_count(field(policy, "k_min", "$.k_policy"), "$.k_policy.k_min");
  const auto& maps = field(j, "head_maps", "$");
  if (!maps.is_array()) throw FormatError("expected an array", "$.head_maps");
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const std::string path = "$.head_maps[" + std::to_string(i) + "]";
    HeadMap m;
    m.reuse_layer = as_count(field(maps[i], "reuse_layer", path), path + ".reuse_layer");
    m.anchor_layer = as_count(field(maps[i], "anchor_layer", path), path + ".anchor_layer");
    m.map = as_counts(field(maps[i], "map", path), path + ".map");
    m.mode = parse_mode(as_text(field(maps[i], "mode", path), path + ".mode"), path + ".mode");
    plan.head_maps.push_back(std::move(m));
  }
  if (plan.core.anchors.size() != plan.core.budget) {
    throw FormatError("anchor count differs from budget", "$.anchors");
  }
  try {
    validate_anchors(plan.core.anchors, plan.num_layers);
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what(), "$.anchors");
  }
  return plan;
}

void write_plan(const std::filesystem::path& path, const AnchorPlan& plan) {
  write_text(path, plan_to_json(plan).dump(2) + "\n");
}

AnchorPlan read_plan(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what(), std::uint64_t{e.byte});
  }
  return plan_from_json(j);
}

json report_to_json(const RunReport& report) {
  json layers = json::array();
  for (const auto& row : report.per_layer) {
    layers.push_back({{"layer", row.layer},
                      {"kind", to_string(row.kind)},
                      {"output_rel_err_l2", row.output_rel_err_l2},
                      {"mass_recovered_mean", optional_real(row.mass_recovered_mean)},
                      {"fallback_rows", row.fallback_rows}});
  }
  return {{"schema", "kascade-run-report"},
          {"schema_version", kReportSchemaVersion},
          {"config_digest", report.config_digest},
          {"per_layer", layers},
          {"mean_rel_err", report.mean_rel_err},
          {"max_rel_err", report.max_rel_err},
          {"mean_mass_recovered", optional_real(report.mean_mass_recovered)},
          {"mean_reuse_mass_recovered", optional_real(report.mean_reuse_mass_recovered)}};
}

RunReport report_from_json(const json& j) {
  check_schema(j, "kascade-run-report", kReportSchemaVersion);
  RunReport report;
  report.config_digest = as_text(field(j, "config_digest", "$"), "$.config_digest");
  const auto& layers = field(j, "per_layer", "$");
  if (!layers.is_array()) throw FormatError("expected an array", "$.per_layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string path = "$.per_layer[" + std::to_string(i) + "]";
    LayerReport row;
    row.layer = as_count(field(layers[i], "layer", path), path + ".layer");
    row.kind = parse_kind(as_text(field(layers[i], "kind", path), path + ".kind"), path + ".kind");
    row.output_rel_err_l2 =
        as_real(field(layers[i], "output_rel_err_l2", path), path + ".output_rel_err_l2");
    row.mass_recovered_mean = parse_optional_real(field(layers[i], "mass_recovered_mean", path),
                                                  path + ".mass_recovered_mean");
    row.fallback_rows = as_count(field(layers[i], "fallback_rows", path), path + ".fallback_rows");
    report.per_layer.push_back(row);
  }
  summarize(report);
  return report;
}

std::string format_report(const RunReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %-8s %14s %14s %9s\n", "layer", "kind", "rel_err_l2",
                "mass_recovered", "fallback");
  out << line;
  for (const auto& row : report.per_layer) {
    const std::string mass =
        row.mass_recovered_mean ? std::to_string(*row.mass_recovered_mean) : std::string("-");
    std::snprintf(line, sizeof line, "%-6zu %-8s %14.6e %14s %9zu\n", row.layer,
                  to_string(row.kind), row.output_rel_err_l2, mass.c_str(), row.fallback_rows);
    out << line;
  }
  std::snprintf(line, sizeof line, "mean rel_err %.6e, max rel_err %.6e\n", report.mean_rel_err,
                report.max_rel_err);
  out << line;
  if (report.mean_mass_recovered) {
    out << "mean mass recovered " << std::to_string(*report.mean_mass_recovered);
    if (report.mean_reuse_mass_recovered) {
      out << " (reuse layers " << std::to_string(*report.mean_reuse_mass_recovered) << ")";
    }
    out << "\n";
  }
  if (!report.config_digest.empty()) out << "config " << report.config_digest << "\n";
  return out.str();
}

json cost_to_json(const CostParams& params, const KindTimes& times, const CostReport& report) {
  return {{"phase", to_string(params.phase)},
          {"num_layers", params.num_layers},
          {"num_anchors", params.num_anchors},
          {"topk_fraction", params.topk_fraction},
          {"seq_len", params.seq_len},
          {"times", {{"anchor0", times.anchor0}, {"anchor", times.anchor}, {"reuse", times.reuse}}},
          {"weighted",
           {{"anchor0", report.weighted.anchor0},
            {"anchor", report.weighted.anchor},
            {"reuse", report.weighted.reuse}}},
          {"dense_time", report.dense_time},
          {"kascade_time", report.kascade_time},
          {"speedup", report.speedup}};
}

std::string similarity_to_csv(const SimilarityMatrix& s) {
  std::string out = "row,col,value\n";
  for (std::size_t a = 0; a < s.num_layers; ++a) {
    for (std::size_t b = 0; b < s.num_layers; ++b) {
      out += std::to_string(a) + "," + std::to_string(b) + "," + real_text(s.at(a, b)) + "\n";
    }
  }
  return out;
}

SimilarityMatrix similarity_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "row,col,value") {
    throw FormatError("expected header row,col,value", "line 1");
  }
  std::vector<std::tuple<std::size_t, std::size_t, double>> cells;
  std::size_t max_index = 0;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::size_t a = 0, b = 0;
    double v = 0.0;
    const char* p = line.data();
    const char* end = p + line.size();
    auto r1 = std::from_chars(p, end, a);
    if (r1.ec != std::errc() || r1.ptr == end || *r1.ptr != ',') {
      throw FormatError("bad row index", "line " + std::to_string(lineno));
    }
    auto r2 = std::from_chars(r1.ptr + 1, end, b);
    if (r2.ec != std::errc() || r2.ptr == end || *r2.ptr != ',') {
      throw FormatError("bad column index", "line " + std::to_string(lineno));
    }
    auto r3 = std::from_chars(r2.ptr + 1, end, v);
    if (r3.ec != std::errc() || r3.ptr != end) {
      throw FormatError("bad value", "line " + std::to_string(lineno));
    }
    cells.emplace_back(a, b, v);
    max_index = std::max({max_index, a, b});
  }
  auto s = SimilarityMatrix::zeros(cells.empty() ? 0 : max_index + 1);
  for (auto [a, b, v] : cells) s.at(a, b) = v;
  return s;
}

std::string importance_to_csv(const LayerImportance& w) {
  std::string out = "layer,weight\n";
  for (std::size_t l = 0; l < w.weights.size(); ++l) {
    out += std::to_string(l) + "," + real_text(w.weights[l]) + "\n";
  }
  return out;
}

std::string coverage_to_csv(const std::vector<double>& table, std::size_t num_query_heads) {
  std::string out = "layer,head,coverage\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += std::to_string(i / num_query_heads) + "," + std::to_string(i % num_query_heads) + "," +
           real_text(table[i]) + "\n";
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace kascade
