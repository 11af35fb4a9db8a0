// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <string>
#include <vector>

#include "kascade/attention.hpp"
#include "kascade/cost_model.hpp"
#include "kascade/error.hpp"
#include "kascade/planner.hpp"
#include "kascade/runner.hpp"
#include "kascade/serialize.hpp"
#include "kascade/sparsity.hpp"
#include "kascade/synthetic.hpp"
#include "kascade/trace_io.hpp"

namespace py = pybind11;
using namespace kascade;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const std::vector<float>& v, std::vector<py::ssize_t> shape) {
  py::array_t<float> out(shape);
  if (!v.empty()) std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(float));
  return out;
}

std::vector<float> from_numpy(const FloatArray& a, std::size_t ndim, const char* name) {
  if (static_cast<std::size_t>(a.ndim()) != ndim) {
    throw InvalidArgument(std::string(name) + " must have " + std::to_string(ndim) + " dimensions");
  }
  return {a.data(), a.data() + a.size()};
}

SimilarityMatrix matrix_from_numpy(const DoubleArray& s) {
  if (s.ndim() != 2 || s.shape(0) != s.shape(1)) throw InvalidArgument("S must be square");
  auto m = SimilarityMatrix::zeros(static_cast<std::size_t>(s.shape(0)));
  std::memcpy(m.values.data(), s.data(), m.values.size() * sizeof(double));
  return m;
}

py::array_t<double> matrix_to_numpy(const SimilarityMatrix& s) {
  const auto n = static_cast<py::ssize_t>(s.num_layers);
  py::array_t<double> out({n, n});
  std::memcpy(out.mutable_data(), s.values.data(), s.values.size() * sizeof(double));
  return out;
}

TokenAggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return TokenAggregation::mean;
  if (s == "min") return TokenAggregation::min;
  throw InvalidArgument("token aggregation must be mean or min, got " + s);
}

Phase parse_phase(const std::string& s) {
  if (s == "prefill") return Phase::prefill;
  if (s == "decode") return Phase::decode;
  throw InvalidArgument("phase must be prefill or decode, got " + s);
}

std::vector<AttentionTrace> trace_list(const py::object& traces) {
  if (py::isinstance<AttentionTrace>(traces)) return {traces.cast<AttentionTrace>()};
  return traces.cast<std::vector<AttentionTrace>>();
}

}  // namespace

PYBIND11_MODULE(_kascade, m) {
  m.doc() = "Kascade Top-k sparse attention toolkit, native core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<InvalidPlan>(m, "InvalidPlan", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<UnsupportedOperation>(m, "UnsupportedOperation", base.ptr());

  py::class_<TraceDims>(m, "TraceDims")
      .def_readonly("num_layers", &TraceDims::num_layers)
      .def_readonly("num_query_heads", &TraceDims::num_query_heads)
      .def_readonly("num_kv_heads", &TraceDims::num_kv_heads)
      .def_readonly("head_dim", &TraceDims::head_dim)
      .def_readonly("seq_len", &TraceDims::seq_len)
      .def_readonly("model_dim", &TraceDims::model_dim)
      .def("__repr__", [](const TraceDims& d) {
        return "TraceDims(L=" + std::to_string(d.num_layers) + ", Hq=" +
               std::to_string(d.num_query_heads) + ", Hkv=" + std::to_string(d.num_kv_heads) +
               ", d=" + std::to_string(d.head_dim) + ", N=" + std::to_string(d.seq_len) +
               ", model_dim=" + std::to_string(d.model_dim) + ")";
      });

  py::class_<AttentionTrace>(m, "Trace")
      .def_readonly("dims", &AttentionTrace::dims)
      .def_readonly("prompt_id", &AttentionTrace::prompt_id)
      .def_property_readonly("q", [](const AttentionTrace& t) {
        const auto& d = t.dims;
        return to_numpy(t.q, {py::ssize_t(d.num_layers), py::ssize_t(d.num_query_heads),
                              py::ssize_t(d.seq_len), py::ssize_t(d.head_dim)});
      })
      .def_property_readonly("k", [](const AttentionTrace& t) {
        const auto& d = t.dims;
        return to_numpy(t.k, {py::ssize_t(d.num_layers), py::ssize_t(d.num_kv_heads),
                              py::ssize_t(d.seq_len), py::ssize_t(d.head_dim)});
      })
      .def_property_readonly("v", [](const AttentionTrace& t) {
        const auto& d = t.dims;
        return to_numpy(t.v, {py::ssize_t(d.num_layers), py::ssize_t(d.num_kv_heads),
                              py::ssize_t(d.seq_len), py::ssize_t(d.head_dim)});
      })
      .def_property_readonly("x", [](const AttentionTrace& t) -> py::object {
        if (!t.has_hidden_states()) return py::none();
        const auto& d = t.dims;
        return to_numpy(t.x, {py::ssize_t(d.num_layers), py::ssize_t(d.seq_len),
                              py::ssize_t(d.model_dim)});
      })
      .def_property_readonly("y", [](const AttentionTrace& t) -> py::object {
        if (!t.has_hidden_states()) return py::none();
        const auto& d = t.dims;
        return to_numpy(t.y, {py::ssize_t(d.num_layers), py::ssize_t(d.seq_len),
                              py::ssize_t(d.model_dim)});
      })
      .def("__eq__", [](const AttentionTrace& a, const AttentionTrace& b) { return a == b; });

  m.def(
      "trace_from_arrays",
      [](const FloatArray& q, const FloatArray& k, const FloatArray& v, const py::object& x,
         const py::object& y, const std::string& prompt_id) {
        AttentionTrace t;
        t.prompt_id = prompt_id;
        t.q = from_numpy(q, 4, "q");
        t.k = from_numpy(k, 4, "k");
        t.v = from_numpy(v, 4, "v");
        t.dims = {std::size_t(q.shape(0)), std::size_t(q.shape(1)), std::size_t(k.shape(1)),
                  std::size_t(q.shape(3)), std::size_t(q.shape(2)), 0};
        if (x.is_none() != y.is_none()) throw InvalidArgument("x and y come together");
        if (!x.is_none()) {
          const auto xa = x.cast<FloatArray>();
          t.x = from_numpy(xa, 3, "x");
          t.y = from_numpy(y.cast<FloatArray>(), 3, "y");
          t.dims.model_dim = std::size_t(xa.shape(2));
        }
        t.validate_shape();
        return t;
      },
      py::arg("q"), py::arg("k"), py::arg("v"), py::arg("x") = py::none(),
      py::arg("y") = py::none(), py::arg("prompt_id") = "");

  m.def(
      "generate_synthetic",
      [](std::size_t layers, std::size_t q_heads, std::size_t kv_heads, std::size_t dim,
         std::size_t tokens, std::size_t model_dim, std::uint64_t seed, double rho,
         double temperature, std::size_t hot_keys, bool permute_heads,
         const std::string& prompt_id) {
        SynthConfig c;
        c.dims = {layers, q_heads, kv_heads, dim, tokens, model_dim};
        c.seed = seed;
        c.layer_correlation = rho;
        c.heavy_tail_temperature = temperature;
        c.hot_keys = hot_keys;
        c.prompt_id = prompt_id;
        if (permute_heads) c.head_permutations = random_head_permutations(layers, kv_heads, seed);
        return generate_synthetic(c);
      },
      py::arg("layers"), py::arg("q_heads"), py::arg("kv_heads"), py::arg("dim"),
      py::arg("tokens"), py::arg("model_dim") = 0, py::arg("seed") = 0, py::arg("rho") = 0.95,
      py::arg("temperature") = 0.25, py::arg("hot_keys") = 4, py::arg("permute_heads") = false,
      py::arg("prompt_id") = "synthetic");

  m.def("read_trace", &read_trace, py::arg("path"));
  m.def("write_trace", &write_trace, py::arg("path"), py::arg("trace"));
  m.def("encode_trace", [](const AttentionTrace& t) {
    const auto b = encode_trace(t);
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
  });
  m.def("decode_trace", [](const py::bytes& b) {
    const std::string s = b;
    return decode_trace(
        std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  });

  m.def(
      "head_probabilities",
      [](const AttentionTrace& t, std::size_t layer, std::size_t head, bool causal) {
        const auto p = head_probabilities(t, layer, head, causal);
        const auto n = static_cast<py::ssize_t>(p.rows());
        py::array_t<double> out({n, n});
        auto r = out.mutable_unchecked<2>();
        for (py::ssize_t i = 0; i < n; ++i) {
          const auto row = p.row(std::size_t(i));
          for (py::ssize_t j = 0; j < n; ++j) r(i, j) = j < py::ssize_t(row.size()) ? row[j] : 0.0;
        }
        return out;
      },
      py::arg("trace"), py::arg("layer"), py::arg("head"), py::arg("causal") = true);

  m.def(
      "dense_output",
      [](const AttentionTrace& t, std::size_t layer, bool causal) {
        const auto& d = t.dims;
        return to_numpy(dense_output(t, layer, causal),
                        {py::ssize_t(d.num_query_heads), py::ssize_t(d.seq_len),
                         py::ssize_t(d.head_dim)});
      },
      py::arg("trace"), py::arg("layer"), py::arg("causal") = true);

  m.def(
      "coverage_table",
      [](const AttentionTrace& t, std::size_t k) {
        const auto c = coverage_table(t, k);
        py::array_t<double> out({py::ssize_t(t.dims.num_layers), py::ssize_t(t.dims.num_query_heads)});
        std::memcpy(out.mutable_data(), c.data(), c.size() * sizeof(double));
        return out;
      },
      py::arg("trace"), py::arg("k"));

  m.def(
      "similarity_matrix",
      [](const py::object& traces, std::size_t k, const std::string& aggregation,
         bool head_mapped) {
        const auto ts = trace_list(traces);
        SimilarityOptions o;
        o.k = k;
        o.token_aggregation = parse_aggregation(aggregation);
        o.mode = head_mapped ? SimilarityMode::head_mapped : SimilarityMode::layer_pooled;
        return matrix_to_numpy(similarity_matrix(ts, o));
      },
      py::arg("traces"), py::arg("k") = 64, py::arg("token_aggregation") = "mean",
      py::arg("head_mapped") = false);

  m.def(
      "layer_importance",
      [](const py::object& traces) { return layer_importance(trace_list(traces)).weights; },
      py::arg("traces"));

  m.def(
      "select_anchors",
      [](const DoubleArray& s, std::size_t budget) {
        const auto c = select_anchors(matrix_from_numpy(s), budget);
        return py::make_tuple(c.anchors, c.objective_value);
      },
      py::arg("S"), py::arg("budget"));
  m.def(
      "exhaustive_select",
      [](const DoubleArray& s, std::size_t budget) {
        const auto c = exhaustive_select(matrix_from_numpy(s), budget);
        return py::make_tuple(c.anchors, c.objective_value);
      },
      py::arg("S"), py::arg("budget"));
  m.def(
      "objective",
      [](const DoubleArray& s, const std::vector<std::size_t>& anchors) {
        return objective(matrix_from_numpy(s), anchors);
      },
      py::arg("S"), py::arg("anchors"));

  m.def(
      "k_budget",
      [](std::size_t visible, double fraction, std::size_t k_min) {
        return k_budget(KBudgetPolicy{fraction, k_min}, visible);
      },
      py::arg("visible_keys"), py::arg("fraction") = 0.1, py::arg("k_min") = 128);

  m.def(
      "_plan",
      [](const py::object& traces, std::size_t budget, std::size_t k,
         const std::string& aggregation, bool use_importance, const std::string& overrides) {
        PlanOptions o;
        o.budget = budget;
        o.similarity_k = k;
        o.token_aggregation = parse_aggregation(aggregation);
        o.use_importance = use_importance;
        // Pooling, mode, tile size and k policy ride in a partial plan document.
        auto j = nlohmann::json::parse(overrides);
        const auto plan_defaults = [&] {
          AnchorPlan p = make_plan({{0}, 1, 0.0, ""}, 1, 1);
          auto d = plan_to_json(p);
          d.update(j);
          return plan_from_json(d);
        }();
        o.pooling = plan_defaults.pooling;
        o.mode = plan_defaults.mode;
        o.tile_size = plan_defaults.tile_size;
        o.k_policy = plan_defaults.k_policy;
        return plan_to_json(plan_from_traces(trace_list(traces), o).plan).dump();
      },
      py::arg("traces"), py::arg("budget"), py::arg("k"), py::arg("token_aggregation"),
      py::arg("use_importance"), py::arg("overrides"));

  m.def(
      "_run",
      [](const AttentionTrace& t, const std::string& plan, const std::string& phase,
         bool causal) {
        const auto p = plan_from_json(nlohmann::json::parse(plan));
        KascadeRun r;
        {
          py::gil_scoped_release release;
          r = run_kascade(t, p, parse_phase(phase), causal);
        }
        return report_to_json(r.report).dump();
      },
      py::arg("trace"), py::arg("plan"), py::arg("phase"), py::arg("causal"));

  m.def("_format_report", [](const std::string& report) {
    return format_report(report_from_json(nlohmann::json::parse(report)));
  });

  m.def(
      "_cost",
      [](double anchor0, double anchor, double reuse, std::size_t num_layers,
         std::size_t num_anchors, double dense, const std::string& phase, double fraction,
         std::size_t seq_len) {
        CostParams p;
        p.phase = parse_phase(phase);
        p.num_layers = num_layers;
        p.num_anchors = num_anchors;
        p.topk_fraction = fraction;
        p.seq_len = seq_len;
        p.dense_layer_time = dense;
        const KindTimes t{anchor0, anchor, reuse};
        return cost_to_json(p, t, weighted_pipeline_time(p, t)).dump();
      },
      py::arg("anchor0"), py::arg("anchor"), py::arg("reuse"), py::arg("num_layers"),
      py::arg("num_anchors"), py::arg("dense"), py::arg("phase"), py::arg("fraction"),
      py::arg("seq_len"));

  m.def("_presets", [] {
    auto rows = nlohmann::json::array();
    for (const auto& r : measured_rows()) {
      rows.push_back({{"name", preset_name(r)},
                      {"phase", to_string(r.phase)},
                      {"seq_len", r.seq_len},
                      {"topk_percent", r.topk_percent},
                      {"tl_ms", r.tl_ms},
                      {"anchor0_ms", r.anchor0_ms},
                      {"anchor_ms", r.anchor_ms},
                      {"reuse_ms", r.reuse_ms},
                      {"kascade_ms", r.kascade_ms},
                      {"tl_speedup", r.tl_speedup}});
    }
    return rows.dump();
  });
}
