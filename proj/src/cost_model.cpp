// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kascade/cost_model.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "kascade/error.hpp"

namespace kascade {

namespace {

constexpr Phase D = Phase::decode;
constexpr Phase P = Phase::prefill;

// seq, topk%, FA3, TL, anchor0, anchor, reuse, Kascade, speedup FA3, speedup TL
constexpr std::array<MeasuredRow, 39> kRows{{
    {D, 8192, 10, 0.7, 0.71, 0.92, 0.82, 0.13, 0.24, 2.91, 2.95},
    {D, 16384, 10, 1.4, 1.39, 1.71, 1.45, 0.21, 0.41, 3.40, 3.37},
    {D, 32768, 10, 2.93, 2.94, 3.35, 2.71, 0.35, 0.74, 3.97, 3.98},
    {D, 65536, 10, 5.85, 5.83, 6.74, 5.39, 0.65, 1.43, 4.08, 4.07},
    {D, 131072, 10, 11.68, 11.64, 14.08, 10.78, 1.24, 2.83, 4.12, 4.11},
    {D, 262144, 10, 21.77, 21.63, 25.95, 20.63, 2.31, 5.34, 4.08, 4.05},
    {D, 524288, 10, 21.85, 21.73, 25.78, 20.65, 2.3, 5.33, 4.10, 4.08},
    {D, 8192, 20, 0.7, 0.71, 0.91, 0.89, 0.2, 0.31, 2.27, 2.30},
    {D, 16384, 20, 1.4, 1.39, 1.73, 1.61, 0.36, 0.56, 2.50, 2.49},
    {D, 32768, 20, 2.93, 2.94, 3.58, 3.22, 0.65, 1.06, 2.76, 2.77},
    {D, 65536, 20, 5.85, 5.83, 6.97, 6.22, 1.24, 2.04, 2.87, 2.86},
    {D, 131072, 20, 11.68, 11.64, 13.85, 12.25, 2.42, 4.01, 2.92, 2.91},
    {D, 262144, 20, 21.77, 21.63, 27.79, 24.39, 4.54, 7.75, 2.81, 2.79},
    {D, 524288, 20, 21.85, 21.73, 28.79, 24.93, 4.55, 7.86, 2.78, 2.77},
    {D, 8192, 30, 0.7, 0.71, 0.93, 0.98, 0.27, 0.38, 1.85, 1.87},
    {D, 16384, 30, 1.4, 1.39, 1.9, 1.93, 0.48, 0.71, 1.98, 1.97},
    {D, 32768, 30, 2.93, 2.94, 3.69, 3.66, 0.95, 1.37, 2.13, 2.14},
    {D, 65536, 30, 5.85, 5.83, 7.19, 7.06, 1.82, 2.64, 2.21, 2.21},
    {D, 131072, 30, 11.68, 11.64, 14.61, 15.1, 3.61, 5.39, 2.17, 2.16},
    {D, 262144, 30, 21.77, 21.63, 28.65, 27.63, 6.77, 10.06, 2.16, 2.15},
    {D, 524288, 30, 21.85, 21.73, 28.59, 28.4, 6.79, 10.17, 2.15, 2.14},
    {P, 8192, 10, 0.76, 1, 2.01, 2.01, 0.36, 0.62, 1.23, 1.62},
    {P, 16384, 10, 2.96, 3.98, 7.28, 6.69, 0.94, 1.86, 1.59, 2.14},
    {P, 32768, 10, 12.28, 17.13, 28.97, 25.11, 2.81, 6.42, 1.91, 2.67},
    {P, 65536, 10, 53.77, 64.65, 120.36, 103.77, 9.36, 24.63, 2.18, 2.62},
    {P, 131072, 10, 215.76, 262.21, 483.69, 416.53, 37.18, 98.55, 2.19, 2.66},
    {P, 262144, 10, 864.02, 1048.01, 1955.47, 1696.55, 160.14, 408.30, 2.12, 2.57},
    {P, 8192, 20, 0.76, 1, 2.04, 2.17, 0.47, 0.73, 1.04, 1.37},
    {P, 16384, 20, 2.96, 3.98, 7.5, 7.35, 1.42, 2.35, 1.26, 1.69},
    {P, 32768, 20, 12.28, 17.13, 31.25, 29.78, 4.68, 8.65, 1.42, 1.98},
    {P, 65536, 20, 53.77, 64.65, 128.18, 119.07, 17.07, 33.29, 1.62, 1.94},
    {P, 131072, 20, 215.76, 262.21, 507.71, 476.05, 72.2, 136.29, 1.58, 1.92},
    {P, 262144, 20, 864.02, 1048.01, 2067.97, 1949.78, 308.36, 568.53, 1.52, 1.84},
    {P, 8192, 30, 0.76, 1, 2.12, 2.36, 0.59, 0.86, 0.88, 1.16},
    {P, 16384, 30, 2.96, 3.98, 8.45, 8.82, 1.87, 2.94, 1.01, 1.35},
    {P, 32768, 30, 12.28, 17.13, 32.68, 33.58, 6.5, 10.70, 1.15, 1.60},
    {P, 65536, 30, 53.77, 64.65, 134.21, 132.42, 24.93, 41.78, 1.29, 1.55},
    {P, 131072, 30, 215.76, 262.21, 532.39, 534.61, 106.12, 173.00, 1.25, 1.52},
    {P, 262144, 30, 864.02, 1048.01, 2158.44, 2192.39, 457.54, 727.55, 1.19, 1.44},
}};

}  // namespace

CostReport weighted_pipeline_time(const CostParams& params, const KindTimes& times) {
  if (params.num_layers == 0 || params.num_anchors == 0 ||
      params.num_anchors > params.num_layers) {
    throw InvalidArgument("cost model: need 1 <= anchors <= layers");
  }
  if (!(times.anchor0 > 0.0 && times.anchor > 0.0 && times.reuse > 0.0 &&
        params.dense_layer_time > 0.0)) {
    throw InvalidArgument("cost model: times must be positive");
  }
  const double layers = static_cast<double>(params.num_layers);
  const double anchors = static_cast<double>(params.num_anchors);
  CostReport report;
  report.weighted.anchor0 = times.anchor0 / layers;
  report.weighted.anchor = (anchors - 1.0) * times.anchor / layers;
  report.weighted.reuse = (layers - anchors) * times.reuse / layers;
  report.kascade_time = report.weighted.anchor0 + report.weighted.anchor + report.weighted.reuse;
  report.dense_time = params.dense_layer_time;
  report.speedup = report.dense_time / report.kascade_time;
  return report;
}

std::span<const MeasuredRow> measured_rows() { return kRows; }

std::string preset_name(const MeasuredRow& row) {
  return std::string("table3-") + (row.phase == Phase::decode ? "decode" : "prefill") + "-" +
         std::to_string(row.seq_len) + "-k" + std::to_string(row.topk_percent);
}

std::optional<MeasuredRow> find_preset(const std::string& name) {
  for (const auto& row : kRows) {
    if (preset_name(row) == name) return row;
  }
  return std::nullopt;
}

RatioModel fit_ratio_model(Phase phase, std::size_t min_seq) {
  // Unknowns: gather, pass1, pass2, topk_slope. Each row gives three
  // equations (one per layer kind) after moving known terms to the right.
  std::vector<std::array<double, 5>> equations;
  for (const auto& row : kRows) {
    if (row.phase != phase || row.seq_len < min_seq) continue;
    const double f = row.topk_percent / 100.0;
    const double reuse = row.reuse_ms / row.tl_ms;
    const double anchor = row.anchor_ms / row.tl_ms;
    const double anchor0 = row.anchor0_ms / row.tl_ms;
    equations.push_back({1, 0, 0, 0, reuse - f});
    equations.push_back({1, 1, 1, f, anchor - f});
    equations.push_back({0, 0, 1, f, anchor0 - 1.0});
  }
  if (equations.size() < 4) throw InvalidArgument("fit_ratio_model: not enough rows");

  Eigen::MatrixXd a(equations.size(), 4);
  Eigen::VectorXd b(equations.size());
  for (std::size_t i = 0; i < equations.size(); ++i) {
    for (int c = 0; c < 4; ++c) a(static_cast<Eigen::Index>(i), c) = equations[i][c];
    b(static_cast<Eigen::Index>(i)) = equations[i][4];
  }
  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd residual = a * x - b;

  RatioModel model;
  model.gather = x(0);
  model.pass1 = x(1);
  model.pass2 = x(2);
  model.topk_slope = x(3);
  model.rms_residual = std::sqrt(residual.squaredNorm() / static_cast<double>(equations.size()));
  model.rows_used = equations.size() / 3;
  return model;
}

RatioPrediction predict_ratios(Phase phase, double topk_fraction, std::size_t seq_len) {
  if (!(topk_fraction > 0.0 && topk_fraction <= 1.0)) {
    throw InvalidArgument("predict_ratios: fraction must be in (0, 1]");
  }
  static const RatioModel decode = fit_ratio_model(Phase::decode);
  static const RatioModel prefill = fit_ratio_model(Phase::prefill);
  const RatioModel& m = phase == Phase::decode ? decode : prefill;

  RatioPrediction out;
  out.ratios.reuse = topk_fraction + m.gather;
  out.ratios.anchor = m.pass1 + m.pass2 + m.topk_slope * topk_fraction + out.ratios.reuse;
  out.ratios.anchor0 = 1.0 + m.pass2 + m.topk_slope * topk_fraction;
  out.valid_length = seq_len >= kRatioModelMinSeqLen;
  return out;
}

}  // namespace kascade
