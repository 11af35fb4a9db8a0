// Copyright 2026 The Kascade Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "kascade/cost_model.hpp"
#include "kascade/runner.hpp"
#include "kascade/sparsity.hpp"

namespace kascade {

inline constexpr int kPlanSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

// Plan files are JSON objects tagged "schema": "kascade-plan". Parse
// failures throw FormatError naming the offending field path.
nlohmann::json plan_to_json(const AnchorPlan& plan);
AnchorPlan plan_from_json(const nlohmann::json& j);
void write_plan(const std::filesystem::path& path, const AnchorPlan& plan);
AnchorPlan read_plan(const std::filesystem::path& path);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);
std::string format_report(const RunReport& report);

nlohmann::json cost_to_json(const CostParams& params, const KindTimes& times,
                            const CostReport& report);

// "row,col,value" with every L x L entry; values printed round-trip exact.
std::string similarity_to_csv(const SimilarityMatrix& s);
SimilarityMatrix similarity_from_csv(const std::string& csv);

std::string importance_to_csv(const LayerImportance& w);

// "layer,head,coverage" from a coverage_table().
std::string coverage_to_csv(const std::vector<double>& table, std::size_t num_query_heads);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace kascade
