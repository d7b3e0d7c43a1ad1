#pragma once

// JSON encodings for every persisted or served type. Objects use sorted
// keys (nlohmann's default map), and doubles are written in shortest
// round-trip form, so equal values always serialize to equal bytes.

#include <nlohmann/json.hpp>

#include "hardmine/annotation.hpp"
#include "hardmine/core.hpp"
#include "hardmine/eval.hpp"
#include "hardmine/ingest.hpp"
#include "hardmine/loop.hpp"
#include "hardmine/model.hpp"
#include "hardmine/selection.hpp"

namespace hardmine {

using nlohmann::json;

void to_json(json& j, const TargetMetric& v);
void from_json(const json& j, TargetMetric& v);
void to_json(json& j, const ModelConfig& v);
void from_json(const json& j, ModelConfig& v);
/// Missing keys keep their defaults; unknown keys are rejected.
void to_json(json& j, const ExperimentConfig& v);
void from_json(const json& j, ExperimentConfig& v);

void to_json(json& j, const SyntheticSpec& v);
void from_json(const json& j, SyntheticSpec& v);

void to_json(json& j, const CostLedger& v);
void from_json(const json& j, CostLedger& v);
void to_json(json& j, const Metrics& v);
void from_json(const json& j, Metrics& v);

void to_json(json& j, const PoolState& v);
void from_json(const json& j, PoolState& v);
void to_json(json& j, const ModelState& v);
void from_json(const json& j, ModelState& v);

void to_json(json& j, const Recommendation& v);
void to_json(json& j, const LabelDecision& v);
void to_json(json& j, const SelectionAudit& v);

/// `include_timing` adds wall-clock durations, which makes the output
/// differ between otherwise identical runs.
json record_to_json(const IterationRecord& r, bool include_timing = false);
IterationRecord record_from_json(const json& j);
json report_to_json(const ExperimentReport& r, bool include_timing = false);
json comparison_to_json(const ComparisonTable& t, bool include_timing = false);

/// Metrics JSON line for one iteration: iteration, labeled_fraction,
/// rank1, rank5, rank10, map, excluded_queries.
json metrics_line(const IterationRecord& r);

/// Learning curve as CSV, one row per record.
std::string report_to_csv(const ExperimentReport& r);
std::string comparison_to_csv(const ComparisonTable& t);

json state_to_json(const ExperimentState& s);
ExperimentState state_from_json(const json& j);

ExperimentConfig load_config(const std::filesystem::path& path);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

/// FNV-1a of the canonical config JSON.
std::uint64_t config_hash(const ExperimentConfig& config);

std::string hex64(std::uint64_t v);

} // namespace hardmine
