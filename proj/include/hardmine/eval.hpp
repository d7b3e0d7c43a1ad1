#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hardmine/core.hpp"
#include "hardmine/model.hpp"

namespace hardmine {

/// One probe's ranked gallery and its relevance mask (1 = same identity,
/// seen from a different camera when cameras are known).
struct RetrievalResult {
    SampleId query_id;
    std::vector<SampleId> ranked;
    std::vector<std::uint8_t> relevant;
};

/// Fraction of queries with a relevant item in the top k. Queries without
/// any relevant item are skipped and counted in `excluded`.
double rank_k_accuracy(std::span<const RetrievalResult> results, std::size_t k, std::size_t* excluded = nullptr);

/// Mean over queries of average precision. Same exclusion rule.
double mean_average_precision(std::span<const RetrievalResult> results, std::size_t* excluded = nullptr);

/// AP of one relevance mask in rank order; 0 when nothing is relevant.
double average_precision(std::span<const std::uint8_t> relevant);

struct Metrics {
    double rank1 = 0.0;
    double rank5 = 0.0;
    double rank10 = 0.0;
    double map = 0.0;
    std::size_t queries = 0;
    std::size_t excluded_queries = 0;

    bool operator==(const Metrics&) const = default;
};

/// Looks up rank1 | rank5 | rank10 | map.
double metric_value(const Metrics& metrics, const std::string& name);

/// Every eval sample probes the rest of the split. Gallery items of the
/// same identity and the same camera are dropped from that probe's gallery.
/// Ranking is by ascending Euclidean distance between embeddings, ties by
/// sample_id.
std::vector<RetrievalResult> build_retrieval(const ModelState& model, const FeatureTable& features,
                                             const TruthOracle& truth);

/// rank-1/5/10 and mAP over the held-out split. Throws Error("empty_split").
Metrics evaluate_model(const ModelState& model, const FeatureTable& features, const TruthOracle& truth);

} // namespace hardmine
