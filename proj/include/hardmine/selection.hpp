#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hardmine/core.hpp"
#include "hardmine/model.hpp"

namespace hardmine {

enum class Strategy { ahsm, entropy, least_confidence, margin, random };

std::string to_string(Strategy strategy);
/// Accepts ahsm | entropy | least_confidence (or lc) | margin (or ms) | random.
Strategy strategy_from_string(const std::string& name);

struct ScoredSample {
    SampleId sample_id;
    double score = 0.0;
    std::size_t rank = 0;
};

/// Sorts by score in the given direction, ties by ascending sample_id, and
/// fills in ranks.
void rank_scores(std::vector<ScoredSample>& scored, bool descending);

/// Mean labeled feature vector of one identity and the model's predicted
/// distribution for it.
struct ClassCenter {
    IdentityId identity_id;
    Eigen::VectorXd center_features;
    ProbDist center_dist;
};

// Baseline scorers.
double entropy_score(const ProbDist& dist);
double least_confidence_score(const ProbDist& dist);
/// Top-1 minus top-2 probability. Throws Error("margin_undefined") for K = 1.
double margin_score(const ProbDist& dist);

/// Symmetrized KL divergence sum_i (p_i - q_i) log(p_i / q_i), with both
/// arguments floored at kProbFloor.
double jeffreys_divergence(const ProbDist& p, const ProbDist& q);

/// Throws Error("unknown_identity") if the identity has no labeled members.
ClassCenter class_center(const ModelState& model, const PoolState& pool, const FeatureTable& features,
                         const IdentityId& identity);

/// One center per model class, in the model's column order.
std::vector<ClassCenter> class_centers(const ModelState& model, const PoolState& pool, const FeatureTable& features);

/// 1 - verify(center of the predicted class, x).
double uncertainty_score(const ModelState& model, const VectorRef& x, std::span<const ClassCenter> centers);

/// Jeffreys divergence between x's predicted distribution and the predicted
/// distribution of its predicted class's center.
double intra_diversity_score(const ModelState& model, const VectorRef& x, std::span<const ClassCenter> centers);

struct HardCandidate {
    SampleId sample_id;
    double uncertainty = 0.0;
    bool contradictory = false;
};

/// Scores every unlabeled sample by uncertainty and returns up to
/// `hard_pool_size` of them: contradictory samples (uncertainty above the
/// threshold) first, then the rest, each group by descending uncertainty
/// with ties broken by sample_id.
std::vector<HardCandidate> select_hard_samples(const ModelState& model, const PoolState& pool,
                                               const FeatureTable& features, std::span<const ClassCenter> centers,
                                               std::size_t hard_pool_size, double contradiction_threshold = 0.5);

/// Keeps the `batch_size` hard samples with the largest intra-diversity.
std::vector<SampleId> reduce_redundancy(const ModelState& model, std::span<const SampleId> hard_list,
                                        const FeatureTable& features, std::span<const ClassCenter> centers,
                                        std::size_t batch_size);

/// Per-candidate record of one selection pass.
struct AuditEntry {
    SampleId sample_id;
    std::optional<double> score;           // baseline score
    std::optional<double> uncertainty;     // ahsm stage 1
    std::optional<double> intra_diversity; // ahsm stage 2, hard-list members only
    bool contradictory = false;
    bool hard = false;
    bool selected = false;
};

struct SelectionAudit {
    Strategy strategy = Strategy::ahsm;
    std::size_t batch_size = 0;
    std::size_t hard_pool_size = 0;
    std::vector<AuditEntry> entries;  // ascending sample_id
};

/// min(round(batch_fraction * |pool|), |unlabeled|).
std::size_t batch_size_for(const ExperimentConfig& config, const PoolState& pool);

/// Number of uncertainty-ranked samples handed to the diversity stage.
std::size_t hard_pool_size_for(const ExperimentConfig& config, std::size_t batch_size);

/// Chooses the next query batch from the unlabeled set.
std::vector<SampleId> select_batch(Strategy strategy, const ModelState& model, const PoolState& pool,
                                   const FeatureTable& features, const ExperimentConfig& config, RngStream& rng,
                                   SelectionAudit* audit = nullptr);

} // namespace hardmine
