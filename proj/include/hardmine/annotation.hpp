#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hardmine/core.hpp"
#include "hardmine/model.hpp"

namespace hardmine {

struct Candidate {
    IdentityId identity_id;
    std::vector<SampleId> representatives;
    double probability = 0.0;

    bool operator==(const Candidate&) const = default;
};

/// One round of identity candidates for a sample under annotation.
/// An empty candidate list means every registered identity has been shown
/// and the sample should become a new identity.
struct Recommendation {
    SampleId sample_id;
    std::size_t round = 1;
    std::size_t total_rounds = 0;
    std::size_t identities_registered = 0;
    std::vector<Candidate> candidates;

    [[nodiscard]] bool exhausted() const { return candidates.empty(); }
    /// Candidates shown in earlier rounds.
    [[nodiscard]] std::size_t offset(std::size_t batch_size) const { return (round - 1) * batch_size; }
};

/// Annotation effort counters. All fields only ever grow.
struct CostLedger {
    std::uint64_t comparisons = 0;
    std::uint64_t labels_assigned = 0;
    std::uint64_t new_identities_created = 0;
    std::uint64_t wrong_labels = 0;
    std::uint64_t naive_comparisons_baseline = 0;

    CostLedger& operator+=(const CostLedger& other);
    friend CostLedger operator-(const CostLedger& a, const CostLedger& b);
    bool operator==(const CostLedger&) const = default;
};

/// Every registered identity with the model's probability for the sample,
/// in descending probability order (ties by identity id). Identities the
/// model has not been trained on yet get probability 0.
std::vector<std::pair<IdentityId, double>> rank_identities(const ModelState& model, const PoolState& pool,
                                                           const FeatureTable& features, const SampleId& sample_id);

/// The `round`-th slice of `idrm_batch_size` ranked identities, each with
/// up to `representatives_per_candidate` member samples ordered by
/// verification score against the query.
Recommendation recommend_candidates(const ModelState& model, const PoolState& pool, const FeatureTable& features,
                                    const SampleId& sample_id, std::size_t round, const ExperimentConfig& config);

/// A label for one sample, as produced by a simulated or human annotator.
struct LabelDecision {
    SampleId sample_id;
    std::optional<IdentityId> identity_id;  // nullopt: create a new identity
    std::size_t round = 1;
    std::size_t position = 0;  // 1-based within the round; 0 for new identities
    std::uint64_t comparisons = 0;
    LabelSource source = LabelSource::simulated;

    bool operator==(const LabelDecision&) const = default;
};

enum class OutcomeKind { matched, rejected_round, new_identity };

struct AnnotationOutcome {
    OutcomeKind kind = OutcomeKind::rejected_round;
    IdentityId identity_id;     // matched only
    std::size_t position = 0;   // matched only, 1-based
    std::uint64_t comparisons = 0;
};

/// Annotator that knows the hidden identities and errs at a flat rate.
///
/// An identity's truth is that of its founding member. At the true
/// candidate the annotator accepts with probability 1 - error_rate; at any
/// other candidate it accepts with probability error_rate * confusability.
class SimulatedAnnotator {
public:
    SimulatedAnnotator(TruthOracle truth, double error_rate, double confusability = 0.0);

    [[nodiscard]] const std::string& truth_of(const SampleId& id) const { return truth_.truth_of(id); }
    [[nodiscard]] const std::string& identity_truth(const PoolState& pool, const IdentityId& identity) const;
    [[nodiscard]] bool truth_registered(const PoolState& pool, const std::string& truth) const;

    /// Whether applying `decision` to `pool` (state before labeling) gives
    /// a wrong label: the chosen identity belongs to someone else, or a new
    /// identity duplicates an already registered person.
    [[nodiscard]] bool is_wrong(const PoolState& pool, const LabelDecision& decision) const;

    [[nodiscard]] double error_rate() const { return error_rate_; }
    [[nodiscard]] double confusability() const { return confusability_; }

private:
    TruthOracle truth_;
    double error_rate_;
    double confusability_;
};

/// Reviews one round. Exhausted recommendations yield new_identity.
AnnotationOutcome simulate_annotation(const Recommendation& recommendation, const PoolState& pool,
                                      const SimulatedAnnotator& annotator, RngStream& rng);

/// Sum over decisions of the identities registered when each was made,
/// i.e. the cost of comparing one-by-one against every known identity.
std::uint64_t naive_annotation_cost(std::size_t identities_before, std::span<const LabelDecision> decisions);

/// Applies one decision: moves the sample to the labeled set and charges
/// the ledger. `judge`, when given, scores wrong labels against truth.
IdentityId apply_label(PoolState& pool, const LabelDecision& decision, CostLedger& ledger,
                       const SimulatedAnnotator* judge = nullptr);

/// Labels every sample of `batch` (in order) through the recommendation
/// rounds with the simulated annotator. Returns the decisions made.
std::vector<LabelDecision> annotate_batch(const ModelState& model, PoolState& pool, const FeatureTable& features,
                                          std::span<const SampleId> batch, const SimulatedAnnotator& annotator,
                                          const ExperimentConfig& config, CostLedger& ledger, RngStream& rng);

} // namespace hardmine
