#include "hardmine/annotation.hpp"

#include <algorithm>

namespace hardmine {

CostLedger& CostLedger::operator+=(const CostLedger& other) {
    comparisons += other.comparisons;
    labels_assigned += other.labels_assigned;
    new_identities_created += other.new_identities_created;
    wrong_labels += other.wrong_labels;
    naive_comparisons_baseline += other.naive_comparisons_baseline;
    return *this;
}

CostLedger operator-(const CostLedger& a, const CostLedger& b) {
    return CostLedger{a.comparisons - b.comparisons, a.labels_assigned - b.labels_assigned,
                      a.new_identities_created - b.new_identities_created, a.wrong_labels - b.wrong_labels,
                      a.naive_comparisons_baseline - b.naive_comparisons_baseline};
}

std::vector<std::pair<IdentityId, double>> rank_identities(const ModelState& model, const PoolState& pool,
                                                           const FeatureTable& features, const SampleId& sample_id) {
    const std::size_t row = features.index_of(sample_id);
    std::vector<double> probs;
    if (model.num_classes() > 0) {
        const ProbDist p = predict_identity(model, features.row(row));
        probs.assign(p.values().begin(), p.values().end());
    }
    std::vector<std::pair<IdentityId, double>> ranked;
    ranked.reserve(pool.identities().size());
    for (const auto& [identity, members] : pool.identities()) {
        const auto col = model.column_of(identity);
        ranked.emplace_back(identity, col ? probs[*col] : 0.0);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    return ranked;
}

namespace {

Recommendation slice_ranking(const ModelState& model, const PoolState& pool, const FeatureTable& features,
                             const SampleId& sample_id, const std::vector<std::pair<IdentityId, double>>& ranked,
                             std::size_t round, const ExperimentConfig& config) {
    if (round < 1) {
        throw Error("invalid_argument", "recommendation rounds start at 1");
    }
    const std::size_t per_round = config.idrm_batch_size;
    Recommendation rec;
    rec.sample_id = sample_id;
    rec.round = round;
    rec.identities_registered = ranked.size();
    rec.total_rounds = (ranked.size() + per_round - 1) / per_round;

    const std::size_t begin = (round - 1) * per_round;
    if (begin >= ranked.size()) {
        return rec;
    }
    const std::size_t end = std::min(ranked.size(), begin + per_round);
    const Eigen::VectorXd query = embed(model, features.row(features.index_of(sample_id)));
    for (std::size_t i = begin; i < end; ++i) {
        Candidate c;
        c.identity_id = ranked[i].first;
        c.probability = ranked[i].second;
        std::vector<std::pair<double, SampleId>> scored;
        for (const SampleId& member : pool.identities().at(c.identity_id)) {
            const Eigen::VectorXd e = embed(model, features.row(features.index_of(member)));
            scored.emplace_back(verify_embeddings(model, e, query), member);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) {
                return a.first > b.first;
            }
            return a.second < b.second;
        });
        for (std::size_t r = 0; r < std::min(scored.size(), config.representatives_per_candidate); ++r) {
            c.representatives.push_back(scored[r].second);
        }
        rec.candidates.push_back(std::move(c));
    }
    return rec;
}

} // namespace

Recommendation recommend_candidates(const ModelState& model, const PoolState& pool, const FeatureTable& features,
                                    const SampleId& sample_id, std::size_t round, const ExperimentConfig& config) {
    if (!features.contains(sample_id)) {
        throw Error("unknown_sample", "unknown sample '" + sample_id + "'");
    }
    if (!pool.in_query(sample_id)) {
        throw Error("not_in_query", "sample '" + sample_id + "' is not awaiting annotation");
    }
    const auto ranked = rank_identities(model, pool, features, sample_id);
    return slice_ranking(model, pool, features, sample_id, ranked, round, config);
}

SimulatedAnnotator::SimulatedAnnotator(TruthOracle truth, double error_rate, double confusability)
    : truth_(std::move(truth)), error_rate_(error_rate), confusability_(confusability) {
    if (!(error_rate >= 0.0 && error_rate <= 1.0) || !(confusability >= 0.0 && confusability <= 1.0)) {
        throw Error("invalid_argument", "annotator error rate and confusability must be in [0, 1]");
    }
}

const std::string& SimulatedAnnotator::identity_truth(const PoolState& pool, const IdentityId& identity) const {
    auto it = pool.identities().find(identity);
    if (it == pool.identities().end()) {
        throw Error("unknown_identity", "unknown identity '" + identity + "'");
    }
    return truth_.truth_of(it->second.front());
}

bool SimulatedAnnotator::truth_registered(const PoolState& pool, const std::string& truth) const {
    for (const auto& [identity, members] : pool.identities()) {
        if (truth_.truth_of(members.front()) == truth) {
            return true;
        }
    }
    return false;
}

bool SimulatedAnnotator::is_wrong(const PoolState& pool, const LabelDecision& decision) const {
    const std::string& truth = truth_.truth_of(decision.sample_id);
    if (decision.identity_id) {
        return identity_truth(pool, *decision.identity_id) != truth;
    }
    return truth_registered(pool, truth);
}

AnnotationOutcome simulate_annotation(const Recommendation& recommendation, const PoolState& pool,
                                      const SimulatedAnnotator& annotator, RngStream& rng) {
    AnnotationOutcome out;
    if (recommendation.exhausted()) {
        out.kind = OutcomeKind::new_identity;
        return out;
    }
    const std::string& truth = annotator.truth_of(recommendation.sample_id);
    const double false_accept = annotator.error_rate() * annotator.confusability();
    for (std::size_t i = 0; i < recommendation.candidates.size(); ++i) {
        const Candidate& c = recommendation.candidates[i];
        ++out.comparisons;
        const bool is_true = annotator.identity_truth(pool, c.identity_id) == truth;
        const bool accept = rng.bernoulli(is_true ? 1.0 - annotator.error_rate() : false_accept);
        if (accept) {
            out.kind = OutcomeKind::matched;
            out.identity_id = c.identity_id;
            out.position = i + 1;
            return out;
        }
    }
    out.kind = OutcomeKind::rejected_round;
    return out;
}

std::uint64_t naive_annotation_cost(std::size_t identities_before, std::span<const LabelDecision> decisions) {
    std::uint64_t total = 0;
    std::size_t registered = identities_before;
    for (const LabelDecision& d : decisions) {
        total += registered;
        if (!d.identity_id) {
            ++registered;
        }
    }
    return total;
}

IdentityId apply_label(PoolState& pool, const LabelDecision& decision, CostLedger& ledger,
                       const SimulatedAnnotator* judge) {
    const bool wrong = judge != nullptr && judge->is_wrong(pool, decision);
    const std::size_t registered = pool.identities().size();
    IdentityId assigned;
    if (decision.identity_id) {
        pool.assign(decision.sample_id, *decision.identity_id, decision.source);
        assigned = *decision.identity_id;
    } else {
        assigned = pool.create_identity(decision.sample_id, decision.source);
        ++ledger.new_identities_created;
    }
    ledger.comparisons += decision.comparisons;
    ledger.naive_comparisons_baseline += registered;
    ++ledger.labels_assigned;
    if (wrong) {
        ++ledger.wrong_labels;
    }
    return assigned;
}

std::vector<LabelDecision> annotate_batch(const ModelState& model, PoolState& pool, const FeatureTable& features,
                                          std::span<const SampleId> batch, const SimulatedAnnotator& annotator,
                                          const ExperimentConfig& config, CostLedger& ledger, RngStream& rng) {
    for (const SampleId& id : batch) {
        if (!pool.in_query(id)) {
            throw Error("not_in_query", "sample '" + id + "' is not in the query set");
        }
    }
    std::vector<LabelDecision> decisions;
    decisions.reserve(batch.size());
    for (const SampleId& id : batch) {
        const auto ranked = rank_identities(model, pool, features, id);
        LabelDecision decision;
        decision.sample_id = id;
        decision.source = LabelSource::simulated;
        for (std::size_t round = 1;; ++round) {
            const Recommendation rec = slice_ranking(model, pool, features, id, ranked, round, config);
            const AnnotationOutcome outcome = simulate_annotation(rec, pool, annotator, rng);
            decision.comparisons += outcome.comparisons;
            decision.round = round;
            if (outcome.kind == OutcomeKind::matched) {
                decision.identity_id = outcome.identity_id;
                decision.position = outcome.position;
                break;
            }
            if (outcome.kind == OutcomeKind::new_identity) {
                decision.position = 0;
                break;
            }
        }
        apply_label(pool, decision, ledger, &annotator);
        decisions.push_back(std::move(decision));
    }
    return decisions;
}

} // namespace hardmine
