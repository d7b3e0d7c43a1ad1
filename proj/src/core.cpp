#include "hardmine/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace hardmine {

FeatureTable::FeatureTable(std::vector<SampleId> ids, RowMatrix features, std::vector<std::optional<int>> cameras)
    : ids_(std::move(ids)), features_(std::move(features)), cameras_(std::move(cameras)) {
    if (static_cast<std::size_t>(features_.rows()) != ids_.size() || cameras_.size() != ids_.size()) {
        throw Error("dimension_mismatch", "dimension mismatch");
    }
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!index_.emplace(ids_[i], i).second) {
            throw Error("duplicate_sample", "duplicate sample_id '" + ids_[i] + "'");
        }
    }
}

std::size_t FeatureTable::index_of(const SampleId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        throw Error("unknown_sample", "unknown sample '" + id + "'");
    }
    return it->second;
}

const std::string& TruthOracle::truth_of(const SampleId& id) const {
    auto it = truth_.find(id);
    if (it == truth_.end()) {
        throw Error("unknown_sample", "no ground truth for sample '" + id + "'");
    }
    return it->second;
}

Dataset::Dataset(std::vector<Sample> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) {
        throw Error("empty_dataset", "empty dataset");
    }
    dim_ = samples_.front().features.size();
    index_.reserve(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const Sample& s = samples_[i];
        if (s.features.size() != dim_) {
            throw Error("dimension_mismatch", "dimension mismatch: sample '" + s.sample_id + "' has " +
                                                  std::to_string(s.features.size()) + " features, expected " +
                                                  std::to_string(dim_));
        }
        if (!index_.emplace(s.sample_id, i).second) {
            throw Error("duplicate_sample", "duplicate sample_id '" + s.sample_id + "'");
        }
    }
}

std::optional<std::size_t> Dataset::find(const SampleId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

FeatureTable Dataset::features() const {
    std::vector<SampleId> ids;
    std::vector<std::optional<int>> cameras;
    RowMatrix m(static_cast<Eigen::Index>(samples_.size()), static_cast<Eigen::Index>(dim_));
    ids.reserve(samples_.size());
    cameras.reserve(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        ids.push_back(samples_[i].sample_id);
        cameras.push_back(samples_[i].camera_id);
        for (std::size_t j = 0; j < dim_; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples_[i].features[j];
        }
    }
    return FeatureTable(std::move(ids), std::move(m), std::move(cameras));
}

TruthOracle Dataset::truth_oracle() const {
    std::map<SampleId, std::string> truth;
    for (const Sample& s : samples_) {
        truth.emplace(s.sample_id, s.truth);
    }
    return TruthOracle(std::move(truth));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    std::vector<Sample> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        out.push_back(samples_.at(i));
    }
    return Dataset(std::move(out));
}

std::string to_string(LabelSource source) {
    switch (source) {
    case LabelSource::simulated:
        return "simulated";
    case LabelSource::human:
        return "human";
    case LabelSource::ground_truth_bootstrap:
        return "ground-truth-bootstrap";
    }
    return "simulated";
}

LabelSource label_source_from_string(const std::string& name) {
    if (name == "simulated") {
        return LabelSource::simulated;
    }
    if (name == "human") {
        return LabelSource::human;
    }
    if (name == "ground-truth-bootstrap") {
        return LabelSource::ground_truth_bootstrap;
    }
    throw Error("parse_error", "unknown label source '" + name + "'");
}

PoolState::PoolState(const std::vector<SampleId>& all_ids) : unlabeled_(all_ids.begin(), all_ids.end()) {
    if (unlabeled_.size() != all_ids.size()) {
        throw Error("duplicate_sample", "duplicate sample id in pool");
    }
}

double PoolState::labeled_fraction() const {
    const std::size_t n = total();
    return n == 0 ? 0.0 : static_cast<double>(labeled_.size()) / static_cast<double>(n);
}

bool PoolState::in_query(const SampleId& id) const {
    return std::find(query_.begin(), query_.end(), id) != query_.end();
}

void PoolState::enqueue(const std::vector<SampleId>& ids) {
    for (const SampleId& id : ids) {
        if (!unlabeled_.contains(id)) {
            throw Error("invariant_violation", "cannot enqueue '" + id + "': not in the unlabeled set");
        }
    }
    for (const SampleId& id : ids) {
        unlabeled_.erase(id);
        query_.push_back(id);
    }
}

void PoolState::take_unassigned(const SampleId& id) {
    if (unlabeled_.erase(id) == 1) {
        return;
    }
    auto it = std::find(query_.begin(), query_.end(), id);
    if (it == query_.end()) {
        throw Error("invariant_violation", "sample '" + id + "' is already labeled or unknown");
    }
    query_.erase(it);
}

void PoolState::assign(const SampleId& id, const IdentityId& identity, LabelSource source) {
    auto reg = identities_.find(identity);
    if (reg == identities_.end()) {
        throw Error("unknown_identity", "unknown identity '" + identity + "'");
    }
    take_unassigned(id);
    labeled_.emplace(id, IdentityLabel{identity, source});
    reg->second.push_back(id);
}

IdentityId PoolState::create_identity(const SampleId& id, LabelSource source) {
    take_unassigned(id);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "id%05llu", static_cast<unsigned long long>(identity_counter_++));
    IdentityId identity(buf);
    identities_.emplace(identity, std::vector<SampleId>{id});
    labeled_.emplace(id, IdentityLabel{identity, source});
    return identity;
}

void PoolState::check_invariants(std::size_t expected_total) const {
    auto fail = [](const std::string& what) { throw Error("invariant_violation", "pool invariant violated: " + what); };
    std::set<SampleId> seen;
    for (const auto& [id, label] : labeled_) {
        seen.insert(id);
        if (!identities_.contains(label.identity_id)) {
            fail("label of '" + id + "' refers to unregistered identity");
        }
    }
    for (const SampleId& id : unlabeled_) {
        if (!seen.insert(id).second) {
            fail("'" + id + "' is both labeled and unlabeled");
        }
    }
    for (const SampleId& id : query_) {
        if (!seen.insert(id).second) {
            fail("'" + id + "' appears in the query set and another partition");
        }
    }
    if (seen.size() != expected_total) {
        fail("partitions cover " + std::to_string(seen.size()) + " samples, expected " + std::to_string(expected_total));
    }
    std::size_t members = 0;
    for (const auto& [identity, ids] : identities_) {
        if (ids.empty()) {
            fail("identity '" + identity + "' has no members");
        }
        for (const SampleId& id : ids) {
            auto it = labeled_.find(id);
            if (it == labeled_.end() || it->second.identity_id != identity) {
                fail("registry member '" + id + "' disagrees with its label");
            }
        }
        members += ids.size();
    }
    if (members != labeled_.size()) {
        fail("registry members do not match the labeled set");
    }
}

PoolState PoolState::restore(std::map<SampleId, IdentityLabel> labeled, std::set<SampleId> unlabeled,
                             std::vector<SampleId> query, std::map<IdentityId, std::vector<SampleId>> identities,
                             std::uint64_t identity_counter) {
    PoolState pool;
    pool.labeled_ = std::move(labeled);
    pool.unlabeled_ = std::move(unlabeled);
    pool.query_ = std::move(query);
    pool.identities_ = std::move(identities);
    pool.identity_counter_ = identity_counter;
    pool.check_invariants(pool.total());
    return pool;
}

ProbDist::ProbDist(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
        throw Error("invalid_distribution", "empty probability distribution");
    }
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw Error("invalid_distribution", "probability entries must be finite and nonnegative");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw Error("invalid_distribution", "probabilities sum to " + std::to_string(sum));
    }
}

std::size_t ProbDist::argmax() const {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& rule) {
        throw Error("invalid_config", "config field '" + field + "' must be " + rule);
    };
    if (!(batch_fraction > 0.0 && batch_fraction <= 1.0)) fail("batch_fraction", "in (0, 1]");
    if (!(budget_fraction > 0.0 && budget_fraction <= 1.0)) fail("budget_fraction", "in (0, 1]");
    if (!(init_labeled_fraction >= 0.0 && init_labeled_fraction < 1.0)) fail("init_labeled_fraction", "in [0, 1)");
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) fail("eval_fraction", "in [0, 1)");
    if (!(hard_pool_multiplier >= 1.0)) fail("hard_pool_multiplier", ">= 1");
    if (!(contradiction_threshold >= 0.0 && contradiction_threshold <= 1.0)) fail("contradiction_threshold", "in [0, 1]");
    if (idrm_batch_size < 1) fail("idrm_batch_size", ">= 1");
    if (!(annotator_error_rate >= 0.0 && annotator_error_rate <= 1.0)) fail("annotator_error_rate", "in [0, 1]");
    if (!(confusability_factor >= 0.0 && confusability_factor <= 1.0)) fail("confusability_factor", "in [0, 1]");
    if (model.embedding_dim < 1) fail("model.embedding_dim", ">= 1");
    if (!(model.learning_rate > 0.0)) fail("model.learning_rate", "> 0");
    if (model.minibatch_size < 1) fail("model.minibatch_size", ">= 1");
    if (!(model.verification_weight >= 0.0)) fail("model.verification_weight", ">= 0");
    if (!(model.weight_decay >= 0.0)) fail("model.weight_decay", ">= 0");
    if (target_metric) {
        const auto& m = target_metric->metric;
        if (m != "rank1" && m != "rank5" && m != "rank10" && m != "map") fail("target_metric.metric", "rank1|rank5|rank10|map");
    }
}

PoolState partition_dataset(const Dataset& dataset, double init_labeled_fraction, RngStream& rng) {
    if (dataset.empty()) {
        throw Error("empty_dataset", "empty dataset");
    }
    if (!(init_labeled_fraction >= 0.0 && init_labeled_fraction < 1.0)) {
        throw Error("invalid_argument", "init_labeled_fraction must be in [0, 1)");
    }
    const std::size_t n = dataset.size();
    const auto target = static_cast<std::size_t>(std::llround(init_labeled_fraction * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    // Members of each truth group in shuffled order, for top-ups.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i : order) {
        groups[dataset.at(i).truth].push_back(i);
    }

    std::vector<SampleId> ids;
    ids.reserve(n);
    for (const Sample& s : dataset.samples()) {
        ids.push_back(s.sample_id);
    }
    PoolState pool(ids);
    std::map<std::string, IdentityId> seeded;

    auto label = [&](std::size_t i) {
        const Sample& s = dataset.at(i);
        auto it = seeded.find(s.truth);
        if (it == seeded.end()) {
            seeded.emplace(s.truth, pool.create_identity(s.sample_id, LabelSource::ground_truth_bootstrap));
        } else {
            pool.assign(s.sample_id, it->second, LabelSource::ground_truth_bootstrap);
        }
    };

    for (std::size_t i : order) {
        if (pool.labeled().size() >= target && seeded.size() >= 2) {
            break;
        }
        const Sample& s = dataset.at(i);
        if (pool.labeled().contains(s.sample_id)) {
            continue;
        }
        label(i);
        const auto& reg = pool.identities().at(seeded.at(s.truth));
        if (reg.size() == 1) {
            for (std::size_t j : groups.at(s.truth)) {
                if (!pool.labeled().contains(dataset.at(j).sample_id)) {
                    label(j);
                    break;
                }
            }
        }
    }
    return pool;
}

} // namespace hardmine
