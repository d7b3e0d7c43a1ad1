#include "hardmine/selection.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hardmine {

std::string to_string(Strategy strategy) {
    switch (strategy) {
    case Strategy::ahsm:
        return "ahsm";
    case Strategy::entropy:
        return "entropy";
    case Strategy::least_confidence:
        return "least_confidence";
    case Strategy::margin:
        return "margin";
    case Strategy::random:
        return "random";
    }
    return "ahsm";
}

Strategy strategy_from_string(const std::string& name) {
    if (name == "ahsm") return Strategy::ahsm;
    if (name == "entropy" || name == "ep") return Strategy::entropy;
    if (name == "least_confidence" || name == "lc") return Strategy::least_confidence;
    if (name == "margin" || name == "ms") return Strategy::margin;
    if (name == "random") return Strategy::random;
    throw Error("invalid_argument", "unknown strategy '" + name + "'");
}

void rank_scores(std::vector<ScoredSample>& scored, bool descending) {
    std::sort(scored.begin(), scored.end(), [descending](const ScoredSample& a, const ScoredSample& b) {
        if (a.score != b.score) {
            return descending ? a.score > b.score : a.score < b.score;
        }
        return a.sample_id < b.sample_id;
    });
    for (std::size_t i = 0; i < scored.size(); ++i) {
        scored[i].rank = i;
    }
}

double entropy_score(const ProbDist& dist) {
    double h = 0.0;
    for (double p : dist.values()) {
        if (p > 0.0) {
            h -= p * std::log(std::max(p, kProbFloor));
        }
    }
    return std::max(h, 0.0);
}

double least_confidence_score(const ProbDist& dist) {
    return dist[dist.argmax()];
}

double margin_score(const ProbDist& dist) {
    if (dist.size() < 2) {
        throw Error("margin_undefined", "margin undefined");
    }
    double first = -1.0;
    double second = -1.0;
    for (double p : dist.values()) {
        if (p > first) {
            second = first;
            first = p;
        } else if (p > second) {
            second = p;
        }
    }
    return first - second;
}

double jeffreys_divergence(const ProbDist& p, const ProbDist& q) {
    if (p.size() != q.size()) {
        throw Error("dimension_mismatch", "distribution length mismatch");
    }
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = std::max(p[i], kProbFloor);
        const double qi = std::max(q[i], kProbFloor);
        d += (pi - qi) * (std::log(pi) - std::log(qi));
    }
    return d;
}

ClassCenter class_center(const ModelState& model, const PoolState& pool, const FeatureTable& features,
                         const IdentityId& identity) {
    auto it = pool.identities().find(identity);
    if (it == pool.identities().end() || it->second.empty()) {
        throw Error("unknown_identity", "unknown identity '" + identity + "'");
    }
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(features.dim()));
    for (const SampleId& id : it->second) {
        sum += features.row(features.index_of(id));
    }
    sum /= static_cast<double>(it->second.size());
    ProbDist dist = predict_identity(model, sum);
    return ClassCenter{identity, std::move(sum), std::move(dist)};
}

std::vector<ClassCenter> class_centers(const ModelState& model, const PoolState& pool, const FeatureTable& features) {
    std::vector<ClassCenter> centers;
    centers.reserve(model.num_classes());
    for (const IdentityId& identity : model.classes) {
        centers.push_back(class_center(model, pool, features, identity));
    }
    return centers;
}

namespace {

const ClassCenter& center_for(const ModelState& model, std::size_t column, std::span<const ClassCenter> centers) {
    if (centers.empty()) {
        throw Error("invalid_argument", "no class centers");
    }
    const IdentityId& identity = model.classes.at(column);
    if (column < centers.size() && centers[column].identity_id == identity) {
        return centers[column];
    }
    for (const ClassCenter& c : centers) {
        if (c.identity_id == identity) {
            return c;
        }
    }
    throw Error("unknown_identity", "no center for identity '" + identity + "'");
}

} // namespace

double uncertainty_score(const ModelState& model, const VectorRef& x, std::span<const ClassCenter> centers) {
    const std::size_t k = predict_identity(model, x).argmax();
    const ClassCenter& center = center_for(model, k, centers);
    return 1.0 - verify_pair(model, center.center_features, x);
}

double intra_diversity_score(const ModelState& model, const VectorRef& x, std::span<const ClassCenter> centers) {
    const ProbDist p = predict_identity(model, x);
    const ClassCenter& center = center_for(model, p.argmax(), centers);
    return jeffreys_divergence(p, center.center_dist);
}

std::vector<HardCandidate> select_hard_samples(const ModelState& model, const PoolState& pool,
                                               const FeatureTable& features, std::span<const ClassCenter> centers,
                                               std::size_t hard_pool_size, double contradiction_threshold) {
    std::vector<HardCandidate> all;
    all.reserve(pool.unlabeled().size());
    for (const SampleId& id : pool.unlabeled()) {
        const double u = uncertainty_score(model, features.row(features.index_of(id)), centers);
        all.push_back({id, u, u > contradiction_threshold});
    }
    std::sort(all.begin(), all.end(), [](const HardCandidate& a, const HardCandidate& b) {
        if (a.contradictory != b.contradictory) {
            return a.contradictory;
        }
        if (a.uncertainty != b.uncertainty) {
            return a.uncertainty > b.uncertainty;
        }
        return a.sample_id < b.sample_id;
    });
    all.resize(std::min(all.size(), hard_pool_size));
    return all;
}

std::vector<SampleId> reduce_redundancy(const ModelState& model, std::span<const SampleId> hard_list,
                                        const FeatureTable& features, std::span<const ClassCenter> centers,
                                        std::size_t batch_size) {
    std::vector<ScoredSample> scored;
    scored.reserve(hard_list.size());
    for (const SampleId& id : hard_list) {
        scored.push_back({id, intra_diversity_score(model, features.row(features.index_of(id)), centers), 0});
    }
    rank_scores(scored, /*descending=*/true);
    std::vector<SampleId> kept;
    for (std::size_t i = 0; i < std::min(batch_size, scored.size()); ++i) {
        kept.push_back(scored[i].sample_id);
    }
    return kept;
}

std::size_t batch_size_for(const ExperimentConfig& config, const PoolState& pool) {
    const auto wanted = static_cast<std::size_t>(std::llround(config.batch_fraction * static_cast<double>(pool.total())));
    return std::min(wanted, pool.unlabeled().size());
}

std::size_t hard_pool_size_for(const ExperimentConfig& config, std::size_t batch_size) {
    return static_cast<std::size_t>(std::ceil(config.hard_pool_multiplier * static_cast<double>(batch_size)));
}

namespace {

std::vector<SampleId> select_baseline(Strategy strategy, const ModelState& model, const PoolState& pool,
                                      const FeatureTable& features, std::size_t batch_size,
                                      std::map<SampleId, AuditEntry>* audit) {
    std::vector<ScoredSample> scored;
    scored.reserve(pool.unlabeled().size());
    for (const SampleId& id : pool.unlabeled()) {
        const ProbDist p = predict_identity(model, features.row(features.index_of(id)));
        double s = 0.0;
        switch (strategy) {
        case Strategy::entropy:
            s = entropy_score(p);
            break;
        case Strategy::least_confidence:
            s = least_confidence_score(p);
            break;
        case Strategy::margin:
            s = margin_score(p);
            break;
        default:
            break;
        }
        scored.push_back({id, s, 0});
    }
    // Highest entropy; lowest top-1 probability; lowest margin.
    rank_scores(scored, strategy == Strategy::entropy);
    std::vector<SampleId> out;
    for (const ScoredSample& s : scored) {
        if (audit != nullptr) {
            (*audit)[s.sample_id].score = s.score;
        }
        if (out.size() < batch_size) {
            out.push_back(s.sample_id);
        }
    }
    return out;
}

} // namespace

std::vector<SampleId> select_batch(Strategy strategy, const ModelState& model, const PoolState& pool,
                                   const FeatureTable& features, const ExperimentConfig& config, RngStream& rng,
                                   SelectionAudit* audit) {
    const std::size_t batch_size = batch_size_for(config, pool);
    std::map<SampleId, AuditEntry> entries;
    std::map<SampleId, AuditEntry>* track = audit != nullptr ? &entries : nullptr;
    if (track != nullptr) {
        for (const SampleId& id : pool.unlabeled()) {
            entries[id];
        }
    }
    std::size_t hard_size = 0;
    std::vector<SampleId> batch;

    if (batch_size > 0) {
        switch (strategy) {
        case Strategy::random: {
            std::vector<SampleId> ids(pool.unlabeled().begin(), pool.unlabeled().end());
            for (std::size_t i = 0; i < batch_size; ++i) {
                const auto j = i + static_cast<std::size_t>(rng.uniform_index(ids.size() - i));
                std::swap(ids[i], ids[j]);
                batch.push_back(ids[i]);
            }
            break;
        }
        case Strategy::ahsm: {
            const std::vector<ClassCenter> centers = class_centers(model, pool, features);
            hard_size = hard_pool_size_for(config, batch_size);
            const auto hard = select_hard_samples(model, pool, features, centers,
                                                  track != nullptr ? pool.unlabeled().size() : hard_size,
                                                  config.contradiction_threshold);
            std::vector<SampleId> hard_ids;
            for (std::size_t i = 0; i < hard.size(); ++i) {
                if (track != nullptr) {
                    AuditEntry& e = entries[hard[i].sample_id];
                    e.uncertainty = hard[i].uncertainty;
                    e.contradictory = hard[i].contradictory;
                    e.hard = i < hard_size;
                }
                if (i < hard_size) {
                    hard_ids.push_back(hard[i].sample_id);
                }
            }
            if (model.num_classes() < 2) {
                // Every distribution is [1]; diversity cannot discriminate.
                hard_ids.resize(std::min(hard_ids.size(), batch_size));
                batch = hard_ids;
            } else {
                batch = reduce_redundancy(model, hard_ids, features, centers, batch_size);
                if (track != nullptr) {
                    for (const SampleId& id : hard_ids) {
                        entries[id].intra_diversity =
                            intra_diversity_score(model, features.row(features.index_of(id)), centers);
                    }
                }
            }
            break;
        }
        default:
            batch = select_baseline(strategy, model, pool, features, batch_size, track);
            break;
        }
    }

    if (audit != nullptr) {
        for (const SampleId& id : batch) {
            entries[id].selected = true;
        }
        audit->strategy = strategy;
        audit->batch_size = batch_size;
        audit->hard_pool_size = hard_size;
        audit->entries.clear();
        for (auto& [id, entry] : entries) {
            entry.sample_id = id;
            audit->entries.push_back(std::move(entry));
        }
    }
    return batch;
}

} // namespace hardmine
