#include "hardmine/eval.hpp"

#include <algorithm>
#include <numeric>

namespace hardmine {

namespace {

bool any_relevant(std::span<const std::uint8_t> mask) {
    return std::any_of(mask.begin(), mask.end(), [](std::uint8_t r) { return r != 0; });
}

bool hit_within(std::span<const std::uint8_t> mask, std::size_t k) {
    const std::size_t n = std::min(k, mask.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i] != 0) {
            return true;
        }
    }
    return false;
}

// Core routine shared by the public metrics and evaluate_model.
struct MaskStats {
    std::size_t used = 0;
    std::size_t excluded = 0;
    double hits1 = 0, hits5 = 0, hits10 = 0, ap_sum = 0;

    void add(std::span<const std::uint8_t> mask) {
        if (!any_relevant(mask)) {
            ++excluded;
            return;
        }
        ++used;
        hits1 += hit_within(mask, 1) ? 1.0 : 0.0;
        hits5 += hit_within(mask, 5) ? 1.0 : 0.0;
        hits10 += hit_within(mask, 10) ? 1.0 : 0.0;
        ap_sum += average_precision(mask);
    }
};

void check_results(std::span<const RetrievalResult> results) {
    for (const RetrievalResult& r : results) {
        if (r.ranked.size() != r.relevant.size()) {
            throw Error("dimension_mismatch", "relevance mask length differs from gallery for '" + r.query_id + "'");
        }
    }
}

} // namespace

double average_precision(std::span<const std::uint8_t> relevant) {
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < relevant.size(); ++i) {
        if (relevant[i] != 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

double rank_k_accuracy(std::span<const RetrievalResult> results, std::size_t k, std::size_t* excluded) {
    if (k < 1) {
        throw Error("invalid_argument", "rank k must be >= 1");
    }
    check_results(results);
    std::size_t used = 0;
    std::size_t skipped = 0;
    std::size_t hits = 0;
    for (const RetrievalResult& r : results) {
        if (!any_relevant(r.relevant)) {
            ++skipped;
            continue;
        }
        ++used;
        hits += hit_within(r.relevant, k) ? 1 : 0;
    }
    if (excluded != nullptr) {
        *excluded = skipped;
    }
    return used == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(used);
}

double mean_average_precision(std::span<const RetrievalResult> results, std::size_t* excluded) {
    check_results(results);
    MaskStats stats;
    for (const RetrievalResult& r : results) {
        stats.add(r.relevant);
    }
    if (excluded != nullptr) {
        *excluded = stats.excluded;
    }
    return stats.used == 0 ? 0.0 : stats.ap_sum / static_cast<double>(stats.used);
}

double metric_value(const Metrics& metrics, const std::string& name) {
    if (name == "rank1") return metrics.rank1;
    if (name == "rank5") return metrics.rank5;
    if (name == "rank10") return metrics.rank10;
    if (name == "map") return metrics.map;
    throw Error("invalid_argument", "unknown metric '" + name + "'");
}

namespace {

// Calls `visit(query, ordered gallery rows, mask)` for each probe.
template <typename Visit>
void for_each_probe(const ModelState& model, const FeatureTable& features, const TruthOracle& truth, Visit&& visit) {
    const std::size_t n = features.size();
    if (n == 0) {
        throw Error("empty_split", "empty evaluation split");
    }
    const Eigen::MatrixXd emb = features.matrix() * model.embed_weights;  // n x m
    const Eigen::VectorXd norms = emb.rowwise().squaredNorm();
    const Eigen::MatrixXd gram = emb * emb.transpose();

    std::vector<const std::string*> truths(n);
    for (std::size_t i = 0; i < n; ++i) {
        truths[i] = &truth.truth_of(features.id(i));
    }

    std::vector<std::size_t> gallery;
    std::vector<double> dist(n);
    std::vector<std::uint8_t> mask;
    for (std::size_t q = 0; q < n; ++q) {
        gallery.clear();
        const auto qi = static_cast<Eigen::Index>(q);
        for (std::size_t g = 0; g < n; ++g) {
            if (g == q) {
                continue;
            }
            const bool same_id = *truths[g] == *truths[q];
            const auto cq = features.camera(q);
            const auto cg = features.camera(g);
            if (same_id && cq && cg && *cq == *cg) {
                continue;
            }
            const auto gi = static_cast<Eigen::Index>(g);
            dist[g] = norms(qi) + norms(gi) - 2.0 * gram(qi, gi);
            gallery.push_back(g);
        }
        std::sort(gallery.begin(), gallery.end(), [&](std::size_t a, std::size_t b) {
            if (dist[a] != dist[b]) {
                return dist[a] < dist[b];
            }
            return features.id(a) < features.id(b);
        });
        mask.resize(gallery.size());
        for (std::size_t i = 0; i < gallery.size(); ++i) {
            mask[i] = *truths[gallery[i]] == *truths[q] ? 1 : 0;
        }
        visit(q, gallery, mask);
    }
}

} // namespace

std::vector<RetrievalResult> build_retrieval(const ModelState& model, const FeatureTable& features,
                                             const TruthOracle& truth) {
    std::vector<RetrievalResult> out;
    for_each_probe(model, features, truth,
                   [&](std::size_t q, const std::vector<std::size_t>& gallery, const std::vector<std::uint8_t>& mask) {
                       RetrievalResult r;
                       r.query_id = features.id(q);
                       r.ranked.reserve(gallery.size());
                       for (std::size_t g : gallery) {
                           r.ranked.push_back(features.id(g));
                       }
                       r.relevant = mask;
                       out.push_back(std::move(r));
                   });
    return out;
}

Metrics evaluate_model(const ModelState& model, const FeatureTable& features, const TruthOracle& truth) {
    MaskStats stats;
    for_each_probe(model, features, truth,
                   [&](std::size_t, const std::vector<std::size_t>&, const std::vector<std::uint8_t>& mask) {
                       stats.add(mask);
                   });
    Metrics m;
    m.queries = stats.used;
    m.excluded_queries = stats.excluded;
    if (stats.used > 0) {
        const auto used = static_cast<double>(stats.used);
        m.rank1 = stats.hits1 / used;
        m.rank5 = stats.hits5 / used;
        m.rank10 = stats.hits10 / used;
        m.map = stats.ap_sum / used;
    }
    return m;
}

} // namespace hardmine
