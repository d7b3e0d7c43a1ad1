#pragma once

// Fixtures and independent reference computations shared by the tests.
// Reference helpers use plain loops on purpose; they must not call the
// library routine they are checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hardmine/core.hpp"
#include "hardmine/ingest.hpp"
#include "hardmine/model.hpp"
#include "hardmine/selection.hpp"

namespace testing {

using namespace hardmine;

inline Dataset small_synthetic(std::size_t identities, std::size_t per_identity, std::size_t dim, std::uint64_t seed,
                               double sigma = 0.5, double separation = 4.0, std::size_t cameras = 2) {
    SyntheticSpec spec;
    spec.identities = identities;
    spec.samples_per_identity = per_identity;
    spec.dimension = dim;
    spec.latent_dimension = 0;
    spec.intra_class_sigma = sigma;
    spec.inter_class_separation = separation;
    spec.camera_count = cameras;
    spec.noise_fraction = 0.0;
    spec.seed = seed;
    return generate_synthetic(spec);
}

/// Pool with the first `per_identity` samples of every truth group labeled
/// by truth; everything else unlabeled.
inline PoolState truth_pool(const Dataset& ds, std::size_t per_identity) {
    std::vector<SampleId> ids;
    for (const Sample& s : ds.samples()) {
        ids.push_back(s.sample_id);
    }
    PoolState pool(ids);
    std::map<std::string, IdentityId> reg;
    std::map<std::string, std::size_t> count;
    for (const Sample& s : ds.samples()) {
        if (count[s.truth] >= per_identity) {
            continue;
        }
        ++count[s.truth];
        auto it = reg.find(s.truth);
        if (it == reg.end()) {
            reg.emplace(s.truth, pool.create_identity(s.sample_id, LabelSource::ground_truth_bootstrap));
        } else {
            pool.assign(s.sample_id, it->second, LabelSource::ground_truth_bootstrap);
        }
    }
    return pool;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, RngStream& rng, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = scale * rng.normal();
        }
    }
    return m;
}

inline ModelState random_model(std::size_t d, std::size_t m, std::vector<IdentityId> classes, RngStream& rng) {
    ModelState model;
    const auto k = static_cast<Eigen::Index>(classes.size());
    model.embed_weights = random_matrix(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m), rng, 0.5);
    model.id_weights = random_matrix(static_cast<Eigen::Index>(m), k, rng);
    model.id_bias = random_matrix(k, 1, rng, 0.1).col(0);
    model.verif_weights = random_matrix(static_cast<Eigen::Index>(m), 1, rng, 0.3).col(0);
    model.verif_bias = 0.5 * rng.normal();
    model.classes = std::move(classes);
    return model;
}

inline std::vector<double> random_distribution(std::size_t k, RngStream& rng) {
    std::vector<double> p(k);
    double sum = 0.0;
    for (double& x : p) {
        x = -std::log(1.0 - rng.uniform());  // exponential => uniform on the simplex
        sum += x;
    }
    for (double& x : p) {
        x /= sum;
    }
    return p;
}

// ---- reference computations ----

inline std::vector<double> ref_softmax(const std::vector<double>& a) {
    std::vector<double> e(a.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        e[i] = std::exp(a[i]);
        sum += e[i];
    }
    for (double& x : e) {
        x /= sum;
    }
    return e;
}

inline std::vector<double> ref_embed(const ModelState& model, const std::vector<double>& x) {
    std::vector<double> e(model.embedding_dim(), 0.0);
    for (std::size_t j = 0; j < e.size(); ++j) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            e[j] += model.embed_weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[i];
        }
    }
    return e;
}

inline std::vector<double> ref_predict(const ModelState& model, const std::vector<double>& x) {
    const auto e = ref_embed(model, x);
    std::vector<double> logits(model.num_classes());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        double s = model.id_bias(static_cast<Eigen::Index>(k));
        for (std::size_t j = 0; j < e.size(); ++j) {
            s += model.id_weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * e[j];
        }
        logits[k] = s;
    }
    double mx = logits[0];
    for (double l : logits) {
        mx = std::max(mx, l);
    }
    for (double& l : logits) {
        l -= mx;
    }
    return ref_softmax(logits);
}

inline double ref_verify(const ModelState& model, const std::vector<double>& a, const std::vector<double>& b) {
    const auto ea = ref_embed(model, a);
    const auto eb = ref_embed(model, b);
    double z = model.verif_bias;
    for (std::size_t j = 0; j < ea.size(); ++j) {
        z += model.verif_weights(static_cast<Eigen::Index>(j)) * (ea[j] - eb[j]) * (ea[j] - eb[j]);
    }
    return 1.0 / (1.0 + std::exp(-z));
}

inline std::size_t ref_argmax(const std::vector<double>& p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[best]) {
            best = i;
        }
    }
    return best;
}

inline double ref_jeffreys(const std::vector<double>& p, const std::vector<double>& q) {
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double a = std::max(p[i], 1e-12);
        const double b = std::max(q[i], 1e-12);
        d += (a - b) * std::log(a / b);
    }
    return d;
}

inline std::vector<double> features_of(const Dataset& ds, const SampleId& id) {
    return ds.at(*ds.find(id)).features;
}

inline std::vector<double> ref_center(const Dataset& ds, const PoolState& pool, const IdentityId& identity) {
    const auto& members = pool.identities().at(identity);
    std::vector<double> c(ds.dim(), 0.0);
    for (const SampleId& id : members) {
        const auto f = features_of(ds, id);
        for (std::size_t i = 0; i < c.size(); ++i) {
            c[i] += f[i];
        }
    }
    for (double& x : c) {
        x /= static_cast<double>(members.size());
    }
    return c;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ---- brute-force selection oracle ----

struct OracleScore {
    SampleId id;
    double key = 0.0;
    bool flag = false;
};

/// Scores every unlabeled sample with the reference helpers, sorts the full
/// list and takes the batch. Random selection replays a full forward
/// Fisher-Yates shuffle of the sorted unlabeled ids.
inline std::vector<SampleId> oracle_select(Strategy strategy, const ModelState& model, const PoolState& pool,
                                           const Dataset& ds, const ExperimentConfig& config, RngStream& rng) {
    const std::size_t n_total = pool.total();
    std::size_t b = static_cast<std::size_t>(std::llround(config.batch_fraction * static_cast<double>(n_total)));
    b = std::min(b, pool.unlabeled().size());
    std::vector<SampleId> ids(pool.unlabeled().begin(), pool.unlabeled().end());
    if (b == 0) {
        return {};
    }
    if (strategy == Strategy::random) {
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(ids.size() - i));
            std::swap(ids[i], ids[j]);
        }
        ids.resize(b);
        return ids;
    }
    auto by_key = [](bool descending) {
        return [descending](const OracleScore& x, const OracleScore& y) {
            if (x.key != y.key) {
                return descending ? x.key > y.key : x.key < y.key;
            }
            return x.id < y.id;
        };
    };
    std::vector<OracleScore> scored;
    if (strategy == Strategy::ahsm) {
        std::vector<std::vector<double>> center_feat, center_dist;
        for (const IdentityId& c : model.classes) {
            center_feat.push_back(ref_center(ds, pool, c));
            center_dist.push_back(ref_predict(model, center_feat.back()));
        }
        for (const SampleId& id : ids) {
            const auto f = features_of(ds, id);
            const std::size_t k = ref_argmax(ref_predict(model, f));
            const double u = 1.0 - ref_verify(model, center_feat[k], f);
            scored.push_back({id, u, u > config.contradiction_threshold});
        }
        std::sort(scored.begin(), scored.end(), [](const OracleScore& x, const OracleScore& y) {
            if (x.flag != y.flag) {
                return x.flag;
            }
            if (x.key != y.key) {
                return x.key > y.key;
            }
            return x.id < y.id;
        });
        const auto hard = static_cast<std::size_t>(std::ceil(config.hard_pool_multiplier * static_cast<double>(b)));
        scored.resize(std::min(scored.size(), hard));
        if (model.num_classes() >= 2) {
            for (OracleScore& s : scored) {
                const auto p = ref_predict(model, features_of(ds, s.id));
                s.key = ref_jeffreys(p, center_dist[ref_argmax(p)]);
            }
            std::sort(scored.begin(), scored.end(), by_key(true));
        }
    } else {
        for (const SampleId& id : ids) {
            auto p = ref_predict(model, features_of(ds, id));
            double key = 0.0;
            if (strategy == Strategy::entropy) {
                for (double x : p) {
                    if (x > 0.0) {
                        key -= x * std::log(std::max(x, 1e-12));
                    }
                }
                key = std::max(key, 0.0);
            } else {
                std::sort(p.begin(), p.end(), std::greater<>());
                key = strategy == Strategy::least_confidence ? p[0] : p[0] - p[1];
            }
            scored.push_back({id, key, false});
        }
        std::sort(scored.begin(), scored.end(), by_key(strategy == Strategy::entropy));
    }
    std::vector<SampleId> out;
    for (std::size_t i = 0; i < std::min(b, scored.size()); ++i) {
        out.push_back(scored[i].id);
    }
    return out;
}

/// Random pool of at most `max_samples` samples: random identity count,
/// random labeled members per identity, and a briefly trained model.
struct RandomPool {
    Dataset ds;
    PoolState pool;
    ModelState model;
};

inline RandomPool make_random_pool(std::uint64_t seed, std::size_t max_samples = 60) {
    RngStream rng = RngStream(seed).derive("random-pool");
    const std::size_t identities = 3 + rng.uniform_index(4);
    const std::size_t per = std::max<std::size_t>(3, max_samples / identities - rng.uniform_index(3));
    const std::size_t dim = 4 + rng.uniform_index(5);
    RandomPool r;
    r.ds = small_synthetic(identities, std::min(per, max_samples / identities), dim, seed, 0.8 + rng.uniform(), 3.0);
    r.pool = truth_pool(r.ds, 1 + rng.uniform_index(3));
    ModelConfig cfg;
    cfg.embedding_dim = 3 + rng.uniform_index(4);
    cfg.epochs = rng.uniform_index(6);
    RngStream train_rng = rng.derive("train");
    r.model = train(r.pool, r.ds.features(), cfg, train_rng).model;
    return r;
}

#define CHECK_ERROR_CODE(expr, expected_code)                       \
    do {                                                            \
        bool thrown_ = false;                                       \
        try {                                                       \
            (void)(expr);                                           \
        } catch (const ::hardmine::Error& e_) {                     \
            thrown_ = true;                                         \
            CHECK_MESSAGE(e_.code() == (expected_code), std::string(e_.what())); \
        }                                                           \
        CHECK_MESSAGE(thrown_, "expected Error " << (expected_code)); \
    } while (0)

} // namespace testing
