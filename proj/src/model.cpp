#include "hardmine/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace hardmine {

namespace {

double logistic(double s) {
    if (s >= 0.0) {
        return 1.0 / (1.0 + std::exp(-s));
    }
    const double e = std::exp(s);
    return e / (1.0 + e);
}

std::uint64_t hash_doubles(const double* data, Eigen::Index n, std::uint64_t h) {
    return fnv1a64(std::string_view(reinterpret_cast<const char*>(data), static_cast<std::size_t>(n) * sizeof(double)),
                   h);
}

void fill_normal(Eigen::MatrixXd& m, double scale, RngStream& rng) {
    // Column-major fill order, fixed for reproducibility.
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            m(i, j) = scale * rng.normal();
        }
    }
}

} // namespace

std::optional<std::size_t> ModelState::column_of(const IdentityId& identity) const {
    auto it = std::find(classes.begin(), classes.end(), identity);
    if (it == classes.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - classes.begin());
}

std::uint64_t ModelState::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = hash_doubles(embed_weights.data(), embed_weights.size(), h);
    h = hash_doubles(id_weights.data(), id_weights.size(), h);
    h = hash_doubles(id_bias.data(), id_bias.size(), h);
    h = hash_doubles(verif_weights.data(), verif_weights.size(), h);
    h = hash_doubles(&verif_bias, 1, h);
    for (const IdentityId& c : classes) {
        h = fnv1a64(c, h);
        h = fnv1a64(std::string_view("\0", 1), h);
    }
    return h;
}

bool ModelState::operator==(const ModelState& other) const {
    auto same = [](const auto& a, const auto& b) {
        return a.rows() == b.rows() && a.cols() == b.cols() &&
               (a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
    };
    return same(embed_weights, other.embed_weights) && same(id_weights, other.id_weights) &&
           same(id_bias, other.id_bias) && same(verif_weights, other.verif_weights) &&
           std::memcmp(&verif_bias, &other.verif_bias, sizeof(double)) == 0 && classes == other.classes;
}

ProbDist softmax(std::span<const double> logits) {
    if (logits.empty()) {
        throw Error("invalid_argument", "softmax of empty logits");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        sum += out[i];
    }
    for (double& v : out) {
        v /= sum;
    }
    return ProbDist(std::move(out));
}

double identification_loss(const ProbDist& pred, std::size_t target_class) {
    if (target_class >= pred.size()) {
        throw Error("out_of_range", "target class " + std::to_string(target_class) + " out of range for " +
                                        std::to_string(pred.size()) + " classes");
    }
    return -std::log(std::max(pred[target_class], kProbFloor));
}

double verification_loss(double prob_same, PairLabel label) {
    if (!(prob_same >= 0.0 && prob_same <= 1.0)) {
        throw Error("out_of_range", "verification probability outside [0, 1]");
    }
    const double q = label.same ? prob_same : 1.0 - prob_same;
    return -std::log(std::max(q, kProbFloor));
}

std::vector<double> softmax_ce_gradient(std::span<const double> logits, std::size_t target_class) {
    if (target_class >= logits.size()) {
        throw Error("out_of_range", "target class out of range");
    }
    const ProbDist y = softmax(logits);
    std::vector<double> grad(y.values().begin(), y.values().end());
    grad[target_class] -= 1.0;
    return grad;
}

Eigen::VectorXd embed(const ModelState& model, const VectorRef& features) {
    if (static_cast<std::size_t>(features.size()) != model.input_dim()) {
        throw Error("dimension_mismatch", "dimension mismatch");
    }
    return model.embed_weights.transpose() * features;
}

std::vector<double> identity_logits(const ModelState& model, const VectorRef& features) {
    const Eigen::VectorXd e = embed(model, features);
    const Eigen::VectorXd a = model.id_weights.transpose() * e + model.id_bias;
    return {a.data(), a.data() + a.size()};
}

ProbDist predict_identity(const ModelState& model, const VectorRef& features) {
    if (model.num_classes() == 0) {
        throw Error("invalid_argument", "model has no identity classes");
    }
    const std::vector<double> a = identity_logits(model, features);
    return softmax(a);
}

double verify_embeddings(const ModelState& model, const VectorRef& a, const VectorRef& b) {
    const Eigen::VectorXd diff = a - b;
    return logistic(model.verif_weights.dot(diff.cwiseAbs2()) + model.verif_bias);
}

double verify_pair(const ModelState& model, const VectorRef& a, const VectorRef& b) {
    return verify_embeddings(model, embed(model, a), embed(model, b));
}

ModelState initialize_model(std::size_t input_dim, std::vector<IdentityId> classes, const ModelConfig& config,
                            RngStream& rng) {
    const auto d = static_cast<Eigen::Index>(input_dim);
    const auto m = static_cast<Eigen::Index>(config.embedding_dim);
    const auto k = static_cast<Eigen::Index>(classes.size());
    ModelState model;
    model.embed_weights.resize(d, m);
    fill_normal(model.embed_weights, 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(d, 1))), rng);
    model.id_weights.resize(m, k);
    fill_normal(model.id_weights, 0.01, rng);
    model.id_bias = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd v(m, 1);
    fill_normal(v, 0.01, rng);
    model.verif_weights = v.col(0);
    model.verif_bias = 0.0;
    model.classes = std::move(classes);
    return model;
}

namespace {

struct Gradients {
    Eigen::MatrixXd embed;
    Eigen::MatrixXd id;
    Eigen::VectorXd id_bias;
    Eigen::VectorXd verif;
    double verif_bias = 0.0;

    explicit Gradients(const ModelState& m)
        : embed(Eigen::MatrixXd::Zero(m.embed_weights.rows(), m.embed_weights.cols())),
          id(Eigen::MatrixXd::Zero(m.id_weights.rows(), m.id_weights.cols())),
          id_bias(Eigen::VectorXd::Zero(m.id_bias.size())),
          verif(Eigen::VectorXd::Zero(m.verif_weights.size())) {}

    void clear() {
        embed.setZero();
        id.setZero();
        id_bias.setZero();
        verif.setZero();
        verif_bias = 0.0;
    }
};

// Adds d(weight * BCE)/d(params) for one pair and returns the weighted loss.
// `de_a` receives the gradient w.r.t. the first embedding; the second
// embedding's gradient is its negation and is folded straight into grads.
double accumulate_pair(const ModelState& model, const Eigen::VectorXd& ea, const VectorRef& xb, bool same,
                       double weight, Gradients& grads, Eigen::VectorXd& de_a) {
    const Eigen::VectorXd eb = model.embed_weights.transpose() * xb;
    const Eigen::VectorXd diff = ea - eb;
    const Eigen::VectorXd sq = diff.cwiseAbs2();
    const double prob = logistic(model.verif_weights.dot(sq) + model.verif_bias);
    const double dscore = weight * (prob - (same ? 1.0 : 0.0));
    grads.verif += dscore * sq;
    grads.verif_bias += dscore;
    const Eigen::VectorXd ddiff = 2.0 * dscore * model.verif_weights.cwiseProduct(diff);
    de_a += ddiff;
    grads.embed.noalias() -= xb * ddiff.transpose();
    return weight * verification_loss(prob, PairLabel{same});
}

} // namespace

TrainedModel train(const PoolState& pool, const FeatureTable& features, const ModelConfig& config, RngStream& rng,
                   const ModelState* warm_start) {
    if (pool.identities().size() < 2) {
        throw Error("insufficient_identities", "insufficient identities");
    }
    std::vector<IdentityId> classes;
    std::vector<std::vector<std::size_t>> members;  // per class, feature rows
    for (const auto& [identity, ids] : pool.identities()) {
        classes.push_back(identity);
        auto& rows = members.emplace_back();
        for (const SampleId& id : ids) {
            rows.push_back(features.index_of(id));
        }
    }

    struct Item {
        std::size_t row;
        std::size_t cls;
        std::size_t slot;  // position within members[cls]
    };
    std::vector<Item> items;
    for (std::size_t c = 0; c < members.size(); ++c) {
        for (std::size_t s = 0; s < members[c].size(); ++s) {
            items.push_back({members[c][s], c, s});
        }
    }

    TrainedModel out;
    out.model = initialize_model(features.dim(), classes, config, rng);
    if (warm_start != nullptr && warm_start->input_dim() == features.dim() &&
        warm_start->embedding_dim() == config.embedding_dim) {
        out.model.embed_weights = warm_start->embed_weights;
        out.model.verif_weights = warm_start->verif_weights;
        out.model.verif_bias = warm_start->verif_bias;
        for (std::size_t c = 0; c < classes.size(); ++c) {
            if (auto col = warm_start->column_of(classes[c])) {
                out.model.id_weights.col(static_cast<Eigen::Index>(c)) =
                    warm_start->id_weights.col(static_cast<Eigen::Index>(*col));
                out.model.id_bias(static_cast<Eigen::Index>(c)) = warm_start->id_bias(static_cast<Eigen::Index>(*col));
            }
        }
    }

    const bool has_positive =
        std::any_of(members.begin(), members.end(), [](const auto& rows) { return rows.size() >= 2; });
    out.report.verification_skipped = !has_positive;
    const double vweight = has_positive ? config.verification_weight : 0.0;

    ModelState& model = out.model;
    Gradients grads(model);
    const std::size_t k = classes.size();
    std::vector<double> logits(k);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(items);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < items.size(); start += config.minibatch_size) {
            const std::size_t end = std::min(items.size(), start + config.minibatch_size);
            grads.clear();
            for (std::size_t b = start; b < end; ++b) {
                const Item& item = items[b];
                const auto x = features.row(item.row);
                const Eigen::VectorXd e = model.embed_weights.transpose() * x;
                const Eigen::VectorXd a = model.id_weights.transpose() * e + model.id_bias;
                if (!a.allFinite()) {
                    throw Error("training_diverged", "training produced non-finite logits; lower the learning rate");
                }
                std::copy(a.data(), a.data() + a.size(), logits.begin());
                const ProbDist y = softmax(logits);
                epoch_loss += identification_loss(y, item.cls);

                Eigen::VectorXd g(static_cast<Eigen::Index>(k));
                for (std::size_t j = 0; j < k; ++j) {
                    g(static_cast<Eigen::Index>(j)) = y[j];
                }
                g(static_cast<Eigen::Index>(item.cls)) -= 1.0;
                grads.id.noalias() += e * g.transpose();
                grads.id_bias += g;
                Eigen::VectorXd de = model.id_weights * g;

                if (vweight > 0.0) {
                    const auto& same_rows = members[item.cls];
                    if (same_rows.size() >= 2) {
                        auto pick = static_cast<std::size_t>(rng.uniform_index(same_rows.size() - 1));
                        if (pick >= item.slot) {
                            ++pick;
                        }
                        epoch_loss += accumulate_pair(model, e, features.row(same_rows[pick]), true, vweight, grads, de);
                        for (std::size_t n = 0; n < config.negatives_per_positive; ++n) {
                            std::size_t other = item.row;
                            std::size_t other_cls = item.cls;
                            while (other_cls == item.cls) {
                                const Item& cand = items[static_cast<std::size_t>(rng.uniform_index(items.size()))];
                                other = cand.row;
                                other_cls = cand.cls;
                            }
                            epoch_loss += accumulate_pair(model, e, features.row(other), false, vweight, grads, de);
                        }
                    }
                }
                grads.embed.noalias() += x * de.transpose();
            }

            const double scale = config.learning_rate / static_cast<double>(end - start);
            const double decay = config.learning_rate * config.weight_decay;
            model.embed_weights -= scale * grads.embed + decay * model.embed_weights;
            model.id_weights -= scale * grads.id + decay * model.id_weights;
            model.id_bias -= scale * grads.id_bias;
            model.verif_weights -= scale * grads.verif + decay * model.verif_weights;
            model.verif_bias -= scale * grads.verif_bias;
            if (!model.embed_weights.allFinite() || !model.id_weights.allFinite() || !model.id_bias.allFinite() ||
                !model.verif_weights.allFinite() || !std::isfinite(model.verif_bias)) {
                throw Error("training_diverged", "training produced non-finite weights; lower the learning rate");
            }
        }
        out.report.final_loss = epoch_loss / static_cast<double>(items.size());
        out.report.epochs = epoch + 1;
    }
    return out;
}

} // namespace hardmine
