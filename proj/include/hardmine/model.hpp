#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hardmine/core.hpp"

namespace hardmine {

/// Parameters of the reference identification + verification model.
///
/// A shared linear trunk maps d input features to an m-dim embedding. The
/// identification head is a softmax layer over the K known identities; the
/// verification head is a logistic unit over the elementwise square of an
/// embedding difference, so it is symmetric in its two inputs.
struct ModelState {
    Eigen::MatrixXd embed_weights;  // d x m, no bias
    Eigen::MatrixXd id_weights;     // m x K
    Eigen::VectorXd id_bias;        // K
    Eigen::VectorXd verif_weights;  // m
    double verif_bias = 0.0;
    std::vector<IdentityId> classes;  // column -> identity

    [[nodiscard]] std::size_t input_dim() const { return static_cast<std::size_t>(embed_weights.rows()); }
    [[nodiscard]] std::size_t embedding_dim() const { return static_cast<std::size_t>(embed_weights.cols()); }
    [[nodiscard]] std::size_t num_classes() const { return classes.size(); }
    [[nodiscard]] std::optional<std::size_t> column_of(const IdentityId& identity) const;

    /// FNV-1a over the raw bytes of every parameter and class id.
    [[nodiscard]] std::uint64_t checksum() const;

    bool operator==(const ModelState& other) const;
};

struct PairLabel {
    bool same = false;
};

/// Numerically stable softmax (max-subtracted). Throws on empty input.
ProbDist softmax(std::span<const double> logits);

/// -log(pred[target]) with the probability floored at kProbFloor.
double identification_loss(const ProbDist& pred, std::size_t target_class);

/// Binary cross-entropy with q1 = prob_same, q2 = 1 - prob_same.
double verification_loss(double prob_same, PairLabel label);

/// Gradient of identification_loss(softmax(logits), target) w.r.t. the
/// logits: softmax(logits) - onehot(target).
std::vector<double> softmax_ce_gradient(std::span<const double> logits, std::size_t target_class);

Eigen::VectorXd embed(const ModelState& model, const VectorRef& features);
std::vector<double> identity_logits(const ModelState& model, const VectorRef& features);
ProbDist predict_identity(const ModelState& model, const VectorRef& features);

/// Verification probability from two precomputed embeddings.
double verify_embeddings(const ModelState& model, const VectorRef& a, const VectorRef& b);
double verify_pair(const ModelState& model, const VectorRef& a, const VectorRef& b);

/// Fresh random parameters for the given input dimension and classes.
ModelState initialize_model(std::size_t input_dim, std::vector<IdentityId> classes, const ModelConfig& config,
                            RngStream& rng);

struct TrainReport {
    double final_loss = 0.0;
    std::size_t epochs = 0;
    /// Set when no identity has two labeled members, so no positive pair
    /// exists and the verification term was dropped.
    bool verification_skipped = false;
};

struct TrainedModel {
    ModelState model;
    TrainReport report;
};

/// Minibatch SGD over the labeled pool: identification cross-entropy on every
/// labeled sample plus verification cross-entropy on one positive partner
/// and `negatives_per_positive` negative partners per sample.
///
/// Starts from a fresh initialization unless `warm_start` is given, in which
/// case known classes keep their weights and new classes get fresh columns.
/// Throws Error("insufficient_identities") with fewer than two identities.
TrainedModel train(const PoolState& pool, const FeatureTable& features, const ModelConfig& config, RngStream& rng,
                   const ModelState* warm_start = nullptr);

} // namespace hardmine
