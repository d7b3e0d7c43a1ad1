#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hardmine/rng.hpp"

namespace hardmine {

/// Library error carrying a stable machine-readable code.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    [[nodiscard]] const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

using SampleId = std::string;
using IdentityId = std::string;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// One data point as stored on disk. `truth` is the hidden identity and is
/// only reachable through TruthOracle once a Dataset is split into views.
struct Sample {
    SampleId sample_id;
    std::vector<double> features;
    std::optional<int> camera_id;
    std::string truth;

    bool operator==(const Sample&) const = default;
};

/// Truth-free view of a dataset: ids, features and camera ids only.
/// Every model and selection routine consumes this type, so the hidden
/// identity cannot reach them.
class FeatureTable {
public:
    FeatureTable() = default;
    FeatureTable(std::vector<SampleId> ids, RowMatrix features, std::vector<std::optional<int>> cameras);

    [[nodiscard]] std::size_t size() const { return ids_.size(); }
    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }

    [[nodiscard]] const SampleId& id(std::size_t i) const { return ids_[i]; }
    [[nodiscard]] const std::vector<SampleId>& ids() const { return ids_; }
    [[nodiscard]] std::optional<int> camera(std::size_t i) const { return cameras_[i]; }

    [[nodiscard]] auto row(std::size_t i) const {
        return features_.row(static_cast<Eigen::Index>(i)).transpose();
    }
    [[nodiscard]] const RowMatrix& matrix() const { return features_; }

    [[nodiscard]] bool contains(const SampleId& id) const { return index_.contains(id); }
    /// Throws Error("unknown_sample") for ids outside the table.
    [[nodiscard]] std::size_t index_of(const SampleId& id) const;

private:
    std::vector<SampleId> ids_;
    RowMatrix features_;
    std::vector<std::optional<int>> cameras_;
    std::unordered_map<SampleId, std::size_t> index_;
};

/// Hidden identity lookup. Only the simulated annotator, the evaluator and
/// the ground-truth bootstrap hold one.
class TruthOracle {
public:
    TruthOracle() = default;
    explicit TruthOracle(std::map<SampleId, std::string> truth) : truth_(std::move(truth)) {}

    [[nodiscard]] const std::string& truth_of(const SampleId& id) const;
    [[nodiscard]] bool contains(const SampleId& id) const { return truth_.contains(id); }

private:
    std::map<SampleId, std::string> truth_;
};

/// Validated collection of samples sharing one feature dimension.
class Dataset {
public:
    Dataset() = default;
    /// Throws Error("empty_dataset"), Error("dimension_mismatch") or
    /// Error("duplicate_sample").
    explicit Dataset(std::vector<Sample> samples);

    [[nodiscard]] std::size_t size() const { return samples_.size(); }
    [[nodiscard]] std::size_t dim() const { return dim_; }
    [[nodiscard]] bool empty() const { return samples_.empty(); }
    [[nodiscard]] const std::vector<Sample>& samples() const { return samples_; }
    [[nodiscard]] const Sample& at(std::size_t i) const { return samples_.at(i); }
    [[nodiscard]] std::optional<std::size_t> find(const SampleId& id) const;

    [[nodiscard]] FeatureTable features() const;
    [[nodiscard]] TruthOracle truth_oracle() const;

    /// Subset keeping the given sample indices in the given order.
    [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const;

private:
    std::vector<Sample> samples_;
    std::size_t dim_ = 0;
    std::unordered_map<SampleId, std::size_t> index_;
};

enum class LabelSource { simulated, human, ground_truth_bootstrap };

std::string to_string(LabelSource source);
LabelSource label_source_from_string(const std::string& name);

struct IdentityLabel {
    IdentityId identity_id;
    LabelSource source = LabelSource::simulated;

    bool operator==(const IdentityLabel&) const = default;
};

/// Partition of the dataset into labeled (T), unlabeled (U) and query (Q)
/// sets plus the registry of discovered identities.
///
/// All mutation goes through member functions that keep the three sets
/// disjoint and exhaustive; check_invariants() re-verifies from scratch.
class PoolState {
public:
    PoolState() = default;
    explicit PoolState(const std::vector<SampleId>& all_ids);

    [[nodiscard]] const std::map<SampleId, IdentityLabel>& labeled() const { return labeled_; }
    [[nodiscard]] const std::set<SampleId>& unlabeled() const { return unlabeled_; }
    [[nodiscard]] const std::vector<SampleId>& query() const { return query_; }
    [[nodiscard]] const std::map<IdentityId, std::vector<SampleId>>& identities() const { return identities_; }

    [[nodiscard]] std::size_t total() const { return labeled_.size() + unlabeled_.size() + query_.size(); }
    [[nodiscard]] double labeled_fraction() const;
    [[nodiscard]] bool in_query(const SampleId& id) const;

    /// Moves samples from U to Q, preserving the given order.
    void enqueue(const std::vector<SampleId>& ids);

    /// Labels a sample from U or Q with an existing identity.
    void assign(const SampleId& id, const IdentityId& identity, LabelSource source);

    /// Labels a sample from U or Q with a freshly registered identity and
    /// returns the new identity id.
    IdentityId create_identity(const SampleId& id, LabelSource source);

    /// Throws Error("invariant_violation") describing the first broken rule.
    void check_invariants(std::size_t expected_total) const;

    [[nodiscard]] std::uint64_t identity_counter() const { return identity_counter_; }

    bool operator==(const PoolState&) const = default;

    /// Raw constructor used by checkpoint loading; validates invariants.
    static PoolState restore(std::map<SampleId, IdentityLabel> labeled, std::set<SampleId> unlabeled,
                             std::vector<SampleId> query, std::map<IdentityId, std::vector<SampleId>> identities,
                             std::uint64_t identity_counter);

private:
    void take_unassigned(const SampleId& id);

    std::map<SampleId, IdentityLabel> labeled_;
    std::set<SampleId> unlabeled_;
    std::vector<SampleId> query_;
    std::map<IdentityId, std::vector<SampleId>> identities_;
    std::uint64_t identity_counter_ = 0;
};

/// Normalized probability vector over the current identity classes.
class ProbDist {
public:
    ProbDist() = default;
    /// Throws Error("invalid_distribution") unless entries are >= 0 and sum
    /// to 1 within 1e-9.
    explicit ProbDist(std::vector<double> probs);

    [[nodiscard]] std::size_t size() const { return probs_.size(); }
    [[nodiscard]] double operator[](std::size_t i) const { return probs_[i]; }
    [[nodiscard]] std::span<const double> values() const { return probs_; }
    [[nodiscard]] std::size_t argmax() const;

private:
    std::vector<double> probs_;
};

/// Probability floor applied inside every logarithm.
inline constexpr double kProbFloor = 1e-12;

struct TargetMetric {
    std::string metric = "rank1";  // rank1 | rank5 | rank10 | map
    double threshold = 1.0;

    bool operator==(const TargetMetric&) const = default;
};

struct ModelConfig {
    std::size_t embedding_dim = 16;
    double learning_rate = 0.05;
    std::size_t epochs = 20;
    std::size_t minibatch_size = 16;
    /// Negative verification partners drawn per positive partner.
    std::size_t negatives_per_positive = 1;
    double verification_weight = 1.0;
    double weight_decay = 1e-4;
    bool warm_start = false;

    bool operator==(const ModelConfig&) const = default;
};

struct ExperimentConfig {
    double batch_fraction = 0.05;
    double budget_fraction = 0.5;
    double init_labeled_fraction = 0.02;
    double eval_fraction = 0.5;
    double hard_pool_multiplier = 3.0;
    double contradiction_threshold = 0.5;
    std::size_t idrm_batch_size = 10;
    std::size_t representatives_per_candidate = 3;
    double annotator_error_rate = 0.0;
    double confusability_factor = 0.0;
    std::uint64_t seed = 0;
    ModelConfig model;
    std::optional<TargetMetric> target_metric;

    /// Throws Error("invalid_config") naming the offending field.
    void validate() const;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Splits samples into the initial labeled seed set and the unlabeled pool.
///
/// Picks samples in a seeded random order until round(fraction * n) are
/// labeled and at least two identities are seeded. Each seeded identity is
/// topped up to two labeled members when it has a second sample, so the
/// verification loss always sees positive pairs. Labels come from ground
/// truth with source ground_truth_bootstrap.
PoolState partition_dataset(const Dataset& dataset, double init_labeled_fraction, RngStream& rng);

} // namespace hardmine
