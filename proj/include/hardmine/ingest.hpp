#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hardmine/core.hpp"

namespace hardmine {

/// Gaussian-cluster benchmark description.
struct SyntheticSpec {
    std::size_t identities = 50;
    std::size_t samples_per_identity = 40;
    std::size_t dimension = 32;
    /// Cluster means vary only inside a random subspace of this dimension
    /// (0 means the full feature space); the other directions carry pure
    /// intra-class noise that a learned embedding has to discard.
    std::size_t latent_dimension = 8;
    double intra_class_sigma = 1.0;
    double inter_class_separation = 4.0;
    std::size_t camera_count = 4;
    /// Fraction of samples whose features come from another identity's
    /// cluster while keeping their own truth, emulating detection errors.
    double noise_fraction = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const SyntheticSpec&) const = default;

    /// 50 x 40 samples, d = 32, sigma 1, separation 4, 4 cameras, 5% noise.
    static SyntheticSpec standard(std::uint64_t seed);
};

/// Cluster means keyed by truth token. Latent means are i.i.d. normal with
/// per-coordinate scale separation * sqrt(2 / r), redrawn until every pair
/// is at least `inter_class_separation` apart, then mapped into feature
/// space through a random orthonormal basis, so distances are preserved.
std::map<std::string, std::vector<double>> synthetic_means(const SyntheticSpec& spec);

/// Throws Error("infeasible_separation") when the rejection sampler for the
/// means gives up.
Dataset generate_synthetic(const SyntheticSpec& spec);

struct ValidationIssue {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct ValidationReport {
    std::size_t samples = 0;
    std::size_t dimension = 0;
    std::vector<ValidationIssue> issues;

    [[nodiscard]] bool ok() const { return issues.empty(); }
};

/// Parses JSON Lines and validates field types, dimensions and id
/// uniqueness. Collects every issue instead of stopping at the first.
std::vector<Sample> parse_samples(std::istream& in, ValidationReport& report);

ValidationReport validate_dataset(const std::filesystem::path& path);

/// Throws Error("invalid_dataset") listing every issue by line.
Dataset ingest_dataset(const std::filesystem::path& path);

void write_dataset(const Dataset& dataset, std::ostream& out);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

struct DataSplit {
    Dataset train;
    std::optional<Dataset> eval;  // absent when eval_fraction rounds to no identities
};

/// Identity-disjoint split. Truth tokens are shuffled and the first
/// round(eval_fraction * identities) go to the eval side.
DataSplit split_by_identity(const Dataset& dataset, double eval_fraction, RngStream& rng);

} // namespace hardmine
