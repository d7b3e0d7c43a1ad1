#include "hardmine/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace hardmine {

using nlohmann::json;

void SyntheticSpec::validate() const {
    auto fail = [](const std::string& what) { throw Error("invalid_spec", "synthetic spec: " + what); };
    if (identities < 1) fail("identities must be positive");
    if (samples_per_identity < 1) fail("samples_per_identity must be positive");
    if (dimension < 1) fail("dimension must be positive");
    if (!(intra_class_sigma > 0.0)) fail("intra_class_sigma must be > 0");
    if (!(inter_class_separation >= 0.0)) fail("inter_class_separation must be >= 0");
    if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) fail("noise_fraction must be in [0, 1)");
    if (latent_dimension > dimension) fail("latent_dimension must not exceed dimension");
}

SyntheticSpec SyntheticSpec::standard(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    return spec;
}

namespace {

std::string truth_token(std::size_t identity) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "p%04zu", identity);
    return buf;
}

std::vector<std::vector<double>> draw_means(const SyntheticSpec& spec) {
    constexpr int kMaxAttempts = 10000;
    const std::size_t r = spec.latent_dimension == 0 ? spec.dimension : spec.latent_dimension;
    RngStream rng = RngStream(spec.seed).derive("synthetic-means");

    // Orthonormal basis of the latent subspace.
    Eigen::MatrixXd gauss(static_cast<Eigen::Index>(spec.dimension), static_cast<Eigen::Index>(r));
    for (Eigen::Index j = 0; j < gauss.cols(); ++j) {
        for (Eigen::Index i = 0; i < gauss.rows(); ++i) {
            gauss(i, j) = rng.normal();
        }
    }
    const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ() *
                                  Eigen::MatrixXd::Identity(gauss.rows(), gauss.cols());

    const double scale = spec.inter_class_separation * std::sqrt(2.0 / static_cast<double>(r));
    const double min_sq = spec.inter_class_separation * spec.inter_class_separation;
    std::vector<Eigen::VectorXd> latent;
    latent.reserve(spec.identities);
    Eigen::VectorXd cand(static_cast<Eigen::Index>(r));
    for (std::size_t k = 0; k < spec.identities; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
            for (Eigen::Index i = 0; i < cand.size(); ++i) {
                cand(i) = scale * rng.normal();
            }
            placed = std::all_of(latent.begin(), latent.end(),
                                 [&](const Eigen::VectorXd& m) { return (m - cand).squaredNorm() >= min_sq; });
        }
        if (!placed) {
            throw Error("infeasible_separation", "cannot place " + std::to_string(spec.identities) +
                                                     " cluster means at separation " +
                                                     std::to_string(spec.inter_class_separation) + " in dimension " +
                                                     std::to_string(r));
        }
        latent.push_back(cand);
    }

    std::vector<std::vector<double>> means;
    means.reserve(latent.size());
    for (const Eigen::VectorXd& z : latent) {
        const Eigen::VectorXd mu = basis * z;
        means.emplace_back(mu.data(), mu.data() + mu.size());
    }
    return means;
}

} // namespace

std::map<std::string, std::vector<double>> synthetic_means(const SyntheticSpec& spec) {
    spec.validate();
    std::map<std::string, std::vector<double>> out;
    auto means = draw_means(spec);
    for (std::size_t k = 0; k < means.size(); ++k) {
        out.emplace(truth_token(k), std::move(means[k]));
    }
    return out;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const auto means = draw_means(spec);
    const RngStream root(spec.seed);

    std::vector<Sample> samples;
    samples.reserve(spec.identities * spec.samples_per_identity);
    for (std::size_t k = 0; k < spec.identities; ++k) {
        RngStream rng = root.derive("synthetic-identity", k);
        for (std::size_t s = 0; s < spec.samples_per_identity; ++s) {
            Sample sample;
            sample.truth = truth_token(k);
            std::size_t cluster = k;
            if (spec.identities > 1 && rng.bernoulli(spec.noise_fraction)) {
                cluster = static_cast<std::size_t>(rng.uniform_index(spec.identities - 1));
                if (cluster >= k) {
                    ++cluster;
                }
            }
            if (spec.camera_count > 0) {
                sample.camera_id = static_cast<int>(rng.uniform_index(spec.camera_count));
            }
            sample.features.resize(spec.dimension);
            for (std::size_t j = 0; j < spec.dimension; ++j) {
                sample.features[j] = means[cluster][j] + spec.intra_class_sigma * rng.normal();
            }
            samples.push_back(std::move(sample));
        }
    }

    // Opaque ids: assigned after a shuffle so they carry no identity order.
    RngStream order_rng = root.derive("synthetic-order");
    order_rng.shuffle(samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "s%06zu", i);
        samples[i].sample_id = buf;
    }
    return Dataset(std::move(samples));
}

std::vector<Sample> parse_samples(std::istream& in, ValidationReport& report) {
    std::vector<Sample> samples;
    std::set<std::string> seen;
    std::optional<std::size_t> dim;
    std::string line;
    std::size_t lineno = 0;
    auto issue = [&](const std::string& msg) { report.issues.push_back({lineno, msg}); };

    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            issue(std::string("malformed JSON: ") + e.what());
            continue;
        }
        if (!j.is_object()) {
            issue("expected a JSON object");
            continue;
        }
        Sample s;
        if (!j.contains("sample_id") || !j["sample_id"].is_string()) {
            issue("missing or non-string sample_id");
            continue;
        }
        s.sample_id = j["sample_id"].get<std::string>();
        if (!j.contains("truth") || !j["truth"].is_string()) {
            issue("missing or non-string truth for '" + s.sample_id + "'");
            continue;
        }
        s.truth = j["truth"].get<std::string>();
        if (j.contains("camera_id") && !j["camera_id"].is_null()) {
            if (!j["camera_id"].is_number_integer()) {
                issue("camera_id must be an integer or null for '" + s.sample_id + "'");
                continue;
            }
            s.camera_id = j["camera_id"].get<int>();
        }
        if (!j.contains("features") || !j["features"].is_array()) {
            issue("missing features array for '" + s.sample_id + "'");
            continue;
        }
        bool numeric = true;
        for (const auto& v : j["features"]) {
            if (!v.is_number()) {
                numeric = false;
                break;
            }
            s.features.push_back(v.get<double>());
        }
        if (!numeric) {
            issue("non-numeric feature for '" + s.sample_id + "'");
            continue;
        }
        if (!dim) {
            dim = s.features.size();
        } else if (s.features.size() != *dim) {
            issue("dimension mismatch: '" + s.sample_id + "' has " + std::to_string(s.features.size()) +
                  " features, expected " + std::to_string(*dim));
            continue;
        }
        if (!seen.insert(s.sample_id).second) {
            issue("duplicate sample_id '" + s.sample_id + "'");
            continue;
        }
        samples.push_back(std::move(s));
    }
    if (samples.empty() && report.issues.empty()) {
        report.issues.push_back({0, "empty dataset"});
    }
    report.samples = samples.size();
    report.dimension = dim.value_or(0);
    return samples;
}

ValidationReport validate_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    ValidationReport report;
    if (!in) {
        report.issues.push_back({0, "cannot open '" + path.string() + "'"});
        return report;
    }
    parse_samples(in, report);
    return report;
}

Dataset ingest_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("io_error", "cannot open '" + path.string() + "'");
    }
    ValidationReport report;
    auto samples = parse_samples(in, report);
    if (!report.ok()) {
        std::ostringstream msg;
        msg << path.string() << ": " << report.issues.size() << " issue(s)";
        for (const auto& i : report.issues) {
            msg << "\n  line " << i.line << ": " << i.message;
        }
        throw Error("invalid_dataset", msg.str());
    }
    return Dataset(std::move(samples));
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
    for (const Sample& s : dataset.samples()) {
        json j;
        j["sample_id"] = s.sample_id;
        j["camera_id"] = s.camera_id ? json(*s.camera_id) : json(nullptr);
        j["truth"] = s.truth;
        j["features"] = s.features;
        out << j.dump() << '\n';
    }
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("io_error", "cannot write '" + path.string() + "'");
    }
    write_dataset(dataset, out);
}

DataSplit split_by_identity(const Dataset& dataset, double eval_fraction, RngStream& rng) {
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) {
        throw Error("invalid_argument", "eval_fraction must be in [0, 1)");
    }
    std::set<std::string> truth_set;
    for (const Sample& s : dataset.samples()) {
        truth_set.insert(s.truth);
    }
    std::vector<std::string> truths(truth_set.begin(), truth_set.end());
    rng.shuffle(truths);
    const auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(truths.size())));
    const std::set<std::string> eval_truths(truths.begin(), truths.begin() + static_cast<std::ptrdiff_t>(n_eval));

    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> eval_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (eval_truths.contains(dataset.at(i).truth) ? eval_idx : train_idx).push_back(i);
    }
    if (train_idx.empty()) {
        throw Error("invalid_argument", "eval split leaves no training identities");
    }
    DataSplit split{dataset.subset(train_idx), std::nullopt};
    if (!eval_idx.empty()) {
        split.eval = dataset.subset(eval_idx);
    }
    return split;
}

} // namespace hardmine
