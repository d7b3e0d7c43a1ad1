#include "hardmine/json_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace hardmine {

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* what) {
    if (!j.is_object()) {
        throw Error("parse_error", std::string(what) + " must be a JSON object");
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.contains(key)) {
            throw Error("parse_error", std::string("unknown ") + what + " field '" + key + "'");
        }
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw Error("parse_error", std::string("field '") + key + "': " + e.what());
        }
    }
}

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    // Row-major flattening.
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            flat.push_back(m(i, k));
        }
    }
    return flat;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
    const auto flat = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
        throw Error("parse_error", std::string(what) + " has the wrong number of entries");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index k = 0; k < cols; ++k) {
            m(i, k) = flat[static_cast<std::size_t>(i * cols + k)];
        }
    }
    return m;
}

std::uint64_t parse_hex64(const std::string& s) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw Error("parse_error", "bad hex value '" + s + "'");
    }
    return v;
}

} // namespace

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void to_json(json& j, const TargetMetric& v) {
    j = json{{"metric", v.metric}, {"threshold", v.threshold}};
}

void from_json(const json& j, TargetMetric& v) {
    reject_unknown(j, {"metric", "threshold"}, "target_metric");
    read_opt(j, "metric", v.metric);
    read_opt(j, "threshold", v.threshold);
}

void to_json(json& j, const ModelConfig& v) {
    j = json{{"embedding_dim", v.embedding_dim},
             {"learning_rate", v.learning_rate},
             {"epochs", v.epochs},
             {"minibatch_size", v.minibatch_size},
             {"negatives_per_positive", v.negatives_per_positive},
             {"verification_weight", v.verification_weight},
             {"weight_decay", v.weight_decay},
             {"warm_start", v.warm_start}};
}

void from_json(const json& j, ModelConfig& v) {
    reject_unknown(j,
                   {"embedding_dim", "learning_rate", "epochs", "minibatch_size", "negatives_per_positive",
                    "verification_weight", "weight_decay", "warm_start"},
                   "model");
    read_opt(j, "embedding_dim", v.embedding_dim);
    read_opt(j, "learning_rate", v.learning_rate);
    read_opt(j, "epochs", v.epochs);
    read_opt(j, "minibatch_size", v.minibatch_size);
    read_opt(j, "negatives_per_positive", v.negatives_per_positive);
    read_opt(j, "verification_weight", v.verification_weight);
    read_opt(j, "weight_decay", v.weight_decay);
    read_opt(j, "warm_start", v.warm_start);
}

void to_json(json& j, const ExperimentConfig& v) {
    j = json{{"batch_fraction", v.batch_fraction},
             {"budget_fraction", v.budget_fraction},
             {"init_labeled_fraction", v.init_labeled_fraction},
             {"eval_fraction", v.eval_fraction},
             {"hard_pool_multiplier", v.hard_pool_multiplier},
             {"contradiction_threshold", v.contradiction_threshold},
             {"idrm_batch_size", v.idrm_batch_size},
             {"representatives_per_candidate", v.representatives_per_candidate},
             {"annotator_error_rate", v.annotator_error_rate},
             {"confusability_factor", v.confusability_factor},
             {"seed", v.seed},
             {"model", v.model},
             {"target_metric", v.target_metric ? json(*v.target_metric) : json(nullptr)}};
}

void from_json(const json& j, ExperimentConfig& v) {
    reject_unknown(j,
                   {"batch_fraction", "budget_fraction", "init_labeled_fraction", "eval_fraction",
                    "hard_pool_multiplier", "contradiction_threshold", "idrm_batch_size",
                    "representatives_per_candidate", "annotator_error_rate", "confusability_factor", "seed", "model",
                    "target_metric"},
                   "config");
    read_opt(j, "batch_fraction", v.batch_fraction);
    read_opt(j, "budget_fraction", v.budget_fraction);
    read_opt(j, "init_labeled_fraction", v.init_labeled_fraction);
    read_opt(j, "eval_fraction", v.eval_fraction);
    read_opt(j, "hard_pool_multiplier", v.hard_pool_multiplier);
    read_opt(j, "contradiction_threshold", v.contradiction_threshold);
    read_opt(j, "idrm_batch_size", v.idrm_batch_size);
    read_opt(j, "representatives_per_candidate", v.representatives_per_candidate);
    read_opt(j, "annotator_error_rate", v.annotator_error_rate);
    read_opt(j, "confusability_factor", v.confusability_factor);
    read_opt(j, "seed", v.seed);
    if (j.contains("model")) {
        from_json(j.at("model"), v.model);
    }
    if (j.contains("target_metric") && !j.at("target_metric").is_null()) {
        TargetMetric t;
        from_json(j.at("target_metric"), t);
        v.target_metric = t;
    }
}

void to_json(json& j, const SyntheticSpec& v) {
    j = json{{"identities", v.identities},
             {"samples_per_identity", v.samples_per_identity},
             {"dimension", v.dimension},
             {"latent_dimension", v.latent_dimension},
             {"intra_class_sigma", v.intra_class_sigma},
             {"inter_class_separation", v.inter_class_separation},
             {"camera_count", v.camera_count},
             {"noise_fraction", v.noise_fraction},
             {"seed", v.seed}};
}

void from_json(const json& j, SyntheticSpec& v) {
    reject_unknown(j,
                   {"identities", "samples_per_identity", "dimension", "latent_dimension", "intra_class_sigma", "inter_class_separation",
                    "camera_count", "noise_fraction", "seed"},
                   "synthetic spec");
    read_opt(j, "identities", v.identities);
    read_opt(j, "samples_per_identity", v.samples_per_identity);
    read_opt(j, "dimension", v.dimension);
    read_opt(j, "latent_dimension", v.latent_dimension);
    read_opt(j, "intra_class_sigma", v.intra_class_sigma);
    read_opt(j, "inter_class_separation", v.inter_class_separation);
    read_opt(j, "camera_count", v.camera_count);
    read_opt(j, "noise_fraction", v.noise_fraction);
    read_opt(j, "seed", v.seed);
}

void to_json(json& j, const CostLedger& v) {
    j = json{{"comparisons", v.comparisons},
             {"labels_assigned", v.labels_assigned},
             {"new_identities_created", v.new_identities_created},
             {"wrong_labels", v.wrong_labels},
             {"naive_comparisons_baseline", v.naive_comparisons_baseline}};
}

void from_json(const json& j, CostLedger& v) {
    v.comparisons = j.at("comparisons").get<std::uint64_t>();
    v.labels_assigned = j.at("labels_assigned").get<std::uint64_t>();
    v.new_identities_created = j.at("new_identities_created").get<std::uint64_t>();
    v.wrong_labels = j.at("wrong_labels").get<std::uint64_t>();
    v.naive_comparisons_baseline = j.at("naive_comparisons_baseline").get<std::uint64_t>();
}

void to_json(json& j, const Metrics& v) {
    j = json{{"rank1", v.rank1},   {"rank5", v.rank5},     {"rank10", v.rank10},
             {"map", v.map},       {"queries", v.queries}, {"excluded_queries", v.excluded_queries}};
}

void from_json(const json& j, Metrics& v) {
    v.rank1 = j.at("rank1").get<double>();
    v.rank5 = j.at("rank5").get<double>();
    v.rank10 = j.at("rank10").get<double>();
    v.map = j.at("map").get<double>();
    v.queries = j.at("queries").get<std::size_t>();
    v.excluded_queries = j.at("excluded_queries").get<std::size_t>();
}

void to_json(json& j, const PoolState& v) {
    json labeled = json::object();
    for (const auto& [id, label] : v.labeled()) {
        labeled[id] = json{{"identity_id", label.identity_id}, {"source", to_string(label.source)}};
    }
    json identities = json::object();
    for (const auto& [identity, members] : v.identities()) {
        identities[identity] = members;
    }
    j = json{{"labeled", labeled},
             {"unlabeled", std::vector<SampleId>(v.unlabeled().begin(), v.unlabeled().end())},
             {"query", v.query()},
             {"identities", identities},
             {"identity_counter", v.identity_counter()}};
}

void from_json(const json& j, PoolState& v) {
    std::map<SampleId, IdentityLabel> labeled;
    for (const auto& [id, label] : j.at("labeled").items()) {
        labeled.emplace(id, IdentityLabel{label.at("identity_id").get<std::string>(),
                                          label_source_from_string(label.at("source").get<std::string>())});
    }
    const auto unlabeled_list = j.at("unlabeled").get<std::vector<SampleId>>();
    std::map<IdentityId, std::vector<SampleId>> identities;
    for (const auto& [identity, members] : j.at("identities").items()) {
        identities.emplace(identity, members.get<std::vector<SampleId>>());
    }
    v = PoolState::restore(std::move(labeled), std::set<SampleId>(unlabeled_list.begin(), unlabeled_list.end()),
                           j.at("query").get<std::vector<SampleId>>(), std::move(identities),
                           j.at("identity_counter").get<std::uint64_t>());
}

void to_json(json& j, const ModelState& v) {
    j = json{{"input_dim", v.input_dim()},
             {"embedding_dim", v.embedding_dim()},
             {"classes", v.classes},
             {"embed_weights", matrix_to_json(v.embed_weights)},
             {"id_weights", matrix_to_json(v.id_weights)},
             {"id_bias", std::vector<double>(v.id_bias.data(), v.id_bias.data() + v.id_bias.size())},
             {"verif_weights",
              std::vector<double>(v.verif_weights.data(), v.verif_weights.data() + v.verif_weights.size())},
             {"verif_bias", v.verif_bias}};
}

void from_json(const json& j, ModelState& v) {
    const auto d = j.at("input_dim").get<Eigen::Index>();
    const auto m = j.at("embedding_dim").get<Eigen::Index>();
    v.classes = j.at("classes").get<std::vector<IdentityId>>();
    const auto k = static_cast<Eigen::Index>(v.classes.size());
    v.embed_weights = matrix_from_json(j.at("embed_weights"), d, m, "embed_weights");
    v.id_weights = matrix_from_json(j.at("id_weights"), m, k, "id_weights");
    v.id_bias = matrix_from_json(j.at("id_bias"), k, 1, "id_bias").col(0);
    v.verif_weights = matrix_from_json(j.at("verif_weights"), m, 1, "verif_weights").col(0);
    v.verif_bias = j.at("verif_bias").get<double>();
}

void to_json(json& j, const Recommendation& v) {
    json candidates = json::array();
    for (const Candidate& c : v.candidates) {
        candidates.push_back(
            json{{"identity_id", c.identity_id}, {"probability", c.probability}, {"representatives", c.representatives}});
    }
    j = json{{"sample_id", v.sample_id},
             {"round", v.round},
             {"total_rounds", v.total_rounds},
             {"identities_registered", v.identities_registered},
             {"exhausted", v.exhausted()},
             {"candidates", candidates}};
}

void to_json(json& j, const LabelDecision& v) {
    j = json{{"sample_id", v.sample_id},
             {"identity_id", v.identity_id ? json(*v.identity_id) : json("new")},
             {"round", v.round},
             {"position", v.position},
             {"comparisons", v.comparisons},
             {"source", to_string(v.source)}};
}

void to_json(json& j, const SelectionAudit& v) {
    json entries = json::array();
    auto opt = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
    for (const AuditEntry& e : v.entries) {
        entries.push_back(json{{"sample_id", e.sample_id},
                               {"score", opt(e.score)},
                               {"uncertainty", opt(e.uncertainty)},
                               {"intra_diversity", opt(e.intra_diversity)},
                               {"contradictory", e.contradictory},
                               {"hard", e.hard},
                               {"selected", e.selected}});
    }
    j = json{{"strategy", to_string(v.strategy)},
             {"batch_size", v.batch_size},
             {"hard_pool_size", v.hard_pool_size},
             {"candidates", entries}};
}

json record_to_json(const IterationRecord& r, bool include_timing) {
    json j{{"iteration", r.iteration},
           {"labeled_count", r.labeled_count},
           {"labeled_fraction", r.labeled_fraction},
           {"identities", r.identities},
           {"strategy", to_string(r.strategy)},
           {"metrics", r.metrics ? json(*r.metrics) : json(nullptr)},
           {"training_loss", r.training_loss},
           {"verification_skipped", r.verification_skipped},
           {"model_checksum", hex64(r.model_checksum)},
           {"batch_size", r.batch_size},
           {"ledger_delta", r.ledger_delta},
           {"ledger_total", r.ledger_total}};
    if (include_timing) {
        j["duration_ms"] = r.duration_ms;
    }
    return j;
}

IterationRecord record_from_json(const json& j) {
    IterationRecord r;
    r.iteration = j.at("iteration").get<std::size_t>();
    r.labeled_count = j.at("labeled_count").get<std::size_t>();
    r.labeled_fraction = j.at("labeled_fraction").get<double>();
    r.identities = j.at("identities").get<std::size_t>();
    r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    if (!j.at("metrics").is_null()) {
        r.metrics = j.at("metrics").get<Metrics>();
    }
    r.training_loss = j.at("training_loss").get<double>();
    r.verification_skipped = j.at("verification_skipped").get<bool>();
    r.model_checksum = parse_hex64(j.at("model_checksum").get<std::string>());
    r.batch_size = j.at("batch_size").get<std::size_t>();
    r.ledger_delta = j.at("ledger_delta").get<CostLedger>();
    r.ledger_total = j.at("ledger_total").get<CostLedger>();
    if (j.contains("duration_ms")) {
        r.duration_ms = j.at("duration_ms").get<double>();
    }
    return r;
}

json report_to_json(const ExperimentReport& r, bool include_timing) {
    json records = json::array();
    for (const IterationRecord& rec : r.records) {
        records.push_back(record_to_json(rec, include_timing));
    }
    return json{{"config", r.config},
                {"config_hash", hex64(config_hash(r.config))},
                {"strategy", to_string(r.strategy)},
                {"pool_size", r.pool_size},
                {"eval_size", r.eval_size},
                {"termination", to_string(r.termination)},
                {"ledger", r.ledger},
                {"records", records}};
}

json comparison_to_json(const ComparisonTable& t, bool include_timing) {
    json strategies = json::array();
    for (Strategy s : t.strategies) {
        strategies.push_back(to_string(s));
    }
    json rows = json::array();
    for (const ComparisonRow& row : t.rows) {
        rows.push_back(json{{"strategy", to_string(row.strategy)},
                            {"iteration", row.iteration},
                            {"runs", row.runs},
                            {"labeled_fraction", row.labeled_fraction},
                            {"rank1_mean", row.rank1_mean},
                            {"rank1_std", row.rank1_std},
                            {"rank5_mean", row.rank5_mean},
                            {"rank5_std", row.rank5_std},
                            {"rank10_mean", row.rank10_mean},
                            {"rank10_std", row.rank10_std},
                            {"map_mean", row.map_mean},
                            {"map_std", row.map_std},
                            {"comparisons_mean", row.comparisons_mean},
                            {"naive_comparisons_mean", row.naive_comparisons_mean}});
    }
    json runs = json::array();
    for (const ExperimentReport& r : t.runs) {
        runs.push_back(report_to_json(r, include_timing));
    }
    return json{{"strategies", strategies}, {"seeds", t.seeds}, {"rows", rows}, {"runs", runs}};
}

json metrics_line(const IterationRecord& r) {
    const Metrics m = r.metrics.value_or(Metrics{});
    return json{{"iteration", r.iteration}, {"labeled_fraction", r.labeled_fraction},
                {"rank1", m.rank1},         {"rank5", m.rank5},
                {"rank10", m.rank10},       {"map", m.map},
                {"excluded_queries", m.excluded_queries}};
}

std::string report_to_csv(const ExperimentReport& r) {
    std::ostringstream out;
    out << "strategy,iteration,labeled_count,labeled_fraction,identities,rank1,rank5,rank10,map,training_loss,"
           "batch_size,comparisons,naive_comparisons,wrong_labels,new_identities\n";
    for (const IterationRecord& rec : r.records) {
        const Metrics m = rec.metrics.value_or(Metrics{});
        out << to_string(rec.strategy) << ',' << rec.iteration << ',' << rec.labeled_count << ','
            << fmt_double(rec.labeled_fraction) << ',' << rec.identities << ',' << fmt_double(m.rank1) << ','
            << fmt_double(m.rank5) << ',' << fmt_double(m.rank10) << ',' << fmt_double(m.map) << ','
            << fmt_double(rec.training_loss) << ',' << rec.batch_size << ',' << rec.ledger_total.comparisons << ','
            << rec.ledger_total.naive_comparisons_baseline << ',' << rec.ledger_total.wrong_labels << ','
            << rec.ledger_total.new_identities_created << '\n';
    }
    return out.str();
}

std::string comparison_to_csv(const ComparisonTable& t) {
    std::ostringstream out;
    out << "strategy,iteration,runs,labeled_fraction,rank1_mean,rank1_std,rank5_mean,rank5_std,rank10_mean,"
           "rank10_std,map_mean,map_std,comparisons_mean,naive_comparisons_mean\n";
    for (const ComparisonRow& row : t.rows) {
        out << to_string(row.strategy) << ',' << row.iteration << ',' << row.runs << ','
            << fmt_double(row.labeled_fraction) << ',' << fmt_double(row.rank1_mean) << ','
            << fmt_double(row.rank1_std) << ',' << fmt_double(row.rank5_mean) << ',' << fmt_double(row.rank5_std)
            << ',' << fmt_double(row.rank10_mean) << ',' << fmt_double(row.rank10_std) << ','
            << fmt_double(row.map_mean) << ',' << fmt_double(row.map_std) << ',' << fmt_double(row.comparisons_mean)
            << ',' << fmt_double(row.naive_comparisons_mean) << '\n';
    }
    return out.str();
}

json state_to_json(const ExperimentState& s) {
    json records = json::array();
    for (const IterationRecord& rec : s.records) {
        records.push_back(record_to_json(rec, /*include_timing=*/true));
    }
    return json{{"config", s.config},
                {"strategy", to_string(s.strategy)},
                {"iteration", s.iteration},
                {"pool", s.pool},
                {"ledger", s.ledger},
                {"records", records},
                {"termination", to_string(s.termination)},
                {"model", s.model ? json(*s.model) : json(nullptr)},
                {"model_version", s.model_version}};
}

ExperimentState state_from_json(const json& j) {
    ExperimentState s;
    s.config = j.at("config").get<ExperimentConfig>();
    s.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    s.iteration = j.at("iteration").get<std::size_t>();
    s.pool = j.at("pool").get<PoolState>();
    s.ledger = j.at("ledger").get<CostLedger>();
    for (const json& rec : j.at("records")) {
        s.records.push_back(record_from_json(rec));
    }
    s.termination = termination_from_string(j.at("termination").get<std::string>());
    if (!j.at("model").is_null()) {
        s.model = j.at("model").get<ModelState>();
    }
    s.model_version = j.at("model_version").get<std::uint64_t>();
    return s;
}

namespace {

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("io_error", "cannot open '" + path.string() + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("parse_error", path.string() + ": " + e.what());
    }
}

} // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
    auto cfg = read_json_file(path).get<ExperimentConfig>();
    cfg.validate();
    return cfg;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
    auto spec = read_json_file(path).get<SyntheticSpec>();
    spec.validate();
    return spec;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    return fnv1a64(json(config).dump());
}

} // namespace hardmine
