#include "hardmine/loop.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <tuple>

namespace hardmine {

std::string to_string(Termination t) {
    switch (t) {
    case Termination::running:
        return "running";
    case Termination::budget_reached:
        return "budget_reached";
    case Termination::target_reached:
        return "target_reached";
    case Termination::pool_exhausted:
        return "pool_exhausted";
    }
    return "running";
}

Termination termination_from_string(const std::string& name) {
    if (name == "running") return Termination::running;
    if (name == "budget_reached") return Termination::budget_reached;
    if (name == "target_reached") return Termination::target_reached;
    if (name == "pool_exhausted") return Termination::pool_exhausted;
    throw Error("parse_error", "unknown termination '" + name + "'");
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

} // namespace

Experiment::Experiment(Dataset train, std::optional<Dataset> eval, ExperimentConfig config, Strategy strategy)
    : train_(std::move(train)), eval_(std::move(eval)), features_(train_.features()) {
    config.validate();
    state_.config = std::move(config);
    state_.strategy = strategy;
    if (std::llround(state_.config.batch_fraction * static_cast<double>(train_.size())) == 0) {
        throw Error("invalid_config", "batch_fraction selects no samples from a pool of " +
                                          std::to_string(train_.size()));
    }
    if (eval_) {
        eval_features_ = eval_->features();
        eval_truth_ = eval_->truth_oracle();
    }
    RngStream rng = RngStream(state_.config.seed).derive("partition");
    state_.pool = partition_dataset(train_, state_.config.init_labeled_fraction, rng);
    state_.pool.check_invariants(train_.size());
}

Experiment::Experiment(Dataset train, std::optional<Dataset> eval, ExperimentState state)
    : train_(std::move(train)), eval_(std::move(eval)), features_(train_.features()), state_(std::move(state)) {
    state_.config.validate();
    if (eval_) {
        eval_features_ = eval_->features();
        eval_truth_ = eval_->truth_oracle();
    }
    state_.pool.check_invariants(train_.size());
    if (!state_.pool.query().empty()) {
        throw Error("mid_cycle", "cannot resume with an outstanding query batch");
    }
    for (const auto& [id, label] : state_.pool.labeled()) {
        if (!features_.contains(id)) {
            throw Error("dataset_mismatch", "checkpoint refers to sample '" + id + "' missing from the dataset");
        }
    }
}

RngStream Experiment::stream(const char* tag) const {
    return RngStream(state_.config.seed).derive(tag, state_.iteration);
}

std::optional<std::vector<SampleId>> Experiment::begin_cycle(SelectionAudit* audit) {
    if (terminated()) {
        return std::nullopt;
    }
    if (in_cycle_) {
        throw Error("mid_cycle", "previous cycle has not finished");
    }
    cycle_started_ = Clock::now();
    const ExperimentConfig& cfg = state_.config;

    RngStream train_rng = stream("train");
    const ModelState* warm = cfg.model.warm_start && state_.model ? &*state_.model : nullptr;
    TrainedModel trained = train(state_.pool, features_, cfg.model, train_rng, warm);
    state_.model = std::move(trained.model);
    ++state_.model_version;

    IterationRecord rec;
    rec.iteration = state_.iteration;
    rec.labeled_count = state_.pool.labeled().size();
    rec.labeled_fraction = state_.pool.labeled_fraction();
    rec.identities = state_.pool.identities().size();
    rec.strategy = state_.strategy;
    rec.training_loss = trained.report.final_loss;
    rec.verification_skipped = trained.report.verification_skipped;
    rec.model_checksum = state_.model->checksum();
    if (eval_features_) {
        rec.metrics = evaluate_model(*state_.model, *eval_features_, *eval_truth_);
    }
    rec.ledger_total = state_.ledger;

    if (cfg.target_metric && rec.metrics &&
        metric_value(*rec.metrics, cfg.target_metric->metric) >= cfg.target_metric->threshold) {
        state_.termination = Termination::target_reached;
    } else if (state_.pool.unlabeled().empty()) {
        state_.termination = Termination::pool_exhausted;
    } else if (rec.labeled_fraction >= cfg.budget_fraction) {
        state_.termination = Termination::budget_reached;
    }
    if (terminated()) {
        rec.duration_ms = elapsed_ms(cycle_started_);
        state_.records.push_back(rec);
        return std::nullopt;
    }

    RngStream select_rng = stream("select");
    std::vector<SampleId> batch = select_batch(state_.strategy, *state_.model, state_.pool, features_, cfg, select_rng, audit);
    state_.pool.enqueue(batch);
    state_.pool.check_invariants(train_.size());
    rec.batch_size = batch.size();
    state_.records.push_back(rec);
    cycle_start_ledger_ = state_.ledger;
    in_cycle_ = true;
    return batch;
}

IdentityId Experiment::apply(const LabelDecision& decision, const SimulatedAnnotator* judge) {
    if (!in_cycle_) {
        throw Error("not_in_cycle", "no query batch is awaiting labels");
    }
    return apply_label(state_.pool, decision, state_.ledger, judge);
}

void Experiment::finish_cycle() {
    if (!in_cycle_) {
        throw Error("not_in_cycle", "no cycle in progress");
    }
    if (!state_.pool.query().empty()) {
        throw Error("mid_cycle", std::to_string(state_.pool.query().size()) + " query samples are still unlabeled");
    }
    state_.pool.check_invariants(train_.size());
    IterationRecord& rec = state_.records.back();
    rec.ledger_delta = state_.ledger - cycle_start_ledger_;
    rec.ledger_total = state_.ledger;
    rec.duration_ms = elapsed_ms(cycle_started_);
    ++state_.iteration;
    in_cycle_ = false;
}

bool Experiment::step(const SimulatedAnnotator& annotator, SelectionAudit* audit) {
    auto batch = begin_cycle(audit);
    if (!batch) {
        return false;
    }
    RngStream rng = stream("annotate");
    annotate_batch(*state_.model, state_.pool, features_, *batch, annotator, state_.config, state_.ledger, rng);
    finish_cycle();
    return true;
}

void Experiment::run(const SimulatedAnnotator& annotator) {
    while (step(annotator)) {
    }
}

Recommendation Experiment::recommend(const SampleId& sample_id, std::size_t round) const {
    if (!state_.model) {
        throw Error("not_in_cycle", "no model trained yet");
    }
    return recommend_candidates(*state_.model, state_.pool, features_, sample_id, round, state_.config);
}

ExperimentReport Experiment::report() const {
    ExperimentReport r;
    r.config = state_.config;
    r.strategy = state_.strategy;
    r.pool_size = train_.size();
    r.eval_size = eval_ ? eval_->size() : 0;
    r.records = state_.records;
    r.termination = state_.termination;
    r.ledger = state_.ledger;
    return r;
}

ExperimentState Experiment::snapshot() const {
    if (in_cycle_) {
        throw Error("mid_cycle", "cannot checkpoint while a query batch is outstanding");
    }
    return state_;
}

DataSplit split_for(const Dataset& dataset, const ExperimentConfig& config) {
    RngStream rng = RngStream(config.seed).derive("split");
    return split_by_identity(dataset, config.eval_fraction, rng);
}

ExperimentReport run_experiment(const Dataset& dataset, const ExperimentConfig& config, Strategy strategy) {
    DataSplit split = split_for(dataset, config);
    const SimulatedAnnotator annotator(split.train.truth_oracle(), config.annotator_error_rate,
                                       config.confusability_factor);
    Experiment experiment(std::move(split.train), std::move(split.eval), config, strategy);
    experiment.run(annotator);
    return experiment.report();
}

Metrics full_data_reference(const Dataset& dataset, const ExperimentConfig& config) {
    config.validate();
    DataSplit split = split_for(dataset, config);
    if (!split.eval) {
        throw Error("empty_split", "full-data reference needs an eval split");
    }
    std::vector<SampleId> ids;
    for (const Sample& s : split.train.samples()) {
        ids.push_back(s.sample_id);
    }
    PoolState pool(ids);
    std::map<std::string, IdentityId> by_truth;
    for (const Sample& s : split.train.samples()) {
        auto it = by_truth.find(s.truth);
        if (it == by_truth.end()) {
            by_truth.emplace(s.truth, pool.create_identity(s.sample_id, LabelSource::ground_truth_bootstrap));
        } else {
            pool.assign(s.sample_id, it->second, LabelSource::ground_truth_bootstrap);
        }
    }
    const FeatureTable features = split.train.features();
    RngStream rng = RngStream(config.seed).derive("train", 0);
    const TrainedModel trained = train(pool, features, config.model, rng);
    return evaluate_model(trained.model, split.eval->features(), split.eval->truth_oracle());
}

namespace {

struct Accumulator {
    std::vector<double> rank1, rank5, rank10, map, fraction, comparisons, naive;
};

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) {
        return {0.0, 0.0};
    }
    double sum = 0.0;
    for (double x : v) {
        sum += x;
    }
    const double mean = sum / static_cast<double>(v.size());
    if (v.size() < 2) {
        return {mean, 0.0};
    }
    double sq = 0.0;
    for (double x : v) {
        sq += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(sq / static_cast<double>(v.size() - 1))};
}

} // namespace

std::vector<ComparisonRow> aggregate_runs(std::span<const ExperimentReport> runs) {
    std::vector<Strategy> order;
    std::map<std::pair<int, std::size_t>, Accumulator> acc;
    for (const ExperimentReport& run : runs) {
        if (std::find(order.begin(), order.end(), run.strategy) == order.end()) {
            order.push_back(run.strategy);
        }
        for (const IterationRecord& rec : run.records) {
            Accumulator& a = acc[{static_cast<int>(run.strategy), rec.iteration}];
            a.fraction.push_back(rec.labeled_fraction);
            a.comparisons.push_back(static_cast<double>(rec.ledger_total.comparisons));
            a.naive.push_back(static_cast<double>(rec.ledger_total.naive_comparisons_baseline));
            if (rec.metrics) {
                a.rank1.push_back(rec.metrics->rank1);
                a.rank5.push_back(rec.metrics->rank5);
                a.rank10.push_back(rec.metrics->rank10);
                a.map.push_back(rec.metrics->map);
            }
        }
    }
    std::vector<ComparisonRow> rows;
    for (Strategy s : order) {
        for (const auto& [key, a] : acc) {
            if (key.first != static_cast<int>(s)) {
                continue;
            }
            ComparisonRow row;
            row.strategy = s;
            row.iteration = key.second;
            row.runs = a.fraction.size();
            row.labeled_fraction = mean_std(a.fraction).first;
            std::tie(row.rank1_mean, row.rank1_std) = mean_std(a.rank1);
            std::tie(row.rank5_mean, row.rank5_std) = mean_std(a.rank5);
            std::tie(row.rank10_mean, row.rank10_std) = mean_std(a.rank10);
            std::tie(row.map_mean, row.map_std) = mean_std(a.map);
            row.comparisons_mean = mean_std(a.comparisons).first;
            row.naive_comparisons_mean = mean_std(a.naive).first;
            rows.push_back(row);
        }
    }
    return rows;
}

ComparisonTable compare_strategies(const Dataset& dataset, const ExperimentConfig& config,
                                   std::span<const Strategy> strategies, std::span<const std::uint64_t> seeds) {
    if (strategies.empty() || seeds.empty()) {
        throw Error("invalid_argument", "compare needs at least one strategy and one seed");
    }
    ComparisonTable table;
    table.strategies.assign(strategies.begin(), strategies.end());
    table.seeds.assign(seeds.begin(), seeds.end());
    for (Strategy s : strategies) {
        const std::size_t first = table.runs.size();
        for (std::uint64_t seed : seeds) {
            ExperimentConfig cfg = config;
            cfg.seed = seed;
            table.runs.push_back(run_experiment(dataset, cfg, s));
        }
        const auto slot = std::span<const ExperimentReport>(table.runs).subspan(first, seeds.size());
        auto rows = aggregate_runs(slot);
        table.rows.insert(table.rows.end(), rows.begin(), rows.end());
    }
    return table;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    auto number = [&](std::string_view part) {
        std::uint64_t v = 0;
        auto res = std::from_chars(part.data(), part.data() + part.size(), v);
        if (part.empty() || res.ec != std::errc() || res.ptr != part.data() + part.size()) {
            throw Error("invalid_argument", "bad seed list '" + text + "'");
        }
        return v;
    };
    std::vector<std::uint64_t> seeds;
    if (const auto dots = text.find(".."); dots != std::string::npos) {
        const std::uint64_t lo = number(std::string_view(text).substr(0, dots));
        const std::uint64_t hi = number(std::string_view(text).substr(dots + 2));
        if (hi < lo) {
            throw Error("invalid_argument", "empty seed range '" + text + "'");
        }
        for (std::uint64_t s = lo; s <= hi; ++s) {
            seeds.push_back(s);
        }
        return seeds;
    }
    std::string_view rest(text);
    while (true) {
        const auto comma = rest.find(',');
        seeds.push_back(number(rest.substr(0, comma)));
        if (comma == std::string_view::npos) {
            break;
        }
        rest.remove_prefix(comma + 1);
    }
    return seeds;
}

} // namespace hardmine
