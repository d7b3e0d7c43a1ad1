#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hardmine/annotation.hpp"
#include "hardmine/core.hpp"
#include "hardmine/eval.hpp"
#include "hardmine/ingest.hpp"
#include "hardmine/model.hpp"
#include "hardmine/selection.hpp"

namespace hardmine {

enum class Termination { running, budget_reached, target_reached, pool_exhausted };

std::string to_string(Termination t);
Termination termination_from_string(const std::string& name);

/// One train -> evaluate -> select -> annotate cycle.
struct IterationRecord {
    std::size_t iteration = 0;
    std::size_t labeled_count = 0;
    double labeled_fraction = 0.0;
    std::size_t identities = 0;
    Strategy strategy = Strategy::ahsm;
    std::optional<Metrics> metrics;  // absent without an eval split
    double training_loss = 0.0;
    bool verification_skipped = false;
    std::uint64_t model_checksum = 0;
    std::size_t batch_size = 0;  // samples queried in this cycle
    CostLedger ledger_delta;
    CostLedger ledger_total;
    double duration_ms = 0.0;  // wall clock, excluded from deterministic output

    bool operator==(const IterationRecord&) const = default;
};

struct ExperimentReport {
    ExperimentConfig config;
    Strategy strategy = Strategy::ahsm;
    std::size_t pool_size = 0;
    std::size_t eval_size = 0;
    std::vector<IterationRecord> records;
    Termination termination = Termination::running;
    CostLedger ledger;
};

/// Everything needed to continue an experiment from a cycle boundary.
struct ExperimentState {
    ExperimentConfig config;
    Strategy strategy = Strategy::ahsm;
    std::size_t iteration = 0;
    PoolState pool;
    CostLedger ledger;
    std::vector<IterationRecord> records;
    Termination termination = Termination::running;
    std::optional<ModelState> model;
    std::uint64_t model_version = 0;

    bool operator==(const ExperimentState&) const = default;
};

/// The outer active-learning loop over one train/eval split.
///
/// A cycle is begin_cycle() (train from scratch, evaluate, record, check
/// the stopping rules, select and enqueue Q), then labeling of every
/// sample in Q, then finish_cycle(). step() runs a full cycle with the
/// simulated annotator; the service drives the same calls with humans.
/// Randomness for cycle i comes from substreams keyed by i, so a run can
/// resume from any boundary and continue identically.
class Experiment {
public:
    Experiment(Dataset train, std::optional<Dataset> eval, ExperimentConfig config, Strategy strategy);

    /// Restores a checkpointed state. The split must be the one the state
    /// was produced from.
    Experiment(Dataset train, std::optional<Dataset> eval, ExperimentState state);

    /// Returns the selected query batch, or nullopt once a stopping rule
    /// fires. The batch is already moved into the pool's query set.
    std::optional<std::vector<SampleId>> begin_cycle(SelectionAudit* audit = nullptr);

    /// Closes a cycle after every query sample has been labeled.
    void finish_cycle();

    /// Labels through apply_label and charges the ledger.
    IdentityId apply(const LabelDecision& decision, const SimulatedAnnotator* judge = nullptr);

    /// One full cycle with the simulated annotator. False once terminated.
    bool step(const SimulatedAnnotator& annotator, SelectionAudit* audit = nullptr);

    void run(const SimulatedAnnotator& annotator);

    [[nodiscard]] Recommendation recommend(const SampleId& sample_id, std::size_t round) const;

    [[nodiscard]] const PoolState& pool() const { return state_.pool; }
    [[nodiscard]] const CostLedger& ledger() const { return state_.ledger; }
    [[nodiscard]] const std::optional<ModelState>& model() const { return state_.model; }
    [[nodiscard]] std::uint64_t model_version() const { return state_.model_version; }
    [[nodiscard]] std::size_t iteration() const { return state_.iteration; }
    [[nodiscard]] bool terminated() const { return state_.termination != Termination::running; }
    [[nodiscard]] bool in_cycle() const { return in_cycle_; }
    [[nodiscard]] const ExperimentConfig& config() const { return state_.config; }
    [[nodiscard]] Strategy strategy() const { return state_.strategy; }
    [[nodiscard]] const FeatureTable& features() const { return features_; }
    [[nodiscard]] const std::vector<IterationRecord>& records() const { return state_.records; }

    [[nodiscard]] ExperimentReport report() const;
    /// Throws Error("mid_cycle") while a query batch is outstanding.
    [[nodiscard]] ExperimentState snapshot() const;

private:
    RngStream stream(const char* tag) const;

    Dataset train_;
    std::optional<Dataset> eval_;
    FeatureTable features_;
    std::optional<FeatureTable> eval_features_;
    std::optional<TruthOracle> eval_truth_;
    ExperimentState state_;
    CostLedger cycle_start_ledger_;
    std::chrono::steady_clock::time_point cycle_started_;
    bool in_cycle_ = false;
};

/// Train/eval split used by every experiment with this config.
DataSplit split_for(const Dataset& dataset, const ExperimentConfig& config);

/// Splits the dataset, runs the loop with a simulated annotator built from
/// the config's error model, and returns the report.
ExperimentReport run_experiment(const Dataset& dataset, const ExperimentConfig& config, Strategy strategy);

/// Metrics of a model trained on the whole training split with true labels.
Metrics full_data_reference(const Dataset& dataset, const ExperimentConfig& config);

struct ComparisonRow {
    Strategy strategy = Strategy::ahsm;
    std::size_t iteration = 0;
    std::size_t runs = 0;
    double labeled_fraction = 0.0;  // mean over runs
    double rank1_mean = 0.0, rank1_std = 0.0;
    double rank5_mean = 0.0, rank5_std = 0.0;
    double rank10_mean = 0.0, rank10_std = 0.0;
    double map_mean = 0.0, map_std = 0.0;
    double comparisons_mean = 0.0;
    double naive_comparisons_mean = 0.0;
};

struct ComparisonTable {
    std::vector<Strategy> strategies;
    std::vector<std::uint64_t> seeds;
    std::vector<ExperimentReport> runs;  // strategy-major, then seed
    std::vector<ComparisonRow> rows;
};

/// Mean and sample standard deviation per (strategy, iteration) over the
/// runs that reached that iteration.
std::vector<ComparisonRow> aggregate_runs(std::span<const ExperimentReport> runs);

/// "1..10" (inclusive range) or "1,4,9". Throws Error("invalid_argument").
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

ComparisonTable compare_strategies(const Dataset& dataset, const ExperimentConfig& config,
                                   std::span<const Strategy> strategies, std::span<const std::uint64_t> seeds);

} // namespace hardmine
