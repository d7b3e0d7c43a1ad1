// Command-line front end: run, compare, gen-synth, validate, serve.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hardmine/checkpoint.hpp"
#include "hardmine/json_io.hpp"
#include "hardmine/loop.hpp"
#include "hardmine/service.hpp"

namespace fs = std::filesystem;
using namespace hardmine;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("io_error", "cannot write '" + path.string() + "'");
    }
    out << text;
}

ExperimentConfig config_from(const std::string& path, std::optional<std::uint64_t> seed) {
    ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
    if (seed) {
        cfg.seed = *seed;
    }
    cfg.validate();
    return cfg;
}

struct RunArgs {
    std::string dataset, strategy = "ahsm", config, out, checkpoint, resume;
    std::optional<std::uint64_t> seed;
    std::size_t max_cycles = 0;
};

int cmd_run(const RunArgs& a) {
    const Dataset dataset = ingest_dataset(a.dataset);
    std::optional<Experiment> exp;
    ExperimentConfig cfg;
    if (!a.resume.empty()) {
        // The split is derived from the checkpointed config, so load that first.
        std::ifstream in(a.resume);
        if (!in) {
            throw Error("io_error", "cannot open checkpoint '" + a.resume + "'");
        }
        json doc;
        try {
            doc = json::parse(in);
            cfg = state_from_json(doc.at("state")).config;
        } catch (const json::exception& e) {
            throw Error("corrupt_checkpoint", std::string("corrupt checkpoint: ") + e.what());
        }
        DataSplit split = split_for(dataset, cfg);
        ExperimentState state = checkpoint_load(a.resume, split.train);
        exp.emplace(std::move(split.train), std::move(split.eval), std::move(state));
    } else {
        cfg = config_from(a.config, a.seed);
        DataSplit split = split_for(dataset, cfg);
        exp.emplace(std::move(split.train), std::move(split.eval), cfg, strategy_from_string(a.strategy));
    }

    fs::create_directories(a.out);
    const DataSplit split = split_for(dataset, cfg);
    const SimulatedAnnotator annotator(split.train.truth_oracle(), cfg.annotator_error_rate, cfg.confusability_factor);

    std::ofstream audit_out(fs::path(a.out) / "audit.jsonl", std::ios::app);
    std::size_t cycles = 0;
    while (!exp->terminated()) {
        if (a.max_cycles && cycles == a.max_cycles) {
            break;
        }
        SelectionAudit audit;
        const std::size_t iteration = exp->iteration();
        if (!exp->step(annotator, &audit)) {
            break;
        }
        json line = audit;
        line["iteration"] = iteration;
        audit_out << line.dump() << '\n';
        ++cycles;
        const IterationRecord& rec = exp->records().back();
        std::cerr << "iteration " << rec.iteration << "  labeled " << rec.labeled_count << " ("
                  << rec.labeled_fraction << ")";
        if (rec.metrics) {
            std::cerr << "  rank1 " << rec.metrics->rank1 << "  mAP " << rec.metrics->map;
        }
        std::cerr << '\n';
        if (!a.checkpoint.empty()) {
            checkpoint_save(exp->snapshot(), split.train, a.checkpoint);
        }
    }

    const ExperimentReport report = exp->report();
    write_text(fs::path(a.out) / "report.json", report_to_json(report).dump(2) + "\n");
    write_text(fs::path(a.out) / "curve.csv", report_to_csv(report));
    std::string metrics;
    json timings = json::array();
    for (const IterationRecord& r : report.records) {
        metrics += metrics_line(r).dump() + "\n";
        timings.push_back(json{{"iteration", r.iteration}, {"duration_ms", r.duration_ms}});
    }
    write_text(fs::path(a.out) / "metrics.jsonl", metrics);
    write_text(fs::path(a.out) / "timings.json", timings.dump(2) + "\n");
    if (!a.checkpoint.empty()) {
        checkpoint_save(exp->snapshot(), split.train, a.checkpoint);
    }
    std::cout << "termination: " << to_string(report.termination) << "  records: " << report.records.size()
              << "  comparisons: " << report.ledger.comparisons
              << "  naive: " << report.ledger.naive_comparisons_baseline << '\n';
    return 0;
}

struct CompareArgs {
    std::string dataset, config, strategies = "ahsm,random", seeds = "1..10", out;
    bool timings = false;
};

int cmd_compare(const CompareArgs& a) {
    const Dataset dataset = ingest_dataset(a.dataset);
    const ExperimentConfig cfg = config_from(a.config, std::nullopt);
    std::vector<Strategy> strategies;
    std::stringstream ss(a.strategies);
    for (std::string name; std::getline(ss, name, ',');) {
        strategies.push_back(strategy_from_string(name));
    }
    const std::vector<std::uint64_t> seeds = parse_seed_list(a.seeds);
    const ComparisonTable table = compare_strategies(dataset, cfg, strategies, seeds);
    const std::string report = comparison_to_json(table, a.timings).dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << report;
        return 0;
    }
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "comparison.json", report);
    write_text(fs::path(a.out) / "comparison.csv", comparison_to_csv(table));
    return 0;
}

int cmd_gen_synth(const std::string& spec_path, std::optional<std::uint64_t> seed, const std::string& out) {
    SyntheticSpec spec = spec_path.empty() ? SyntheticSpec::standard(0) : load_synthetic_spec(spec_path);
    if (seed) {
        spec.seed = *seed;
    }
    const Dataset dataset = generate_synthetic(spec);
    write_dataset(dataset, fs::path(out));
    std::cout << "wrote " << dataset.size() << " samples to " << out << '\n';
    return 0;
}

int cmd_validate(const std::string& path) {
    const ValidationReport report = validate_dataset(path);
    for (const auto& issue : report.issues) {
        std::cout << path << ":" << issue.line << ": " << issue.message << '\n';
    }
    if (!report.ok()) {
        std::cout << report.issues.size() << " issue(s)\n";
        return 1;
    }
    std::cout << report.samples << " samples, dimension " << report.dimension << '\n';
    return 0;
}

HttpFrontend* g_frontend = nullptr;

void on_signal(int) {
    if (g_frontend) {
        g_frontend->stop();
    }
}

struct ServeArgs {
    std::string dataset, config, strategy = "ahsm", assets, bind = "127.0.0.1:8080";
    double timeout_s = 120.0;
};

int cmd_serve(const ServeArgs& a) {
    const Dataset dataset = ingest_dataset(a.dataset);
    const ExperimentConfig cfg = config_from(a.config, std::nullopt);
    const auto [host, port] = parse_bind_address(a.bind);
    DataSplit split = split_for(dataset, cfg);
    ServiceOptions opts;
    opts.assignment_timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout_s * 1000.0));
    if (!a.assets.empty()) {
        opts.asset_dir = a.assets;
    }
    AnnotationService service(
        Experiment(std::move(split.train), std::move(split.eval), cfg, strategy_from_string(a.strategy)),
        std::move(opts));
    HttpFrontend frontend(service);
    if (!a.assets.empty()) {
        frontend.mount_assets(a.assets);
    }
    const int bound = frontend.bind(host, port);
    g_frontend = &frontend;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "serving on " << host << ":" << bound << '\n';
    frontend.listen();
    g_frontend = nullptr;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active hard-sample mining for re-identification"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run one active-learning experiment");
    run_cmd->add_option("--dataset", run.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--strategy", run.strategy, "ahsm | entropy | least_confidence | margin | random");
    run_cmd->add_option("--config", run.config, "Experiment config JSON")->check(CLI::ExistingFile);
    run_cmd->add_option("--seed", run.seed, "Override the config seed");
    run_cmd->add_option("--out", run.out, "Output directory")->required();
    run_cmd->add_option("--checkpoint", run.checkpoint, "Write a checkpoint after every cycle");
    run_cmd->add_option("--resume", run.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
    run_cmd->add_option("--max-cycles", run.max_cycles, "Stop after this many cycles (0: no limit)");

    CompareArgs cmp;
    auto* cmp_cmd = app.add_subcommand("compare", "Compare strategies over seeds");
    cmp_cmd->add_option("--dataset", cmp.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--config", cmp.config, "Experiment config JSON")->check(CLI::ExistingFile);
    cmp_cmd->add_option("--strategies", cmp.strategies, "Comma-separated strategies");
    cmp_cmd->add_option("--seeds", cmp.seeds, "Seed range a..b or list a,b,c");
    cmp_cmd->add_option("--out", cmp.out, "Output directory (default: stdout)");
    cmp_cmd->add_flag("--timings", cmp.timings, "Include wall-clock durations");

    std::string spec_path, synth_out;
    std::optional<std::uint64_t> synth_seed;
    auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic dataset");
    gen_cmd->add_option("--spec", spec_path, "Synthetic spec JSON (default: standard benchmark)")
        ->check(CLI::ExistingFile);
    gen_cmd->add_option("--seed", synth_seed, "Override the spec seed");
    gen_cmd->add_option("--out", synth_out, "Output JSONL")->required();

    std::string validate_path;
    auto* val_cmd = app.add_subcommand("validate", "Check a dataset file");
    val_cmd->add_option("--dataset", validate_path, "Dataset JSONL")->required();

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Serve the annotation API");
    serve_cmd->add_option("--dataset", serve.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--config", serve.config, "Experiment config JSON")->check(CLI::ExistingFile);
    serve_cmd->add_option("--strategy", serve.strategy, "Selection strategy");
    serve_cmd->add_option("--assets", serve.assets, "Thumbnail directory")->check(CLI::ExistingDirectory);
    serve_cmd->add_option("--bind", serve.bind, "HOST:PORT");
    serve_cmd->add_option("--timeout", serve.timeout_s, "Assignment timeout in seconds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) return cmd_run(run);
        if (*cmp_cmd) return cmd_compare(cmp);
        if (*gen_cmd) return cmd_gen_synth(spec_path, synth_seed, synth_out);
        if (*val_cmd) return cmd_validate(validate_path);
        if (*serve_cmd) return cmd_serve(serve);
    } catch (const Error& e) {
        std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
