// Python bindings. Structured values cross the boundary as JSON text and
// are decoded by the hardmine package.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hardmine/annotation.hpp"
#include "hardmine/eval.hpp"
#include "hardmine/ingest.hpp"
#include "hardmine/json_io.hpp"
#include "hardmine/loop.hpp"
#include "hardmine/model.hpp"
#include "hardmine/selection.hpp"

namespace py = pybind11;
using namespace hardmine;

namespace {

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c = json::parse(text).get<ExperimentConfig>();
    c.validate();
    return c;
}

std::vector<RetrievalResult> results_from(const std::vector<std::vector<bool>>& masks) {
    std::vector<RetrievalResult> out;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        RetrievalResult r;
        r.query_id = std::to_string(i);
        for (std::size_t j = 0; j < masks[i].size(); ++j) {
            r.ranked.push_back(std::to_string(j));
            r.relevant.push_back(masks[i][j] ? 1 : 0);
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_hardmine, m) {
    m.doc() = "Active hard-sample mining core";

    static py::exception<Error> error(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetObject(error.ptr(), py::make_tuple(e.code(), e.what()).ptr());
        }
    });

    m.def("softmax", [](const std::vector<double>& logits) {
        const ProbDist p = softmax(logits);
        return std::vector<double>(p.values().begin(), p.values().end());
    });
    m.def("softmax_ce_gradient", [](const std::vector<double>& logits, std::size_t target) {
        return softmax_ce_gradient(logits, target);
    });
    m.def("jeffreys_divergence", [](const std::vector<double>& p, const std::vector<double>& q) {
        return jeffreys_divergence(ProbDist(p), ProbDist(q));
    });
    m.def("entropy_score", [](const std::vector<double>& p) { return entropy_score(ProbDist(p)); });
    m.def("least_confidence_score", [](const std::vector<double>& p) { return least_confidence_score(ProbDist(p)); });
    m.def("margin_score", [](const std::vector<double>& p) { return margin_score(ProbDist(p)); });

    m.def("average_precision", [](const std::vector<bool>& mask) {
        return average_precision(results_from({mask}).front().relevant);
    });
    m.def("rank_k_accuracy", [](const std::vector<std::vector<bool>>& masks, std::size_t k) {
        return rank_k_accuracy(results_from(masks), k);
    });
    m.def("mean_average_precision",
          [](const std::vector<std::vector<bool>>& masks) { return mean_average_precision(results_from(masks)); });
    m.def("naive_annotation_cost", [](std::size_t before, const std::vector<bool>& creates_identity) {
        std::vector<LabelDecision> d(creates_identity.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!creates_identity[i]) d[i].identity_id = "existing";
        }
        return naive_annotation_cost(before, d);
    });

    m.def("generate_synthetic", [](const std::string& spec_json, const std::string& out_path) {
        const Dataset ds = generate_synthetic(json::parse(spec_json).get<SyntheticSpec>());
        write_dataset(ds, std::filesystem::path(out_path));
        return ds.size();
    });
    m.def("validate_dataset", [](const std::string& path) {
        const ValidationReport r = validate_dataset(path);
        json issues = json::array();
        for (const auto& i : r.issues) {
            issues.push_back({{"line", i.line}, {"message", i.message}});
        }
        return json{{"samples", r.samples}, {"dimension", r.dimension}, {"issues", issues}}.dump();
    });
    m.def(
        "run_experiment",
        [](const std::string& dataset_path, const std::string& config_json, const std::string& strategy) {
            const Dataset ds = ingest_dataset(dataset_path);
            const ExperimentConfig cfg = parse_config(config_json);
            py::gil_scoped_release release;
            return report_to_json(run_experiment(ds, cfg, strategy_from_string(strategy))).dump();
        });
    m.def("compare_strategies", [](const std::string& dataset_path, const std::string& config_json,
                                   const std::vector<std::string>& strategies, const std::vector<std::uint64_t>& seeds) {
        const Dataset ds = ingest_dataset(dataset_path);
        const ExperimentConfig cfg = parse_config(config_json);
        std::vector<Strategy> s;
        for (const auto& name : strategies) {
            s.push_back(strategy_from_string(name));
        }
        py::gil_scoped_release release;
        return comparison_to_json(compare_strategies(ds, cfg, s, seeds)).dump();
    });
    m.def("full_data_reference", [](const std::string& dataset_path, const std::string& config_json) {
        const Dataset ds = ingest_dataset(dataset_path);
        return json(full_data_reference(ds, parse_config(config_json))).dump();
    });
    m.def("default_config", [] { return json(ExperimentConfig{}).dump(); });
    m.def("standard_spec", [](std::uint64_t seed) { return json(SyntheticSpec::standard(seed)).dump(); });
}
