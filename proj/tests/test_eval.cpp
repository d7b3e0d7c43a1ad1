#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "hardmine/eval.hpp"

using namespace hardmine;
using namespace testing;

namespace {

RetrievalResult result(const std::string& q, std::vector<std::uint8_t> mask) {
    RetrievalResult r;
    r.query_id = q;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        r.ranked.push_back(q + "g" + std::to_string(i));
    }
    r.relevant = std::move(mask);
    return r;
}

// Precision at every relevant position, counted from scratch each time.
double exhaustive_ap(const std::vector<std::uint8_t>& mask) {
    double sum = 0.0;
    std::size_t relevant = 0;
    for (std::size_t r = 0; r < mask.size(); ++r) {
        if (!mask[r]) {
            continue;
        }
        ++relevant;
        std::size_t hits = 0;
        for (std::size_t i = 0; i <= r; ++i) {
            hits += mask[i];
        }
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    return relevant == 0 ? 0.0 : sum / static_cast<double>(relevant);
}

ModelState identity_model(std::size_t d) {
    ModelState m;
    m.embed_weights = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    m.id_weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), 1);
    m.id_bias = Eigen::VectorXd::Zero(1);
    m.verif_weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    m.classes = {"c"};
    return m;
}

} // namespace

TEST_CASE("rank-k examples") {
    std::vector<RetrievalResult> top{result("a", {1, 0, 0}), result("b", {1, 1, 0})};
    CHECK(rank_k_accuracy(top, 1) == 1.0);
    std::vector<RetrievalResult> mixed{result("a", {0, 0, 1}), result("b", {0, 1, 0}), result("c", {1, 0, 0})};
    // Hand count: rank-1 hits c; rank-2 hits b and c; rank-3 hits all.
    CHECK(rank_k_accuracy(mixed, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(rank_k_accuracy(mixed, 2) == doctest::Approx(2.0 / 3.0));
    CHECK(rank_k_accuracy(mixed, 3) == 1.0);
    CHECK(rank_k_accuracy(mixed, 100) == 1.0);
    CHECK_ERROR_CODE(rank_k_accuracy(mixed, 0), "invalid_argument");
}

TEST_CASE("queries without relevant items are excluded and counted") {
    std::vector<RetrievalResult> r{result("a", {1, 0}), result("b", {0, 0})};
    std::size_t excluded = 0;
    CHECK(rank_k_accuracy(r, 1, &excluded) == 1.0);
    CHECK(excluded == 1);
    CHECK(mean_average_precision(r, &excluded) == 1.0);
    CHECK(excluded == 1);
}

TEST_CASE("average precision examples") {
    CHECK(average_precision(std::vector<std::uint8_t>{1, 1, 0, 0}) == 1.0);
    CHECK(average_precision(std::vector<std::uint8_t>{0, 1, 0}) == 0.5);
    CHECK(average_precision(std::vector<std::uint8_t>{0, 0}) == 0.0);
    std::vector<RetrievalResult> perfect{result("a", {1, 1, 0}), result("b", {1, 0, 0})};
    CHECK(mean_average_precision(perfect) == 1.0);
}

TEST_CASE("metrics match exhaustive enumeration on random small galleries") {
    RngStream rng(1);
    for (int t = 0; t < 300; ++t) {
        std::vector<RetrievalResult> results;
        std::vector<std::vector<std::uint8_t>> masks;
        const std::size_t queries = 1 + rng.uniform_index(5);
        for (std::size_t q = 0; q < queries; ++q) {
            const std::size_t g = 1 + rng.uniform_index(10);
            std::vector<std::uint8_t> mask(g);
            for (auto& m : mask) {
                m = rng.bernoulli(0.35) ? 1 : 0;
            }
            mask[rng.uniform_index(g)] = 1;
            masks.push_back(mask);
            results.push_back(result("q" + std::to_string(q), mask));
        }
        double ap = 0.0;
        for (const auto& m : masks) {
            ap += exhaustive_ap(m);
        }
        CHECK(std::abs(mean_average_precision(results) - ap / static_cast<double>(queries)) < 1e-12);
        double prev = 0.0;
        for (std::size_t k = 1; k <= 11; ++k) {
            double hits = 0.0;
            for (const auto& m : masks) {
                bool hit = false;
                for (std::size_t i = 0; i < std::min(k, m.size()); ++i) {
                    hit = hit || m[i];
                }
                hits += hit ? 1.0 : 0.0;
            }
            const double acc = rank_k_accuracy(results, k);
            CHECK(std::abs(acc - hits / static_cast<double>(queries)) < 1e-12);
            CHECK(acc >= prev);
            prev = acc;
        }
    }
}

TEST_CASE("build_retrieval ranks by distance and drops same-camera matches") {
    // 1-d features so distances are obvious.
    std::vector<Sample> s{{"q", {0.0}, 0, "p"},  {"a", {1.0}, 1, "p"}, {"b", {0.5}, 0, "p"},
                          {"c", {0.25}, 1, "r"}, {"d", {3.0}, 2, "r"}, {"e", {-2.0}, 0, "r"}};
    const Dataset ds(s);
    const auto results = build_retrieval(identity_model(1), ds.features(), ds.truth_oracle());
    REQUIRE(results.size() == 6);
    const RetrievalResult& rq = results[0];
    CHECK(rq.query_id == "q");
    // b is same identity, same camera: dropped.
    CHECK(rq.ranked == std::vector<SampleId>{"c", "a", "e", "d"});
    CHECK(rq.relevant == std::vector<std::uint8_t>{0, 1, 0, 0});
}

TEST_CASE("build_retrieval without cameras keeps every other sample") {
    std::vector<Sample> s{{"a", {0.0}, std::nullopt, "p"}, {"b", {1.0}, std::nullopt, "p"},
                          {"c", {1.0}, std::nullopt, "q"}, {"d", {-1.0}, std::nullopt, "q"}};
    const Dataset ds(s);
    const auto results = build_retrieval(identity_model(1), ds.features(), ds.truth_oracle());
    // Ties at distance 1 from a: b, c, d broken by id.
    CHECK(results[0].ranked == std::vector<SampleId>{"b", "c", "d"});
    CHECK(results[0].relevant == std::vector<std::uint8_t>{1, 0, 0});
}

TEST_CASE("evaluate_model matches metrics over build_retrieval") {
    const Dataset ds = small_synthetic(6, 8, 5, 3, 1.5, 2.0, 3);
    RngStream rng(2);
    const ModelState model = random_model(5, 3, {"x", "y"}, rng);
    const auto results = build_retrieval(model, ds.features(), ds.truth_oracle());
    const Metrics m = evaluate_model(model, ds.features(), ds.truth_oracle());
    std::size_t excluded = 0;
    CHECK(m.rank1 == doctest::Approx(rank_k_accuracy(results, 1, &excluded)).epsilon(1e-15));
    CHECK(m.rank5 == doctest::Approx(rank_k_accuracy(results, 5)).epsilon(1e-15));
    CHECK(m.rank10 == doctest::Approx(rank_k_accuracy(results, 10)).epsilon(1e-15));
    CHECK(m.map == doctest::Approx(mean_average_precision(results)).epsilon(1e-15));
    CHECK(m.excluded_queries == excluded);
    CHECK(m.queries + m.excluded_queries == ds.size());
    CHECK(m.rank1 <= m.rank5);
    CHECK(m.rank5 <= m.rank10);
    for (double v : {m.rank1, m.rank5, m.rank10, m.map}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("separated clusters give perfect rank-1") {
    const Dataset ds = small_synthetic(2, 10, 4, 4, 0.05, 10.0, 0);
    const Metrics m = evaluate_model(identity_model(4), ds.features(), ds.truth_oracle());
    CHECK(m.rank1 == 1.0);
    CHECK(m.map == 1.0);
}

TEST_CASE("evaluation errors") {
    CHECK_ERROR_CODE(evaluate_model(identity_model(2), FeatureTable(), TruthOracle()), "empty_split");
    RetrievalResult bad = result("a", {1, 0});
    bad.relevant.push_back(0);
    CHECK_ERROR_CODE(rank_k_accuracy(std::vector<RetrievalResult>{bad}, 1), "dimension_mismatch");
    CHECK_ERROR_CODE(metric_value(Metrics{}, "rank2"), "invalid_argument");
    Metrics m;
    m.map = 0.25;
    CHECK(metric_value(m, "map") == 0.25);
}
