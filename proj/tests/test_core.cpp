#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

using namespace hardmine;
using namespace testing;

namespace {

Dataset grouped(std::size_t identities, std::size_t per_identity) {
    std::vector<Sample> samples;
    for (std::size_t k = 0; k < identities; ++k) {
        for (std::size_t j = 0; j < per_identity; ++j) {
            Sample s;
            s.sample_id = "s" + std::to_string(k * per_identity + j);
            s.truth = "p" + std::to_string(k);
            s.features = {static_cast<double>(k), static_cast<double>(j)};
            samples.push_back(s);
        }
    }
    return Dataset(samples);
}

} // namespace

TEST_CASE("dataset validation") {
    CHECK_ERROR_CODE(Dataset(std::vector<Sample>{}), "empty_dataset");
    std::vector<Sample> s{{"a", {1, 2}, std::nullopt, "p"}, {"b", {1}, std::nullopt, "p"}};
    CHECK_ERROR_CODE(Dataset(s), "dimension_mismatch");
    s[1] = {"a", {3, 4}, 1, "q"};
    CHECK_ERROR_CODE(Dataset(s), "duplicate_sample");
    s[1].sample_id = "b";
    const Dataset ds(s);
    CHECK(ds.size() == 2);
    CHECK(ds.dim() == 2);
    CHECK(*ds.find("b") == 1);
    CHECK_FALSE(ds.find("zz").has_value());
}

TEST_CASE("feature table exposes no truth and resolves ids") {
    const Dataset ds = grouped(2, 3);
    const FeatureTable t = ds.features();
    CHECK(t.size() == 6);
    CHECK(t.dim() == 2);
    CHECK(t.row(t.index_of("s4"))(1) == 1.0);
    CHECK_ERROR_CODE(t.index_of("nope"), "unknown_sample");
    CHECK(ds.truth_oracle().truth_of("s4") == "p1");
    CHECK_ERROR_CODE(ds.truth_oracle().truth_of("nope"), "unknown_sample");
}

TEST_CASE("pool state transitions keep partitions disjoint and exhaustive") {
    PoolState pool({"a", "b", "c", "d"});
    pool.check_invariants(4);
    const IdentityId x = pool.create_identity("a", LabelSource::simulated);
    CHECK(x == "id00000");
    pool.enqueue({"c", "b"});
    CHECK(pool.query() == std::vector<SampleId>{"c", "b"});
    CHECK(pool.in_query("b"));
    pool.assign("b", x, LabelSource::human);
    CHECK(pool.query() == std::vector<SampleId>{"c"});
    CHECK(pool.identities().at(x) == std::vector<SampleId>{"a", "b"});
    CHECK(pool.labeled().at("b").source == LabelSource::human);
    pool.check_invariants(4);
    CHECK(pool.labeled_fraction() == doctest::Approx(0.5));

    CHECK_ERROR_CODE(pool.enqueue({"a"}), "invariant_violation");
    CHECK_ERROR_CODE(pool.assign("a", x, LabelSource::human), "invariant_violation");
    CHECK_ERROR_CODE(pool.assign("d", "id99999", LabelSource::human), "unknown_identity");
    CHECK_ERROR_CODE(pool.check_invariants(5), "invariant_violation");
}

TEST_CASE("pool restore rejects inconsistent state") {
    std::map<SampleId, IdentityLabel> labeled{{"a", {"id00000", LabelSource::simulated}}};
    std::map<IdentityId, std::vector<SampleId>> reg{{"id00000", {"a"}}};
    CHECK_NOTHROW(PoolState::restore(labeled, {"b"}, {"c"}, reg, 1));
    CHECK_ERROR_CODE(PoolState::restore(labeled, {"a"}, {}, reg, 1), "invariant_violation");
    reg["id00001"] = {};
    CHECK_ERROR_CODE(PoolState::restore(labeled, {"b"}, {}, reg, 2), "invariant_violation");
}

TEST_CASE("prob dist validation") {
    CHECK_ERROR_CODE(ProbDist(std::vector<double>{}), "invalid_distribution");
    CHECK_ERROR_CODE(ProbDist({0.5, 0.6}), "invalid_distribution");
    CHECK_ERROR_CODE(ProbDist({1.5, -0.5}), "invalid_distribution");
    const ProbDist p({0.2, 0.5, 0.3});
    CHECK(p.argmax() == 1);
    CHECK(p.size() == 3);
}

TEST_CASE("config validation names the field") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    c.batch_fraction = 0.0;
    CHECK_ERROR_CODE(c.validate(), "invalid_config");
    c = {};
    c.annotator_error_rate = 1.5;
    CHECK_ERROR_CODE(c.validate(), "invalid_config");
    c = {};
    c.idrm_batch_size = 0;
    CHECK_ERROR_CODE(c.validate(), "invalid_config");
    c = {};
    c.hard_pool_multiplier = 0.5;
    CHECK_ERROR_CODE(c.validate(), "invalid_config");
    c = {};
    c.target_metric = TargetMetric{"rank3", 0.5};
    CHECK_ERROR_CODE(c.validate(), "invalid_config");
}

TEST_CASE("partition with fraction 0 seeds two identities with two samples each") {
    const Dataset ds = grouped(10, 10);
    RngStream rng(1);
    const PoolState pool = partition_dataset(ds, 0.0, rng);
    pool.check_invariants(100);
    CHECK(pool.identities().size() == 2);
    for (const auto& [id, members] : pool.identities()) {
        CHECK(members.size() == 2);
    }
    CHECK(pool.labeled().size() == 4);
}

TEST_CASE("partition is deterministic under a fixed seed") {
    const Dataset ds = grouped(10, 10);
    RngStream a(7), b(7);
    CHECK(partition_dataset(ds, 0.1, a) == partition_dataset(ds, 0.1, b));
}

TEST_CASE("partition size matches the recount rule") {
    // 200 samples, 5%: 10 picks, plus at most one top-up per seeded identity.
    const Dataset ds = grouped(20, 10);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngStream rng(seed);
        const PoolState pool = partition_dataset(ds, 0.05, rng);
        pool.check_invariants(200);
        std::size_t recount = 0;
        for (const auto& [id, members] : pool.identities()) {
            CHECK(members.size() >= 2);
            recount += members.size();
        }
        CHECK(recount == pool.labeled().size());
        CHECK(pool.labeled().size() >= 10);
        CHECK(pool.labeled().size() <= 10 + pool.identities().size());
        // Labels agree with truth: each registered identity is one person.
        const TruthOracle truth = ds.truth_oracle();
        for (const auto& [id, members] : pool.identities()) {
            for (const SampleId& m : members) {
                CHECK(truth.truth_of(m) == truth.truth_of(members.front()));
            }
        }
    }
}

TEST_CASE("partition errors") {
    RngStream rng(0);
    CHECK_ERROR_CODE(partition_dataset(Dataset(), 0.1, rng), "empty_dataset");
    CHECK_ERROR_CODE(partition_dataset(grouped(2, 2), 1.0, rng), "invalid_argument");
}

TEST_CASE("label source names round-trip") {
    for (LabelSource s : {LabelSource::simulated, LabelSource::human, LabelSource::ground_truth_bootstrap}) {
        CHECK(label_source_from_string(to_string(s)) == s);
    }
    CHECK(to_string(LabelSource::ground_truth_bootstrap) == "ground-truth-bootstrap");
    CHECK_ERROR_CODE(label_source_from_string("oracle"), "parse_error");
}
