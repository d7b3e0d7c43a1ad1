#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "support.hpp"
#include "hardmine/annotation.hpp"

using namespace hardmine;
using namespace testing;

namespace {

struct Fixture {
    Dataset ds;
    PoolState pool;
    ModelState model;
    ExperimentConfig config;
};

// `identities` clusters; the first `registered` of them get one labeled
// member each (two for the first two so training sees positives).
Fixture make_fixture(std::size_t identities, std::size_t registered, std::uint64_t seed) {
    Fixture f;
    f.ds = small_synthetic(identities, 4, 6, seed, 0.6, 3.0);
    std::vector<SampleId> ids;
    for (const Sample& s : f.ds.samples()) {
        ids.push_back(s.sample_id);
    }
    f.pool = PoolState(ids);
    std::map<std::string, IdentityId> reg;
    std::map<std::string, std::size_t> count, order;
    for (const Sample& s : f.ds.samples()) {
        auto it = reg.find(s.truth);
        if (it == reg.end()) {
            if (reg.size() < registered) {
                order[s.truth] = reg.size();
                reg.emplace(s.truth, f.pool.create_identity(s.sample_id, LabelSource::ground_truth_bootstrap));
                count[s.truth] = 1;
            }
        } else if (count[s.truth] < (order[s.truth] < 2 ? 2u : 1u)) {
            f.pool.assign(s.sample_id, it->second, LabelSource::ground_truth_bootstrap);
            ++count[s.truth];
        }
    }
    ModelConfig mc;
    mc.embedding_dim = 4;
    mc.epochs = 30;
    RngStream rng(seed);
    f.model = train(f.pool, f.ds.features(), mc, rng).model;
    return f;
}

std::vector<SampleId> unlabeled(const PoolState& pool) {
    return {pool.unlabeled().begin(), pool.unlabeled().end()};
}

// Registered identities ordered by reference probability, ties by id.
std::vector<std::pair<IdentityId, double>> ref_ranking(const Fixture& f, const PoolState& pool, const SampleId& id) {
    const auto p = ref_predict(f.model, features_of(f.ds, id));
    std::vector<std::pair<IdentityId, double>> out;
    for (const auto& [identity, members] : pool.identities()) {
        double prob = 0.0;
        for (std::size_t k = 0; k < f.model.classes.size(); ++k) {
            if (f.model.classes[k] == identity) {
                prob = p[k];
            }
        }
        out.emplace_back(identity, prob);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return out;
}

Recommendation manual(const SampleId& id, std::vector<IdentityId> identities) {
    Recommendation r;
    r.sample_id = id;
    for (auto& i : identities) {
        r.candidates.push_back(Candidate{i, {}, 0.0});
    }
    return r;
}

} // namespace

TEST_CASE("rank_identities matches the reference ranking") {
    const Fixture f = make_fixture(12, 12, 1);
    for (const SampleId& id : unlabeled(f.pool)) {
        const auto got = rank_identities(f.model, f.pool, f.ds.features(), id);
        const auto want = ref_ranking(f, f.pool, id);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].first == want[i].first);
            CHECK(got[i].second == doctest::Approx(want[i].second).epsilon(1e-12));
        }
    }
}

TEST_CASE("recommendation rounds partition the ranking") {
    Fixture f = make_fixture(23, 23, 2);
    f.config.idrm_batch_size = 10;
    const auto ids = unlabeled(f.pool);
    f.pool.enqueue({ids[0], ids[1]});
    for (const SampleId& id : {ids[0], ids[1]}) {
        const auto full = rank_identities(f.model, f.pool, f.ds.features(), id);
        std::vector<IdentityId> joined;
        double last = 2.0;
        for (std::size_t round = 1;; ++round) {
            const Recommendation rec = recommend_candidates(f.model, f.pool, f.ds.features(), id, round, f.config);
            CHECK(rec.total_rounds == 3);
            CHECK(rec.identities_registered == 23);
            if (rec.exhausted()) {
                CHECK(round == 4);
                break;
            }
            CHECK(rec.candidates.size() <= 10);
            CHECK(rec.offset(10) == (round - 1) * 10);
            for (const Candidate& c : rec.candidates) {
                joined.push_back(c.identity_id);
                CHECK(c.probability <= last);
                last = c.probability;
            }
        }
        REQUIRE(joined.size() == full.size());
        for (std::size_t i = 0; i < full.size(); ++i) {
            CHECK(joined[i] == full[i].first);
        }
    }
}

TEST_CASE("fewer identities than a round fit in one round") {
    Fixture f = make_fixture(6, 6, 3);
    const auto ids = unlabeled(f.pool);
    f.pool.enqueue({ids[0]});
    const Recommendation rec = recommend_candidates(f.model, f.pool, f.ds.features(), ids[0], 1, f.config);
    CHECK(rec.total_rounds == 1);
    CHECK(rec.candidates.size() == 6);
    CHECK(recommend_candidates(f.model, f.pool, f.ds.features(), ids[0], 2, f.config).exhausted());
}

TEST_CASE("a confidently predicted true identity appears in round 1") {
    Fixture f = make_fixture(15, 15, 4);
    const TruthOracle truth = f.ds.truth_oracle();
    const SimulatedAnnotator judge(truth, 0.0);
    std::size_t checked = 0;
    for (const SampleId& id : unlabeled(f.pool)) {
        const auto ranked = ref_ranking(f, f.pool, id);
        if (judge.identity_truth(f.pool, ranked.front().first) != truth.truth_of(id)) {
            continue;
        }
        PoolState pool = f.pool;
        pool.enqueue({id});
        const Recommendation rec = recommend_candidates(f.model, pool, f.ds.features(), id, 1, f.config);
        bool found = false;
        for (const Candidate& c : rec.candidates) {
            found = found || judge.identity_truth(pool, c.identity_id) == truth.truth_of(id);
        }
        CHECK(found);
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("representatives are ordered by verification score") {
    Fixture f = make_fixture(5, 5, 5);
    // Give one identity many members.
    const auto ids = unlabeled(f.pool);
    const IdentityId big = f.pool.identities().begin()->first;
    for (std::size_t i = 0; i < 5; ++i) {
        f.pool.assign(ids[i], big, LabelSource::human);
    }
    const SampleId q = unlabeled(f.pool).front();
    f.pool.enqueue({q});
    f.config.representatives_per_candidate = 3;
    const Recommendation rec = recommend_candidates(f.model, f.pool, f.ds.features(), q, 1, f.config);
    for (const Candidate& c : rec.candidates) {
        const auto& members = f.pool.identities().at(c.identity_id);
        CHECK(c.representatives.size() == std::min<std::size_t>(3, members.size()));
        std::vector<std::pair<double, SampleId>> want;
        for (const SampleId& m : members) {
            want.emplace_back(-ref_verify(f.model, features_of(f.ds, m), features_of(f.ds, q)), m);
        }
        std::sort(want.begin(), want.end());
        for (std::size_t i = 0; i < c.representatives.size(); ++i) {
            CHECK(c.representatives[i] == want[i].second);
        }
    }
}

TEST_CASE("recommendation errors") {
    Fixture f = make_fixture(4, 4, 6);
    const auto ids = unlabeled(f.pool);
    CHECK_ERROR_CODE(recommend_candidates(f.model, f.pool, f.ds.features(), ids[0], 1, f.config), "not_in_query");
    CHECK_ERROR_CODE(recommend_candidates(f.model, f.pool, f.ds.features(), "nope", 1, f.config), "unknown_sample");
    f.pool.enqueue({ids[0]});
    CHECK_ERROR_CODE(recommend_candidates(f.model, f.pool, f.ds.features(), ids[0], 0, f.config), "invalid_argument");
}

TEST_CASE("simulate_annotation examples") {
    const Fixture f = make_fixture(6, 6, 7);
    const TruthOracle truth = f.ds.truth_oracle();
    const SimulatedAnnotator annotator(truth, 0.0);
    const SampleId q = unlabeled(f.pool).front();
    IdentityId true_identity;
    std::vector<IdentityId> others;
    for (const auto& [identity, members] : f.pool.identities()) {
        if (truth.truth_of(members.front()) == truth.truth_of(q)) {
            true_identity = identity;
        } else {
            others.push_back(identity);
        }
    }
    REQUIRE(!true_identity.empty());
    RngStream rng(1);

    SUBCASE("true candidate at position 3") {
        const auto out = simulate_annotation(manual(q, {others[0], others[1], true_identity, others[2]}), f.pool,
                                             annotator, rng);
        CHECK(out.kind == OutcomeKind::matched);
        CHECK(out.identity_id == true_identity);
        CHECK(out.position == 3);
        CHECK(out.comparisons == 3);
    }
    SUBCASE("true identity absent from the round") {
        const auto out = simulate_annotation(manual(q, {others[0], others[1]}), f.pool, annotator, rng);
        CHECK(out.kind == OutcomeKind::rejected_round);
        CHECK(out.comparisons == 2);
    }
    SUBCASE("exhausted recommendation") {
        const auto out = simulate_annotation(manual(q, {}), f.pool, annotator, rng);
        CHECK(out.kind == OutcomeKind::new_identity);
        CHECK(out.comparisons == 0);
    }
    SUBCASE("error rate 1 rejects the true candidate") {
        const SimulatedAnnotator wrong(truth, 1.0);
        const auto out = simulate_annotation(manual(q, {true_identity, others[0]}), f.pool, wrong, rng);
        CHECK(out.kind == OutcomeKind::rejected_round);
        CHECK(out.comparisons == 2);
    }
}

TEST_CASE("naive annotation cost") {
    CHECK(naive_annotation_cost(20, {}) == 0);
    std::vector<LabelDecision> five(5);
    for (auto& d : five) {
        d.identity_id = "id00000";
    }
    CHECK(naive_annotation_cost(20, five) == 100);
    // New identities raise the count for later samples.
    std::vector<LabelDecision> mixed(4);
    mixed[0].identity_id = "a";
    mixed[2].identity_id = "b";
    CHECK(naive_annotation_cost(3, mixed) == 3 + 3 + 4 + 4);
}

TEST_CASE("annotate_batch replays the reference ranking") {
    Fixture f = make_fixture(14, 9, 8);
    const TruthOracle truth = f.ds.truth_oracle();
    const SimulatedAnnotator annotator(truth, 0.0);
    f.config.idrm_batch_size = 4;
    const auto all = unlabeled(f.pool);
    std::vector<SampleId> batch;
    for (std::size_t i = 0; i < all.size(); i += 2) {
        batch.push_back(all[i]);
    }
    f.pool.enqueue(batch);

    // Oracle: interleaved replay with the reference ranking.
    PoolState shadow = f.pool;
    std::uint64_t want_comparisons = 0, want_naive = 0, want_new = 0;
    std::map<std::string, IdentityId> by_truth;
    for (const auto& [identity, members] : shadow.identities()) {
        by_truth[truth.truth_of(members.front())] = identity;
    }
    for (const SampleId& id : batch) {
        const auto ranked = ref_ranking(f, shadow, id);
        want_naive += ranked.size();
        auto it = by_truth.find(truth.truth_of(id));
        if (it == by_truth.end()) {
            want_comparisons += ranked.size();
            ++want_new;
            by_truth.emplace(truth.truth_of(id), shadow.create_identity(id, LabelSource::simulated));
        } else {
            std::size_t pos = 0;
            while (ranked[pos].first != it->second) {
                ++pos;
            }
            want_comparisons += pos + 1;
            shadow.assign(id, it->second, LabelSource::simulated);
        }
    }

    CostLedger ledger;
    RngStream rng(3);
    const auto decisions =
        annotate_batch(f.model, f.pool, f.ds.features(), batch, annotator, f.config, ledger, rng);
    CHECK(decisions.size() == batch.size());
    CHECK(f.pool.query().empty());
    CHECK(ledger.comparisons == want_comparisons);
    CHECK(ledger.naive_comparisons_baseline == want_naive);
    CHECK(ledger.new_identities_created == want_new);
    CHECK(ledger.labels_assigned == batch.size());
    CHECK(ledger.wrong_labels == 0);
    CHECK(ledger.comparisons <= ledger.naive_comparisons_baseline);
    CHECK(f.pool.labeled() == shadow.labeled());
    std::uint64_t sum = 0;
    for (const LabelDecision& d : decisions) {
        sum += d.comparisons;
        CHECK(d.source == LabelSource::simulated);
        if (d.identity_id) {
            CHECK(d.position >= 1);
            CHECK(d.position <= f.config.idrm_batch_size);
            CHECK(d.comparisons == (d.round - 1) * f.config.idrm_batch_size + d.position);
        } else {
            CHECK(d.position == 0);
        }
    }
    CHECK(sum == ledger.comparisons);
    f.pool.check_invariants(f.ds.size());
}

TEST_CASE("unregistered identity costs every registered comparison") {
    Fixture f = make_fixture(8, 5, 9);
    const TruthOracle truth = f.ds.truth_oracle();
    const SimulatedAnnotator annotator(truth, 0.0);
    f.config.idrm_batch_size = 2;
    SampleId fresh;
    for (const SampleId& id : unlabeled(f.pool)) {
        if (!annotator.truth_registered(f.pool, truth.truth_of(id))) {
            fresh = id;
            break;
        }
    }
    REQUIRE(!fresh.empty());
    f.pool.enqueue({fresh});
    CostLedger ledger;
    RngStream rng(4);
    const std::vector<SampleId> batch{fresh};
    const auto d = annotate_batch(f.model, f.pool, f.ds.features(), batch, annotator, f.config, ledger, rng);
    CHECK(!d[0].identity_id);
    CHECK(d[0].comparisons == 5);
    CHECK(d[0].round == 4);
    CHECK(f.pool.identities().size() == 6);
}

TEST_CASE("error rate 1 makes every sample a new identity") {
    Fixture f = make_fixture(10, 6, 10);
    const TruthOracle truth = f.ds.truth_oracle();
    const SimulatedAnnotator annotator(truth, 1.0);
    auto batch = unlabeled(f.pool);
    batch.resize(12);
    f.pool.enqueue(batch);
    // Each sample becomes its own identity, so a truth is registered after
    // its first appearance either way.
    std::uint64_t want_wrong = 0;
    std::set<std::string> registered;
    for (const auto& [identity, members] : f.pool.identities()) {
        registered.insert(truth.truth_of(members.front()));
    }
    for (const SampleId& id : batch) {
        want_wrong += registered.contains(truth.truth_of(id)) ? 1 : 0;
        registered.insert(truth.truth_of(id));
    }
    const std::size_t before = f.pool.identities().size();
    CostLedger ledger;
    RngStream rng(5);
    annotate_batch(f.model, f.pool, f.ds.features(), batch, annotator, f.config, ledger, rng);
    CHECK(ledger.new_identities_created == batch.size());
    CHECK(f.pool.identities().size() == before + batch.size());
    CHECK(ledger.wrong_labels == want_wrong);
    CHECK(want_wrong > 0);
}

TEST_CASE("annotate_batch errors and no-ops") {
    Fixture f = make_fixture(4, 4, 11);
    const SimulatedAnnotator annotator(f.ds.truth_oracle(), 0.0);
    CostLedger ledger;
    RngStream rng(6);
    const PoolState before = f.pool;
    CHECK(annotate_batch(f.model, f.pool, f.ds.features(), {}, annotator, f.config, ledger, rng).empty());
    CHECK(f.pool == before);
    CHECK(ledger == CostLedger{});
    const std::vector<SampleId> stray{unlabeled(f.pool).front()};
    CHECK_ERROR_CODE(annotate_batch(f.model, f.pool, f.ds.features(), stray, annotator, f.config, ledger, rng),
                     "not_in_query");
    CHECK_ERROR_CODE(SimulatedAnnotator(f.ds.truth_oracle(), 1.5), "invalid_argument");
}

TEST_CASE("apply_label charges the ledger and judges labels") {
    Fixture f = make_fixture(5, 3, 12);
    const TruthOracle truth = f.ds.truth_oracle();
    const SimulatedAnnotator judge(truth, 0.0);
    const auto ids = unlabeled(f.pool);
    f.pool.enqueue({ids[0], ids[1]});
    IdentityId wrong_identity;
    for (const auto& [identity, members] : f.pool.identities()) {
        if (truth.truth_of(members.front()) != truth.truth_of(ids[0])) {
            wrong_identity = identity;
        }
    }
    CostLedger ledger;
    LabelDecision d{ids[0], wrong_identity, 1, 2, 2, LabelSource::human};
    CHECK(judge.is_wrong(f.pool, d));
    CHECK(apply_label(f.pool, d, ledger, &judge) == wrong_identity);
    CHECK(ledger == CostLedger{2, 1, 0, 1, 3});
    LabelDecision n{ids[1], std::nullopt, 1, 0, 3, LabelSource::human};
    apply_label(f.pool, n, ledger);
    CHECK(ledger == CostLedger{5, 2, 1, 1, 6});
    CHECK(f.pool.labeled().at(ids[1]).source == LabelSource::human);
    CHECK((ledger - CostLedger{2, 1, 0, 1, 3}) == CostLedger{3, 1, 1, 0, 3});
}
