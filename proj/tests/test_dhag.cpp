#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <random>

#include "onsep/dhag.hpp"
#include "onsep/errors.hpp"
#include "onsep/log.hpp"
#include "test_util.hpp"

using namespace onsep;

namespace {

const EventChain kHistory{{0, 5, 9, 24}, {0, 3, 9, 48}, {0, 5, 9, 72}, {0, 2, 7, 72}, {0, 4, 9, 96}};

ScoreDistribution dist(std::vector<double> p) { return ScoreDistribution{std::move(p)}; }

ScoreDistribution random_dist(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> p(n);
    double sum = 0;
    for (auto& v : p) sum += (v = unit(rng) + 1e-6);
    for (auto& v : p) v /= sum;
    return dist(p);
}

// Fails on the listed call numbers (0-based), stub behaviour otherwise.
struct FlakyBackend final : ScorerBackend {
    explicit FlakyBackend(std::vector<int> failing) : failing_(std::move(failing)) {}
    std::vector<double> logits(const PromptText& p) const override {
        int n = calls_++;
        if (std::find(failing_.begin(), failing_.end(), n) != failing_.end()) throw BackendError("flaky", true);
        return StubBackend{}.logits(p);
    }
    std::string name() const override { return "flaky"; }

private:
    std::vector<int> failing_;
    mutable std::atomic<int> calls_{0};
};

// Written from the prompt format alone: last L events, labels by first
// appearance, count plus recency bonus, softmax, stable descending sort.
std::vector<RankedEntity> icl_reference(const std::vector<Quadruple>& facts, const Query& q, std::size_t L) {
    EventChain h;
    for (const auto& f : facts) {
        if (f.subject == q.subject && f.t < q.t) h.push_back(f);
    }
    std::stable_sort(h.begin(), h.end(), [](const Quadruple& a, const Quadruple& b) { return a.t < b.t; });
    if (h.size() > L) h.erase(h.begin(), h.end() - static_cast<std::ptrdiff_t>(L));
    if (h.empty()) return {};

    std::vector<EntityId> order;
    std::map<EntityId, double> logit;
    for (const auto& e : h) {
        if (!logit.count(e.object)) order.push_back(e.object);
        logit[e.object] += 1.0;
    }
    logit[h.back().object] += 0.5;

    double top = -INFINITY;
    for (auto& [_, v] : logit) top = std::max(top, v);
    double sum = 0;
    std::vector<double> p;
    for (auto e : order) {
        p.push_back(std::exp(logit[e] - top));
        sum += p.back();
    }
    std::vector<RankedEntity> out;
    for (std::size_t i = 0; i < order.size(); ++i) out.push_back({order[i], p[i] / sum});
    std::stable_sort(out.begin(), out.end(),
                     [](const RankedEntity& a, const RankedEntity& b) { return a.probability > b.probability; });
    return out;
}

}  // namespace

TEST_CASE("retrieve_short") {
    TkgStore store;
    store.insert(kHistory);
    CHECK(retrieve_short(store, {0, 8, 120}, 3) == EventChain{kHistory[2], kHistory[3], kHistory[4]});
    CHECK(retrieve_short(store, {0, 8, 120}, 50) == kHistory);
    CHECK(retrieve_short(store, {3, 8, 120}, 3).empty());
}

TEST_CASE("retrieve_long") {
    TkgStore store;
    store.insert(kHistory);
    CausalRuleBase rb;
    rb.put({8, 5, 0.76, 0});
    rb.put({8, 3, 0.40, 0});
    CHECK(retrieve_long(store, rb, {0, 8, 120}, 3) == EventChain{{0, 5, 9, 24}, {0, 3, 9, 48}, {0, 5, 9, 72}});
    CHECK(retrieve_long(store, rb, {0, 1, 120}, 3).empty());

    CausalRuleBase other;
    other.put({8, 6, 0.9, 0});
    CHECK(retrieve_long(store, other, {0, 8, 120}, 3).empty());
}

TEST_CASE("property: long history is a subsequence of the full history") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 300; ++trial) {
        TkgStore store;
        store.insert(testing::random_facts(rng, rng() % 50, 3, 5, 10));
        CausalRuleBase rb;
        for (int i = 0, n = static_cast<int>(rng() % 6); i < n; ++i) {
            rb.put({static_cast<RelationId>(rng() % 5), static_cast<RelationId>(rng() % 5), 0.5, 0});
        }
        const Query q{static_cast<EntityId>(rng() % 3), static_cast<RelationId>(rng() % 5),
                      static_cast<Timestamp>(rng() % 11) * 24};
        auto full = store.history_for_subject(q.subject, q.t);
        auto lng = retrieve_long(store, rb, q, 1 + rng() % 30);
        auto it = full.begin();
        for (const auto& e : lng) {
            it = std::find(it, full.end(), e);
            REQUIRE(it != full.end());
            ++it;
            CHECK(rb.find(q.relation, e.relation) != nullptr);
        }
    }
}

TEST_CASE("ensemble") {
    auto d = ensemble(dist({0.7, 0.3}), dist({0.2, 0.8}), 0.1);
    CHECK(std::abs(d[0] - 0.65) < 1e-12);
    CHECK(std::abs(d[1] - 0.35) < 1e-12);
    CHECK(ensemble(dist({0.7, 0.3}), dist({0.2, 0.8}), 0.0).probabilities == std::vector<double>{0.7, 0.3});
    CHECK(ensemble(dist({0.7, 0.3}), dist({0.2, 0.8}), 1.0).probabilities == std::vector<double>{0.2, 0.8});
    CHECK_THROWS_AS(ensemble(dist({1.0}), dist({0.5, 0.5}), 0.1), ArgumentError);
    CHECK_THROWS_AS(ensemble(dist({1.0}), dist({1.0}), 1.5), ArgumentError);
}

TEST_CASE("property: ensemble is normalized, monotone, and exact at the endpoints") {
    std::mt19937_64 rng(59);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 10;
        auto d1 = random_dist(rng, n);
        auto d2 = random_dist(rng, n);
        const double lambda = unit(rng);
        auto d = ensemble(d1, d2, lambda);
        double sum = 0;
        for (double p : d.probabilities) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-9);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (d1[i] >= d1[j] && d2[i] >= d2[j]) CHECK(d[i] >= d[j]);
            }
        }
        auto argmax = [](const ScoreDistribution& s) {
            return std::max_element(s.probabilities.begin(), s.probabilities.end()) - s.probabilities.begin();
        };
        CHECK(argmax(ensemble(d1, d2, 0.0)) == argmax(d1));
        CHECK(argmax(ensemble(d1, d2, 1.0)) == argmax(d2));
    }
}

TEST_CASE("rank breaks ties by label") {
    LabelMapping m;
    m.add(40);
    m.add(10);
    m.add(30);
    auto r = rank(dist({0.25, 0.5, 0.25}), m);
    CHECK(r == std::vector<RankedEntity>{{10, 0.5}, {40, 0.25}, {30, 0.25}});
}

TEST_CASE("predict") {
    OnlineConfig cfg;
    SUBCASE("no history") {
        TkgStore store;
        auto p = predict(store, {}, {0, 8, 120}, StubBackend{}, cfg);
        CHECK(p.no_history);
        CHECK(p.ranked.empty());
    }
    SUBCASE("empty long branch equals the short branch alone") {
        TkgStore store;
        store.insert(kHistory);
        CausalRuleBase rb;
        rb.put({8, 6, 0.9, 0});  // no event of relation 6 in the history
        for (double lambda : {0.0, 0.1, 0.5, 1.0}) {
            cfg.lambda = lambda;
            auto p = predict(store, rb, {0, 8, 120}, StubBackend{}, cfg);
            CHECK(p.ranked == icl_reference(kHistory, {0, 8, 120}, cfg.history_len));
            CHECK_FALSE(p.degraded);
        }
    }
    SUBCASE("both branches favour 9") {
        // Short: 9 x3 (+0.5 last), 7 x2. Long (causes 5): 9 x2 (+0.5).
        TkgStore store;
        store.insert(EventChain{{0, 5, 9, 24}, {0, 2, 7, 48}, {0, 3, 9, 72}, {0, 2, 7, 96}, {0, 5, 9, 110}});
        CausalRuleBase rb;
        rb.put({8, 5, 0.8, 0});
        cfg.lambda = 0.1;
        auto p = predict(store, rb, {0, 8, 120}, StubBackend{}, cfg);
        REQUIRE(p.ranked.size() == 2);
        CHECK(p.ranked[0].entity == 9);

        // Independent arithmetic for the blended mass on 9.
        const double d1 = std::exp(3.5) / (std::exp(3.5) + std::exp(2.0));
        const double d2 = std::exp(2.5) / (std::exp(2.5) + 1.0);
        CHECK(std::abs(p.ranked[0].probability - (0.9 * d1 + 0.1 * d2)) < 1e-12);
        double sum = p.ranked[0].probability + p.ranked[1].probability;
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    SUBCASE("a failing branch degrades to the survivor") {
        TkgStore store;
        store.insert(kHistory);
        CausalRuleBase rb;
        rb.put({8, 2, 0.8, 0});
        cfg.lambda = 0.5;
        auto previous = set_warning_handler([](std::string_view) {});

        auto long_only = predict(store, rb, {0, 8, 120}, FlakyBackend({0}), cfg);
        CHECK(long_only.degraded);
        REQUIRE_FALSE(long_only.ranked.empty());
        CHECK(long_only.ranked[0].entity == 7);

        auto short_only = predict(store, rb, {0, 8, 120}, FlakyBackend({1}), cfg);
        CHECK(short_only.degraded);
        CHECK(short_only.ranked == icl_reference(kHistory, {0, 8, 120}, cfg.history_len));

        CHECK_THROWS_AS(predict(store, rb, {0, 8, 120}, FlakyBackend({0, 1}), cfg), PredictionError);
        set_warning_handler(previous);
    }
    SUBCASE("lambda 0 matches an independent ICL path") {
        std::mt19937_64 rng(61);
        cfg.lambda = 0.0;
        for (int trial = 0; trial < 300; ++trial) {
            auto facts = testing::random_facts(rng, rng() % 80, 4, 5, 12);
            TkgStore store;
            store.insert(facts);
            CausalRuleBase rb;
            for (int i = 0; i < 4; ++i) {
                rb.put({static_cast<RelationId>(rng() % 5), static_cast<RelationId>(rng() % 5), 0.7, 0});
            }
            cfg.history_len = 1 + rng() % 20;
            const Query q{static_cast<EntityId>(rng() % 4), static_cast<RelationId>(rng() % 5),
                          static_cast<Timestamp>(rng() % 13) * 24};
            auto p = predict(store, rb, q, StubBackend{}, cfg);
            auto ref = icl_reference(facts, q, cfg.history_len);
            REQUIRE(p.ranked.size() == ref.size());
            for (std::size_t i = 0; i < ref.size(); ++i) {
                CHECK(p.ranked[i].entity == ref[i].entity);
                CHECK(std::abs(p.ranked[i].probability - ref[i].probability) < 1e-12);
            }
        }
    }
}

TEST_CASE("dual context invariants") {
    std::mt19937_64 rng(67);
    OnlineConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
        TkgStore store;
        store.insert(testing::random_facts(rng, rng() % 80, 3, 5, 12));
        CausalRuleBase rb;
        for (int i = 0; i < 3; ++i) {
            rb.put({static_cast<RelationId>(rng() % 5), static_cast<RelationId>(rng() % 5), 0.7, 0});
        }
        cfg.history_len = 1 + rng() % 10;
        const Query q{static_cast<EntityId>(rng() % 3), static_cast<RelationId>(rng() % 5), 13 * 24};
        auto ctx = build_context(store, rb, q, cfg);
        CHECK(ctx.short_term.size() <= cfg.history_len);
        CHECK(ctx.long_term.size() <= cfg.history_len);
        for (const auto* chain : {&ctx.short_term, &ctx.long_term}) {
            for (const auto& e : *chain) CHECK(ctx.mapping.label_of(e.object).has_value());
        }
        auto p = predict(store, rb, q, StubBackend{}, cfg);
        for (std::size_t i = 1; i < p.ranked.size(); ++i) CHECK(p.ranked[i - 1].probability >= p.ranked[i].probability);
    }
}
