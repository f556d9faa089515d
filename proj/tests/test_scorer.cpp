#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "onsep/errors.hpp"
#include "onsep/scorer.hpp"

using namespace onsep;

namespace {

// Serves /score from a background thread on an ephemeral port.
class FakeScorer {
public:
    explicit FakeScorer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/score", [handler](const httplib::Request& req, httplib::Response& res) { handler(req, res); });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeScorer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

int unused_port() {
    httplib::Server s;
    return s.bind_to_any_port("127.0.0.1");
}

}  // namespace

TEST_CASE("build_label_mapping") {
    SUBCASE("distinct candidates take labels in order") {
        // SouthAfrica, China, NewEngland
        std::vector<std::uint32_t> c{31, 4, 17};
        auto m = build_label_mapping(c);
        CHECK(*m.label_of(31) == 0);
        CHECK(*m.label_of(4) == 1);
        CHECK(*m.label_of(17) == 2);
        CHECK(m.key_of(2) == 17);
    }
    SUBCASE("single candidate") {
        std::vector<std::uint32_t> c{5};
        auto m = build_label_mapping(c);
        CHECK(m.size() == 1);
        CHECK(*m.label_of(5) == 0);
    }
    SUBCASE("repeats keep their first label") {
        std::vector<std::uint32_t> c{1, 2, 1, 3};
        auto m = build_label_mapping(c);
        CHECK(m.keys() == std::vector<std::uint32_t>{1, 2, 3});
        CHECK_FALSE(m.label_of(9).has_value());
    }
    SUBCASE("empty input") {
        std::vector<std::uint32_t> c;
        CHECK_THROWS_AS(build_label_mapping(c), ArgumentError);
    }
}

TEST_CASE("property: permuting repeats after first appearance leaves the mapping unchanged") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::uint32_t> c;
        for (std::size_t i = 0, n = 1 + rng() % 30; i < n; ++i) c.push_back(static_cast<std::uint32_t>(rng() % 8));
        auto base = build_label_mapping(c);

        // Everything after the last first appearance is a repeat.
        std::vector<std::uint32_t> seen;
        std::size_t tail = 0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (std::find(seen.begin(), seen.end(), c[i]) == seen.end()) {
                seen.push_back(c[i]);
                tail = i + 1;
            }
        }
        CHECK(base.keys() == seen);

        auto shuffled = c;
        std::shuffle(shuffled.begin() + static_cast<std::ptrdiff_t>(tail), shuffled.end(), rng);
        auto again = build_label_mapping(shuffled);
        CHECK(again.keys() == base.keys());
        for (auto key : seen) CHECK(again.label_of(key) == base.label_of(key));
    }
}

TEST_CASE("build_history_prompt") {
    SUBCASE("golden two-event prompt") {
        EventChain chain{{0, 5, 9, 24}, {0, 3, 9, 48}};
        std::vector<std::uint32_t> c{9};
        auto p = build_history_prompt({0, 8, 120}, chain, build_label_mapping(c));
        CHECK(p.text == "24:[0,5,0.9]\n48:[0,3,0.9]\n120:[0,8,");
        CHECK(p.expected_labels == std::vector<Label>{0});
    }
    SUBCASE("empty chain leaves only the query line") {
        std::vector<std::uint32_t> c{9};
        auto p = build_history_prompt({0, 8, 120}, {}, build_label_mapping(c));
        CHECK(p.text == "120:[0,8,");
    }
    SUBCASE("two objects appear with first-seen labels") {
        EventChain chain{{0, 5, 9, 24}, {0, 3, 7, 48}, {0, 2, 9, 72}};
        std::vector<std::uint32_t> c{9, 7};
        auto p = build_history_prompt({0, 8, 96}, chain, build_label_mapping(c));
        CHECK(p.text == "24:[0,5,0.9]\n48:[0,3,1.7]\n72:[0,2,0.9]\n96:[0,8,");
        CHECK(p.expected_labels == std::vector<Label>{0, 1});
    }
    SUBCASE("unmapped object") {
        EventChain chain{{0, 5, 9, 24}};
        std::vector<std::uint32_t> c{7};
        CHECK_THROWS_AS(build_history_prompt({0, 8, 120}, chain, build_label_mapping(c)), MappingError);
    }
}

TEST_CASE("build_cause_prompt") {
    SUBCASE("one reason") {
        auto p = build_cause_prompt("Use unconventional violence", {{0, "Fight with small arms and light weapons"}});
        CHECK(p.text ==
              "Your task is selecting the most appropriate reason for the result event. The result event is Use "
              "unconventional violence.\nBelow is a list of possible reasons:\n0. Fight with small arms and light "
              "weapons\nThe most appropriate reason is:");
        CHECK(p.expected_labels == std::vector<Label>{0});
        auto d = normalize(score(StubBackend{}, p), p.expected_labels);
        CHECK(d[0] == 1.0);
    }
    SUBCASE("three reasons listed in label order") {
        auto p = build_cause_prompt("E", {{0, "a"}, {1, "b"}, {2, "c"}});
        CHECK(p.text.find("\n0. a\n1. b\n2. c\n") != std::string::npos);
        CHECK(p.expected_labels == std::vector<Label>{0, 1, 2});
    }
    SUBCASE("no reasons") { CHECK_THROWS_AS(build_cause_prompt("E", {}), ArgumentError); }
}

TEST_CASE("stub backend") {
    StubBackend stub;
    SUBCASE("counts plus recency bonus") {
        EventChain chain{{0, 1, 9, 24}, {0, 1, 9, 48}, {0, 2, 7, 72}};
        std::vector<std::uint32_t> c{9, 7};
        auto p = build_history_prompt({0, 3, 96}, chain, build_label_mapping(c));
        CHECK(score(stub, p) == std::vector<double>{2.0, 1.5});
    }
    SUBCASE("no history lines") {
        std::vector<std::uint32_t> c{9, 7, 3};
        auto p = build_history_prompt({0, 3, 96}, {}, build_label_mapping(c));
        CHECK(score(stub, p) == std::vector<double>{0.0, 0.0, 0.0});
    }
    SUBCASE("pure function of the prompt") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 100; ++trial) {
            EventChain chain;
            std::vector<std::uint32_t> objects;
            for (int i = 0, n = 1 + static_cast<int>(rng() % 20); i < n; ++i) {
                chain.push_back({0, static_cast<RelationId>(rng() % 4), static_cast<EntityId>(rng() % 6), i * 24});
                objects.push_back(chain.back().object);
            }
            auto p = build_history_prompt({0, 1, 1000}, chain, build_label_mapping(objects));
            auto first = stub.logits(p);
            for (int rep = 0; rep < 3; ++rep) CHECK(stub.logits(p) == first);
        }
    }
}

TEST_CASE("normalize") {
    SUBCASE("uniform") {
        std::vector<double> l{0, 0};
        std::vector<Label> s{0, 1};
        auto d = normalize(l, s);
        CHECK(d[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(d[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("closed form") {
        std::vector<double> l{std::log(3.0), 0};
        std::vector<Label> s{0, 1};
        auto d = normalize(l, s);
        CHECK(std::abs(d[0] - 0.75) < 1e-12);
        CHECK(std::abs(d[1] - 0.25) < 1e-12);
    }
    SUBCASE("excluded label gets no mass") {
        std::vector<double> l{5, 2, 9};
        std::vector<Label> s{0, 1};
        auto d = normalize(l, s);
        CHECK(d[2] == 0.0);
        CHECK(std::abs(d[0] / d[1] - std::exp(3.0)) < 1e-9);
        CHECK(std::abs(d[0] + d[1] - 1.0) < 1e-12);
    }
    SUBCASE("errors") {
        std::vector<double> l{1, 2};
        std::vector<Label> none;
        std::vector<Label> outside{0, 2};
        CHECK_THROWS_AS(normalize(l, none), ArgumentError);
        CHECK_THROWS_AS(normalize(l, outside), ArgumentError);
    }
}

TEST_CASE("property: softmax sums to one and ignores shifts") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> logit(-30.0, 30.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n = 1 + rng() % 12;
        std::vector<double> l(n);
        for (auto& v : l) v = logit(rng);
        std::vector<Label> subset;
        for (Label i = 0; i < n; ++i) {
            if (rng() % 3 != 0) subset.push_back(i);
        }
        if (subset.empty()) subset.push_back(0);

        auto d = normalize(l, subset);
        double sum = 0;
        for (double p : d.probabilities) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-9);

        const double shift = logit(rng);
        auto shifted = l;
        for (auto i : subset) shifted[i] += shift;
        auto d2 = normalize(shifted, subset);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(d[i] - d2[i]) < 1e-9);
    }
}

TEST_CASE("score rejects malformed backend output") {
    struct Short final : ScorerBackend {
        std::vector<double> logits(const PromptText&) const override { return {1.0}; }
        std::string name() const override { return "short"; }
    };
    struct NotFinite final : ScorerBackend {
        std::vector<double> logits(const PromptText&) const override { return {NAN, 0.0}; }
        std::string name() const override { return "nan"; }
    };
    PromptText p{"x", {0, 1}};
    CHECK_THROWS_AS(score(Short{}, p), ProtocolError);
    CHECK_THROWS_AS(score(NotFinite{}, p), ProtocolError);
}

TEST_CASE("http backend") {
    SUBCASE("passes logits through and sends every label") {
        nlohmann::json seen;
        FakeScorer server([&](const httplib::Request& req, httplib::Response& res) {
            seen = nlohmann::json::parse(req.body);
            res.set_content(R"({"logits": [0.3, -1.2]})", "application/json");
        });
        HttpBackend http({server.url(), std::chrono::milliseconds(2000), 0});
        PromptText p{"24:[0,5,0.9]\n48:[0,3,1.7]\n120:[0,8,", {0, 1}};
        CHECK(score(http, p) == std::vector<double>{0.3, -1.2});
        CHECK(seen["prompt"] == p.text);
        CHECK(seen["labels"] == nlohmann::json::array({"0", "1"}));
    }
    SUBCASE("length mismatch is a protocol error") {
        FakeScorer server([](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"logits": [0.3]})", "application/json");
        });
        HttpBackend http({server.url(), std::chrono::milliseconds(2000), 0});
        CHECK_THROWS_AS(score(http, PromptText{"x", {0, 1}}), ProtocolError);
    }
    SUBCASE("malformed body is a protocol error") {
        FakeScorer server([](const httplib::Request&, httplib::Response& res) {
            res.set_content("not json", "text/plain");
        });
        HttpBackend http({server.url(), std::chrono::milliseconds(2000), 0});
        try {
            http.logits(PromptText{"x", {0}});
            FAIL("expected ProtocolError");
        } catch (const ProtocolError& e) {
            CHECK_FALSE(e.retryable());
        }
    }
    SUBCASE("server errors are retried") {
        int calls = 0;
        FakeScorer server([&](const httplib::Request&, httplib::Response& res) {
            if (++calls < 3) {
                res.status = 503;
                return;
            }
            res.set_content(R"({"logits": [1.0]})", "application/json");
        });
        HttpBackend http({server.url(), std::chrono::milliseconds(2000), 2});
        CHECK(http.logits(PromptText{"x", {0}}) == std::vector<double>{1.0});
        CHECK(calls == 3);
    }
    SUBCASE("unreachable service is a retryable backend error") {
        HttpBackend http({"http://127.0.0.1:" + std::to_string(unused_port()), std::chrono::milliseconds(500), 1});
        try {
            http.logits(PromptText{"x", {0}});
            FAIL("expected BackendError");
        } catch (const ProtocolError&) {
            FAIL("transport failure must not be a protocol error");
        } catch (const BackendError& e) {
            CHECK(e.retryable());
        }
    }
    SUBCASE("bad URL") { CHECK_THROWS_AS(HttpBackend({"localhost:8000"}), ConfigError); }
}
