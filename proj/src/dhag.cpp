#include "onsep/dhag.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <unordered_set>

#include "onsep/errors.hpp"
#include "onsep/log.hpp"

namespace onsep {

namespace {

EventChain last_n(EventChain chain, std::size_t n) {
    if (chain.size() > n) chain.erase(chain.begin(), chain.end() - static_cast<std::ptrdiff_t>(n));
    return chain;
}

EventChain filter_by_causes(const EventChain& history, const CausalRuleBase& rb, RelationId effect) {
    std::unordered_set<RelationId> causes;
    for (const auto& rule : rb.recall(effect)) causes.insert(rule.cause);
    EventChain out;
    if (causes.empty()) return out;
    for (const auto& e : history) {
        if (causes.contains(e.relation)) out.push_back(e);
    }
    return out;
}

std::optional<ScoreDistribution> score_branch(const Query& query, const EventChain& chain,
                                              const LabelMapping& mapping, const ScorerBackend& backend,
                                              const char* branch) {
    try {
        auto prompt = build_history_prompt(query, chain, mapping);
        return normalize(score(backend, prompt));
    } catch (const BackendError& e) {
        warn(std::string(branch) + " branch scoring failed: " + e.what());
        return std::nullopt;
    }
}

}  // namespace

EventChain retrieve_short(const TkgStore& store, const Query& query, std::size_t history_len) {
    return last_n(store.history_for_subject(query.subject, query.t), history_len);
}

EventChain retrieve_long(const TkgStore& store, const CausalRuleBase& rb, const Query& query,
                         std::size_t history_len) {
    if (rb.recall(query.relation).empty()) return {};
    auto history = store.history_for_subject(query.subject, query.t);
    return last_n(filter_by_causes(history, rb, query.relation), history_len);
}

ScoreDistribution ensemble(const ScoreDistribution& d1, const ScoreDistribution& d2, double lambda) {
    if (d1.size() != d2.size()) {
        throw ArgumentError("ensemble over mismatched label sets (" + std::to_string(d1.size()) + " vs " +
                            std::to_string(d2.size()) + ")");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ArgumentError("ensemble weight must lie in [0,1]");
    }
    ScoreDistribution out;
    out.probabilities.resize(d1.size());
    for (std::size_t i = 0; i < d1.size(); ++i) {
        out.probabilities[i] = (1.0 - lambda) * d1[i] + lambda * d2[i];
    }
    return out;
}

std::vector<RankedEntity> rank(const ScoreDistribution& dist, const LabelMapping& mapping) {
    std::vector<Label> order(dist.size());
    std::iota(order.begin(), order.end(), Label{0});
    std::stable_sort(order.begin(), order.end(), [&](Label a, Label b) { return dist[a] > dist[b]; });
    std::vector<RankedEntity> ranked;
    ranked.reserve(order.size());
    for (auto label : order) ranked.push_back({mapping.key_of(label), dist[label]});
    return ranked;
}

DualContext build_context(const TkgStore& store, const CausalRuleBase& rb, const Query& query,
                          const OnlineConfig& cfg) {
    DualContext ctx;
    auto history = store.history_for_subject(query.subject, query.t);
    ctx.short_term = last_n(history, cfg.history_len);
    if (cfg.lambda > 0.0) {
        ctx.long_term = last_n(filter_by_causes(history, rb, query.relation), cfg.history_len);
    }
    for (const auto& e : ctx.short_term) ctx.mapping.add(e.object);
    for (const auto& e : ctx.long_term) ctx.mapping.add(e.object);
    return ctx;
}

Prediction predict(const TkgStore& store, const CausalRuleBase& rb, const Query& query,
                   const ScorerBackend& backend, const OnlineConfig& cfg) {
    Prediction pred;
    auto ctx = build_context(store, rb, query, cfg);
    if (ctx.short_term.empty()) {
        pred.no_history = true;
        return pred;
    }

    auto d1 = score_branch(query, ctx.short_term, ctx.mapping, backend, "short-term");
    if (ctx.long_term.empty()) {
        if (!d1) throw PredictionError("short-term branch failed and no long-term context exists");
        pred.distribution = std::move(*d1);
    } else {
        auto d2 = score_branch(query, ctx.long_term, ctx.mapping, backend, "long-term");
        if (d1 && d2) {
            pred.distribution = ensemble(*d1, *d2, cfg.lambda);
        } else if (d1 || d2) {
            pred.distribution = d1 ? std::move(*d1) : std::move(*d2);
            pred.degraded = true;
        } else {
            throw PredictionError("both branches failed to score");
        }
    }
    pred.ranked = rank(pred.distribution, ctx.mapping);
    return pred;
}

}  // namespace onsep
