#include "onsep/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "onsep/dcrm.hpp"
#include "onsep/errors.hpp"
#include "onsep/log.hpp"

namespace onsep {

double Metrics::hit_at(int k) const {
    if (queries == 0) return 0.0;
    std::size_t hits = 0;
    switch (k) {
        case 1: hits = hits1; break;
        case 3: hits = hits3; break;
        case 10: hits = hits10; break;
        default: throw ArgumentError("Hit@k is tracked for k in {1,3,10} only");
    }
    return static_cast<double>(hits) / static_cast<double>(queries);
}

Rank time_aware_rank(const std::vector<RankedEntity>& ranked, EntityId target,
                     const std::unordered_set<EntityId>& truths) {
    std::size_t position = 0;
    for (const auto& r : ranked) {
        if (r.entity == target) return position + 1;
        if (!truths.contains(r.entity)) ++position;
    }
    return std::nullopt;
}

void record(Metrics& m, Rank rank) {
    ++m.queries;
    if (!rank) return;
    if (*rank <= 1) ++m.hits1;
    if (*rank <= 3) ++m.hits3;
    if (*rank <= 10) ++m.hits10;
}

std::string format_metrics(const Metrics& m) {
    std::string out;
    char line[64];
    for (int k : {1, 3, 10}) {
        std::snprintf(line, sizeof line, "hit@%d\t%.4f\n", k, m.hit_at(k));
        out += line;
    }
    out += "queries\t" + std::to_string(m.queries) + "\n";
    return out;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
// exception thrown is rethrown on the caller's thread.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    const std::size_t count = std::min(workers, n);
    pool.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

// All test facts of one (subject, relation) at one timestamp.
struct QueryGroup {
    Query query;
    std::vector<EntityId> targets;  // distinct, first-seen order
};

std::vector<QueryGroup> group_queries(const std::vector<Quadruple>& snapshot) {
    std::vector<QueryGroup> groups;
    std::map<std::pair<EntityId, RelationId>, std::size_t> index;
    for (const auto& q : snapshot) {
        auto [it, inserted] = index.try_emplace({q.subject, q.relation}, groups.size());
        if (inserted) groups.push_back({{q.subject, q.relation, q.t}, {}});
        auto& targets = groups[it->second].targets;
        if (std::find(targets.begin(), targets.end(), q.object) == targets.end()) targets.push_back(q.object);
    }
    return groups;
}

}  // namespace

RunResult run_online(const Dataset& dataset, const OnlineConfig& cfg, const ScorerBackend& backend,
                     std::optional<CausalRuleBase> initial_rules, const RunHooks& hooks) {
    cfg.validate();
    if (!dataset.inverse_augmented) {
        throw StateError("run_online expects an inverse-augmented dataset");
    }

    TkgStore store;
    if (hooks.on_history_read) store.set_access_guard(hooks.on_history_read);
    store.insert(dataset.train);
    store.insert(dataset.valid);

    RunResult result;
    if (initial_rules) result.rules = std::move(*initial_rules);
    result.rules.maintain(cfg.conf_min);

    std::map<Timestamp, std::vector<Quadruple>> snapshots;
    for (const auto& q : dataset.test) snapshots[q.t].push_back(q);

    std::size_t consecutive_failures = 0;
    for (const auto& [t, facts] : snapshots) {
        if (hooks.on_snapshot_begin) hooks.on_snapshot_begin(t);
        const auto groups = group_queries(facts);

        // (a) predict against the frozen store and rule base
        std::vector<std::optional<Prediction>> predictions(groups.size());
        parallel_for(groups.size(), cfg.workers, [&](std::size_t i) {
            try {
                predictions[i] = predict(store, result.rules, groups[i].query, backend, cfg);
            } catch (const PredictionError& e) {
                warn(std::string("prediction failed: ") + e.what());
            }
        });

        // (b) time-aware scoring, one entry per distinct target
        for (std::size_t i = 0; i < groups.size(); ++i) {
            const auto& group = groups[i];
            if (!predictions[i]) {
                ++result.failed_predictions;
                if (++consecutive_failures >= kMaxConsecutiveFailures) {
                    warn("scorer persistently unavailable, aborting with partial metrics");
                    result.metrics.incomplete = true;
                    return result;
                }
                continue;
            }
            consecutive_failures = 0;
            if (hooks.on_prediction) hooks.on_prediction(group.query, *predictions[i]);
            const std::unordered_set<EntityId> truths(group.targets.begin(), group.targets.end());
            for (auto target : group.targets) {
                record(result.metrics, time_aware_rank(predictions[i]->ranked, target, truths));
            }
        }

        // (c) reveal the snapshot
        store.insert(facts);

        // (d) mine rules from the revealed targets, applied in feedback order
        if (cfg.mining_enabled) {
            std::vector<Feedback> feedback;
            for (const auto& group : groups) {
                for (auto target : group.targets) feedback.push_back({group.query, target});
            }
            std::vector<std::vector<RuleProposal>> proposals(feedback.size());
            parallel_for(feedback.size(), cfg.workers, [&](std::size_t i) {
                proposals[i] = learn_from_feedback(store, feedback[i], backend, dataset.relation_names, cfg);
            });
            for (const auto& batch : proposals) {
                for (const auto& p : batch) {
                    result.rules.upsert(p.effect, p.cause, p.confidence, p.t, cfg.update_params());
                }
            }
        }

        // (e) maintenance
        result.rules.maintain(cfg.conf_min);
        if (hooks.on_snapshot_end) hooks.on_snapshot_end(t, result.rules);
    }
    return result;
}

}  // namespace onsep
