#pragma once

// Online evaluation loop and time-aware Hit@k bookkeeping.

#include <functional>
#include <optional>
#include <string>
#include <unordered_set>

#include "onsep/config.hpp"
#include "onsep/dhag.hpp"
#include "onsep/rulebase.hpp"
#include "onsep/scorer.hpp"
#include "onsep/tkg.hpp"

namespace onsep {

struct Metrics {
    std::size_t queries = 0;
    std::size_t hits1 = 0;
    std::size_t hits3 = 0;
    std::size_t hits10 = 0;
    bool incomplete = false;

    double hit_at(int k) const;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// 1-based rank; nullopt when the target is not a candidate at all.
using Rank = std::optional<std::size_t>;

/// Rank of `target` after removing every other entity that is also a true
/// answer for the same (subject, relation, time).
Rank time_aware_rank(const std::vector<RankedEntity>& ranked, EntityId target,
                     const std::unordered_set<EntityId>& truths);

void record(Metrics& m, Rank rank);

/// `hit@<k>\t<ratio>` for k in {1,3,10}, then `queries\t<count>`.
std::string format_metrics(const Metrics& m);

/// Observation points of run_online; every member is optional.
struct RunHooks {
    std::function<void(Timestamp)> on_snapshot_begin;
    /// Installed as the store's access guard for the whole run.
    std::function<void(const Quadruple&)> on_history_read;
    std::function<void(const Query&, const Prediction&)> on_prediction;
    std::function<void(Timestamp, const CausalRuleBase&)> on_snapshot_end;
};

struct RunResult {
    Metrics metrics;
    CausalRuleBase rules;
    std::size_t failed_predictions = 0;
};

/// Consecutive prediction failures after which the run is aborted.
inline constexpr std::size_t kMaxConsecutiveFailures = 3;

/// Seeds a store with train and valid facts, then for each test timestamp:
/// predicts every query against the frozen store and rule base, scores the
/// predictions, reveals the snapshot, mines rules from the revealed targets
/// and runs rule maintenance.
RunResult run_online(const Dataset& dataset, const OnlineConfig& cfg, const ScorerBackend& backend,
                     std::optional<CausalRuleBase> initial_rules = std::nullopt, const RunHooks& hooks = {});

}  // namespace onsep
