#pragma once

// Dual history augmented generation: a recency branch and a rule-guided
// branch are scored separately and blended.

#include <utility>
#include <vector>

#include "onsep/config.hpp"
#include "onsep/rulebase.hpp"
#include "onsep/scorer.hpp"
#include "onsep/tkg.hpp"

namespace onsep {

struct DualContext {
    EventChain short_term;
    EventChain long_term;
    LabelMapping mapping;  // objects of short_term, then new objects of long_term
};

struct RankedEntity {
    EntityId entity = 0;
    double probability = 0.0;

    friend bool operator==(const RankedEntity&, const RankedEntity&) = default;
};

struct Prediction {
    std::vector<RankedEntity> ranked;  // probability descending, ties by label
    ScoreDistribution distribution;    // index = label of the shared mapping
    bool no_history = false;
    bool degraded = false;             // one branch failed and was dropped
};

/// The `history_len` most recent events of the subject before the query time.
EventChain retrieve_short(const TkgStore& store, const Query& query, std::size_t history_len);

/// Events of the subject before the query time whose relation is a recalled
/// cause of the query relation, truncated to the most recent `history_len`.
EventChain retrieve_long(const TkgStore& store, const CausalRuleBase& rb, const Query& query,
                         std::size_t history_len);

/// (1 - lambda) * d1 + lambda * d2, entrywise.
ScoreDistribution ensemble(const ScoreDistribution& d1, const ScoreDistribution& d2, double lambda);

/// Labels sorted by probability descending, ties by ascending label.
std::vector<RankedEntity> rank(const ScoreDistribution& dist, const LabelMapping& mapping);

DualContext build_context(const TkgStore& store, const CausalRuleBase& rb, const Query& query,
                          const OnlineConfig& cfg);

/// With lambda == 0 the long branch carries no weight and is not retrieved,
/// so the candidate set is exactly the short history's objects.
Prediction predict(const TkgStore& store, const CausalRuleBase& rb, const Query& query,
                   const ScorerBackend& backend, const OnlineConfig& cfg);

}  // namespace onsep
