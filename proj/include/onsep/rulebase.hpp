#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onsep/tkg.hpp"

namespace onsep {

/// (X, effect, Y, T2) <- (X, cause, Y, T1) with T1 < T2.
struct CausalRule {
    RelationId effect = 0;
    RelationId cause = 0;
    double confidence = 0.0;
    Timestamp last_updated = 0;

    friend bool operator==(const CausalRule&, const CausalRule&) = default;
};

struct RuleUpdateParams {
    double theta = 0.25;  // smoothing factor
    double beta = 0.2;    // growth factor
};

/// Merges the previous confidence with a fresh estimate:
///   c_t = theta * min(c_prev * (1 + beta), 1) + (1 - theta) * conf
double smoothed_confidence(double previous, double conf, RuleUpdateParams params);

/// Effect-keyed rule collection. Per effect there is at most one rule per
/// cause and rules are kept sorted by descending confidence, ties by
/// ascending cause id.
class CausalRuleBase {
public:
    /// Inserts a new rule with confidence `conf`, or smooths an existing one.
    /// Returns the stored confidence.
    double upsert(RelationId effect, RelationId cause, double conf, Timestamp t, RuleUpdateParams params);

    /// Stores `rule` as is, replacing any rule for the same pair.
    void put(const CausalRule& rule);

    /// Drops rules below `conf_min` and re-sorts.
    void maintain(double conf_min);

    std::span<const CausalRule> recall(RelationId effect) const;

    const CausalRule* find(RelationId effect, RelationId cause) const;

    std::size_t size() const;
    bool empty() const { return rules_.empty(); }

    /// All rules, effects ascending, each effect's list in stored order.
    std::vector<CausalRule> all() const;

    friend bool operator==(const CausalRuleBase&, const CausalRuleBase&) = default;

private:
    std::map<RelationId, std::vector<CausalRule>> rules_;
};

/// `#onsep-rules v1` header, then `<effect>\t<cause>\t<conf %.6f>\t<t>` lines.
std::string export_rules(const CausalRuleBase& rb, std::span<const std::string> relation_names);

struct ImportedRules {
    CausalRuleBase rules;
    std::size_t dropped = 0;  // rules naming a relation absent from the target
};

ImportedRules import_rules(std::string_view text, std::span<const std::string> relation_names);

}  // namespace onsep
