#pragma once

#include <cstdint>
#include <string>

#include "onsep/rulebase.hpp"

namespace onsep {

enum class ScorerKind { Stub, Http };

/// Every tunable of the online loop. Defaults are the best ICEWS14 values
/// where those are self-consistent; alpha and topk_rules use the values
/// with the best reported Hit@1.
struct OnlineConfig {
    std::size_t history_len = 200;  // L
    double lambda = 0.1;            // weight of the long-term branch
    double alpha = 0.5;             // model probability vs coverage
    double theta = 0.25;            // smoothing factor
    double beta = 0.2;              // growth factor
    std::size_t topk_rules = 10;
    double conf_min = 0.01;
    ScorerKind scorer = ScorerKind::Stub;
    std::string scorer_url;
    std::int64_t scorer_timeout_ms = 30000;
    std::uint64_t seed = 0;
    bool mining_enabled = true;
    std::size_t workers = 1;

    RuleUpdateParams update_params() const { return {theta, beta}; }

    /// Throws ConfigError naming the first violated constraint.
    void validate() const;
};

}  // namespace onsep
