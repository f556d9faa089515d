#pragma once

// Synthetic event streams with planted lagged dependencies between
// relations, for desk-scale checks of rule mining and prediction.

#include <cstdint>
#include <string_view>
#include <vector>

#include "onsep/tkg.hpp"

namespace onsep {

struct PlantedRule {
    RelationId cause = 0;
    RelationId effect = 0;
    std::size_t lag = 1;       // in snapshots
    double probability = 1.0;  // chance that a cause fact triggers its effect
};

struct SyntheticSpec {
    std::size_t entities = 20;
    std::size_t relations = 6;
    std::size_t snapshots = 30;
    std::vector<PlantedRule> rules;
    double noise_rate = 0.1;  // share of each snapshot's facts that are uniform noise
    std::uint64_t seed = 7;
    std::size_t cause_events = 0;  // seeded cause facts per rule per snapshot; 0 = entities / 5
    Timestamp interval = 24;

    /// Throws ConfigError on an inconsistent spec.
    void validate() const;
};

/// Parses the flat `key=value` format. Planted rules are given as
/// `rule=<cause>,<effect>,<lag>,<probability>`, one key per rule.
SyntheticSpec parse_synthetic_spec(std::string_view text);

/// Deterministic in the seed. The last 20% of snapshots form the test
/// split, the 10% before them the validation split.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace onsep
