#pragma once

// Dynamic causal rule mining: turn each revealed outcome into scored
// candidate rules for the rule base.

#include <span>
#include <string>
#include <vector>

#include "onsep/config.hpp"
#include "onsep/scorer.hpp"
#include "onsep/tkg.hpp"

namespace onsep {

struct CandidateCause {
    RelationId relation = 0;
    std::size_t support = 0;   // events in H_c with this relation
    double coverage = 0.0;     // support / |H_c|
    double probability = 0.0;  // filled by assess_causality
};

/// Revealed ground truth for one query.
struct Feedback {
    Query query;
    EntityId target = 0;
};

struct RuleProposal {
    RelationId effect = 0;
    RelationId cause = 0;
    double confidence = 0.0;
    Timestamp t = 0;

    friend bool operator==(const RuleProposal&, const RuleProposal&) = default;
};

/// One candidate per distinct relation among the events whose object is
/// `target`, in first-appearance order.
std::vector<CandidateCause> filter_candidate_causes(const EventChain& history, EntityId target);

/// Scores the candidates with one cause-selection prompt and fills in
/// their probabilities. Backend errors propagate.
std::vector<CandidateCause> assess_causality(RelationId effect, std::vector<CandidateCause> causes,
                                             const ScorerBackend& backend,
                                             std::span<const std::string> relation_names);

/// Fuses alpha * p + (1 - alpha) * coverage per candidate and keeps the k
/// most confident (ties: higher coverage, then lower relation id).
std::vector<RuleProposal> build_rules(RelationId effect, const std::vector<CandidateCause>& assessed, std::size_t k,
                                      double alpha, Timestamp t);

/// Full mining pass for one feedback item. Returns no proposals when the
/// subject has no matching history or the backend fails.
std::vector<RuleProposal> learn_from_feedback(const TkgStore& store, const Feedback& fb,
                                              const ScorerBackend& backend,
                                              std::span<const std::string> relation_names,
                                              const OnlineConfig& cfg);

}  // namespace onsep
