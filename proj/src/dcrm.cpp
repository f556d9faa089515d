#include "onsep/dcrm.hpp"

#include <algorithm>
#include <unordered_map>

#include "onsep/errors.hpp"
#include "onsep/log.hpp"

namespace onsep {

std::vector<CandidateCause> filter_candidate_causes(const EventChain& history, EntityId target) {
    std::vector<CandidateCause> causes;
    std::unordered_map<RelationId, std::size_t> slot;
    std::size_t matched = 0;
    for (const auto& e : history) {
        if (e.object != target) continue;
        ++matched;
        auto [it, inserted] = slot.try_emplace(e.relation, causes.size());
        if (inserted) causes.push_back({e.relation, 0, 0.0, 0.0});
        ++causes[it->second].support;
    }
    for (auto& c : causes) {
        c.coverage = static_cast<double>(c.support) / static_cast<double>(matched);
    }
    return causes;
}

std::vector<CandidateCause> assess_causality(RelationId effect, std::vector<CandidateCause> causes,
                                             const ScorerBackend& backend,
                                             std::span<const std::string> relation_names) {
    if (causes.empty()) {
        throw ArgumentError("causality assessment needs at least one candidate");
    }
    auto name_of = [&](RelationId r) -> const std::string& {
        if (r >= relation_names.size()) throw MappingError("relation " + std::to_string(r) + " has no name");
        return relation_names[r];
    };

    LabelMapping mapping(MappingKind::Relation);
    std::vector<std::pair<Label, std::string>> listed;
    for (const auto& c : causes) {
        auto before = mapping.size();
        auto label = mapping.add(c.relation);
        if (mapping.size() == before) {
            throw ArgumentError("cause relation " + std::to_string(c.relation) + " listed twice");
        }
        listed.emplace_back(label, name_of(c.relation));
    }

    auto prompt = build_cause_prompt(name_of(effect), listed);
    auto logits = score(backend, prompt);
    auto dist = normalize(logits);
    for (auto& c : causes) {
        c.probability = dist[*mapping.label_of(c.relation)];
    }
    return causes;
}

std::vector<RuleProposal> build_rules(RelationId effect, const std::vector<CandidateCause>& assessed, std::size_t k,
                                      double alpha, Timestamp t) {
    std::vector<RuleProposal> rules;
    std::vector<double> coverage;
    for (const auto& c : assessed) {
        double conf = alpha * c.probability + (1.0 - alpha) * c.coverage;
        rules.push_back({effect, c.relation, std::clamp(conf, 0.0, 1.0), t});
        coverage.push_back(c.coverage);
    }
    std::vector<std::size_t> order(rules.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rules[a].confidence != rules[b].confidence) return rules[a].confidence > rules[b].confidence;
        if (coverage[a] != coverage[b]) return coverage[a] > coverage[b];
        return rules[a].cause < rules[b].cause;
    });
    if (order.size() > k) order.resize(k);

    std::vector<RuleProposal> top;
    top.reserve(order.size());
    for (auto i : order) top.push_back(rules[i]);
    return top;
}

std::vector<RuleProposal> learn_from_feedback(const TkgStore& store, const Feedback& fb,
                                              const ScorerBackend& backend,
                                              std::span<const std::string> relation_names,
                                              const OnlineConfig& cfg) {
    auto history = store.history_for_subject(fb.query.subject, fb.query.t);
    auto causes = filter_candidate_causes(history, fb.target);
    if (causes.empty()) return {};
    // With alpha == 0 the model's opinion carries no weight, so skip the call.
    if (cfg.alpha == 0.0) return build_rules(fb.query.relation, causes, cfg.topk_rules, cfg.alpha, fb.query.t);
    try {
        causes = assess_causality(fb.query.relation, std::move(causes), backend, relation_names);
    } catch (const BackendError& e) {
        warn(std::string("rule mining skipped for relation ") + std::to_string(fb.query.relation) + ": " + e.what());
        return {};
    }
    return build_rules(fb.query.relation, causes, cfg.topk_rules, cfg.alpha, fb.query.t);
}

}  // namespace onsep
