#include "onsep/rulebase.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <unordered_map>

#include "onsep/errors.hpp"

namespace onsep {

namespace {

constexpr std::string_view kHeader = "#onsep-rules v1";

bool rule_order(const CausalRule& a, const CausalRule& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.cause < b.cause;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

double smoothed_confidence(double previous, double conf, RuleUpdateParams params) {
    const double grown = std::min(previous * (1.0 + params.beta), 1.0);
    return clamp01(params.theta * grown + (1.0 - params.theta) * conf);
}

double CausalRuleBase::upsert(RelationId effect, RelationId cause, double conf, Timestamp t,
                              RuleUpdateParams params) {
    auto& list = rules_[effect];
    auto it = std::find_if(list.begin(), list.end(), [&](const CausalRule& r) { return r.cause == cause; });
    double stored;
    if (it == list.end()) {
        stored = clamp01(conf);
        list.push_back({effect, cause, stored, t});
    } else {
        stored = smoothed_confidence(it->confidence, conf, params);
        it->confidence = stored;
        it->last_updated = t;
    }
    std::stable_sort(list.begin(), list.end(), rule_order);
    return stored;
}

void CausalRuleBase::put(const CausalRule& rule) {
    auto& list = rules_[rule.effect];
    auto it = std::find_if(list.begin(), list.end(), [&](const CausalRule& r) { return r.cause == rule.cause; });
    if (it == list.end()) {
        list.push_back(rule);
    } else {
        *it = rule;
    }
    std::stable_sort(list.begin(), list.end(), rule_order);
}

void CausalRuleBase::maintain(double conf_min) {
    for (auto it = rules_.begin(); it != rules_.end();) {
        auto& list = it->second;
        std::erase_if(list, [conf_min](const CausalRule& r) { return r.confidence < conf_min; });
        std::stable_sort(list.begin(), list.end(), rule_order);
        it = list.empty() ? rules_.erase(it) : std::next(it);
    }
}

std::span<const CausalRule> CausalRuleBase::recall(RelationId effect) const {
    auto it = rules_.find(effect);
    if (it == rules_.end()) return {};
    return it->second;
}

const CausalRule* CausalRuleBase::find(RelationId effect, RelationId cause) const {
    for (const auto& r : recall(effect)) {
        if (r.cause == cause) return &r;
    }
    return nullptr;
}

std::size_t CausalRuleBase::size() const {
    std::size_t n = 0;
    for (const auto& [_, list] : rules_) n += list.size();
    return n;
}

std::vector<CausalRule> CausalRuleBase::all() const {
    std::vector<CausalRule> out;
    for (const auto& [_, list] : rules_) out.insert(out.end(), list.begin(), list.end());
    return out;
}

std::string export_rules(const CausalRuleBase& rb, std::span<const std::string> relation_names) {
    std::string out(kHeader);
    out += '\n';
    char conf[64];
    for (const auto& r : rb.all()) {
        if (r.effect >= relation_names.size() || r.cause >= relation_names.size()) {
            throw MappingError("rule references unknown relation id");
        }
        std::snprintf(conf, sizeof conf, "%.6f", r.confidence);
        out += relation_names[r.effect];
        out += '\t';
        out += relation_names[r.cause];
        out += '\t';
        out += conf;
        out += '\t';
        out += std::to_string(r.last_updated);
        out += '\n';
    }
    return out;
}

ImportedRules import_rules(std::string_view text, std::span<const std::string> relation_names) {
    std::unordered_map<std::string_view, RelationId> ids;
    for (std::size_t i = 0; i < relation_names.size(); ++i) {
        ids.emplace(relation_names[i], static_cast<RelationId>(i));
    }

    ImportedRules result;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (!header_seen) {
            if (line != kHeader) throw ParseError("rules", lineno, "missing '#onsep-rules v1' header");
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;

        std::string_view cols[4];
        std::size_t n = 0;
        std::string_view rest = line;
        while (n < 4) {
            auto tab = rest.find('\t');
            cols[n++] = rest.substr(0, tab);
            if (tab == std::string_view::npos) {
                rest = {};
                break;
            }
            rest.remove_prefix(tab + 1);
        }
        if (n != 4 || !rest.empty()) {
            throw ParseError("rules", lineno, "expected 4 tab-separated fields");
        }

        const std::string conf_text(cols[2]);
        char* end = nullptr;
        errno = 0;
        const double conf = std::strtod(conf_text.c_str(), &end);
        if (conf_text.empty() || end != conf_text.c_str() + conf_text.size() || errno != 0 || !(conf >= 0.0) ||
            conf > 1.0) {
            throw ParseError("rules", lineno, "confidence must be a number in [0,1]");
        }
        Timestamp t = 0;
        auto [ptr, ec] = std::from_chars(cols[3].data(), cols[3].data() + cols[3].size(), t);
        if (ec != std::errc() || ptr != cols[3].data() + cols[3].size()) {
            throw ParseError("rules", lineno, "invalid timestamp");
        }

        auto effect = ids.find(cols[0]);
        auto cause = ids.find(cols[1]);
        if (effect == ids.end() || cause == ids.end()) {
            ++result.dropped;
            continue;
        }
        result.rules.put({effect->second, cause->second, conf, t});
    }
    if (!header_seen) throw ParseError("rules", 1, "empty rule file");
    return result;
}

}  // namespace onsep
