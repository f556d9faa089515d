#include "onsep/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>
#include <string>

#include "onsep/errors.hpp"

namespace onsep {

namespace {

// mt19937_64 has a fixed output sequence; the mappings below avoid the
// implementation-defined standard distributions so datasets are identical
// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

std::size_t test_snapshots(std::size_t n) { return (2 * n + 9) / 10; }
std::size_t valid_snapshots(std::size_t n) { return (n + 9) / 10; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <typename Int>
Int parse_uint(std::string_view v, std::size_t lineno) {
    Int out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
        throw ParseError("synthetic spec", lineno, "expected a non-negative integer, got '" + std::string(v) + "'");
    }
    return out;
}

double parse_real(std::string_view v, std::size_t lineno) {
    const std::string s(v);
    char* end = nullptr;
    errno = 0;
    double out = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno != 0 || !std::isfinite(out)) {
        throw ParseError("synthetic spec", lineno, "expected a number, got '" + s + "'");
    }
    return out;
}

PlantedRule parse_rule(std::string_view v, std::size_t lineno) {
    std::string_view parts[4];
    std::size_t n = 0;
    while (n < 4) {
        auto comma = v.find(',');
        parts[n++] = trim(v.substr(0, comma));
        if (comma == std::string_view::npos) {
            v = {};
            break;
        }
        v.remove_prefix(comma + 1);
    }
    if (n != 4 || !v.empty()) {
        throw ParseError("synthetic spec", lineno, "rule must be <cause>,<effect>,<lag>,<probability>");
    }
    return {parse_uint<RelationId>(parts[0], lineno), parse_uint<RelationId>(parts[1], lineno),
            parse_uint<std::size_t>(parts[2], lineno), parse_real(parts[3], lineno)};
}

}  // namespace

void SyntheticSpec::validate() const {
    if (entities < 2) throw ConfigError("synthetic spec needs at least 2 entities");
    if (relations < 1) throw ConfigError("synthetic spec needs at least 1 relation");
    if (snapshots < 3) throw ConfigError("synthetic spec needs at least 3 snapshots");
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("noise-rate must lie in [0,1)");
    if (interval < 1) throw ConfigError("interval must be >= 1");
    std::set<std::pair<RelationId, RelationId>> seen;
    for (const auto& r : rules) {
        if (r.cause >= relations || r.effect >= relations) {
            throw ConfigError("planted rule references a relation outside [0, relations)");
        }
        if (r.cause == r.effect) throw ConfigError("planted rule cause must differ from its effect");
        if (!seen.insert({r.cause, r.effect}).second) throw ConfigError("planted rule listed twice");
        if (!(r.probability >= 0.0 && r.probability <= 1.0)) {
            throw ConfigError("planted rule probability must lie in [0,1]");
        }
        if (r.lag < 1 || r.lag >= snapshots) throw ConfigError("planted rule lag must lie in [1, snapshots)");
    }
}

SyntheticSpec parse_synthetic_spec(std::string_view text) {
    SyntheticSpec spec;
    spec.rules.clear();
    std::size_t lineno = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("synthetic spec", lineno, "expected key=value");
        std::string key(trim(line.substr(0, eq)));
        for (auto& c : key) {
            if (c == '_') c = '-';
        }
        auto value = trim(line.substr(eq + 1));

        if (key == "entities") spec.entities = parse_uint<std::size_t>(value, lineno);
        else if (key == "relations") spec.relations = parse_uint<std::size_t>(value, lineno);
        else if (key == "snapshots") spec.snapshots = parse_uint<std::size_t>(value, lineno);
        else if (key == "noise-rate") spec.noise_rate = parse_real(value, lineno);
        else if (key == "seed") spec.seed = parse_uint<std::uint64_t>(value, lineno);
        else if (key == "cause-events") spec.cause_events = parse_uint<std::size_t>(value, lineno);
        else if (key == "interval") spec.interval = parse_uint<Timestamp>(value, lineno);
        else if (key == "rule") spec.rules.push_back(parse_rule(value, lineno));
        else throw ParseError("synthetic spec", lineno, "unknown key '" + key + "'");
    }
    spec.validate();
    return spec;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    const std::size_t cause_events = spec.cause_events ? spec.cause_events : std::max<std::size_t>(1, spec.entities / 5);

    auto random_pair = [&]() {
        auto s = static_cast<EntityId>(rng.below(spec.entities));
        auto o = static_cast<EntityId>(rng.below(spec.entities - 1));
        if (o >= s) ++o;
        return std::pair{s, o};
    };

    std::vector<std::vector<Quadruple>> timeline(spec.snapshots);
    for (std::size_t i = 0; i < spec.snapshots; ++i) {
        const Timestamp t = static_cast<Timestamp>(i) * spec.interval;
        auto& facts = timeline[i];  // already holds effects scheduled by earlier snapshots

        for (const auto& rule : spec.rules) {
            for (std::size_t n = 0; n < cause_events; ++n) {
                auto [s, o] = random_pair();
                facts.push_back({s, rule.cause, o, t});
            }
        }
        // Noise makes up `noise_rate` of the snapshot's facts.
        const double signal = static_cast<double>(facts.size());
        const auto noise_facts =
            static_cast<std::size_t>(std::llround(spec.noise_rate / (1.0 - spec.noise_rate) * signal));
        for (std::size_t n = 0; n < noise_facts; ++n) {
            auto [s, o] = random_pair();
            auto r = static_cast<RelationId>(rng.below(spec.relations));
            facts.push_back({s, r, o, t});
        }

        // Any emitted cause fact may trigger its effect, including noise
        // and previously triggered effects.
        for (const auto& f : facts) {
            for (const auto& rule : spec.rules) {
                if (f.relation != rule.cause) continue;
                const bool fires = rng.unit() < rule.probability;
                if (fires && i + rule.lag < spec.snapshots) {
                    timeline[i + rule.lag].push_back(
                        {f.subject, rule.effect, f.object, static_cast<Timestamp>(i + rule.lag) * spec.interval});
                }
            }
        }
    }

    Dataset d;
    for (std::size_t e = 0; e < spec.entities; ++e) d.entity_names.push_back("entity_" + std::to_string(e));
    for (std::size_t r = 0; r < spec.relations; ++r) d.relation_names.push_back("relation_" + std::to_string(r));
    const std::size_t test_from = spec.snapshots - test_snapshots(spec.snapshots);
    const std::size_t valid_from = test_from - valid_snapshots(spec.snapshots);
    for (std::size_t i = 0; i < spec.snapshots; ++i) {
        auto& split = i >= test_from ? d.test : i >= valid_from ? d.valid : d.train;
        split.insert(split.end(), timeline[i].begin(), timeline[i].end());
    }
    d.interval = spec.interval;
    return d;
}

}  // namespace onsep
