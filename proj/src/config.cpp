#include "onsep/config.hpp"

#include "onsep/errors.hpp"

namespace onsep {

namespace {

void require_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ConfigError(std::string(name) + " must lie in [0,1], got " + std::to_string(v));
    }
}

}  // namespace

void OnlineConfig::validate() const {
    if (history_len < 1) throw ConfigError("history-len must be >= 1");
    if (topk_rules < 1) throw ConfigError("topk-rules must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    require_unit(lambda, "lambda");
    require_unit(alpha, "alpha");
    require_unit(theta, "theta");
    require_unit(conf_min, "conf-min");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (scorer == ScorerKind::Http && scorer_url.empty()) {
        throw ConfigError("the http scorer needs a scorer URL");
    }
    if (scorer_timeout_ms <= 0) throw ConfigError("scorer timeout must be positive");
}

}  // namespace onsep
