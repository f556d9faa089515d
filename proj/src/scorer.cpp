#include "onsep/scorer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "onsep/errors.hpp"

namespace onsep {

Label LabelMapping::add(std::uint32_t key) {
    auto [it, inserted] = labels_.try_emplace(key, static_cast<Label>(keys_.size()));
    if (inserted) keys_.push_back(key);
    return it->second;
}

std::optional<Label> LabelMapping::label_of(std::uint32_t key) const {
    auto it = labels_.find(key);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
}

LabelMapping build_label_mapping(std::span<const std::uint32_t> candidates, MappingKind kind) {
    if (candidates.empty()) {
        throw ArgumentError("label mapping needs at least one candidate");
    }
    LabelMapping m(kind);
    for (auto c : candidates) m.add(c);
    return m;
}

namespace {

std::vector<Label> all_labels(std::size_t n) {
    std::vector<Label> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<Label>(i);
    return labels;
}

// Consumes a run of digits; returns false if there is none.
bool take_number(std::string_view& s, std::uint64_t& out) {
    std::size_t n = 0;
    out = 0;
    while (n < s.size() && std::isdigit(static_cast<unsigned char>(s[n]))) {
        out = out * 10 + static_cast<std::uint64_t>(s[n] - '0');
        ++n;
    }
    s.remove_prefix(n);
    return n > 0;
}

bool take_char(std::string_view& s, char c) {
    if (s.empty() || s.front() != c) return false;
    s.remove_prefix(1);
    return true;
}

// Matches `{t}:[{s},{r},{label}.{object}]` and yields the label.
std::optional<Label> history_line_label(std::string_view line) {
    std::uint64_t v = 0, label = 0;
    if (!take_number(line, v) || !take_char(line, ':') || !take_char(line, '[')) return std::nullopt;
    if (!take_number(line, v) || !take_char(line, ',')) return std::nullopt;
    if (!take_number(line, v) || !take_char(line, ',')) return std::nullopt;
    if (!take_number(line, label) || !take_char(line, '.')) return std::nullopt;
    if (!take_number(line, v) || !take_char(line, ']') || !line.empty()) return std::nullopt;
    return static_cast<Label>(label);
}

}  // namespace

PromptText build_history_prompt(const Query& query, const EventChain& chain, const LabelMapping& mapping) {
    if (mapping.empty()) {
        throw ArgumentError("history prompt needs a non-empty label mapping");
    }
    PromptText prompt;
    std::string& text = prompt.text;
    for (const auto& e : chain) {
        auto label = mapping.label_of(e.object);
        if (!label) {
            throw MappingError("object " + std::to_string(e.object) + " has no label");
        }
        text += std::to_string(e.t) + ":[" + std::to_string(e.subject) + "," + std::to_string(e.relation) + "," +
                std::to_string(*label) + "." + std::to_string(e.object) + "]\n";
    }
    text += std::to_string(query.t) + ":[" + std::to_string(query.subject) + "," + std::to_string(query.relation) + ",";
    prompt.expected_labels = all_labels(mapping.size());
    return prompt;
}

PromptText build_cause_prompt(std::string_view effect_name,
                              const std::vector<std::pair<Label, std::string>>& candidates) {
    if (candidates.empty()) {
        throw ArgumentError("cause prompt needs at least one candidate");
    }
    PromptText prompt;
    std::string& text = prompt.text;
    text += "Your task is selecting the most appropriate reason for the result event. The result event is ";
    text += effect_name;
    text += ".\nBelow is a list of possible reasons:\n";
    for (const auto& [label, cause] : candidates) {
        text += std::to_string(label) + ". " + cause + "\n";
        prompt.expected_labels.push_back(label);
    }
    text += "The most appropriate reason is:";
    return prompt;
}

std::vector<double> StubBackend::logits(const PromptText& prompt) const {
    std::unordered_map<Label, double> by_label;
    std::optional<Label> last;
    std::string_view text = prompt.text;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        if (auto label = history_line_label(line)) {
            by_label[*label] += 1.0;
            last = label;
        }
    }
    if (last) by_label[*last] += 0.5;

    std::vector<double> out;
    out.reserve(prompt.expected_labels.size());
    for (auto label : prompt.expected_labels) {
        auto it = by_label.find(label);
        out.push_back(it == by_label.end() ? 0.0 : it->second);
    }
    return out;
}

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
    const std::string& url = options_.base_url;
    auto scheme_end = url.find("://");
    if (url.empty() || scheme_end == std::string::npos) {
        throw ConfigError("scorer URL must look like http://host[:port][/prefix], got '" + url + "'");
    }
    auto path_start = url.find('/', scheme_end + 3);
    host_ = url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::vector<double> HttpBackend::logits(const PromptText& prompt) const {
    nlohmann::json body;
    body["prompt"] = prompt.text;
    auto& labels = body["labels"] = nlohmann::json::array();
    for (auto label : prompt.expected_labels) labels.push_back(std::to_string(label));
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));

        httplib::Client client(host_);
        client.set_connection_timeout(options_.timeout);
        client.set_read_timeout(options_.timeout);
        client.set_write_timeout(options_.timeout);
        auto res = client.Post(prefix_ + "/score", payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw ProtocolError("scorer returned HTTP " + std::to_string(res->status));
        }

        nlohmann::json reply;
        try {
            reply = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("scorer response is not JSON: ") + e.what());
        }
        if (!reply.is_object() || !reply.contains("logits") || !reply["logits"].is_array()) {
            throw ProtocolError("scorer response lacks a \"logits\" array");
        }
        std::vector<double> out;
        out.reserve(reply["logits"].size());
        for (const auto& v : reply["logits"]) {
            if (!v.is_number()) throw ProtocolError("non-numeric logit in scorer response");
            out.push_back(v.get<double>());
        }
        return out;
    }
    throw BackendError("scorer at " + host_ + " unreachable: " + last_error, true);
}

std::vector<double> score(const ScorerBackend& backend, const PromptText& prompt) {
    auto logits = backend.logits(prompt);
    if (logits.size() != prompt.expected_labels.size()) {
        throw ProtocolError("backend returned " + std::to_string(logits.size()) + " logits for " +
                            std::to_string(prompt.expected_labels.size()) + " labels");
    }
    for (double v : logits) {
        if (!std::isfinite(v)) throw ProtocolError("backend returned a non-finite logit");
    }
    return logits;
}

ScoreDistribution normalize(std::span<const double> logits, std::span<const Label> subset) {
    if (subset.empty()) {
        throw ArgumentError("softmax subset is empty");
    }
    double top = -INFINITY;
    for (auto label : subset) {
        if (label >= logits.size()) {
            throw ArgumentError("label " + std::to_string(label) + " outside logit vector");
        }
        if (!std::isfinite(logits[label])) {
            throw ArgumentError("non-finite logit for label " + std::to_string(label));
        }
        top = std::max(top, logits[label]);
    }

    ScoreDistribution d;
    d.probabilities.assign(logits.size(), 0.0);
    std::vector<bool> member(logits.size(), false);
    for (auto label : subset) member[label] = true;
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!member[i]) continue;
        d.probabilities[i] = std::exp(logits[i] - top);
        sum += d.probabilities[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (member[i]) d.probabilities[i] /= sum;
    }
    return d;
}

ScoreDistribution normalize(std::span<const double> logits) {
    auto labels = all_labels(logits.size());
    return normalize(logits, labels);
}

}  // namespace onsep
