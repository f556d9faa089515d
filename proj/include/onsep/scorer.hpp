#pragma once

// Prompt construction, numeric label mapping and candidate scoring.
//
// A backend reads the prompt and returns one logit per expected label.
// The stub is a pure function of the prompt text; the HTTP backend talks
// to an external inference service over the /score protocol.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "onsep/tkg.hpp"

namespace onsep {

using Label = std::uint32_t;

enum class MappingKind { Entity, Relation };

/// Bijection between candidate ids and dense integer labels. Labels are
/// handed out in first-appearance order.
class LabelMapping {
public:
    explicit LabelMapping(MappingKind kind = MappingKind::Entity) : kind_(kind) {}

    /// Label of `key`, assigning the next free label if it is new.
    Label add(std::uint32_t key);

    std::optional<Label> label_of(std::uint32_t key) const;
    std::uint32_t key_of(Label label) const { return keys_.at(label); }

    std::size_t size() const { return keys_.size(); }
    bool empty() const { return keys_.empty(); }
    MappingKind kind() const { return kind_; }
    const std::vector<std::uint32_t>& keys() const { return keys_; }

private:
    MappingKind kind_;
    std::vector<std::uint32_t> keys_;
    std::unordered_map<std::uint32_t, Label> labels_;
};

LabelMapping build_label_mapping(std::span<const std::uint32_t> candidates,
                                 MappingKind kind = MappingKind::Entity);

struct PromptText {
    std::string text;
    std::vector<Label> expected_labels;
};

/// Probabilities indexed by label.
struct ScoreDistribution {
    std::vector<double> probabilities;

    std::size_t size() const { return probabilities.size(); }
    double operator[](std::size_t i) const { return probabilities[i]; }
};

struct Query {
    EntityId subject = 0;
    RelationId relation = 0;
    Timestamp t = 0;

    friend bool operator==(const Query&, const Query&) = default;
};

/// One line per event, `{t}:[{s},{r},{label}.{object}]`, followed by the
/// open query line `{t_q}:[{s},{r},`. Lines are joined with '\n'.
PromptText build_history_prompt(const Query& query, const EventChain& chain, const LabelMapping& mapping);

PromptText build_cause_prompt(std::string_view effect_name,
                              const std::vector<std::pair<Label, std::string>>& candidates);

class ScorerBackend {
public:
    virtual ~ScorerBackend() = default;

    /// Raw logits, one per entry of prompt.expected_labels, same order.
    virtual std::vector<double> logits(const PromptText& prompt) const = 0;
    virtual std::string name() const = 0;
};

/// Deterministic frequency-plus-recency scorer.
///
/// logit(label) = number of history lines whose object label is `label`,
/// plus 0.5 if it is the object label of the last history line. Lines that
/// are not history lines are ignored, so a cause prompt scores all zeros.
class StubBackend final : public ScorerBackend {
public:
    std::vector<double> logits(const PromptText& prompt) const override;
    std::string name() const override { return "stub"; }
};

struct HttpBackendOptions {
    std::string base_url;
    std::chrono::milliseconds timeout{30000};
    int retries = 2;
};

/// Client for `POST /score` with body {"prompt", "labels"} and response
/// {"logits"}. All expected labels are scored in one request.
class HttpBackend final : public ScorerBackend {
public:
    explicit HttpBackend(HttpBackendOptions options);

    std::vector<double> logits(const PromptText& prompt) const override;
    std::string name() const override { return "http"; }

private:
    HttpBackendOptions options_;
    std::string host_;    // scheme://host[:port]
    std::string prefix_;  // path before /score, without trailing slash
};

/// Calls the backend and validates the response shape.
std::vector<double> score(const ScorerBackend& backend, const PromptText& prompt);

/// Softmax restricted to `subset`; labels outside it get probability 0.
ScoreDistribution normalize(std::span<const double> logits, std::span<const Label> subset);

/// normalize over every label.
ScoreDistribution normalize(std::span<const double> logits);

}  // namespace onsep
