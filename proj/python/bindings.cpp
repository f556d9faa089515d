#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "onsep/dcrm.hpp"
#include "onsep/dhag.hpp"
#include "onsep/errors.hpp"
#include "onsep/eval.hpp"
#include "onsep/rulebase.hpp"
#include "onsep/scorer.hpp"
#include "onsep/synthetic.hpp"
#include "onsep/tkg.hpp"

namespace py = pybind11;
using namespace onsep;

namespace {

// Calls back into Python for logits; lets tests plug in arbitrary scorers.
class PyBackend final : public ScorerBackend {
public:
    explicit PyBackend(py::function fn) : fn_(std::move(fn)) {}

    std::vector<double> logits(const PromptText& prompt) const override {
        py::gil_scoped_acquire gil;
        return fn_(prompt.text, prompt.expected_labels).cast<std::vector<double>>();
    }
    std::string name() const override { return "python"; }

private:
    py::function fn_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Online temporal knowledge graph forecasting with dynamic causal rule mining.";

    auto base = py::register_exception<Error>(m, "OnsepError", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
    py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<BackendError>(m, "BackendError", base.ptr());

    py::class_<Quadruple>(m, "Quadruple")
        .def(py::init<EntityId, RelationId, EntityId, Timestamp>(), py::arg("subject"), py::arg("relation"),
             py::arg("object"), py::arg("t"))
        .def_readwrite("subject", &Quadruple::subject)
        .def_readwrite("relation", &Quadruple::relation)
        .def_readwrite("object", &Quadruple::object)
        .def_readwrite("t", &Quadruple::t)
        .def("as_tuple", [](const Quadruple& q) { return py::make_tuple(q.subject, q.relation, q.object, q.t); })
        .def(py::self == py::self)
        .def("__repr__", [](const Quadruple& q) {
            return "Quadruple(" + std::to_string(q.subject) + ", " + std::to_string(q.relation) + ", " +
                   std::to_string(q.object) + ", " + std::to_string(q.t) + ")";
        });

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def_readwrite("entity_names", &Dataset::entity_names)
        .def_readwrite("relation_names", &Dataset::relation_names)
        .def_readwrite("train", &Dataset::train)
        .def_readwrite("valid", &Dataset::valid)
        .def_readwrite("test", &Dataset::test)
        .def_readwrite("interval", &Dataset::interval)
        .def_readonly("inverse_augmented", &Dataset::inverse_augmented);

    m.def("load_dataset", &load_dataset, py::arg("dir"));
    m.def("write_dataset", &write_dataset, py::arg("dataset"), py::arg("dir"));
    m.def("add_inverse_relations", &add_inverse_relations, py::arg("dataset"));

    py::class_<TkgStore>(m, "TkgStore")
        .def(py::init<>())
        .def("insert", py::overload_cast<const std::vector<Quadruple>&>(&TkgStore::insert), py::arg("facts"))
        .def("history_for_subject", &TkgStore::history_for_subject, py::arg("subject"),
             py::arg("before") = kEndOfTime)
        .def("facts_at", &TkgStore::facts_at, py::arg("t"))
        .def("__len__", &TkgStore::size);

    py::class_<Query>(m, "Query")
        .def(py::init<EntityId, RelationId, Timestamp>(), py::arg("subject"), py::arg("relation"), py::arg("t"))
        .def_readwrite("subject", &Query::subject)
        .def_readwrite("relation", &Query::relation)
        .def_readwrite("t", &Query::t);

    py::enum_<MappingKind>(m, "MappingKind").value("ENTITY", MappingKind::Entity).value("RELATION", MappingKind::Relation);

    py::class_<LabelMapping>(m, "LabelMapping")
        .def("label_of", &LabelMapping::label_of)
        .def("key_of", &LabelMapping::key_of)
        .def_property_readonly("keys", &LabelMapping::keys)
        .def("__len__", &LabelMapping::size);
    m.def(
        "build_label_mapping",
        [](const std::vector<std::uint32_t>& c, MappingKind kind) { return build_label_mapping(c, kind); },
        py::arg("candidates"), py::arg("kind") = MappingKind::Entity);

    py::class_<PromptText>(m, "PromptText")
        .def_readonly("text", &PromptText::text)
        .def_readonly("expected_labels", &PromptText::expected_labels);
    m.def("build_history_prompt", &build_history_prompt, py::arg("query"), py::arg("chain"), py::arg("mapping"));
    m.def("build_cause_prompt", &build_cause_prompt, py::arg("effect_name"), py::arg("candidates"));

    py::class_<ScorerBackend>(m, "ScorerBackend")
        .def("logits", &ScorerBackend::logits)
        .def_property_readonly("name", &ScorerBackend::name);
    py::class_<StubBackend, ScorerBackend>(m, "StubBackend").def(py::init<>());
    py::class_<HttpBackend, ScorerBackend>(m, "HttpBackend")
        .def(py::init([](std::string url, int timeout_ms) {
                 return HttpBackend({std::move(url), std::chrono::milliseconds(timeout_ms)});
             }),
             py::arg("base_url"), py::arg("timeout_ms") = 30000);
    py::class_<PyBackend, ScorerBackend>(m, "PythonBackend")
        .def(py::init<py::function>(), py::arg("fn"),
             "Wraps fn(prompt_text, labels) -> list of logits as a scoring backend.");

    m.def("score", &score, py::arg("backend"), py::arg("prompt"));
    m.def(
        "normalize",
        [](const std::vector<double>& logits, std::optional<std::vector<Label>> subset) {
            return subset ? normalize(logits, *subset).probabilities : normalize(logits).probabilities;
        },
        py::arg("logits"), py::arg("subset") = py::none());

    py::class_<CandidateCause>(m, "CandidateCause")
        .def_readonly("relation", &CandidateCause::relation)
        .def_readonly("support", &CandidateCause::support)
        .def_readonly("coverage", &CandidateCause::coverage)
        .def_readonly("probability", &CandidateCause::probability);
    py::class_<RuleProposal>(m, "RuleProposal")
        .def_readonly("effect", &RuleProposal::effect)
        .def_readonly("cause", &RuleProposal::cause)
        .def_readonly("confidence", &RuleProposal::confidence)
        .def_readonly("t", &RuleProposal::t);
    m.def("filter_candidate_causes", &filter_candidate_causes, py::arg("history"), py::arg("target"));
    m.def("assess_causality", &assess_causality, py::arg("effect"), py::arg("causes"), py::arg("backend"),
          py::arg("relation_names"));
    m.def("build_rules", &build_rules, py::arg("effect"), py::arg("assessed"), py::arg("k"), py::arg("alpha"),
          py::arg("t"));

    py::class_<CausalRule>(m, "CausalRule")
        .def_readonly("effect", &CausalRule::effect)
        .def_readonly("cause", &CausalRule::cause)
        .def_readonly("confidence", &CausalRule::confidence)
        .def_readonly("last_updated", &CausalRule::last_updated);
    py::class_<CausalRuleBase>(m, "CausalRuleBase")
        .def(py::init<>())
        .def(
            "upsert",
            [](CausalRuleBase& rb, RelationId e, RelationId c, double conf, Timestamp t, double theta, double beta) {
                return rb.upsert(e, c, conf, t, {theta, beta});
            },
            py::arg("effect"), py::arg("cause"), py::arg("conf"), py::arg("t"), py::arg("theta") = 0.25,
            py::arg("beta") = 0.2)
        .def("maintain", &CausalRuleBase::maintain, py::arg("conf_min"))
        .def("recall",
             [](const CausalRuleBase& rb, RelationId effect) {
                 auto rules = rb.recall(effect);
                 return std::vector<CausalRule>(rules.begin(), rules.end());
             })
        .def("all", &CausalRuleBase::all)
        .def("__len__", &CausalRuleBase::size);
    m.def(
        "export_rules",
        [](const CausalRuleBase& rb, const std::vector<std::string>& names) { return export_rules(rb, names); },
        py::arg("rules"), py::arg("relation_names"));
    m.def(
        "import_rules",
        [](const std::string& text, const std::vector<std::string>& names) {
            auto r = import_rules(text, names);
            return py::make_tuple(std::move(r.rules), r.dropped);
        },
        py::arg("text"), py::arg("relation_names"));

    py::class_<OnlineConfig>(m, "OnlineConfig")
        .def(py::init<>())
        .def_readwrite("history_len", &OnlineConfig::history_len)
        .def_readwrite("lambda_", &OnlineConfig::lambda)
        .def_readwrite("alpha", &OnlineConfig::alpha)
        .def_readwrite("theta", &OnlineConfig::theta)
        .def_readwrite("beta", &OnlineConfig::beta)
        .def_readwrite("topk_rules", &OnlineConfig::topk_rules)
        .def_readwrite("conf_min", &OnlineConfig::conf_min)
        .def_readwrite("mining_enabled", &OnlineConfig::mining_enabled)
        .def_readwrite("workers", &OnlineConfig::workers)
        .def("validate", &OnlineConfig::validate);

    py::class_<RankedEntity>(m, "RankedEntity")
        .def_readonly("entity", &RankedEntity::entity)
        .def_readonly("probability", &RankedEntity::probability);
    py::class_<Prediction>(m, "Prediction")
        .def_readonly("ranked", &Prediction::ranked)
        .def_property_readonly("distribution", [](const Prediction& p) { return p.distribution.probabilities; })
        .def_readonly("no_history", &Prediction::no_history)
        .def_readonly("degraded", &Prediction::degraded);
    m.def("retrieve_short", &retrieve_short, py::arg("store"), py::arg("query"), py::arg("history_len"));
    m.def("retrieve_long", &retrieve_long, py::arg("store"), py::arg("rules"), py::arg("query"),
          py::arg("history_len"));
    m.def(
        "ensemble",
        [](const std::vector<double>& d1, const std::vector<double>& d2, double lambda) {
            return ensemble({d1}, {d2}, lambda).probabilities;
        },
        py::arg("d1"), py::arg("d2"), py::arg("lam"));
    m.def("predict", &predict, py::arg("store"), py::arg("rules"), py::arg("query"), py::arg("backend"),
          py::arg("config"), py::call_guard<py::gil_scoped_release>());

    py::class_<Metrics>(m, "Metrics")
        .def_readonly("queries", &Metrics::queries)
        .def_readonly("hits1", &Metrics::hits1)
        .def_readonly("hits3", &Metrics::hits3)
        .def_readonly("hits10", &Metrics::hits10)
        .def_readonly("incomplete", &Metrics::incomplete)
        .def("hit_at", &Metrics::hit_at);
    m.def(
        "time_aware_rank",
        [](const std::vector<RankedEntity>& ranked, EntityId target, const std::vector<EntityId>& truths) {
            return time_aware_rank(ranked, target, {truths.begin(), truths.end()});
        },
        py::arg("ranked"), py::arg("target"), py::arg("truths"));
    m.def("format_metrics", &format_metrics);
    m.def(
        "run_online",
        [](const Dataset& d, const OnlineConfig& cfg, const ScorerBackend& backend,
           std::optional<CausalRuleBase> initial) {
            RunResult r;
            {
                py::gil_scoped_release release;
                r = run_online(d, cfg, backend, std::move(initial));
            }
            return py::make_tuple(r.metrics, std::move(r.rules));
        },
        py::arg("dataset"), py::arg("config"), py::arg("backend"), py::arg("initial_rules") = py::none());

    py::class_<PlantedRule>(m, "PlantedRule")
        .def(py::init<RelationId, RelationId, std::size_t, double>(), py::arg("cause"), py::arg("effect"),
             py::arg("lag"), py::arg("probability"));
    py::class_<SyntheticSpec>(m, "SyntheticSpec")
        .def(py::init<>())
        .def_readwrite("entities", &SyntheticSpec::entities)
        .def_readwrite("relations", &SyntheticSpec::relations)
        .def_readwrite("snapshots", &SyntheticSpec::snapshots)
        .def_readwrite("rules", &SyntheticSpec::rules)
        .def_readwrite("noise_rate", &SyntheticSpec::noise_rate)
        .def_readwrite("seed", &SyntheticSpec::seed)
        .def_readwrite("cause_events", &SyntheticSpec::cause_events);
    m.def("parse_synthetic_spec", &parse_synthetic_spec, py::arg("text"));
    m.def("generate_synthetic", &generate_synthetic, py::arg("spec"));
}
