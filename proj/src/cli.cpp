#include "onsep/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "onsep/errors.hpp"
#include "onsep/eval.hpp"
#include "onsep/log.hpp"
#include "onsep/rulebase.hpp"
#include "onsep/scorer.hpp"
#include "onsep/synthetic.hpp"
#include "onsep/tkg.hpp"

namespace onsep::cli {

namespace {

// `--history-len` falls back to ONSEP_HISTORY_LEN.
std::string env_name(const std::string& flag) {
    std::string name = "ONSEP_";
    for (char c : flag.substr(2)) name += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

template <typename T>
CLI::Option* option(CLI::App* app, const std::string& flag, T& target, const std::string& help) {
    return app->add_option(flag, target, help)->envname(env_name(flag))->capture_default_str();
}

CLI::Option* flag(CLI::App* app, const std::string& name, bool& target, const std::string& help) {
    return app->add_flag(name, target, help)->envname(env_name(name));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path);
    out << content;
}

struct RunArgs {
    OnlineConfig cfg;
    std::string dataset_dir;
    std::string scorer = "stub";
    std::string rules_in;
    std::string rules_out;
    std::string metrics_out;
    bool disable_mining = false;
};

struct SynthArgs {
    std::string spec;
    std::string out;
    std::optional<std::uint64_t> seed;
};

struct RulesArgs {
    std::string rules;
    std::string dataset_dir;
    std::string out;
};

Dataset load_augmented(const std::string& dir) {
    return add_inverse_relations(load_dataset(dir));
}

int cmd_run(RunArgs& args, std::ostream& out, std::ostream& err) {
    auto& cfg = args.cfg;
    cfg.scorer = args.scorer == "http" ? ScorerKind::Http : ScorerKind::Stub;
    cfg.mining_enabled = !args.disable_mining;
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    }
    out << "config: " << describe(cfg) << "\n";

    const Dataset dataset = load_augmented(args.dataset_dir);
    out << "dataset: " << dataset.entity_count() << " entities, " << dataset.raw_relation_count() << " relations, "
        << dataset.test.size() / 2 << " test facts\n";

    std::optional<CausalRuleBase> initial;
    if (!args.rules_in.empty()) {
        auto imported = import_rules(read_file(args.rules_in), dataset.relation_names);
        out << "rules-in: " << imported.rules.size() << " rules loaded, " << imported.dropped << " dropped\n";
        initial = std::move(imported.rules);
    }

    std::unique_ptr<ScorerBackend> backend;
    if (cfg.scorer == ScorerKind::Http) {
        backend = std::make_unique<HttpBackend>(
            HttpBackendOptions{cfg.scorer_url, std::chrono::milliseconds(cfg.scorer_timeout_ms)});
    } else {
        backend = std::make_unique<StubBackend>();
    }

    auto result = run_online(dataset, cfg, *backend, std::move(initial));
    const auto& m = result.metrics;

    char row[128];
    out << "+--------+--------+\n| metric | value  |\n+--------+--------+\n";
    for (int k : {1, 3, 10}) {
        std::snprintf(row, sizeof row, "| hit@%-2d | %.4f |\n", k, m.hit_at(k));
        out << row;
    }
    std::snprintf(row, sizeof row, "| count  | %6zu |\n", m.queries);
    out << row << "+--------+--------+\n";

    if (!args.metrics_out.empty()) write_file(args.metrics_out, format_metrics(m));
    if (!args.rules_out.empty()) write_file(args.rules_out, export_rules(result.rules, dataset.relation_names));

    if (m.incomplete) {
        err << "error: scorer unavailable, metrics are partial (" << result.failed_predictions
            << " failed predictions)\n";
        return kRuntimeFailure;
    }
    return kSuccess;
}

int cmd_synth(const SynthArgs& args, std::ostream& out) {
    auto spec = parse_synthetic_spec(read_file(args.spec));
    if (args.seed) spec.seed = *args.seed;
    auto dataset = generate_synthetic(spec);
    write_dataset(dataset, args.out);
    out << "wrote " << args.out << ": " << dataset.train.size() << " train, " << dataset.valid.size() << " valid, "
        << dataset.test.size() << " test facts\n";
    return kSuccess;
}

int cmd_export_rules(const RulesArgs& args, std::ostream& out) {
    const Dataset dataset = load_augmented(args.dataset_dir);
    auto imported = import_rules(read_file(args.rules), dataset.relation_names);
    auto text = export_rules(imported.rules, dataset.relation_names);
    if (args.out.empty()) {
        out << text;
    } else {
        write_file(args.out, text);
        out << "exported " << imported.rules.size() << " rules, dropped " << imported.dropped << "\n";
    }
    return kSuccess;
}

int cmd_import_check(const RulesArgs& args, std::ostream& out) {
    const Dataset dataset = load_augmented(args.dataset_dir);
    const std::string text = read_file(args.rules);
    auto imported = import_rules(text, dataset.relation_names);

    // Distinct relation names mentioned by the (already validated) file.
    std::set<std::string> referenced;
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::istringstream cols(line);
        std::string effect, cause;
        std::getline(cols, effect, '\t');
        std::getline(cols, cause, '\t');
        referenced.insert(effect);
        referenced.insert(cause);
    }
    const std::set<std::string> known(dataset.relation_names.begin(), dataset.relation_names.end());
    std::size_t resolvable = 0;
    for (const auto& name : referenced) resolvable += known.contains(name);

    char pct[32];
    std::snprintf(pct, sizeof pct, "%.1f%%",
                  referenced.empty() ? 100.0 : 100.0 * static_cast<double>(resolvable) / static_cast<double>(referenced.size()));
    out << "rules: " << imported.rules.size() + imported.dropped << "\n"
        << "kept: " << imported.rules.size() << "\n"
        << "dropped: " << imported.dropped << "\n"
        << "relations referenced: " << referenced.size() << "\n"
        << "relations resolvable: " << resolvable << " (" << pct << ")\n";
    return kSuccess;
}

}  // namespace

std::string describe(const OnlineConfig& cfg) {
    std::ostringstream s;
    s << "history_len=" << cfg.history_len << " lambda=" << cfg.lambda << " alpha=" << cfg.alpha
      << " theta=" << cfg.theta << " beta=" << cfg.beta << " topk_rules=" << cfg.topk_rules
      << " conf_min=" << cfg.conf_min << " scorer=" << (cfg.scorer == ScorerKind::Http ? "http" : "stub")
      << " scorer_url=" << cfg.scorer_url << " scorer_timeout_ms=" << cfg.scorer_timeout_ms
      << " mining=" << (cfg.mining_enabled ? "on" : "off") << " workers=" << cfg.workers << " seed=" << cfg.seed;
    return s.str();
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Online neural-symbolic event forecasting over temporal knowledge graphs", "onsep"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run the online predict/reveal/mine loop over a dataset");
    option(run_cmd, "--dataset-dir", run.dataset_dir, "Directory with entity2id/relation2id/train/valid/test")
        ->required();
    option(run_cmd, "--history-len", run.cfg.history_len, "History length L")->check(CLI::PositiveNumber);
    option(run_cmd, "--lambda", run.cfg.lambda, "Weight of the long-term branch")->check(CLI::Range(0.0, 1.0));
    option(run_cmd, "--alpha", run.cfg.alpha, "Model probability vs coverage in rule confidence")
        ->check(CLI::Range(0.0, 1.0));
    option(run_cmd, "--theta", run.cfg.theta, "Confidence smoothing factor")->check(CLI::Range(0.0, 1.0));
    option(run_cmd, "--beta", run.cfg.beta, "Confidence growth factor")->check(CLI::NonNegativeNumber);
    option(run_cmd, "--topk-rules", run.cfg.topk_rules, "Rules kept per feedback item")->check(CLI::PositiveNumber);
    option(run_cmd, "--conf-min", run.cfg.conf_min, "Rule pruning threshold")->check(CLI::Range(0.0, 1.0));
    option(run_cmd, "--scorer", run.scorer, "Scoring backend")->check(CLI::IsMember({"stub", "http"}));
    option(run_cmd, "--scorer-url", run.cfg.scorer_url, "Base URL of the /score service");
    option(run_cmd, "--scorer-timeout-ms", run.cfg.scorer_timeout_ms, "Per-request scorer timeout")
        ->check(CLI::PositiveNumber);
    option(run_cmd, "--rules-in", run.rules_in, "Rule file to preload (inductive setting)");
    option(run_cmd, "--rules-out", run.rules_out, "Write the final rule base here");
    option(run_cmd, "--metrics-out", run.metrics_out, "Write Hit@k metrics here");
    flag(run_cmd, "--disable-mining", run.disable_mining, "Freeze the rule base");
    option(run_cmd, "--workers", run.cfg.workers, "Parallel prediction workers")->check(CLI::PositiveNumber);
    option(run_cmd, "--seed", run.cfg.seed, "Recorded with the run configuration");

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with planted rules");
    option(synth_cmd, "--spec", synth.spec, "key=value spec file")->required();
    option(synth_cmd, "--out", synth.out, "Output dataset directory")->required();
    option(synth_cmd, "--seed", synth.seed, "Override the spec's seed");

    RulesArgs export_args;
    auto* export_cmd = app.add_subcommand("export-rules", "Remap a rule file onto a dataset and re-export it");
    option(export_cmd, "--rules-in", export_args.rules, "Rule file")->required();
    option(export_cmd, "--dataset-dir", export_args.dataset_dir, "Target dataset")->required();
    option(export_cmd, "--out", export_args.out, "Output rule file (stdout if omitted)");

    RulesArgs check_args;
    auto* check_cmd = app.add_subcommand("import-check", "Report how much of a rule file resolves on a dataset");
    option(check_cmd, "--rules", check_args.rules, "Rule file")->required();
    option(check_cmd, "--dataset-dir", check_args.dataset_dir, "Target dataset")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kUsageError;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(run, out, err);
        if (synth_cmd->parsed()) return cmd_synth(synth, out);
        if (export_cmd->parsed()) return cmd_export_rules(export_args, out);
        if (check_cmd->parsed()) return cmd_import_check(check_args, out);
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return kUsageError;
}

}  // namespace onsep::cli
