#pragma once

// Stage orchestration shared by the command-line tool and the end-to-end
// tests. Each stage reads its inputs from the data directory, writes its
// outputs there and records a fingerprint in manifest.json; rerunning a
// stage whose fingerprint is unchanged does nothing.

#include "ptool/evalkit.hpp"
#include "ptool/gateway.hpp"
#include "ptool/profilegen.hpp"
#include "ptool/prompts.hpp"
#include "ptool/querygen.hpp"
#include "ptool/remote_backend.hpp"
#include "ptool/store.hpp"
#include "ptool/toolgen.hpp"
#include "ptool/verify.hpp"

#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ptool {

struct PipelineConfig {
    std::filesystem::path data_dir = "data/out";
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> prompts_dir;

    struct ScenarioSpec {
        std::string name;
        std::string description;
    };
    std::vector<ScenarioSpec> scenarios;

    ToolgenConfig toolgen;

    std::vector<int> k_per_layer = {2, 2, 2};
    FeatureTreeOptions feature_tree;
    int behaviors_per_scenario = 5;

    QuerygenOptions querygen;
    int verify_repair_budget = -1;
    int workers = 1;

    std::size_t untrained_user_count = 6;
    double trained_test_fraction = 0.0626;

    std::string backend = "scripted";  // scripted | remote
    std::optional<std::filesystem::path> transcript;
    RemoteOptions remote;
    GatewayOptions gateway;

    std::string review_host = "127.0.0.1";
    int review_port = 8080;
    std::size_t review_page_size = 20;

    /// Original JSON, used for stage fingerprints.
    Json raw = Json::object();
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw Error(ErrorCode::config_invalid, where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw Error(ErrorCode::config_invalid, "unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read_opt(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw Error(ErrorCode::config_invalid, where + "." + key + " has the wrong type");
    }
}

} // namespace detail

/// Relative paths are resolved against `base` (the config file's directory).
inline PipelineConfig parse_config(const Json& j, const std::filesystem::path& base = {}) {
    using detail::check_keys;
    using detail::read_opt;
    check_keys(j, {"data_dir", "seed", "prompts_dir", "scenarios", "toolgen", "profilegen", "querygen", "verify",
                   "split", "gateway", "review", "workers"},
               "config");
    PipelineConfig c;
    c.raw = j;
    auto resolve = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p; };
    std::string s;
    if (j.contains("data_dir")) {
        read_opt(j, "data_dir", s, "config");
        c.data_dir = resolve(s);
    }
    if (!j.contains("seed")) throw Error(ErrorCode::config_invalid, "config.seed is required");
    read_opt(j, "seed", c.seed, "config");
    if (j.contains("prompts_dir")) {
        read_opt(j, "prompts_dir", s, "config");
        c.prompts_dir = resolve(s);
    }
    read_opt(j, "workers", c.workers, "config");

    if (!j.contains("scenarios") || !j["scenarios"].is_array() || j["scenarios"].empty())
        throw Error(ErrorCode::config_invalid, "config.scenarios must be a non-empty array");
    for (const auto& sj : j["scenarios"]) {
        check_keys(sj, {"name", "description"}, "scenario");
        PipelineConfig::ScenarioSpec spec;
        read_opt(sj, "name", spec.name, "scenario");
        read_opt(sj, "description", spec.description, "scenario");
        if (trim(spec.name).empty()) throw Error(ErrorCode::config_invalid, "scenario name is empty");
        c.scenarios.push_back(spec);
    }

    if (j.contains("toolgen")) {
        const auto& t = j["toolgen"];
        check_keys(t, {"platforms_per_scenario", "apis_per_platform", "max_depth", "regen_budget", "repair_budget"},
                   "toolgen");
        read_opt(t, "platforms_per_scenario", c.toolgen.platforms_per_scenario, "toolgen");
        read_opt(t, "apis_per_platform", c.toolgen.apis_per_platform, "toolgen");
        read_opt(t, "max_depth", c.toolgen.max_depth, "toolgen");
        read_opt(t, "regen_budget", c.toolgen.regen_budget, "toolgen");
        read_opt(t, "repair_budget", c.toolgen.repair_budget, "toolgen");
    }
    if (j.contains("profilegen")) {
        const auto& p = j["profilegen"];
        check_keys(p, {"k_per_layer", "threshold", "round_cap", "behaviors_per_scenario", "repair_budget"}, "profilegen");
        read_opt(p, "k_per_layer", c.k_per_layer, "profilegen");
        read_opt(p, "threshold", c.feature_tree.threshold, "profilegen");
        read_opt(p, "round_cap", c.feature_tree.round_cap, "profilegen");
        read_opt(p, "behaviors_per_scenario", c.behaviors_per_scenario, "profilegen");
        read_opt(p, "repair_budget", c.feature_tree.repair_budget, "profilegen");
    }
    if (j.contains("querygen")) {
        const auto& q = j["querygen"];
        check_keys(q, {"queries_per_user_scenario", "profile_dependent_floor", "withheld_fields", "repair_budget"},
                   "querygen");
        read_opt(q, "queries_per_user_scenario", c.querygen.queries_per_user_scenario, "querygen");
        read_opt(q, "profile_dependent_floor", c.querygen.profile_dependent_floor, "querygen");
        read_opt(q, "withheld_fields", c.querygen.withheld_fields, "querygen");
        read_opt(q, "repair_budget", c.querygen.repair_budget, "querygen");
    }
    if (j.contains("verify")) {
        check_keys(j["verify"], {"repair_budget"}, "verify");
        read_opt(j["verify"], "repair_budget", c.verify_repair_budget, "verify");
    }
    if (j.contains("split")) {
        const auto& sp = j["split"];
        check_keys(sp, {"untrained_user_count", "trained_test_fraction"}, "split");
        read_opt(sp, "untrained_user_count", c.untrained_user_count, "split");
        read_opt(sp, "trained_test_fraction", c.trained_test_fraction, "split");
    }
    if (j.contains("gateway")) {
        const auto& g = j["gateway"];
        check_keys(g, {"backend", "transcript", "model_id", "endpoint", "api_key_env", "generation_temperature",
                       "judge_temperature", "max_tokens", "repair_budget", "cache_dir", "max_in_flight",
                       "max_retries", "timeout_seconds"},
                   "gateway");
        read_opt(g, "backend", c.backend, "gateway");
        if (g.contains("transcript")) {
            read_opt(g, "transcript", s, "gateway");
            c.transcript = resolve(s);
        }
        read_opt(g, "model_id", c.gateway.model_id, "gateway");
        read_opt(g, "endpoint", c.remote.endpoint, "gateway");
        read_opt(g, "api_key_env", c.remote.api_key_env, "gateway");
        read_opt(g, "generation_temperature", c.gateway.generation_temperature, "gateway");
        read_opt(g, "judge_temperature", c.gateway.judge_temperature, "gateway");
        read_opt(g, "max_tokens", c.gateway.max_tokens, "gateway");
        read_opt(g, "repair_budget", c.gateway.repair_budget, "gateway");
        read_opt(g, "max_in_flight", c.gateway.max_in_flight, "gateway");
        read_opt(g, "max_retries", c.remote.max_retries, "gateway");
        read_opt(g, "timeout_seconds", c.remote.timeout_seconds, "gateway");
        if (g.contains("cache_dir")) {
            read_opt(g, "cache_dir", s, "gateway");
            c.gateway.cache_dir = resolve(s);
        }
    }
    if (j.contains("review")) {
        const auto& r = j["review"];
        check_keys(r, {"host", "port", "page_size"}, "review");
        read_opt(r, "host", c.review_host, "review");
        read_opt(r, "port", c.review_port, "review");
        read_opt(r, "page_size", c.review_page_size, "review");
    }

    if (c.backend != "scripted" && c.backend != "remote")
        throw Error(ErrorCode::config_invalid, "gateway.backend must be \"scripted\" or \"remote\"");
    if (c.toolgen.platforms_per_scenario < 2) throw Error(ErrorCode::config_invalid, "toolgen.platforms_per_scenario must be >= 2");
    if (c.toolgen.apis_per_platform < 1) throw Error(ErrorCode::config_invalid, "toolgen.apis_per_platform must be >= 1");
    if (c.k_per_layer.empty()) throw Error(ErrorCode::config_invalid, "profilegen.k_per_layer is empty");
    for (int k : c.k_per_layer)
        if (k < 1) throw Error(ErrorCode::config_invalid, "profilegen.k_per_layer entries must be >= 1");
    if (c.behaviors_per_scenario < 1) throw Error(ErrorCode::config_invalid, "profilegen.behaviors_per_scenario must be >= 1");
    if (c.querygen.queries_per_user_scenario < 1)
        throw Error(ErrorCode::config_invalid, "querygen.queries_per_user_scenario must be >= 1");
    if (!(c.trained_test_fraction >= 0.0 && c.trained_test_fraction < 1.0))
        throw Error(ErrorCode::config_invalid, "split.trained_test_fraction must be in [0, 1)");
    if (c.workers < 1) throw Error(ErrorCode::config_invalid, "workers must be >= 1");
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path& file) {
    if (!std::filesystem::exists(file)) throw Error(ErrorCode::config_invalid, "config file not found: " + file.string());
    Json j = Json::parse(read_file(file), nullptr, false, true);
    if (j.is_discarded()) throw Error(ErrorCode::config_invalid, file.string() + ": not valid JSON");
    return parse_config(j, file.parent_path());
}

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"gen-tools", "gen-profiles", "gen-behaviors", "gen-queries",
                                                   "verify",    "split",        "eval",          "serve-review"};
    return names;
}

/// Upstream stage each guarded stage needs.
inline std::optional<std::string> stage_dependency(const std::string& stage) {
    if (stage == "gen-profiles") return "gen-tools";
    if (stage == "gen-behaviors") return "gen-profiles";
    if (stage == "gen-queries") return "gen-behaviors";
    if (stage == "verify") return "gen-queries";
    if (stage == "split") return "verify";
    if (stage == "eval") return "split";
    if (stage == "serve-review") return "verify";
    return std::nullopt;
}

struct StageOutcome {
    bool skipped = false;
    std::string summary;
};

class Pipeline {
public:
    /// `backend` overrides the configured one (tests inject scripted backends).
    explicit Pipeline(PipelineConfig config, std::shared_ptr<Backend> backend = nullptr, std::ostream* log = nullptr)
        : config_(std::move(config)), store_(config_.data_dir), log_(log) {
        prompts_ = config_.prompts_dir ? PromptSet::load(*config_.prompts_dir) : PromptSet{};
        backend_ = std::move(backend);
    }

    [[nodiscard]] const PipelineConfig& config() const { return config_; }
    [[nodiscard]] const DatasetStore& store() const { return store_; }

    StageOutcome run(const std::string& stage, const std::optional<std::string>& model = std::nullopt,
                     const std::optional<std::filesystem::path>& predictions = std::nullopt) {
        if (std::find(stage_names().begin(), stage_names().end(), stage) == stage_names().end())
            throw Error(ErrorCode::config_invalid, "unknown stage '" + stage + "'");
        CorpusManifest manifest = store_.load_manifest();
        if (auto dep = stage_dependency(stage); dep && !manifest.stages.contains(*dep))
            throw Error(ErrorCode::missing_dependency, "stage " + stage + " needs " + *dep + " to run first");
        if (stage == "eval") return run_eval(manifest, model.value_or(config_.gateway.model_id), predictions);
        if (stage == "serve-review") throw Error(ErrorCode::precondition, "serve-review is started by the command-line tool");

        const std::string fp = fingerprint(stage, manifest);
        if (auto it = manifest.stages.find(stage); it != manifest.stages.end() && it->second.fingerprint == fp)
            return {true, stage + ": up to date"};

        StageOutcome out;
        if (stage == "gen-tools") out = gen_tools();
        else if (stage == "gen-profiles") out = gen_profiles();
        else if (stage == "gen-behaviors") out = gen_behaviors();
        else if (stage == "gen-queries") out = gen_queries();
        else if (stage == "verify") out = verify();
        else if (stage == "split") out = split(manifest);

        // downstream results no longer match their inputs
        bool downstream = false;
        for (const auto& name : stage_names()) {
            if (downstream) manifest.stages.erase(name);
            if (name == stage) downstream = true;
        }
        manifest.seed = config_.seed;
        manifest.stages[stage] = {fp};
        store_.refresh_manifest(manifest);
        store_.save_manifest(manifest);
        return out;
    }

    /// Sequential run of the synthesis stages, then split.
    void run_all() {
        for (const char* s : {"gen-tools", "gen-profiles", "gen-behaviors", "gen-queries", "verify", "split"}) {
            auto o = run(s);
            note(o.summary);
        }
    }

    Gateway& gateway() {
        if (!gateway_) {
            std::shared_ptr<Backend> backend = backend_;
            if (!backend) {
                if (config_.backend == "scripted") {
                    if (!config_.transcript)
                        throw Error(ErrorCode::config_invalid, "scripted backend needs gateway.transcript");
                    backend = ScriptedBackend::from_file(*config_.transcript);
                } else {
                    backend = std::make_shared<RemoteBackend>(config_.remote);
                }
            }
            GatewayOptions g = config_.gateway;
            g.seed = static_cast<std::int64_t>(config_.seed);
            gateway_ = std::make_unique<Gateway>(std::move(backend), g);
        }
        return *gateway_;
    }

private:
    void note(const std::string& s) const {
        if (log_) *log_ << s << "\n";
    }

    [[nodiscard]] std::string fingerprint(const std::string& stage, const CorpusManifest& manifest) const {
        Json j;
        j["stage"] = stage;
        j["seed"] = config_.seed;
        j["model"] = config_.gateway.model_id;
        auto section = [&](const char* key) { return config_.raw.contains(key) ? config_.raw[key] : Json(nullptr); };
        if (stage == "gen-tools") {
            j["scenarios"] = section("scenarios");
            j["toolgen"] = section("toolgen");
            std::string prompts;
            for (const auto& [name, text] : prompts_.all()) prompts += name + "\x1f" + text + "\x1e";
            j["prompts"] = sha256_hex(prompts);
        } else if (stage == "gen-profiles" || stage == "gen-behaviors") {
            j["profilegen"] = section("profilegen");
        } else if (stage == "gen-queries") {
            j["querygen"] = section("querygen");
        } else if (stage == "verify") {
            j["verify"] = section("verify");
        } else if (stage == "split") {
            j["split"] = section("split");
        }
        if (auto dep = stage_dependency(stage))
            if (auto it = manifest.stages.find(*dep); it != manifest.stages.end()) j["upstream"] = it->second.fingerprint;
        return sha256_hex(j.dump());
    }

    StageOutcome gen_tools() {
        std::vector<Scenario> scenarios;
        for (const auto& s : config_.scenarios) scenarios.push_back(make_scenario(s.name, s.description));
        ToolLibrary lib = build_tool_library(scenarios, config_.toolgen, gateway(), prompts_);
        store_.save_registry(lib.registry);
        return {false, "gen-tools: " + std::to_string(lib.registry.platforms.size()) + " platforms, " +
                           std::to_string(lib.registry.apis.size()) + " APIs"};
    }

    StageOutcome gen_profiles() {
        const Registry reg = store_.load_registry();
        FeatureTree tree = build_feature_tree(reg, gateway(), config_.feature_tree, prompts_);
        store_.save_feature_tree(tree);
        auto profiles = assign_characteristics(tree, AssignmentPlan{config_.k_per_layer}, gateway(), prompts_,
                                               config_.feature_tree.repair_budget);
        store_.save_profiles(profiles);
        return {false, "gen-profiles: feature tree with " + std::to_string(tree.nodes.size()) + " nodes, " +
                           std::to_string(profiles.size()) + " profiles"};
    }

    StageOutcome gen_behaviors() {
        const Registry reg = store_.load_registry();
        auto profiles = store_.load_profiles();
        parallel_for(profiles.size(), config_.workers, [&](std::size_t i) {
            profiles[i] = generate_behaviors(profiles[i], reg, config_.behaviors_per_scenario, gateway(), prompts_,
                                             config_.feature_tree.repair_budget);
        });
        store_.save_profiles(profiles);
        return {false, "gen-behaviors: history for " + std::to_string(profiles.size()) + " profiles"};
    }

    StageOutcome gen_queries() {
        const Registry reg = store_.load_registry();
        const auto profiles = store_.load_profiles();
        QuerygenOptions q = config_.querygen;
        q.workers = config_.workers;
        auto samples = generate_samples(profiles, reg, gateway(), q, prompts_);
        const double fraction = profile_dependent_fraction(samples);
        if (fraction < q.profile_dependent_floor)
            throw Error(ErrorCode::target_unreachable,
                        "only " + std::to_string(fraction) + " of generated queries depend on the profile (floor " +
                            std::to_string(q.profile_dependent_floor) + ")");
        store_.save_samples("drafts.jsonl", samples);
        return {false, "gen-queries: " + std::to_string(samples.size()) + " samples"};
    }

    StageOutcome verify() {
        const Registry reg = store_.load_registry();
        const auto profiles = store_.load_profiles();
        const auto drafts = store_.load_samples("drafts.jsonl");
        auto result = filter_corpus(drafts, profiles, reg, gateway(), config_.workers, config_.verify_repair_budget, prompts_);
        store_.save_samples("samples.jsonl", result.accepted);
        store_.save_rejected(result.rejected);
        return {false, "verify: " + std::to_string(result.accepted.size()) + " accepted, " +
                           std::to_string(result.rejected.size()) + " rejected"};
    }

    StageOutcome split(CorpusManifest& manifest) {
        const auto samples = store_.load_samples("samples.jsonl");
        std::vector<std::string> users;
        for (const auto& p : store_.load_profiles()) users.push_back(p.user_id);
        auto r = split_corpus(samples, users, config_.untrained_user_count, config_.trained_test_fraction, config_.seed);
        store_.save_samples("splits/train.jsonl", r.train);
        store_.save_samples("splits/test.jsonl", r.test);
        manifest.untrained_users = r.untrained_users;
        manifest.split_counts = {{"train", r.train.size()},
                                 {"test_trained", r.test_trained},
                                 {"test_untrained", r.test_untrained}};
        return {false, "split: " + std::to_string(r.train.size()) + " train, " + std::to_string(r.test_trained) +
                           " trained-test, " + std::to_string(r.test_untrained) + " untrained-test"};
    }

    StageOutcome run_eval(const CorpusManifest& manifest, const std::string& model,
                          const std::optional<std::filesystem::path>& predictions) {
        const auto test = store_.load_samples("splits/test.jsonl");
        const auto file = predictions.value_or(store_.path(store_.predictions_file(model)));
        if (!std::filesystem::exists(file))
            throw Error(ErrorCode::missing_dependency, "no predictions at " + file.string());
        const auto preds = DatasetStore::load_predictions(file);
        std::vector<std::string> users;
        for (const auto& p : store_.load_profiles()) users.push_back(p.user_id);
        SplitResult held;
        held.untrained_users = manifest.untrained_users;
        const auto evals = evaluate_batch(test, preds, config_.workers);
        const EvalReport report = compute_report(evals, held.user_split(users));
        store_.save_report(model, to_json(report, model));
        std::vector<Json> lines;
        for (const auto& e : evals) lines.push_back(to_json(e));
        write_jsonl(store_.path("reports/" + model + ".evals.jsonl"), lines);
        return {false, report_table(report, model)};
    }

    PipelineConfig config_;
    DatasetStore store_;
    std::ostream* log_;
    PromptSet prompts_;
    std::shared_ptr<Backend> backend_;
    std::unique_ptr<Gateway> gateway_;
};

} // namespace ptool
