#pragma once

// Query/solution pairs from two agents: a user agent that role-plays the
// profile and asks without revealing personal details, and an assistant agent
// that sees the whole profile plus platforms and APIs and answers in the call
// format.

#include "ptool/gateway.hpp"
#include "ptool/grammar.hpp"
#include "ptool/hash.hpp"
#include "ptool/model.hpp"
#include "ptool/parallel.hpp"
#include "ptool/prompts.hpp"
#include "ptool/toolgen.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ptool {

struct QuerygenOptions {
    /// Basic-feature labels containing any of these tokens are withheld from queries.
    std::vector<std::string> withheld_fields = {"username", "email", "password", "address", "location",
                                                "phone", "name", "birth", "card"};
    int queries_per_user_scenario = 18;
    double profile_dependent_floor = 0.5;
    int repair_budget = -1;
    int workers = 1;
};

struct AgentPrompt {
    enum class RoleKind { user_agent, assistant_agent };
    struct ProfileView {
        bool basic = false;
        bool implicit = false;
        bool history = false;
    };

    RoleKind role_kind = RoleKind::user_agent;
    ProfileView profile_view;
    std::string platform_info;
    std::string instructions;

    [[nodiscard]] std::vector<ChatMessage> messages(const std::string& query = {}) const {
        if (role_kind == RoleKind::user_agent) return {{Role::user, instructions}};
        return {{Role::system, instructions}, {Role::user, query}};
    }
};

/// Basic-feature values the user agent must not spell out.
inline std::vector<std::string> withheld_values(const UserProfile& profile, const QuerygenOptions& options) {
    std::vector<std::string> out;
    for (const auto& [label, value] : profile.basic_features) {
        const std::string l = lower(label);
        for (const auto& token : options.withheld_fields)
            if (l.find(lower(token)) != std::string::npos) {
                if (!trim(value).empty()) out.push_back(trim(value));
                break;
            }
    }
    return out;
}

inline std::optional<std::string> find_leak(const std::string& query, const std::vector<std::string>& withheld) {
    const std::string q = lower(query);
    for (const auto& v : withheld)
        if (q.find(lower(v)) != std::string::npos) return v;
    return std::nullopt;
}

inline AgentPrompt user_agent_prompt(const UserProfile& profile, const Scenario& scenario,
                                     const std::vector<const Platform*>& platforms, int index,
                                     const std::vector<std::string>& previous, const QuerygenOptions& options,
                                     const PromptSet& prompts = {}) {
    AgentPrompt p;
    p.role_kind = AgentPrompt::RoleKind::user_agent;
    p.profile_view = {true, true, false};
    p.platform_info = render_platforms(platforms);
    std::string withheld;
    for (const auto& [label, _] : profile.basic_features) {
        const std::string l = lower(label);
        for (const auto& token : options.withheld_fields)
            if (l.find(lower(token)) != std::string::npos) {
                withheld += (withheld.empty() ? "" : ", ") + label;
                break;
            }
    }
    std::string prev;
    if (!previous.empty()) {
        prev = "Requests you already made (ask for something different):\n";
        for (const auto& q : previous) prev += "- " + q + "\n";
    }
    p.instructions = prompts.render("user_agent", {{"user_id", profile.user_id},
                                                   {"scenario", scenario.name},
                                                   {"index", std::to_string(index)},
                                                   {"basic", render_feature_lines(profile.basic_features)},
                                                   {"implicit", render_feature_lines(profile.implicit_features)},
                                                   {"platforms", p.platform_info},
                                                   {"withheld", withheld.empty() ? "none" : withheld},
                                                   {"previous", prev}});
    return p;
}

inline AgentPrompt assistant_agent_prompt(const UserProfile& profile, const std::vector<const Platform*>& platforms,
                                          const Registry& registry, const PromptSet& prompts = {}) {
    AgentPrompt p;
    p.role_kind = AgentPrompt::RoleKind::assistant_agent;
    p.profile_view = {true, true, true};
    p.platform_info = render_platforms(platforms);
    p.instructions = prompts.render("assistant_agent", {{"profile", render_profile(profile, true)},
                                                        {"platforms", p.platform_info},
                                                        {"apis", render_apis(registry, platforms)}});
    return p;
}

/// One query from the user agent. Retries while a withheld value leaks.
inline std::string generate_query(const UserProfile& profile, const Scenario& scenario,
                                  const std::vector<const Platform*>& platforms, Gateway& gateway,
                                  const QuerygenOptions& options = {}, int index = 0,
                                  const std::vector<std::string>& previous = {}, const PromptSet& prompts = {}) {
    const auto prompt = user_agent_prompt(profile, scenario, platforms, index, previous, options, prompts);
    auto req = gateway.generation_request(prompt.messages());
    const auto withheld = withheld_values(profile, options);
    const int budget = options.repair_budget < 0 ? gateway.options().repair_budget : options.repair_budget;
    std::string last_problem;
    for (int attempt = 0; attempt <= budget; ++attempt) {
        std::string query = trim(gateway.complete(req));
        if (query.size() >= 2 && query.front() == '"' && query.back() == '"') query = trim(query.substr(1, query.size() - 2));
        std::string problem;
        if (query.empty()) problem = "the request is empty";
        else if (auto leak = find_leak(query, withheld)) problem = "the request reveals \"" + *leak + "\"";
        if (problem.empty()) return query;
        last_problem = problem;
        req.messages.push_back({Role::assistant, query.empty() ? "(empty)" : query});
        req.messages.push_back({Role::user, "Rewrite the request: " + problem +
                                                ". Refer to personal details indirectly. Reply with the request text only."});
    }
    throw Error(last_problem == "the request is empty" ? ErrorCode::structure_failure : ErrorCode::leakage_detected,
                last_problem);
}

/// Gold solution from the assistant agent, parsed with the call grammar.
inline Solution generate_solution(const UserProfile& profile, const std::string& query,
                                  const std::vector<const Platform*>& platforms, const Registry& registry,
                                  Gateway& gateway, int repair_budget = -1, const PromptSet& prompts = {}) {
    if (trim(query).empty()) throw Error(ErrorCode::precondition, "query is empty");
    const auto prompt = assistant_agent_prompt(profile, platforms, registry, prompts);
    auto req = gateway.generation_request(prompt.messages(query));
    const int budget = repair_budget < 0 ? gateway.options().repair_budget : repair_budget;
    std::string last;
    for (int attempt = 0; attempt <= budget; ++attempt) {
        const std::string text = gateway.complete(req);
        auto parsed = parse_solution(text);
        if (parsed) return std::move(parsed).value();
        last = parsed.error().message();
        req.messages.push_back({Role::assistant, text.empty() ? "(empty)" : text});
        req.messages.push_back({Role::user, "That answer could not be parsed (" + last +
                                                "). Answer again using only the {platform:[func(name=value)]} form."});
    }
    throw Error(ErrorCode::parse_failure, last);
}

/// Tag every gold parameter as coming from the profile or the query. A value
/// found only in the query (or only in the profile) is tagged directly; the
/// rest are adjudicated by the LLM.
inline Provenance annotate_provenance(const Sample& sample, const UserProfile& profile, Gateway& gateway,
                                      int repair_budget = -1, const PromptSet& prompts = {}) {
    std::vector<std::string> profile_texts;
    for (const auto& [_, v] : profile.basic_features) profile_texts.push_back(lower(v));
    for (const auto& [_, v] : profile.implicit_features) profile_texts.push_back(lower(v));
    for (const auto& [_, records] : profile.history)
        for (const auto& r : records) profile_texts.push_back(lower(r.action));
    const std::string query = lower(sample.query);

    Provenance out;
    for (std::size_t i = 0; i < sample.gold.calls.size(); ++i) {
        const ToolCall& call = sample.gold.calls[i];
        for (const auto& [name, value] : call.args) {
            const std::string text = lower(value_text(value));
            const bool in_query = !text.empty() && query.find(text) != std::string::npos;
            bool in_profile = false;
            for (const auto& p : profile_texts)
                if (!text.empty() && p.find(text) != std::string::npos) {
                    in_profile = true;
                    break;
                }
            if (in_query != in_profile) {
                out.tags[{i, name}] = in_query ? Origin::query : Origin::profile;
                continue;
            }
            Solution single{{call}};
            const std::string prompt = prompts.render("provenance", {{"call", std::to_string(i)},
                                                                     {"param", name},
                                                                     {"query", sample.query},
                                                                     {"profile", render_profile(profile, true)},
                                                                     {"call_text", serialize_solution(single)},
                                                                     {"value", value_text(value)}});
            Validator check = [](const Value& v) -> std::optional<Issue> {
                const auto& tag = v.find("tag")->as_text();
                if (tag != "profile" && tag != "query")
                    return Issue{ErrorCode::unresolvable_provenance, "tag must be \"profile\" or \"query\""};
                return std::nullopt;
            };
            Value verdict;
            try {
                verdict = gateway.complete_structured(gateway.judge_request({{Role::user, prompt}}),
                                                      Shape::object({{"tag", Shape::text()}}), repair_budget, check);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::structure_failure || e.code() == ErrorCode::unresolvable_provenance)
                    throw Error(ErrorCode::unresolvable_provenance, "parameter " + name + ": " + e.what());
                throw;
            }
            out.tags[{i, name}] = verdict.find("tag")->as_text() == "profile" ? Origin::profile : Origin::query;
        }
    }
    return out;
}

inline std::string sample_id(const std::string& user_id, const std::string& scenario, int index,
                             const std::string& query) {
    return stable_id("s", user_id + "\x1f" + scenario + "\x1f" + std::to_string(index) + "\x1f" + query);
}

/// All (user, scenario) pairs, `queries_per_user_scenario` samples each, in
/// profile order then scenario order. Pairs run concurrently when workers > 1;
/// each pair's exchanges stay sequential.
inline std::vector<Sample> generate_samples(const std::vector<UserProfile>& profiles, const Registry& registry,
                                            Gateway& gateway, const QuerygenOptions& options = {},
                                            const PromptSet& prompts = {}) {
    struct Pair {
        const UserProfile* profile;
        const Scenario* scenario;
    };
    std::vector<Pair> pairs;
    for (const auto& p : profiles)
        for (const auto& s : registry.scenarios) pairs.push_back({&p, &s});
    std::vector<std::vector<Sample>> results(pairs.size());
    parallel_for(pairs.size(), options.workers, [&](std::size_t idx) {
        const auto& [profile, scenario] = pairs[idx];
        const auto platforms = registry.platforms_in(scenario->id);
        std::vector<std::string> previous;
        for (int q = 0; q < options.queries_per_user_scenario; ++q) {
            Sample s;
            s.user_id = profile->user_id;
            s.scenario = scenario->name;
            s.query = generate_query(*profile, *scenario, platforms, gateway, options, q, previous, prompts);
            s.gold = generate_solution(*profile, s.query, platforms, registry, gateway, options.repair_budget, prompts);
            s.id = sample_id(s.user_id, s.scenario, q, s.query);
            s.provenance = annotate_provenance(s, *profile, gateway, options.repair_budget, prompts);
            s.status = SampleStatus::draft;
            previous.push_back(s.query);
            results[idx].push_back(std::move(s));
        }
    });
    std::vector<Sample> out;
    for (auto& r : results)
        for (auto& s : r) out.push_back(std::move(s));
    return out;
}

inline double profile_dependent_fraction(const std::vector<Sample>& samples) {
    if (samples.empty()) return 0.0;
    std::size_t n = 0;
    for (const auto& s : samples)
        if (s.profile_dependent()) ++n;
    return static_cast<double>(n) / static_cast<double>(samples.size());
}

} // namespace ptool
