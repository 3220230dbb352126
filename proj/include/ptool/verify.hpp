#pragma once

// Rule checks against the registry, then an LLM judge over
// (profile, query, solution). Produces the accepted corpus.

#include "ptool/gateway.hpp"
#include "ptool/grammar.hpp"
#include "ptool/model.hpp"
#include "ptool/parallel.hpp"
#include "ptool/prompts.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ptool {

enum class ViolationKind {
    unparsable,
    unknown_platform,
    unknown_tool,
    hallucinated_parameter,
    missing_required_parameter,
    type_mismatch,
};

inline std::string_view to_string(ViolationKind k) {
    switch (k) {
    case ViolationKind::unparsable: return "unparsable";
    case ViolationKind::unknown_platform: return "unknown-platform";
    case ViolationKind::unknown_tool: return "unknown-tool";
    case ViolationKind::hallucinated_parameter: return "hallucinated-parameter";
    case ViolationKind::missing_required_parameter: return "missing-required-parameter";
    case ViolationKind::type_mismatch: return "type-mismatch";
    }
    return "?";
}

struct Violation {
    ViolationKind kind = ViolationKind::unparsable;
    std::size_t call = 0;
    std::optional<std::string> param;  // set for parameter-level kinds only
    std::string detail;

    friend bool operator==(const Violation&, const Violation&) = default;
};

namespace detail {

inline std::optional<std::string> kind_problem(const ParamSpec& spec, const Value& v) {
    if (v.is_null()) {
        if (spec.required) return "required parameter is null";
        return std::nullopt;
    }
    const std::string got(kind_name(v.kind()));
    switch (spec.kind) {
    case ParamKind::string:
        if (!v.is_text()) return "expected string, got " + got;
        break;
    case ParamKind::number:
        if (!v.is_number()) return "expected number, got " + got;
        break;
    case ParamKind::integer:
        if (v.is_integer()) break;
        if (v.is_real() && std::isfinite(v.as_real()) && v.as_real() == std::floor(v.as_real())) break;
        return "expected integer, got " + got;
    case ParamKind::boolean:
        if (!v.is_bool()) return "expected boolean, got " + got;
        break;
    case ParamKind::array:
        if (!v.is_list()) return "expected array, got " + got;
        break;
    case ParamKind::object:
        if (!v.is_map()) return "expected object, got " + got;
        break;
    case ParamKind::enumeration: {
        if (!v.is_text()) return "expected enum string, got " + got;
        const auto& allowed = spec.enum_values.value_or(std::vector<std::string>{});
        if (std::find(allowed.begin(), allowed.end(), v.as_text()) == allowed.end())
            return "'" + v.as_text() + "' is not an allowed value";
        break;
    }
    }
    return std::nullopt;
}

} // namespace detail

/// Pure check of a solution against the registry. Empty result means valid.
inline std::vector<Violation> rule_validate(const Solution& solution, const Registry& registry) {
    std::vector<Violation> out;
    for (std::size_t i = 0; i < solution.calls.size(); ++i) {
        const ToolCall& call = solution.calls[i];
        if (registry.platforms_named(call.platform).empty()) {
            out.push_back({ViolationKind::unknown_platform, i, std::nullopt, "no platform named " + call.platform});
            continue;
        }
        const ToolApi* api = registry.find_tool(call.platform, call.function);
        if (!api) {
            out.push_back({ViolationKind::unknown_tool, i, std::nullopt,
                           call.platform + " has no API named " + call.function});
            continue;
        }
        for (const auto& [name, value] : call.args) {
            const ParamSpec* spec = api->param(name);
            if (!spec) {
                out.push_back({ViolationKind::hallucinated_parameter, i, name, api->name + " has no parameter " + name});
                continue;
            }
            if (auto problem = detail::kind_problem(*spec, value))
                out.push_back({ViolationKind::type_mismatch, i, name, *problem});
        }
        for (const auto& spec : api->params) {
            if (!spec.required) continue;
            bool present = false;
            for (const auto& [name, _] : call.args) present = present || name == spec.name;
            if (!present)
                out.push_back({ViolationKind::missing_required_parameter, i, spec.name, "required by " + api->name});
        }
    }
    return out;
}

/// Same check starting from raw text; unparsable text yields one violation.
inline std::vector<Violation> rule_validate_text(std::string_view text, const Registry& registry) {
    auto parsed = parse_solution(text);
    if (!parsed) return {{ViolationKind::unparsable, 0, std::nullopt, parsed.error().message()}};
    return rule_validate(parsed.value(), registry);
}

enum class Check { pass, fail };

struct JudgeVerdict {
    bool pass = false;
    std::vector<std::string> reasons;
    Check param_correctness = Check::fail;
    Check hallucination = Check::fail;
    Check query_resolution = Check::fail;

    friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

inline std::string_view to_string(Check c) { return c == Check::pass ? "pass" : "fail"; }

inline JudgeVerdict model_verify(const UserProfile& profile, const std::string& query, const Solution& solution,
                                 const Registry& registry, Gateway& gateway, int repair_budget = -1,
                                 const PromptSet& prompts = {}) {
    std::vector<const Platform*> involved;
    for (const auto& c : solution.calls)
        for (const auto* p : registry.platforms_named(c.platform))
            if (std::find(involved.begin(), involved.end(), p) == involved.end()) involved.push_back(p);
    const std::string prompt = prompts.render("judge", {{"profile", render_profile(profile, true)},
                                                        {"apis", render_apis(registry, involved)},
                                                        {"query", query},
                                                        {"solution", serialize_solution(solution)}});
    const Shape shape = Shape::object({{"param_correctness", Shape::text()},
                                       {"hallucination", Shape::text()},
                                       {"query_resolution", Shape::text()}});
    Validator check = [](const Value& v) -> std::optional<Issue> {
        for (const char* key : {"param_correctness", "hallucination", "query_resolution"}) {
            const auto& s = v.find(key)->as_text();
            if (s != "pass" && s != "fail")
                return Issue{ErrorCode::verdict_unparsable, std::string(key) + " must be \"pass\" or \"fail\""};
        }
        if (const Value* r = v.find("reasons"); r && !r->is_list() && !r->is_null())
            return Issue{ErrorCode::verdict_unparsable, "reasons must be a list of strings"};
        return std::nullopt;
    };
    Value v;
    try {
        v = gateway.complete_structured(gateway.judge_request({{Role::user, prompt}}), shape, repair_budget, check);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::structure_failure || e.code() == ErrorCode::verdict_unparsable)
            throw Error(ErrorCode::verdict_unparsable, e.what());
        throw;
    }
    auto as_check = [&](const char* key) { return v.find(key)->as_text() == "pass" ? Check::pass : Check::fail; };
    JudgeVerdict out;
    out.param_correctness = as_check("param_correctness");
    out.hallucination = as_check("hallucination");
    out.query_resolution = as_check("query_resolution");
    out.pass = out.param_correctness == Check::pass && out.hallucination == Check::pass &&
               out.query_resolution == Check::pass;
    if (const Value* r = v.find("reasons"); r && r->is_list())
        for (const auto& item : r->as_list()) out.reasons.push_back(value_text(item));
    return out;
}

struct Rejection {
    Sample sample;
    std::vector<Violation> violations;
    std::optional<JudgeVerdict> verdict;
    std::string error;  // gateway or judge failure, empty otherwise

    [[nodiscard]] std::string reason() const {
        if (!violations.empty()) {
            std::string s;
            for (const auto& v : violations) s += (s.empty() ? "" : "; ") + std::string(to_string(v.kind)) + ": " + v.detail;
            return s;
        }
        if (!error.empty()) return error;
        if (verdict) {
            std::string s = "judge:";
            if (verdict->param_correctness == Check::fail) s += " param_correctness";
            if (verdict->hallucination == Check::fail) s += " hallucination";
            if (verdict->query_resolution == Check::fail) s += " query_resolution";
            return s;
        }
        return "rejected";
    }
};

struct FilterResult {
    std::vector<Sample> accepted;
    std::vector<Rejection> rejected;
};

/// Both tiers over a batch. Each input sample lands in exactly one output
/// list; input order is kept within each list.
inline FilterResult filter_corpus(const std::vector<Sample>& samples, const std::vector<UserProfile>& profiles,
                                  const Registry& registry, Gateway& gateway, int workers = 1,
                                  int repair_budget = -1, const PromptSet& prompts = {}) {
    std::map<std::string, const UserProfile*> by_id;
    for (const auto& p : profiles) by_id[p.user_id] = &p;

    struct Outcome {
        std::optional<Rejection> rejection;
        Sample sample;
    };
    std::vector<Outcome> outcomes(samples.size());
    parallel_for(samples.size(), workers, [&](std::size_t i) {
        Outcome& o = outcomes[i];
        o.sample = samples[i];
        auto violations = rule_validate(o.sample.gold, registry);
        if (!violations.empty()) {
            o.rejection = Rejection{o.sample, std::move(violations), std::nullopt, {}};
            return;
        }
        o.sample.status = SampleStatus::rule_checked;
        auto it = by_id.find(o.sample.user_id);
        if (it == by_id.end()) {
            o.rejection = Rejection{o.sample, {}, std::nullopt, "unknown user " + o.sample.user_id};
            return;
        }
        try {
            auto verdict = model_verify(*it->second, o.sample.query, o.sample.gold, registry, gateway, repair_budget,
                                        prompts);
            if (!verdict.pass) {
                o.rejection = Rejection{o.sample, {}, std::move(verdict), {}};
                return;
            }
        } catch (const Error& e) {
            o.rejection = Rejection{o.sample, {}, std::nullopt, e.what()};
            return;
        }
        o.sample.status = SampleStatus::model_verified;
    });

    FilterResult out;
    for (auto& o : outcomes) {
        if (o.rejection) {
            o.rejection->sample.status = SampleStatus::rejected;
            out.rejected.push_back(std::move(*o.rejection));
        } else {
            out.accepted.push_back(std::move(o.sample));
        }
    }
    return out;
}

} // namespace ptool
