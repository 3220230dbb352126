#pragma once

// Scores predicted solution texts against gold samples: ten accuracies and
// the six-way error breakdown.

#include "ptool/codec.hpp"
#include "ptool/error.hpp"
#include "ptool/grammar.hpp"
#include "ptool/model.hpp"
#include "ptool/parallel.hpp"

#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ptool {

enum class ErrorCategory { t_wrong, t_missing, t_excessive, p_missing, p_excessive, p_error };

inline constexpr std::array<ErrorCategory, 6> all_error_categories = {
    ErrorCategory::t_wrong,     ErrorCategory::t_missing,   ErrorCategory::t_excessive,
    ErrorCategory::p_missing,   ErrorCategory::p_excessive, ErrorCategory::p_error};

inline std::string_view to_string(ErrorCategory c) {
    switch (c) {
    case ErrorCategory::t_wrong: return "T-wrong";
    case ErrorCategory::t_missing: return "T-missing";
    case ErrorCategory::t_excessive: return "T-excessive";
    case ErrorCategory::p_missing: return "P-missing";
    case ErrorCategory::p_excessive: return "P-excessive";
    case ErrorCategory::p_error: return "P-error";
    }
    return "?";
}

inline std::optional<ErrorCategory> error_category_from(std::string_view s) {
    for (auto c : all_error_categories)
        if (to_string(c) == s) return c;
    return std::nullopt;
}

struct Count {
    std::size_t correct = 0;
    std::size_t total = 0;
    friend bool operator==(const Count&, const Count&) = default;
};

struct SampleEval {
    std::string sample_id;
    std::string user_id;
    bool format_ok = false;
    bool platform_ok = false;
    bool name_ok = false;
    bool param_ok = false;
    bool value_ok = false;
    Count query_params;
    Count profile_params;
    std::set<ErrorCategory> errors;

    [[nodiscard]] bool correct() const { return value_ok && platform_ok; }
    friend bool operator==(const SampleEval&, const SampleEval&) = default;
};

namespace detail {

using CallKey = std::pair<std::string, std::string>;

inline CallKey call_key(const ToolCall& c) { return {c.platform, c.function}; }

inline const Value* arg_of(const ToolCall& c, const std::string& name) {
    for (const auto& [n, v] : c.args)
        if (n == name) return &v;
    return nullptr;
}

} // namespace detail

/// Score one prediction. Never throws on bad predictions; they just score low.
inline SampleEval evaluate_sample(std::string_view pred_text, const Sample& gold,
                                  [[maybe_unused]] const Registry* registry = nullptr) {
    SampleEval e;
    e.sample_id = gold.id;
    e.user_id = gold.user_id;
    const auto& gcalls = gold.gold.calls;
    for (std::size_t i = 0; i < gcalls.size(); ++i)
        for (const auto& [name, _] : gcalls[i].args) {
            auto it = gold.provenance.tags.find({i, name});
            const bool profile = it != gold.provenance.tags.end() && it->second == Origin::profile;
            ++(profile ? e.profile_params : e.query_params).total;
        }

    auto parsed = parse_solution(pred_text);
    if (!parsed) return e;
    e.format_ok = true;
    const auto& pcalls = parsed.value().calls;

    std::multiset<std::string> gp, pp;
    std::multiset<detail::CallKey> gk, pk;
    for (const auto& c : gcalls) gp.insert(c.platform), gk.insert(detail::call_key(c));
    for (const auto& c : pcalls) pp.insert(c.platform), pk.insert(detail::call_key(c));
    e.platform_ok = gp == pp;
    e.name_ok = gk == pk;

    // gold index -> predicted index, same key, first unused in textual order
    std::vector<std::optional<std::size_t>> match(gcalls.size());
    std::vector<bool> used(pcalls.size(), false);
    for (std::size_t g = 0; g < gcalls.size(); ++g)
        for (std::size_t p = 0; p < pcalls.size(); ++p)
            if (!used[p] && detail::call_key(pcalls[p]) == detail::call_key(gcalls[g])) {
                used[p] = true;
                match[g] = p;
                break;
            }

    bool names_equal = true, values_equal = true;
    for (std::size_t g = 0; g < gcalls.size(); ++g) {
        if (!match[g]) continue;
        const ToolCall& gc = gcalls[g];
        const ToolCall& pc = pcalls[*match[g]];
        for (const auto& [name, gv] : gc.args) {
            const Value* pv = detail::arg_of(pc, name);
            if (!pv) {
                names_equal = false;
                values_equal = false;
                e.errors.insert(ErrorCategory::p_missing);
                continue;
            }
            if (canonical_equal(*pv, gv)) {
                auto it = gold.provenance.tags.find({g, name});
                const bool profile = it != gold.provenance.tags.end() && it->second == Origin::profile;
                ++(profile ? e.profile_params : e.query_params).correct;
            } else {
                values_equal = false;
                e.errors.insert(ErrorCategory::p_error);
            }
        }
        for (const auto& [name, _] : pc.args)
            if (!detail::arg_of(gc, name)) {
                names_equal = false;
                values_equal = false;
                e.errors.insert(ErrorCategory::p_excessive);
            }
    }
    e.param_ok = e.name_ok && names_equal;
    e.value_ok = e.param_ok && values_equal;

    std::size_t unmatched_gold = 0, unmatched_pred = 0;
    for (const auto& m : match) unmatched_gold += m ? 0 : 1;
    for (bool u : used) unmatched_pred += u ? 0 : 1;
    if (unmatched_gold > 0 && unmatched_pred > 0) e.errors.insert(ErrorCategory::t_wrong);
    if (unmatched_gold > unmatched_pred) e.errors.insert(ErrorCategory::t_missing);
    if (unmatched_pred > unmatched_gold) e.errors.insert(ErrorCategory::t_excessive);
    return e;
}

/// Predictions keyed by sample id; a missing prediction scores as unparsable.
inline std::vector<SampleEval> evaluate_batch(const std::vector<Sample>& samples,
                                              const std::map<std::string, std::string>& predictions,
                                              int workers = 1) {
    std::vector<SampleEval> out(samples.size());
    parallel_for(samples.size(), workers, [&](std::size_t i) {
        auto it = predictions.find(samples[i].id);
        out[i] = evaluate_sample(it == predictions.end() ? std::string_view{} : std::string_view{it->second},
                                 samples[i]);
    });
    return out;
}

struct Ratio {
    std::size_t numerator = 0;
    std::size_t denominator = 0;

    /// Absent when the denominator is zero.
    [[nodiscard]] std::optional<double> value() const {
        if (denominator == 0) return std::nullopt;
        return static_cast<double>(numerator) / static_cast<double>(denominator);
    }
    friend bool operator==(const Ratio&, const Ratio&) = default;
};

enum class UserSplit { trained, untrained };

struct EvalReport {
    Ratio format, platform, query_param, profile_param, tool_name, tool_param, tool_value;
    Ratio trained_overall, untrained_overall, overall;
    std::map<ErrorCategory, std::size_t> error_histogram;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;

    /// (json key, ratio) in table order.
    [[nodiscard]] std::vector<std::pair<std::string, const Ratio*>> metrics() const {
        return {{"format", &format},
                {"platform", &platform},
                {"query_param", &query_param},
                {"profile_param", &profile_param},
                {"tool_name", &tool_name},
                {"tool_param", &tool_param},
                {"tool_value", &tool_value},
                {"trained_overall", &trained_overall},
                {"untrained_overall", &untrained_overall},
                {"overall", &overall}};
    }
};

/// Counts only over evals whose prediction parsed.
inline std::map<ErrorCategory, std::size_t> error_histogram(const std::vector<SampleEval>& evals) {
    std::map<ErrorCategory, std::size_t> out;
    for (auto c : all_error_categories) out[c] = 0;
    for (const auto& e : evals)
        if (e.format_ok)
            for (auto c : e.errors) ++out[c];
    return out;
}

inline EvalReport compute_report(const std::vector<SampleEval>& evals,
                                 const std::map<std::string, UserSplit>& user_split) {
    EvalReport r;
    for (const auto& e : evals) {
        auto it = user_split.find(e.user_id);
        if (it == user_split.end())
            throw Error(ErrorCode::missing_split, "user " + e.user_id + " has no split assignment");
        auto bump = [](Ratio& ratio, bool hit) {
            ++ratio.denominator;
            ratio.numerator += hit ? 1 : 0;
        };
        bump(r.format, e.format_ok);
        bump(r.platform, e.platform_ok);
        bump(r.tool_name, e.name_ok);
        bump(r.tool_param, e.param_ok);
        bump(r.tool_value, e.value_ok);
        bump(r.overall, e.correct());
        bump(it->second == UserSplit::trained ? r.trained_overall : r.untrained_overall, e.correct());
        r.query_param.numerator += e.query_params.correct;
        r.query_param.denominator += e.query_params.total;
        r.profile_param.numerator += e.profile_params.correct;
        r.profile_param.denominator += e.profile_params.total;
    }
    r.error_histogram = error_histogram(evals);
    return r;
}

inline std::string format_ratio(const Ratio& r) {
    const auto v = r.value();
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
    return buf;
}

/// Fixed-width table in the usual column order, percentages with two decimals.
inline std::string report_table(const EvalReport& r, const std::string& model) {
    static const char* heads[] = {"Format", "Platform", "Query", "Profile", "T-name",
                                  "T-param", "T-value", "Trained", "Untrained", "Overall"};
    std::string out;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-24s", "Model");
    out += buf;
    for (const char* h : heads) {
        std::snprintf(buf, sizeof buf, "%10s", h);
        out += buf;
    }
    out += "\n";
    std::snprintf(buf, sizeof buf, "%-24s", model.c_str());
    out += buf;
    for (const auto& [_, ratio] : r.metrics()) {
        std::snprintf(buf, sizeof buf, "%10s", format_ratio(*ratio).c_str());
        out += buf;
    }
    out += "\n\nErrors (parsable predictions only):";
    for (const auto& [c, n] : r.error_histogram) out += " " + std::string(to_string(c)) + "=" + std::to_string(n);
    out += "\n";
    return out;
}

inline Json to_json(const EvalReport& r, const std::string& model) {
    Json j;
    j["model"] = model;
    Json metrics = Json::object();
    for (const auto& [name, ratio] : r.metrics()) {
        Json m;
        m["numerator"] = ratio->numerator;
        m["denominator"] = ratio->denominator;
        const auto v = ratio->value();
        m["value"] = v ? Json(*v) : Json(nullptr);
        metrics[name] = std::move(m);
    }
    j["metrics"] = std::move(metrics);
    Json errors = Json::object();
    for (const auto& [c, n] : r.error_histogram) errors[std::string(to_string(c))] = n;
    j["errors"] = std::move(errors);
    return j;
}

inline Json to_json(const SampleEval& e) {
    Json j;
    j["sample_id"] = e.sample_id;
    j["user_id"] = e.user_id;
    j["format_ok"] = e.format_ok;
    j["platform_ok"] = e.platform_ok;
    j["name_ok"] = e.name_ok;
    j["param_ok"] = e.param_ok;
    j["value_ok"] = e.value_ok;
    j["query_params"] = Json::array({e.query_params.correct, e.query_params.total});
    j["profile_params"] = Json::array({e.profile_params.correct, e.profile_params.total});
    Json errs = Json::array();
    for (auto c : e.errors) errs.push_back(std::string(to_string(c)));
    j["errors"] = std::move(errs);
    return j;
}

inline SampleEval sample_eval_from_json(const Json& j) {
    codec::require_fields(j, {"sample_id", "user_id", "format_ok", "platform_ok", "name_ok", "param_ok", "value_ok",
                              "query_params", "profile_params", "errors"},
                          "sample eval");
    SampleEval e;
    e.sample_id = codec::str(j, "sample_id", "sample eval");
    e.user_id = codec::str(j, "user_id", "sample eval");
    auto flag = [&](const char* k) {
        if (!j[k].is_boolean()) throw Error(ErrorCode::schema_mismatch, std::string("sample eval: ") + k + " must be boolean");
        return j[k].get<bool>();
    };
    e.format_ok = flag("format_ok");
    e.platform_ok = flag("platform_ok");
    e.name_ok = flag("name_ok");
    e.param_ok = flag("param_ok");
    e.value_ok = flag("value_ok");
    auto count = [&](const char* k) {
        const auto& a = j[k];
        if (!a.is_array() || a.size() != 2 || !a[0].is_number_unsigned() || !a[1].is_number_unsigned())
            throw Error(ErrorCode::schema_mismatch, std::string("sample eval: ") + k + " must be [correct, total]");
        return Count{a[0].get<std::size_t>(), a[1].get<std::size_t>()};
    };
    e.query_params = count("query_params");
    e.profile_params = count("profile_params");
    if (!j["errors"].is_array()) throw Error(ErrorCode::schema_mismatch, "sample eval: errors must be an array");
    for (const auto& c : j["errors"]) {
        auto cat = c.is_string() ? error_category_from(c.get<std::string>()) : std::nullopt;
        if (!cat) throw Error(ErrorCode::schema_mismatch, "sample eval: unknown error category");
        e.errors.insert(*cat);
    }
    return e;
}

} // namespace ptool
