#pragma once

// Reference scorer used as the oracle for evalkit. It shares only the
// grammar with the library and restates every metric directly:
//  - the k-th gold call with a given (platform, function) key pairs with the
//    k-th predicted call with that key;
//  - value equality is restated here (trimmed text, numeric identity of
//    integral reals, order-free maps);
//  - tool-level errors come from per-key surplus counts;
//  - ratios stay as integer pairs.

#include "ptool/grammar.hpp"
#include "ptool/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ptool::testing::oracle {

inline std::string strip(const std::string& s) {
    const char* ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline bool same(const Value& a, const Value& b);

inline bool same_number(const Value& a, const Value& b) {
    if (a.is_integer() && b.is_integer()) return a.as_integer() == b.as_integer();
    if (a.is_real() && b.is_real()) return a.as_real() == b.as_real();
    const Value& i = a.is_integer() ? a : b;
    const double r = a.is_integer() ? b.as_real() : a.as_real();
    if (std::floor(r) != r) return false;
    if (r < -9223372036854775808.0 || r >= 9223372036854775808.0) return false;
    return static_cast<std::int64_t>(r) == i.as_integer();
}

inline bool same(const Value& a, const Value& b) {
    if (a.is_number() && b.is_number()) return same_number(a, b);
    if (a.kind() != b.kind()) return false;
    if (a.is_text()) return strip(a.as_text()) == strip(b.as_text());
    if (a.is_list()) {
        if (a.as_list().size() != b.as_list().size()) return false;
        for (std::size_t i = 0; i < a.as_list().size(); ++i)
            if (!same(a.as_list()[i], b.as_list()[i])) return false;
        return true;
    }
    if (a.is_map()) {
        if (a.as_map().size() != b.as_map().size()) return false;
        for (const auto& [k, v] : a.as_map()) {
            const Value* w = b.find(k);
            if (!w || !same(v, *w)) return false;
        }
        return true;
    }
    return a == b;
}

struct Scored {
    bool format = false, platform = false, name = false, param = false, value = false;
    long query_hits = 0, query_total = 0, profile_hits = 0, profile_total = 0;
    std::set<std::string> errors;
};

inline std::pair<std::string, std::string> key_of(const ToolCall& c) { return {c.platform, c.function}; }

/// occurrence index of each call among calls with the same key
inline std::vector<int> occurrences(const std::vector<ToolCall>& calls) {
    std::map<std::pair<std::string, std::string>, int> seen;
    std::vector<int> out;
    for (const auto& c : calls) out.push_back(seen[key_of(c)]++);
    return out;
}

inline Scored score(const std::string& pred_text, const Sample& gold) {
    Scored s;
    const auto& g = gold.gold.calls;
    auto origin = [&](std::size_t i, const std::string& n) {
        auto it = gold.provenance.tags.find({i, n});
        return it != gold.provenance.tags.end() ? it->second : Origin::query;
    };
    for (std::size_t i = 0; i < g.size(); ++i)
        for (const auto& [n, _] : g[i].args) ++(origin(i, n) == Origin::profile ? s.profile_total : s.query_total);

    auto parsed = parse_solution(pred_text);
    if (!parsed) return s;
    s.format = true;
    const auto& p = parsed.value().calls;

    std::vector<std::string> gp, pp;
    std::vector<std::pair<std::string, std::string>> gk, pk;
    for (const auto& c : g) gp.push_back(c.platform), gk.push_back(key_of(c));
    for (const auto& c : p) pp.push_back(c.platform), pk.push_back(key_of(c));
    std::sort(gp.begin(), gp.end());
    std::sort(pp.begin(), pp.end());
    std::sort(gk.begin(), gk.end());
    std::sort(pk.begin(), pk.end());
    s.platform = gp == pp;
    s.name = gk == pk;

    const auto go = occurrences(g);
    const auto po = occurrences(p);
    bool names_agree = true, values_agree = true;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const ToolCall* partner = nullptr;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (key_of(p[j]) == key_of(g[i]) && po[j] == go[i]) partner = &p[j];
        if (!partner) continue;
        std::set<std::string> gn, pn;
        for (const auto& [n, _] : g[i].args) gn.insert(n);
        for (const auto& [n, _] : partner->args) pn.insert(n);
        if (gn != pn) names_agree = false;
        for (const auto& [n, v] : g[i].args) {
            const Value* w = partner->arg(n);
            if (!w) {
                s.errors.insert("P-missing");
                values_agree = false;
            } else if (same(v, *w)) {
                ++(origin(i, n) == Origin::profile ? s.profile_hits : s.query_hits);
            } else {
                s.errors.insert("P-error");
                values_agree = false;
            }
        }
        for (const auto& n : pn)
            if (!gn.contains(n)) s.errors.insert("P-excessive"), values_agree = false;
    }
    s.param = s.name && names_agree;
    s.value = s.param && values_agree;

    std::map<std::pair<std::string, std::string>, long> balance;  // gold count minus predicted count
    for (const auto& k : gk) ++balance[k];
    for (const auto& k : pk) --balance[k];
    long missing = 0, extra = 0;
    for (const auto& [_, b] : balance) (b > 0 ? missing : extra) += b > 0 ? b : -b;
    if (missing > 0 && extra > 0) s.errors.insert("T-wrong");
    if (missing > extra) s.errors.insert("T-missing");
    if (extra > missing) s.errors.insert("T-excessive");
    return s;
}

struct Fraction {
    long num = 0, den = 0;
    friend bool operator==(const Fraction&, const Fraction&) = default;
};

struct Report {
    std::map<std::string, Fraction> metrics;
    std::map<std::string, long> errors;
};

/// users: user id -> true when the user appears in training data
inline Report report(const std::vector<std::pair<std::string, Sample>>& pairs, const std::map<std::string, bool>& users) {
    Report r;
    for (const char* m : {"format", "platform", "query_param", "profile_param", "tool_name", "tool_param", "tool_value",
                          "trained_overall", "untrained_overall", "overall"})
        r.metrics[m] = {};
    for (const char* c : {"T-wrong", "T-missing", "T-excessive", "P-missing", "P-excessive", "P-error"}) r.errors[c] = 0;
    for (const auto& [pred, gold] : pairs) {
        const Scored s = score(pred, gold);
        const bool ok = s.value && s.platform;
        auto add = [&](const char* m, bool hit) {
            r.metrics[m].den += 1;
            r.metrics[m].num += hit ? 1 : 0;
        };
        add("format", s.format);
        add("platform", s.platform);
        add("tool_name", s.name);
        add("tool_param", s.param);
        add("tool_value", s.value);
        add("overall", ok);
        add(users.at(gold.user_id) ? "trained_overall" : "untrained_overall", ok);
        r.metrics["query_param"].num += s.query_hits;
        r.metrics["query_param"].den += s.query_total;
        r.metrics["profile_param"].num += s.profile_hits;
        r.metrics["profile_param"].den += s.profile_total;
        if (s.format)
            for (const auto& e : s.errors) ++r.errors[e];
    }
    return r;
}

} // namespace ptool::testing::oracle
