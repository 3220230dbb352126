#pragma once

#include "ptool/hash.hpp"
#include "ptool/value.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ptool {

struct Scenario {
    std::string id;
    std::string name;
    std::string description;

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct Platform {
    std::string id;
    std::string scenario_id;
    std::string name;
    // trait name -> description; std::map keeps serialization order stable
    std::map<std::string, std::string> characteristics;

    friend bool operator==(const Platform&, const Platform&) = default;
};

enum class ParamKind { string, number, integer, boolean, array, object, enumeration };

inline std::string_view to_string(ParamKind k) {
    switch (k) {
    case ParamKind::string: return "string";
    case ParamKind::number: return "number";
    case ParamKind::integer: return "integer";
    case ParamKind::boolean: return "boolean";
    case ParamKind::array: return "array";
    case ParamKind::object: return "object";
    case ParamKind::enumeration: return "enum";
    }
    return "string";
}

inline std::optional<ParamKind> param_kind_from(std::string_view s) {
    if (s == "string") return ParamKind::string;
    if (s == "number") return ParamKind::number;
    if (s == "integer") return ParamKind::integer;
    if (s == "boolean") return ParamKind::boolean;
    if (s == "array") return ParamKind::array;
    if (s == "object") return ParamKind::object;
    if (s == "enum") return ParamKind::enumeration;
    return std::nullopt;
}

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::string;
    std::string description;
    std::optional<std::vector<std::string>> enum_values;
    bool required = false;

    friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

struct ResponseField {
    std::string name;
    ParamKind kind = ParamKind::string;
    std::string description;

    friend bool operator==(const ResponseField&, const ResponseField&) = default;
};

struct ToolApi {
    std::string name;
    std::string platform_id;
    std::string description;
    std::vector<ParamSpec> params;
    std::vector<ResponseField> response_fields;

    [[nodiscard]] const ParamSpec* param(std::string_view n) const {
        for (const auto& p : params)
            if (p.name == n) return &p;
        return nullptr;
    }

    friend bool operator==(const ToolApi&, const ToolApi&) = default;
};

enum class FeatureKind { basic, implicit };

inline std::string_view to_string(FeatureKind k) { return k == FeatureKind::basic ? "basic" : "implicit"; }

struct SourceRef {
    enum class Kind { characteristic, parameter };
    Kind kind = Kind::parameter;
    std::string platform_id;
    std::string api;  // empty for characteristics
    std::string name;

    friend bool operator==(const SourceRef&, const SourceRef&) = default;
    friend auto operator<=>(const SourceRef&, const SourceRef&) = default;
};

struct FeatureNode {
    std::string id;
    std::string label;
    FeatureKind kind = FeatureKind::implicit;
    std::vector<std::string> children;
    std::vector<SourceRef> source_refs;

    friend bool operator==(const FeatureNode&, const FeatureNode&) = default;
};

struct BehaviorRecord {
    std::string platform;
    std::string action;

    friend bool operator==(const BehaviorRecord&, const BehaviorRecord&) = default;
};

struct UserProfile {
    std::string user_id;
    std::map<std::string, std::string> basic_features;
    std::map<std::string, std::string> implicit_features;
    std::map<std::string, std::vector<BehaviorRecord>> history;  // scenario name -> records

    friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

/// Content-derived user id over the feature maps (history excluded, so ids are
/// fixed before behaviors are generated).
inline std::string profile_id(const UserProfile& p);

struct ToolCall {
    std::string platform;
    std::string function;
    std::vector<std::pair<std::string, Value>> args;

    [[nodiscard]] const Value* arg(std::string_view n) const {
        for (const auto& [k, v] : args)
            if (k == n) return &v;
        return nullptr;
    }

    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct Solution {
    std::vector<ToolCall> calls;

    friend bool operator==(const Solution&, const Solution&) = default;
};

enum class Origin { profile, query };

inline std::string_view to_string(Origin o) { return o == Origin::profile ? "profile" : "query"; }

struct ParamKey {
    std::size_t call = 0;
    std::string param;

    friend bool operator==(const ParamKey&, const ParamKey&) = default;
    friend auto operator<=>(const ParamKey&, const ParamKey&) = default;
};

struct Provenance {
    std::map<ParamKey, Origin> tags;

    [[nodiscard]] bool is_complete_for(const Solution& s) const {
        std::set<ParamKey> expected;
        for (std::size_t i = 0; i < s.calls.size(); ++i)
            for (const auto& [name, _] : s.calls[i].args) expected.insert({i, name});
        if (expected.size() != tags.size()) return false;
        for (const auto& [k, _] : tags)
            if (!expected.contains(k)) return false;
        return true;
    }

    [[nodiscard]] bool has_profile_tag() const {
        for (const auto& [_, o] : tags)
            if (o == Origin::profile) return true;
        return false;
    }

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

enum class SampleStatus { draft, rule_checked, model_verified, accepted, rejected };

inline std::string_view to_string(SampleStatus s) {
    switch (s) {
    case SampleStatus::draft: return "draft";
    case SampleStatus::rule_checked: return "rule_checked";
    case SampleStatus::model_verified: return "model_verified";
    case SampleStatus::accepted: return "accepted";
    case SampleStatus::rejected: return "rejected";
    }
    return "draft";
}

inline std::optional<SampleStatus> sample_status_from(std::string_view s) {
    for (auto st : {SampleStatus::draft, SampleStatus::rule_checked, SampleStatus::model_verified,
                    SampleStatus::accepted, SampleStatus::rejected})
        if (to_string(st) == s) return st;
    return std::nullopt;
}

enum class Split { train, test };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

struct Sample {
    std::string id;
    std::string user_id;
    std::string scenario;
    std::string query;
    Solution gold;
    Provenance provenance;
    SampleStatus status = SampleStatus::draft;
    std::optional<Split> split;

    /// A query is profile-dependent when at least one gold value comes from the profile.
    [[nodiscard]] bool profile_dependent() const { return provenance.has_profile_tag(); }

    friend bool operator==(const Sample&, const Sample&) = default;
};

// ---------------------------------------------------------------------------
// Registry

struct Registry {
    std::vector<Scenario> scenarios;
    std::vector<Platform> platforms;
    std::vector<ToolApi> apis;

    [[nodiscard]] const Platform* platform_by_id(std::string_view id) const {
        for (const auto& p : platforms)
            if (p.id == id) return &p;
        return nullptr;
    }
    [[nodiscard]] const Scenario* scenario_by_id(std::string_view id) const {
        for (const auto& s : scenarios)
            if (s.id == id) return &s;
        return nullptr;
    }
    [[nodiscard]] const Scenario* scenario_by_name(std::string_view name) const {
        for (const auto& s : scenarios)
            if (s.name == name) return &s;
        return nullptr;
    }
    [[nodiscard]] std::vector<const Platform*> platforms_named(std::string_view name) const {
        std::vector<const Platform*> out;
        for (const auto& p : platforms)
            if (p.name == name) out.push_back(&p);
        return out;
    }
    [[nodiscard]] std::vector<const Platform*> platforms_in(std::string_view scenario_id) const {
        std::vector<const Platform*> out;
        for (const auto& p : platforms)
            if (p.scenario_id == scenario_id) out.push_back(&p);
        return out;
    }
    [[nodiscard]] std::vector<const ToolApi*> apis_of(std::string_view platform_id) const {
        std::vector<const ToolApi*> out;
        for (const auto& a : apis)
            if (a.platform_id == platform_id) out.push_back(&a);
        return out;
    }
    /// Tool lookup by platform *name* and function name, as written in calls.
    [[nodiscard]] const ToolApi* find_tool(std::string_view platform, std::string_view function) const {
        for (const auto* p : platforms_named(platform))
            for (const auto& a : apis)
                if (a.platform_id == p->id && a.name == function) return &a;
        return nullptr;
    }
};

struct RegistryViolation {
    enum class Rule {
        dangling_reference,
        duplicate_id,
        duplicate_name,
        empty_name,
        missing_characteristics,
        empty_enum,
        missing_enum,
    };
    Rule rule;
    std::string entity;  // e.g. "api P1/registerUser"
    std::string detail;

    friend bool operator==(const RegistryViolation&, const RegistryViolation&) = default;
};

inline std::string_view to_string(RegistryViolation::Rule r) {
    using R = RegistryViolation::Rule;
    switch (r) {
    case R::dangling_reference: return "dangling-reference";
    case R::duplicate_id: return "duplicate-id";
    case R::duplicate_name: return "duplicate-name";
    case R::empty_name: return "empty-name";
    case R::missing_characteristics: return "missing-characteristics";
    case R::empty_enum: return "empty-enum";
    case R::missing_enum: return "missing-enum";
    }
    return "?";
}

/// Cross-reference and uniqueness checks over a tool library. Returns every
/// violation found; an empty result means the library is consistent.
inline std::vector<RegistryViolation> validate_registry(const std::vector<Scenario>& scenarios,
                                                        const std::vector<Platform>& platforms,
                                                        const std::vector<ToolApi>& apis) {
    using R = RegistryViolation::Rule;
    std::vector<RegistryViolation> out;

    std::set<std::string> scenario_ids;
    for (const auto& s : scenarios) {
        if (!scenario_ids.insert(s.id).second)
            out.push_back({R::duplicate_id, "scenario " + s.id, "scenario id appears more than once"});
        if (s.name.empty()) out.push_back({R::empty_name, "scenario " + s.id, "scenario name is empty"});
    }

    std::set<std::string> platform_ids;
    std::set<std::pair<std::string, std::string>> platform_names;
    for (const auto& p : platforms) {
        const std::string ent = "platform " + p.id;
        if (!platform_ids.insert(p.id).second)
            out.push_back({R::duplicate_id, ent, "platform id appears more than once"});
        if (!scenario_ids.contains(p.scenario_id))
            out.push_back({R::dangling_reference, ent, "unknown scenario id '" + p.scenario_id + "'"});
        if (p.name.empty()) out.push_back({R::empty_name, ent, "platform name is empty"});
        if (!platform_names.insert({p.scenario_id, p.name}).second)
            out.push_back({R::duplicate_name, ent, "platform name '" + p.name + "' repeated within scenario"});
        if (p.characteristics.empty())
            out.push_back({R::missing_characteristics, ent, "platform has no characteristics"});
    }

    std::set<std::pair<std::string, std::string>> api_names;
    for (const auto& a : apis) {
        const std::string ent = "api " + a.platform_id + "/" + a.name;
        if (!platform_ids.contains(a.platform_id))
            out.push_back({R::dangling_reference, ent, "unknown platform id '" + a.platform_id + "'"});
        if (a.name.empty()) out.push_back({R::empty_name, ent, "api name is empty"});
        if (!api_names.insert({a.platform_id, a.name}).second)
            out.push_back({R::duplicate_name, ent, "api name '" + a.name + "' repeated within platform"});
        std::set<std::string> pnames;
        for (const auto& p : a.params) {
            if (p.name.empty()) out.push_back({R::empty_name, ent, "parameter name is empty"});
            if (!pnames.insert(p.name).second)
                out.push_back({R::duplicate_name, ent, "parameter '" + p.name + "' repeated"});
            if (p.enum_values && p.enum_values->empty())
                out.push_back({R::empty_enum, ent, "parameter '" + p.name + "' has an empty enum list"});
            if (p.kind == ParamKind::enumeration && !p.enum_values)
                out.push_back({R::missing_enum, ent, "enum parameter '" + p.name + "' lists no values"});
        }
    }
    return out;
}

inline std::vector<RegistryViolation> validate_registry(const Registry& r) {
    return validate_registry(r.scenarios, r.platforms, r.apis);
}

inline std::string profile_id(const UserProfile& p) {
    std::string content;
    for (const auto& [k, v] : p.basic_features) content += "b\x1f" + k + "\x1f" + v + "\x1e";
    for (const auto& [k, v] : p.implicit_features) content += "i\x1f" + k + "\x1f" + v + "\x1e";
    return stable_id("u", content);
}

} // namespace ptool
