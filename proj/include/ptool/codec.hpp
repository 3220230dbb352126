#pragma once

// JSON encodings of the domain types. Field order is fixed by construction
// (ordered_json) and decoding is strict: unknown or missing fields raise
// schema_mismatch. docs/formats.md documents every record.

#include "ptool/error.hpp"
#include "ptool/grammar.hpp"
#include "ptool/model.hpp"

#include "json.hpp"

#include <initializer_list>
#include <set>
#include <string>
#include <string_view>

namespace ptool {

using Json = nlohmann::ordered_json;

namespace codec {

inline void require_fields(const Json& j, std::initializer_list<std::string_view> fields, std::string_view what) {
    if (!j.is_object()) throw Error(ErrorCode::schema_mismatch, std::string(what) + ": expected an object");
    std::set<std::string, std::less<>> allowed;
    for (auto f : fields) {
        allowed.emplace(f);
        if (!j.contains(std::string(f)))
            throw Error(ErrorCode::schema_mismatch, std::string(what) + ": missing field \"" + std::string(f) + "\"");
    }
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.contains(it.key()))
            throw Error(ErrorCode::schema_mismatch, std::string(what) + ": unknown field \"" + it.key() + "\"");
}

inline std::string str(const Json& j, const char* field, std::string_view what) {
    const auto& v = j.at(field);
    if (!v.is_string())
        throw Error(ErrorCode::schema_mismatch, std::string(what) + ": field \"" + field + "\" must be a string");
    return v.get<std::string>();
}

inline std::map<std::string, std::string> str_map(const Json& j, const char* field, std::string_view what) {
    const auto& v = j.at(field);
    if (!v.is_object())
        throw Error(ErrorCode::schema_mismatch, std::string(what) + ": field \"" + field + "\" must be an object");
    std::map<std::string, std::string> out;
    for (auto it = v.begin(); it != v.end(); ++it) {
        if (!it.value().is_string())
            throw Error(ErrorCode::schema_mismatch, std::string(what) + ": " + field + "." + it.key() + " must be a string");
        out.emplace(it.key(), it.value().get<std::string>());
    }
    return out;
}

inline ParamKind kind_field(const Json& j, std::string_view what) {
    const auto k = param_kind_from(str(j, "kind", what));
    if (!k) throw Error(ErrorCode::schema_mismatch, std::string(what) + ": unknown kind");
    return *k;
}

} // namespace codec

// --- Scenario / Platform -----------------------------------------------------

inline Json to_json(const Scenario& s) {
    Json j;
    j["id"] = s.id;
    j["name"] = s.name;
    j["description"] = s.description;
    return j;
}

inline Scenario scenario_from_json(const Json& j) {
    codec::require_fields(j, {"id", "name", "description"}, "scenario");
    return {codec::str(j, "id", "scenario"), codec::str(j, "name", "scenario"),
            codec::str(j, "description", "scenario")};
}

inline Json to_json(const Platform& p) {
    Json j;
    j["id"] = p.id;
    j["scenario_id"] = p.scenario_id;
    j["name"] = p.name;
    j["characteristics"] = Json::object();
    for (const auto& [k, v] : p.characteristics) j["characteristics"][k] = v;
    return j;
}

inline Platform platform_from_json(const Json& j) {
    codec::require_fields(j, {"id", "scenario_id", "name", "characteristics"}, "platform");
    Platform p;
    p.id = codec::str(j, "id", "platform");
    p.scenario_id = codec::str(j, "scenario_id", "platform");
    p.name = codec::str(j, "name", "platform");
    p.characteristics = codec::str_map(j, "characteristics", "platform");
    return p;
}

// --- ToolApi ---------------------------------------------------------------

inline Json to_json(const ToolApi& a) {
    Json j;
    j["platform_id"] = a.platform_id;
    j["name"] = a.name;
    j["description"] = a.description;
    j["params"] = Json::array();
    for (const auto& p : a.params) {
        Json pj;
        pj["name"] = p.name;
        pj["kind"] = to_string(p.kind);
        pj["description"] = p.description;
        pj["enum_values"] = p.enum_values ? Json(*p.enum_values) : Json(nullptr);
        pj["required"] = p.required;
        j["params"].push_back(std::move(pj));
    }
    j["response_fields"] = Json::array();
    for (const auto& f : a.response_fields) {
        Json fj;
        fj["name"] = f.name;
        fj["kind"] = to_string(f.kind);
        fj["description"] = f.description;
        j["response_fields"].push_back(std::move(fj));
    }
    return j;
}

inline ToolApi tool_from_json(const Json& j) {
    codec::require_fields(j, {"platform_id", "name", "description", "params", "response_fields"}, "tool");
    ToolApi a;
    a.platform_id = codec::str(j, "platform_id", "tool");
    a.name = codec::str(j, "name", "tool");
    a.description = codec::str(j, "description", "tool");
    if (!j["params"].is_array() || !j["response_fields"].is_array())
        throw Error(ErrorCode::schema_mismatch, "tool: params and response_fields must be arrays");
    for (const auto& pj : j["params"]) {
        codec::require_fields(pj, {"name", "kind", "description", "enum_values", "required"}, "tool param");
        ParamSpec p;
        p.name = codec::str(pj, "name", "tool param");
        p.kind = codec::kind_field(pj, "tool param");
        p.description = codec::str(pj, "description", "tool param");
        if (!pj["enum_values"].is_null()) {
            if (!pj["enum_values"].is_array())
                throw Error(ErrorCode::schema_mismatch, "tool param: enum_values must be null or an array");
            std::vector<std::string> values;
            for (const auto& v : pj["enum_values"]) {
                if (!v.is_string()) throw Error(ErrorCode::schema_mismatch, "tool param: enum values must be strings");
                values.push_back(v.get<std::string>());
            }
            p.enum_values = std::move(values);
        }
        if (!pj["required"].is_boolean())
            throw Error(ErrorCode::schema_mismatch, "tool param: required must be a boolean");
        p.required = pj["required"].get<bool>();
        a.params.push_back(std::move(p));
    }
    for (const auto& fj : j["response_fields"]) {
        codec::require_fields(fj, {"name", "kind", "description"}, "tool response field");
        a.response_fields.push_back({codec::str(fj, "name", "tool response field"),
                                     codec::kind_field(fj, "tool response field"),
                                     codec::str(fj, "description", "tool response field")});
    }
    return a;
}

// --- UserProfile -------------------------------------------------------------

inline Json to_json(const UserProfile& u) {
    Json j;
    j["user_id"] = u.user_id;
    j["basic_features"] = Json::object();
    for (const auto& [k, v] : u.basic_features) j["basic_features"][k] = v;
    j["implicit_features"] = Json::object();
    for (const auto& [k, v] : u.implicit_features) j["implicit_features"][k] = v;
    j["history"] = Json::object();
    for (const auto& [scenario, records] : u.history) {
        Json arr = Json::array();
        for (const auto& r : records) arr.push_back(Json{{"platform", r.platform}, {"action", r.action}});
        j["history"][scenario] = std::move(arr);
    }
    return j;
}

inline UserProfile profile_from_json(const Json& j) {
    codec::require_fields(j, {"user_id", "basic_features", "implicit_features", "history"}, "profile");
    UserProfile u;
    u.user_id = codec::str(j, "user_id", "profile");
    u.basic_features = codec::str_map(j, "basic_features", "profile");
    u.implicit_features = codec::str_map(j, "implicit_features", "profile");
    if (!j["history"].is_object()) throw Error(ErrorCode::schema_mismatch, "profile: history must be an object");
    for (auto it = j["history"].begin(); it != j["history"].end(); ++it) {
        if (!it.value().is_array())
            throw Error(ErrorCode::schema_mismatch, "profile: history." + it.key() + " must be an array");
        auto& records = u.history[it.key()];
        for (const auto& rj : it.value()) {
            codec::require_fields(rj, {"platform", "action"}, "behavior record");
            records.push_back({codec::str(rj, "platform", "behavior record"), codec::str(rj, "action", "behavior record")});
        }
    }
    for (const auto& [k, _] : u.basic_features)
        if (u.implicit_features.contains(k))
            throw Error(ErrorCode::schema_mismatch, "profile: feature '" + k + "' is both basic and implicit");
    return u;
}

// --- Provenance / Sample -----------------------------------------------------

inline Json to_json(const Provenance& p) {
    Json arr = Json::array();
    for (const auto& [key, origin] : p.tags) {
        Json t;
        t["call"] = key.call;
        t["param"] = key.param;
        t["tag"] = to_string(origin);
        arr.push_back(std::move(t));
    }
    return arr;
}

inline Provenance provenance_from_json(const Json& j) {
    if (!j.is_array()) throw Error(ErrorCode::schema_mismatch, "provenance: expected an array");
    Provenance p;
    for (const auto& t : j) {
        codec::require_fields(t, {"call", "param", "tag"}, "provenance tag");
        if (!t["call"].is_number_unsigned())
            throw Error(ErrorCode::schema_mismatch, "provenance tag: call must be a non-negative integer");
        const auto tag = codec::str(t, "tag", "provenance tag");
        if (tag != "profile" && tag != "query")
            throw Error(ErrorCode::schema_mismatch, "provenance tag: tag must be \"profile\" or \"query\"");
        ParamKey key{t["call"].get<std::size_t>(), codec::str(t, "param", "provenance tag")};
        if (!p.tags.emplace(key, tag == "profile" ? Origin::profile : Origin::query).second)
            throw Error(ErrorCode::schema_mismatch, "provenance: duplicate tag for " + key.param);
    }
    return p;
}

inline Json to_json(const Sample& s) {
    Json j;
    j["id"] = s.id;
    j["user_id"] = s.user_id;
    j["scenario"] = s.scenario;
    j["query"] = s.query;
    j["gold"] = serialize_solution(s.gold);
    j["provenance"] = to_json(s.provenance);
    j["status"] = to_string(s.status);
    j["split"] = s.split ? Json(to_string(*s.split)) : Json(nullptr);
    return j;
}

inline Sample sample_from_json(const Json& j) {
    codec::require_fields(j, {"id", "user_id", "scenario", "query", "gold", "provenance", "status", "split"}, "sample");
    Sample s;
    s.id = codec::str(j, "id", "sample");
    s.user_id = codec::str(j, "user_id", "sample");
    s.scenario = codec::str(j, "scenario", "sample");
    s.query = codec::str(j, "query", "sample");
    auto gold = parse_solution(codec::str(j, "gold", "sample"));
    if (!gold) throw Error(ErrorCode::schema_mismatch, "sample: gold does not parse " + gold.error().message());
    s.gold = std::move(gold).value();
    s.provenance = provenance_from_json(j["provenance"]);
    const auto status = sample_status_from(codec::str(j, "status", "sample"));
    if (!status) throw Error(ErrorCode::schema_mismatch, "sample: unknown status");
    s.status = *status;
    if (!j["split"].is_null()) {
        const auto sp = codec::str(j, "split", "sample");
        if (sp == "train") s.split = Split::train;
        else if (sp == "test") s.split = Split::test;
        else throw Error(ErrorCode::schema_mismatch, "sample: split must be null, \"train\" or \"test\"");
    }
    if (!s.provenance.is_complete_for(s.gold))
        throw Error(ErrorCode::schema_mismatch, "sample: provenance does not cover exactly the gold parameters");
    return s;
}

} // namespace ptool
