#pragma once

// Prompt templates for every LLM stage. Placeholders are written {{name}}.
// The same texts ship as files under prompts/ so they can be reviewed and
// overridden without recompiling; PromptSet::load() reads that directory.
//
// Every stage prompt except the assistant agent opens with "### key: value"
// header lines. Scripted transcripts match on those lines.

#include "ptool/codec.hpp"
#include "ptool/error.hpp"
#include "ptool/model.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ptool {

namespace prompt_text {

inline constexpr std::string_view platforms = R"(### task: generate_platforms
### scenario: {{scenario}}
You are designing online platforms for the "{{scenario}}" scenario: {{scenario_description}}
Create exactly {{count}} platforms that offer interchangeable services but differ clearly in their
characteristics, such as product range, delivery speed, price level, service quality or content format.
Each name must be a single identifier (letters, digits, underscores; starting with a letter), e.g. MegaMart.
Reply with only a JSON array of {{count}} objects:
[{"name": "<Name>", "characteristics": {"<trait>": "<how this platform behaves on that trait>"}}]
)";

inline constexpr std::string_view expand = R"(### task: expand_functionality
### node: {{path}}
### depth: {{depth}}
Scenario: {{scenario}}
Platform: {{platform}}
Platform characteristics:
{{characteristics}}
Functionality to refine: {{description}}
Functionality categories already used by other platforms of this scenario: {{shared}}
{{mode}}
An API object looks like:
{"name": "camelCaseName", "description": "...", "parameters": {"type": "object", "properties": {"<param>": {"type": "string|number|integer|boolean|array|object", "description": "...", "enum": ["optional", "values"]}}, "required": ["<param>"]}, "response": {"type": "object", "properties": {"<field>": {"type": "...", "description": "..."}}}}
)";

inline constexpr std::string_view expand_mode_platform =
    R"(Split this platform into its main functionality categories. Reuse the shared categories listed above wherever they apply to this platform.
Reply with only JSON: {"kind": "refine", "children": [{"name": "<category>", "description": "<what it covers>"}]})";

inline constexpr std::string_view expand_mode_open =
    R"(If this functionality is still broad, refine it into narrower sub-functionalities; if it is specific enough, define the concrete APIs that implement it.
Reply with only JSON, either {"kind": "refine", "children": [{"name": "...", "description": "..."}]} or {"kind": "apis", "apis": [<API object>, ...]})";

inline constexpr std::string_view expand_mode_leaf =
    R"(This functionality is at the maximum refinement depth. Define the concrete APIs that implement it.
Reply with only JSON: {"kind": "apis", "apis": [<API object>, ...]})";

inline constexpr std::string_view extra_apis = R"(### task: additional_apis
### platform: {{platform}}
### round: {{round}}
Scenario: {{scenario}}
Platform characteristics:
{{characteristics}}
The platform already offers these APIs: {{existing}}
Define {{count}} further APIs for this platform. Their names must differ from the existing ones and from each other.
An API object looks like:
{"name": "camelCaseName", "description": "...", "parameters": {"type": "object", "properties": {"<param>": {"type": "string|number|integer|boolean|array|object", "description": "...", "enum": ["optional", "values"]}}, "required": ["<param>"]}, "response": {"type": "object", "properties": {"<field>": {"type": "...", "description": "..."}}}}
Reply with only a JSON array of API objects.
)";

inline constexpr std::string_view cluster = R"(### task: cluster_features
### round: {{round}}
Below are user-related features derived from platform characteristics and API parameters:
{{features}}
Merge semantically related features into groups and name each group with a higher-level user feature.
Every feature belongs to exactly one group. Aim for at most {{threshold}} groups.
{{kind_rule}}
Reply with only a JSON array: [{"label": "<feature name>", "kind": "basic|implicit", "members": ["<feature>", ...]}]
)";

inline constexpr std::string_view cluster_kind_initial =
    R"(Classify each group: "basic" for explicit, directly observable attributes (age, gender, location, username, contact details); "implicit" for latent preferences (shopping preferences, content taste, price sensitivity).)";

inline constexpr std::string_view cluster_kind_later =
    R"(Keep basic and implicit features in separate groups where possible; set "kind" to the kind of the group's members.)";

inline constexpr std::string_view assign = R"(### task: assign_values
### layer: {{layer}}
### path: {{path}}
We are writing diverse synthetic user profiles, one layer of the feature hierarchy at a time.
Values already fixed for this branch:
{{fixed}}
Features to fill at this layer:
{{features}}
Produce exactly {{count}} different value assignments for these features, consistent with the fixed values.
Assignments must be mutually distinct; keep values concrete and observable, no psychological traits.
Reply with only a JSON array of {{count}} objects, each mapping every feature name above to a string value.
)";

inline constexpr std::string_view behaviors = R"(### task: role_play_behaviors
### user: {{user_id}}
### scenario: {{scenario}}
Role-play the user below and write what they did in the past on the platforms of the "{{scenario}}" scenario.
Basic features:
{{basic}}
Preferences (never state them outright; let the actions show them):
{{implicit}}
Platforms:
{{platforms}}
Write exactly {{count}} concrete past actions, each on one of the listed platforms.
Reply with only a JSON array: [{"platform": "<platform name>", "action": "<what the user did>"}]
)";

inline constexpr std::string_view user_agent = R"(### task: user_query
### user: {{user_id}}
### scenario: {{scenario}}
### index: {{index}}
You are role-playing the following user.
Basic features:
{{basic}}
Preferences:
{{implicit}}
Platforms available in the "{{scenario}}" scenario:
{{platforms}}
Write one request this user would send to an assistant that can operate these platforms for them.
Choose the platform that fits the user's preferences, but do not name it if the preference makes it obvious.
Never spell out personal details ({{withheld}}); refer to them indirectly, e.g. "my email address".
{{previous}}Reply with the request text only.
)";

inline constexpr std::string_view assistant_agent = R"(User profile:
{{profile}}
Platforms in this scenario:
{{platforms}}
APIs offered by these platforms:
{{apis}}
The user will send a query. Solve the query using the platforms and APIs above, choosing the platform that suits the user's profile or the query. Everything you need is in the profile; do not ask follow-up questions.
Answer only in the form {platform:[func1(param1_name = param1_value, param2...), func2...]} with no other text.
)";

inline constexpr std::string_view provenance = R"(### task: provenance
### param: {{call}}.{{param}}
Query: {{query}}
User profile:
{{profile}}
Tool call: {{call_text}}
Parameter "{{param}}" has value {{value}}.
Does this value come from the user's profile or from the query?
Reply with only JSON: {"tag": "profile"} or {"tag": "query"}
)";

inline constexpr std::string_view judge = R"(### task: judge_solution
User profile:
{{profile}}
APIs:
{{apis}}
Query: {{query}}
Proposed solution: {{solution}}
Check the solution:
1. param_correctness: every parameter value is correct for this user and query.
2. hallucination: no tool, parameter or value is invented beyond the APIs, profile and query.
3. query_resolution: the calls fully resolve the query.
Reply with only JSON: {"param_correctness": "pass|fail", "hallucination": "pass|fail", "query_resolution": "pass|fail", "reasons": ["..."]}
)";

} // namespace prompt_text

/// Named templates; defaults are compiled in, files override them.
class PromptSet {
public:
    PromptSet() {
        templates_ = {
            {"platforms", std::string(prompt_text::platforms)},
            {"expand", std::string(prompt_text::expand)},
            {"expand_mode_platform", std::string(prompt_text::expand_mode_platform)},
            {"expand_mode_open", std::string(prompt_text::expand_mode_open)},
            {"expand_mode_leaf", std::string(prompt_text::expand_mode_leaf)},
            {"extra_apis", std::string(prompt_text::extra_apis)},
            {"cluster", std::string(prompt_text::cluster)},
            {"cluster_kind_initial", std::string(prompt_text::cluster_kind_initial)},
            {"cluster_kind_later", std::string(prompt_text::cluster_kind_later)},
            {"assign", std::string(prompt_text::assign)},
            {"behaviors", std::string(prompt_text::behaviors)},
            {"user_agent", std::string(prompt_text::user_agent)},
            {"assistant_agent", std::string(prompt_text::assistant_agent)},
            {"provenance", std::string(prompt_text::provenance)},
            {"judge", std::string(prompt_text::judge)},
        };
    }

    /// Override templates from <dir>/<name>.txt where such files exist.
    static PromptSet load(const std::filesystem::path& dir) {
        PromptSet set;
        for (auto& [name, text] : set.templates_) {
            const auto file = dir / (name + ".txt");
            if (!std::filesystem::exists(file)) continue;
            std::ifstream in(file, std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            text = ss.str();
        }
        return set;
    }

    [[nodiscard]] const std::string& get(const std::string& name) const {
        auto it = templates_.find(name);
        if (it == templates_.end()) throw Error(ErrorCode::not_found, "no prompt template '" + name + "'");
        return it->second;
    }

    [[nodiscard]] const std::map<std::string, std::string>& all() const { return templates_; }

    [[nodiscard]] std::string render(const std::string& name,
                                     const std::vector<std::pair<std::string, std::string>>& vars) const {
        return fill(get(name), vars);
    }

    static std::string fill(std::string text, const std::vector<std::pair<std::string, std::string>>& vars) {
        for (const auto& [key, value] : vars) {
            const std::string token = "{{" + key + "}}";
            std::size_t pos = 0;
            while ((pos = text.find(token, pos)) != std::string::npos) {
                text.replace(pos, token.size(), value);
                pos += value.size();
            }
        }
        return text;
    }

private:
    std::map<std::string, std::string> templates_;
};

// ---------------------------------------------------------------------------
// Renderers for prompt payloads

inline std::string render_feature_lines(const std::map<std::string, std::string>& features) {
    if (features.empty()) return "(none)\n";
    std::string out;
    for (const auto& [k, v] : features) out += "- " + k + ": " + v + "\n";
    return out;
}

/// Profile block as given to the assistant agent and the judge.
inline std::string render_profile(const UserProfile& u, bool include_implicit = true) {
    Json j;
    j["basic_features"] = Json::object();
    for (const auto& [k, v] : u.basic_features) j["basic_features"][k] = v;
    if (include_implicit) {
        j["implicit_features"] = Json::object();
        for (const auto& [k, v] : u.implicit_features) j["implicit_features"][k] = v;
    }
    j["user_history"] = Json::object();
    for (const auto& [scenario, records] : u.history) {
        Json arr = Json::array();
        for (const auto& r : records) arr.push_back(Json{{"platform", r.platform}, {"action", r.action}});
        j["user_history"][scenario] = std::move(arr);
    }
    return j.dump(2);
}

inline std::string render_platforms(const std::vector<const Platform*>& platforms) {
    Json arr = Json::array();
    for (const auto* p : platforms) {
        Json pj;
        pj["name"] = p->name;
        pj["profile"] = Json::object();
        for (const auto& [k, v] : p->characteristics) pj["profile"][k] = v;
        arr.push_back(std::move(pj));
    }
    return arr.dump(2);
}

inline std::string render_characteristics(const Platform& p) {
    std::string out;
    for (const auto& [k, v] : p.characteristics) out += "- " + k + ": " + v + "\n";
    return out;
}

/// Function-calling schema for one API, in the usual {"type":"function",...} wrapper.
inline Json api_schema(const ToolApi& a, const std::string& platform_name) {
    Json props = Json::object();
    Json required = Json::array();
    for (const auto& p : a.params) {
        Json pj;
        pj["type"] = p.kind == ParamKind::enumeration ? "string" : std::string(to_string(p.kind));
        pj["description"] = p.description;
        if (p.enum_values) pj["enum"] = *p.enum_values;
        props[p.name] = std::move(pj);
        if (p.required) required.push_back(p.name);
    }
    Json resp = Json::object();
    for (const auto& f : a.response_fields) resp[f.name] = Json{{"type", to_string(f.kind)}, {"description", f.description}};
    Json fn;
    fn["name"] = a.name;
    fn["platform"] = platform_name;
    fn["description"] = a.description;
    fn["parameters"] = Json{{"type", "object"}, {"properties", std::move(props)}, {"required", std::move(required)}};
    fn["response"] = Json{{"type", "object"}, {"properties", std::move(resp)}};
    return Json{{"type", "function"}, {"function", std::move(fn)}};
}

inline std::string render_apis(const Registry& reg, const std::vector<const Platform*>& platforms) {
    Json arr = Json::array();
    for (const auto* p : platforms)
        for (const auto* a : reg.apis_of(p->id)) arr.push_back(api_schema(*a, p->name));
    return arr.dump(2);
}

} // namespace ptool
