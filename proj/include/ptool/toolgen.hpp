#pragma once

// Tool library synthesis: scenario -> platforms -> functionality nodes ->
// API leaves, expanded depth-first with an LLM.

#include "ptool/gateway.hpp"
#include "ptool/grammar.hpp"
#include "ptool/hash.hpp"
#include "ptool/model.hpp"
#include "ptool/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ptool {

struct ApiTreeNode {
    enum class Payload { scenario, platform, functionality, api_leaf };

    std::string id;
    int level = 0;
    Payload payload = Payload::functionality;
    std::string name;
    std::string description;
    std::string platform_id;  // empty for scenario nodes
    std::optional<ToolApi> api;
    std::vector<std::string> children;
};

struct ApiTree {
    std::vector<ApiTreeNode> nodes;

    [[nodiscard]] const ApiTreeNode* find(std::string_view id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }
    ApiTreeNode* find(std::string_view id) {
        for (auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }
};

struct ToolgenConfig {
    int platforms_per_scenario = 3;
    int apis_per_platform = 24;
    int max_depth = 4;  // functionality levels below the platform node
    int regen_budget = 3;
    int repair_budget = -1;  // -1: gateway default
};

struct ToolLibrary {
    ApiTree tree;
    Registry registry;
};

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline Scenario make_scenario(const std::string& name, const std::string& description) {
    return {stable_id("sc", name), name, description};
}

/// Decode one API object of the function-calling schema shape used in prompts.
inline std::optional<std::string> api_from_value(const Value& v, const std::string& platform_id, ToolApi& out) {
    if (!v.is_map()) return "API entry is not an object";
    const Value* name = v.find("name");
    if (!name || !name->is_text() || !is_identifier(name->as_text()))
        return "API name missing or not an identifier";
    out = ToolApi{};
    out.name = name->as_text();
    out.platform_id = platform_id;
    if (const Value* d = v.find("description"); d && d->is_text()) out.description = d->as_text();

    auto kind_of = [](const Value& spec) -> std::optional<ParamKind> {
        if (spec.find("enum")) return ParamKind::enumeration;
        const Value* t = spec.find("type");
        if (!t || !t->is_text()) return std::nullopt;
        return param_kind_from(t->as_text());
    };

    std::set<std::string> required;
    if (const Value* params = v.find("parameters")) {
        if (!params->is_map()) return "API " + out.name + ": parameters must be an object";
        if (const Value* req = params->find("required")) {
            if (!req->is_list()) return "API " + out.name + ": required must be a list";
            for (const auto& r : req->as_list()) {
                if (!r.is_text()) return "API " + out.name + ": required entries must be strings";
                required.insert(r.as_text());
            }
        }
        if (const Value* props = params->find("properties")) {
            if (!props->is_map()) return "API " + out.name + ": properties must be an object";
            for (const auto& [pname, spec] : props->as_map()) {
                if (!is_identifier(pname)) return "API " + out.name + ": parameter '" + pname + "' is not an identifier";
                if (!spec.is_map()) return "API " + out.name + ": parameter '" + pname + "' must be an object";
                ParamSpec p;
                p.name = pname;
                const auto k = kind_of(spec);
                if (!k) return "API " + out.name + ": parameter '" + pname + "' has no valid type";
                p.kind = *k;
                if (const Value* d = spec.find("description"); d && d->is_text()) p.description = d->as_text();
                if (const Value* e = spec.find("enum")) {
                    if (!e->is_list() || e->as_list().empty())
                        return "API " + out.name + ": enum of '" + pname + "' must be a non-empty list";
                    std::vector<std::string> values;
                    for (const auto& ev : e->as_list()) values.push_back(value_text(ev));
                    p.enum_values = std::move(values);
                }
                p.required = required.contains(pname);
                out.params.push_back(std::move(p));
            }
        }
    }
    for (const auto& r : required)
        if (!out.param(r)) return "API " + out.name + ": required parameter '" + r + "' is not defined";
    if (const Value* resp = v.find("response")) {
        const Value* props = resp->find("properties");
        if (props && props->is_map())
            for (const auto& [fname, spec] : props->as_map()) {
                ResponseField f;
                f.name = fname;
                if (const auto k = spec.is_map() ? kind_of(spec) : std::nullopt)
                    f.kind = *k == ParamKind::enumeration ? ParamKind::string : *k;
                if (const Value* d = spec.find("description"); d && d->is_text()) f.description = d->as_text();
                out.response_fields.push_back(std::move(f));
            }
    }
    return std::nullopt;
}

/// Ask for `count` platforms with distinct names and characteristics.
inline std::vector<Platform> generate_platforms(const Scenario& scenario, int count, Gateway& gateway,
                                                const PromptSet& prompts = {}, int repair_budget = -1) {
    if (count < 2) throw Error(ErrorCode::precondition, "at least 2 platforms are needed per scenario");
    const std::string prompt = prompts.render(
        "platforms",
        {{"scenario", scenario.name}, {"scenario_description", scenario.description}, {"count", std::to_string(count)}});
    const Shape shape = Shape::list(
        Shape::object({{"name", Shape::text()}, {"characteristics", Shape::map(Shape::text())}}),
        static_cast<std::size_t>(count));
    Validator check = [](const Value& v) -> std::optional<Issue> {
        std::set<std::string> names;
        std::set<std::string> profiles;
        for (const auto& p : v.as_list()) {
            const auto& name = p.find("name")->as_text();
            if (!is_identifier(name)) return Issue{ErrorCode::structure_failure, "platform name '" + name + "' is not an identifier"};
            if (p.find("characteristics")->as_map().empty())
                return Issue{ErrorCode::structure_failure, "platform '" + name + "' has no characteristics"};
            if (!names.insert(name).second)
                return Issue{ErrorCode::distinctness_failure, "platform name '" + name + "' is used twice"};
            if (!profiles.insert(to_json(*p.find("characteristics")).dump()).second)
                return Issue{ErrorCode::distinctness_failure, "platform '" + name + "' repeats another platform's characteristics"};
        }
        return std::nullopt;
    };
    const Value v = gateway.complete_structured(gateway.generation_request({{Role::user, prompt}}), shape,
                                                repair_budget, check);
    std::vector<Platform> out;
    for (const auto& p : v.as_list()) {
        Platform pl;
        pl.scenario_id = scenario.id;
        pl.name = p.find("name")->as_text();
        pl.id = stable_id("pl", scenario.id + "/" + pl.name);
        for (const auto& [k, c] : p.find("characteristics")->as_map()) pl.characteristics[k] = c.as_text();
        out.push_back(std::move(pl));
    }
    return out;
}

/// What an expansion call needs to know beyond the node itself.
struct ExpansionContext {
    const Scenario* scenario = nullptr;
    const Platform* platform = nullptr;
    std::string path;                    // "scenario/Platform/category/..."
    std::vector<std::string> shared;     // functionality categories of earlier platforms
    const ToolgenConfig* config = nullptr;
    const PromptSet* prompts = nullptr;
};

/// One refinement step. Platform nodes split into functionality categories;
/// functionality nodes either refine further or turn into API leaves, and at
/// the depth cap they must turn into API leaves.
inline std::vector<ApiTreeNode> expand_functionality(const ApiTreeNode& node, Gateway& gateway,
                                                     const ExpansionContext& ctx) {
    if (node.payload != ApiTreeNode::Payload::platform && node.payload != ApiTreeNode::Payload::functionality)
        throw Error(ErrorCode::precondition, "only platform and functionality nodes can be expanded");
    static const ToolgenConfig default_config;
    static const PromptSet default_prompts;
    const ToolgenConfig& config = ctx.config ? *ctx.config : default_config;
    const PromptSet& prompts = ctx.prompts ? *ctx.prompts : default_prompts;

    const int depth = node.level - 1;  // 0 for the platform node itself
    enum class Mode { platform, open, leaf } mode =
        depth == 0 ? Mode::platform : (depth >= config.max_depth ? Mode::leaf : Mode::open);
    const char* mode_key = mode == Mode::platform ? "expand_mode_platform"
                                                  : (mode == Mode::leaf ? "expand_mode_leaf" : "expand_mode_open");
    std::string shared_text;
    for (std::size_t i = 0; i < ctx.shared.size(); ++i) shared_text += (i ? ", " : "") + ctx.shared[i];
    if (shared_text.empty()) shared_text = "(none yet)";

    const std::string prompt = prompts.render(
        "expand", {{"path", ctx.path},
                   {"depth", std::to_string(depth)},
                   {"scenario", ctx.scenario ? ctx.scenario->name : ""},
                   {"platform", ctx.platform ? ctx.platform->name : node.name},
                   {"characteristics", ctx.platform ? render_characteristics(*ctx.platform) : ""},
                   {"description", node.description.empty() ? node.name : node.description},
                   {"shared", shared_text},
                   {"mode", prompts.get(mode_key)}});

    const std::string platform_id = node.platform_id;
    Validator check = [&](const Value& v) -> std::optional<Issue> {
        const Value* kind = v.find("kind");
        if (!kind || !kind->is_text()) return Issue{ErrorCode::structure_failure, "missing \"kind\""};
        const std::string k = kind->as_text();
        if (k == "refine") {
            if (mode == Mode::leaf) return Issue{ErrorCode::structure_failure, "maximum depth reached: reply with APIs"};
            const Value* children = v.find("children");
            if (!children || !children->is_list() || children->as_list().empty())
                return Issue{ErrorCode::structure_failure, "\"children\" must be a non-empty list"};
            bool overlaps = ctx.shared.empty() || mode != Mode::platform;
            for (const auto& c : children->as_list()) {
                const Value* n = c.find("name");
                if (!n || !n->is_text() || trim(n->as_text()).empty())
                    return Issue{ErrorCode::structure_failure, "every child needs a \"name\""};
                for (const auto& s : ctx.shared)
                    if (lower(trim(s)) == lower(trim(n->as_text()))) overlaps = true;
            }
            if (!overlaps)
                return Issue{ErrorCode::structure_failure,
                             "reuse at least one of the shared functionality categories: " + shared_text};
            return std::nullopt;
        }
        if (k == "apis") {
            if (mode == Mode::platform)
                return Issue{ErrorCode::structure_failure, "split the platform into functionality categories first"};
            const Value* apis = v.find("apis");
            if (!apis || !apis->is_list() || apis->as_list().empty())
                return Issue{ErrorCode::structure_failure, "\"apis\" must be a non-empty list"};
            for (const auto& a : apis->as_list()) {
                ToolApi tmp;
                if (auto err = api_from_value(a, platform_id, tmp)) return Issue{ErrorCode::structure_failure, *err};
            }
            return std::nullopt;
        }
        return Issue{ErrorCode::structure_failure, "\"kind\" must be \"refine\" or \"apis\""};
    };

    const Value v = gateway.complete_structured(gateway.generation_request({{Role::user, prompt}}), Shape::any(),
                                                config.repair_budget, check);
    std::vector<ApiTreeNode> out;
    if (v.find("kind")->as_text() == "refine") {
        for (const auto& c : v.find("children")->as_list()) {
            ApiTreeNode child;
            child.payload = ApiTreeNode::Payload::functionality;
            child.level = node.level + 1;
            child.name = trim(c.find("name")->as_text());
            if (const Value* d = c.find("description"); d && d->is_text()) child.description = d->as_text();
            child.platform_id = platform_id;
            child.id = stable_id("fn", ctx.path + "/" + child.name);
            out.push_back(std::move(child));
        }
    } else {
        for (const auto& a : v.find("apis")->as_list()) {
            ApiTreeNode leaf;
            leaf.payload = ApiTreeNode::Payload::api_leaf;
            leaf.level = node.level + 1;
            ToolApi api;
            api_from_value(a, platform_id, api);
            leaf.name = api.name;
            leaf.description = api.description;
            leaf.platform_id = platform_id;
            leaf.id = stable_id("api", ctx.path + "/" + api.name + "#" + std::to_string(out.size()));
            leaf.api = std::move(api);
            out.push_back(std::move(leaf));
        }
    }
    return out;
}

namespace detail {

inline void expand_subtree(ApiTree& tree, std::size_t node_index, Gateway& gateway, ExpansionContext ctx) {
    const ApiTreeNode node = tree.nodes[node_index];
    auto children = expand_functionality(node, gateway, ctx);
    std::vector<std::size_t> child_indices;
    for (auto& c : children) {
        tree.nodes[node_index].children.push_back(c.id);
        child_indices.push_back(tree.nodes.size());
        tree.nodes.push_back(std::move(c));
    }
    for (std::size_t idx : child_indices) {
        if (tree.nodes[idx].payload != ApiTreeNode::Payload::functionality) continue;
        ExpansionContext sub = ctx;
        sub.path = ctx.path + "/" + tree.nodes[idx].name;
        expand_subtree(tree, idx, gateway, sub);
    }
}

inline void collect_leaves(const ApiTree& tree, const std::string& id, std::vector<std::string>& out) {
    const ApiTreeNode* n = tree.find(id);
    if (!n) return;
    if (n->payload == ApiTreeNode::Payload::api_leaf) out.push_back(n->id);
    for (const auto& c : n->children) collect_leaves(tree, c, out);
}

inline void drop_node(ApiTree& tree, const std::string& id) {
    for (auto& n : tree.nodes) std::erase(n.children, id);
    std::erase_if(tree.nodes, [&](const ApiTreeNode& n) { return n.id == id; });
}

} // namespace detail

/// Build the whole library: for each scenario generate platforms, expand each
/// platform depth-first, then top up or trim every platform to the API target.
inline ToolLibrary build_tool_library(const std::vector<Scenario>& scenarios, const ToolgenConfig& config,
                                      Gateway& gateway, const PromptSet& prompts = {}) {
    if (scenarios.empty()) throw Error(ErrorCode::precondition, "no scenarios given");
    if (config.apis_per_platform < 1) throw Error(ErrorCode::precondition, "apis_per_platform must be >= 1");
    if (config.max_depth < 1) throw Error(ErrorCode::precondition, "max_depth must be >= 1");
    ToolLibrary lib;
    for (const auto& scenario : scenarios) {
        lib.registry.scenarios.push_back(scenario);
        ApiTreeNode sn;
        sn.id = stable_id("sn", scenario.id);
        sn.level = 0;
        sn.payload = ApiTreeNode::Payload::scenario;
        sn.name = scenario.name;
        sn.description = scenario.description;
        const std::size_t scenario_index = lib.tree.nodes.size();
        lib.tree.nodes.push_back(sn);

        const auto platforms =
            generate_platforms(scenario, config.platforms_per_scenario, gateway, prompts, config.repair_budget);
        std::vector<std::string> shared;
        for (const auto& platform : platforms) {
            lib.registry.platforms.push_back(platform);
            ApiTreeNode pn;
            pn.id = stable_id("pn", platform.id);
            pn.level = 1;
            pn.payload = ApiTreeNode::Payload::platform;
            pn.name = platform.name;
            pn.platform_id = platform.id;
            pn.description = render_characteristics(platform);
            lib.tree.nodes[scenario_index].children.push_back(pn.id);
            const std::size_t pidx = lib.tree.nodes.size();
            lib.tree.nodes.push_back(pn);

            ExpansionContext ctx{&scenario, &platform, scenario.name + "/" + platform.name, shared, &config, &prompts};
            detail::expand_subtree(lib.tree, pidx, gateway, ctx);
            for (const auto& cid : lib.tree.find(pn.id)->children) {
                const auto* c = lib.tree.find(cid);
                if (c && c->payload == ApiTreeNode::Payload::functionality &&
                    std::find(shared.begin(), shared.end(), c->name) == shared.end())
                    shared.push_back(c->name);
            }

            // dedupe in depth-first order
            std::vector<std::string> leaves;
            detail::collect_leaves(lib.tree, pn.id, leaves);
            std::set<std::string> names;
            std::vector<ToolApi> kept;
            for (const auto& lid : leaves) {
                const auto* leaf = lib.tree.find(lid);
                if (names.insert(leaf->api->name).second) kept.push_back(*leaf->api);
                else detail::drop_node(lib.tree, lid);
            }
            const auto target = static_cast<std::size_t>(config.apis_per_platform);
            for (int round = 1; kept.size() < target && round <= config.regen_budget; ++round) {
                std::string existing;
                for (const auto& a : kept) existing += (existing.empty() ? "" : ", ") + a.name;
                const std::string prompt = prompts.render(
                    "extra_apis", {{"platform", scenario.name + "/" + platform.name},
                                   {"round", std::to_string(round)},
                                   {"scenario", scenario.name},
                                   {"characteristics", render_characteristics(platform)},
                                   {"existing", existing.empty() ? "(none)" : existing},
                                   {"count", std::to_string(target - kept.size())}});
                Validator check = [&](const Value& v) -> std::optional<Issue> {
                    for (const auto& a : v.as_list()) {
                        ToolApi tmp;
                        if (auto err = api_from_value(a, platform.id, tmp)) return Issue{ErrorCode::structure_failure, *err};
                    }
                    return std::nullopt;
                };
                const Value v = gateway.complete_structured(gateway.generation_request({{Role::user, prompt}}),
                                                            Shape::list(Shape::any()), config.repair_budget, check);
                for (const auto& a : v.as_list()) {
                    if (kept.size() >= target) break;
                    ToolApi api;
                    api_from_value(a, platform.id, api);
                    if (!names.insert(api.name).second) continue;
                    ApiTreeNode leaf;
                    leaf.payload = ApiTreeNode::Payload::api_leaf;
                    leaf.level = 2;
                    leaf.name = api.name;
                    leaf.description = api.description;
                    leaf.platform_id = platform.id;
                    leaf.id = stable_id("api", scenario.name + "/" + platform.name + "/+" + api.name);
                    leaf.api = api;
                    lib.tree.find(pn.id)->children.push_back(leaf.id);
                    lib.tree.nodes.push_back(std::move(leaf));
                    kept.push_back(std::move(api));
                }
            }
            if (kept.size() < target)
                throw Error(ErrorCode::target_unreachable,
                            "platform " + platform.name + " has " + std::to_string(kept.size()) + " distinct APIs, " +
                                std::to_string(target) + " required");
            if (kept.size() > target) {
                std::vector<std::string> all;
                detail::collect_leaves(lib.tree, pn.id, all);
                for (std::size_t i = target; i < all.size(); ++i) detail::drop_node(lib.tree, all[i]);
                kept.resize(target);
            }
            for (auto& a : kept) lib.registry.apis.push_back(std::move(a));
        }
    }
    if (auto violations = validate_registry(lib.registry); !violations.empty())
        throw Error(ErrorCode::structure_failure, "generated library is inconsistent: " + violations.front().detail);
    return lib;
}

} // namespace ptool
