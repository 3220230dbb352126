#pragma once

// User profile synthesis.
//
// 1. build_feature_tree: platform characteristics and API parameters are the
//    leaves; an LLM merges them level by level into higher-level features
//    until a level has at most `threshold` nodes. The first round also splits
//    features into basic (observable) and implicit (latent preference).
// 2. assign_characteristics: walk the tree top-down. For each layer l and each
//    value combination chosen above it, one call asks for k_l distinct value
//    assignments of that layer, so the plan yields prod(k_l) profiles.
// 3. generate_behaviors: role-play past platform actions per scenario.

#include "ptool/gateway.hpp"
#include "ptool/hash.hpp"
#include "ptool/model.hpp"
#include "ptool/prompts.hpp"
#include "ptool/toolgen.hpp"

#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ptool {

struct FeatureTree {
    std::string root;
    std::map<std::string, FeatureNode> nodes;
    /// layers[0] holds the root's children; layers.back() holds the leaves.
    std::vector<std::vector<std::string>> layers;

    [[nodiscard]] std::size_t depth() const { return layers.empty() ? 0 : layers.size() - 1; }
    [[nodiscard]] const FeatureNode& node(const std::string& id) const { return nodes.at(id); }
};

struct AssignmentPlan {
    std::vector<int> k_per_layer;

    [[nodiscard]] std::size_t profile_count() const {
        std::size_t n = 1;
        for (int k : k_per_layer) n *= static_cast<std::size_t>(k);
        return n;
    }
};

struct FeatureTreeOptions {
    std::size_t threshold = 8;
    int round_cap = 8;
    int repair_budget = -1;
};

/// Structural checks: labels unique, every node reachable once from the root,
/// leaves carry source references, upper layers within the threshold.
inline std::vector<std::string> validate_feature_tree(const FeatureTree& tree, std::size_t threshold) {
    std::vector<std::string> problems;
    std::set<std::string> labels;
    for (const auto& [id, n] : tree.nodes) {
        if (id == tree.root) continue;
        if (!labels.insert(lower(n.label)).second) problems.push_back("duplicate label '" + n.label + "'");
        if (n.children.empty() && n.source_refs.empty()) problems.push_back("leaf '" + n.label + "' has no source");
    }
    std::map<std::string, int> seen;
    std::function<void(const std::string&, int)> walk = [&](const std::string& id, int guard) {
        if (guard > 64) {
            problems.push_back("tree too deep or cyclic");
            return;
        }
        if (++seen[id] > 1) {
            problems.push_back("node '" + id + "' reached twice");
            return;
        }
        auto it = tree.nodes.find(id);
        if (it == tree.nodes.end()) {
            problems.push_back("dangling child '" + id + "'");
            return;
        }
        for (const auto& c : it->second.children) walk(c, guard + 1);
    };
    walk(tree.root, 0);
    if (seen.size() != tree.nodes.size()) problems.push_back("unreachable nodes present");
    for (std::size_t l = 0; l + 1 < tree.layers.size(); ++l)
        if (tree.layers[l].size() > threshold && l == 0)
            problems.push_back("top layer has " + std::to_string(tree.layers[l].size()) + " nodes");
    return problems;
}

inline FeatureTree build_feature_tree(const Registry& registry, Gateway& gateway, const FeatureTreeOptions& options = {},
                                      const PromptSet& prompts = {}) {
    if (options.threshold < 2) throw Error(ErrorCode::precondition, "cluster threshold must be >= 2");
    FeatureTree tree;

    // leaves, deduplicated case-insensitively, in registry order
    std::vector<std::string> current;
    std::map<std::string, std::string> id_by_label;  // lower(label) -> id
    auto add_leaf = [&](const std::string& label, SourceRef ref) {
        const std::string key = lower(trim(label));
        if (key.empty()) return;
        auto it = id_by_label.find(key);
        if (it == id_by_label.end()) {
            FeatureNode n;
            n.id = stable_id("ft", key);
            n.label = trim(label);
            n.source_refs.push_back(std::move(ref));
            id_by_label.emplace(key, n.id);
            current.push_back(n.id);
            tree.nodes.emplace(n.id, std::move(n));
        } else {
            auto& refs = tree.nodes.at(it->second).source_refs;
            if (std::find(refs.begin(), refs.end(), ref) == refs.end()) refs.push_back(std::move(ref));
        }
    };
    for (const auto& p : registry.platforms)
        for (const auto& [trait, _] : p.characteristics)
            add_leaf(trait, SourceRef{SourceRef::Kind::characteristic, p.id, "", trait});
    for (const auto& a : registry.apis)
        for (const auto& param : a.params)
            add_leaf(param.name, SourceRef{SourceRef::Kind::parameter, a.platform_id, a.name, param.name});
    if (current.empty()) throw Error(ErrorCode::precondition, "registry has no characteristics or parameters");

    std::vector<std::vector<std::string>> bottom_up{current};
    int rounds = 0;
    bool initial = true;
    do {
        if (rounds >= options.round_cap)
            throw Error(ErrorCode::non_convergence,
                        "feature clustering did not reach " + std::to_string(options.threshold) + " nodes within " +
                            std::to_string(options.round_cap) + " rounds");
        ++rounds;
        Json labels = Json::array();
        std::map<std::string, std::string> level_ids;  // lower(label) -> id
        for (const auto& id : current) {
            labels.push_back(tree.nodes.at(id).label);
            level_ids.emplace(lower(tree.nodes.at(id).label), id);
        }
        const std::string prompt = prompts.render(
            "cluster", {{"round", std::to_string(rounds)},
                        {"features", labels.dump()},
                        {"threshold", std::to_string(options.threshold)},
                        {"kind_rule", prompts.get(initial ? "cluster_kind_initial" : "cluster_kind_later")}});
        const Shape shape = Shape::list(Shape::object({{"label", Shape::text()}, {"members", Shape::list(Shape::text())}}));
        Validator check = [&](const Value& v) -> std::optional<Issue> {
            std::set<std::string> covered;
            std::set<std::string> group_labels;
            for (const auto& g : v.as_list()) {
                const std::string label = trim(g.find("label")->as_text());
                if (label.empty()) return Issue{ErrorCode::structure_failure, "group label is empty"};
                if (!group_labels.insert(lower(label)).second)
                    return Issue{ErrorCode::structure_failure, "group label '" + label + "' used twice"};
                if (g.find("members")->as_list().empty())
                    return Issue{ErrorCode::structure_failure, "group '" + label + "' has no members"};
                for (const auto& m : g.find("members")->as_list()) {
                    const std::string key = lower(trim(m.as_text()));
                    if (!level_ids.contains(key))
                        return Issue{ErrorCode::structure_failure, "unknown feature '" + m.as_text() + "'"};
                    if (!covered.insert(key).second)
                        return Issue{ErrorCode::structure_failure, "feature '" + m.as_text() + "' is in two groups"};
                }
            }
            if (covered.size() != level_ids.size())
                return Issue{ErrorCode::structure_failure, "every feature must belong to a group"};
            for (const auto& g : v.as_list()) {
                const std::string key = lower(trim(g.find("label")->as_text()));
                if (id_by_label.contains(key))
                    return Issue{ErrorCode::structure_failure, "group label '" + key + "' repeats an existing feature name"};
            }
            return std::nullopt;
        };
        const Value v = gateway.complete_structured(gateway.generation_request({{Role::user, prompt}}), shape,
                                                    options.repair_budget, check);
        // nothing merged while still above the threshold: spend another round
        if (v.as_list().size() >= current.size() && current.size() > options.threshold) continue;

        std::vector<std::string> parents;
        for (const auto& g : v.as_list()) {
            FeatureNode parent;
            parent.label = trim(g.find("label")->as_text());
            parent.id = stable_id("ft", lower(parent.label) + "#" + std::to_string(rounds));
            int basic = 0, implicit = 0;
            const Value* kind = g.find("kind");
            const bool says_basic = kind && kind->is_text() && lower(kind->as_text()) == "basic";
            for (const auto& m : g.find("members")->as_list()) {
                const std::string child = level_ids.at(lower(trim(m.as_text())));
                parent.children.push_back(child);
                if (initial) tree.nodes.at(child).kind = says_basic ? FeatureKind::basic : FeatureKind::implicit;
                (tree.nodes.at(child).kind == FeatureKind::basic ? basic : implicit)++;
            }
            // ties (and unclassified groups) fall to implicit
            parent.kind = initial ? (says_basic ? FeatureKind::basic : FeatureKind::implicit)
                                  : (basic > implicit ? FeatureKind::basic : FeatureKind::implicit);
            id_by_label[lower(parent.label)] = parent.id;
            parents.push_back(parent.id);
            tree.nodes.emplace(parent.id, std::move(parent));
        }
        initial = false;
        current = parents;
        bottom_up.push_back(current);
    } while (initial || current.size() > options.threshold);

    FeatureNode root;
    root.id = "root";
    root.label = "user";
    root.children = current;
    tree.root = root.id;
    tree.nodes.emplace(root.id, std::move(root));
    tree.layers.assign(bottom_up.rbegin(), bottom_up.rend());
    return tree;
}

namespace detail {

inline bool has_duplicates(const Value& list) {
    std::set<std::string> seen;
    for (const auto& e : list.as_list())
        if (!seen.insert(to_json(canonicalize_value(e)).dump()).second) return true;
    return false;
}

} // namespace detail

/// Top-down value assignment. Profiles come out in path order (first layer's
/// first value first), without behavior history.
inline std::vector<UserProfile> assign_characteristics(const FeatureTree& tree, const AssignmentPlan& plan,
                                                       Gateway& gateway, const PromptSet& prompts = {},
                                                       int repair_budget = -1) {
    if (plan.k_per_layer.size() != tree.layers.size())
        throw Error(ErrorCode::precondition, "plan has " + std::to_string(plan.k_per_layer.size()) +
                                                 " layers, feature tree has " + std::to_string(tree.layers.size()));
    for (int k : plan.k_per_layer)
        if (k < 1) throw Error(ErrorCode::precondition, "every k must be >= 1");

    std::vector<UserProfile> out;
    std::function<void(std::size_t, const std::map<std::string, std::string>&, const std::string&)> assign_layer =
        [&](std::size_t layer, const std::map<std::string, std::string>& fixed, const std::string& path) {
            if (layer == tree.layers.size()) {
                UserProfile p;
                for (const auto& [label, value] : fixed) {
                    for (const auto& [id, n] : tree.nodes)
                        if (n.label == label && id != tree.root) {
                            (n.kind == FeatureKind::basic ? p.basic_features : p.implicit_features)[label] = value;
                            break;
                        }
                }
                p.user_id = profile_id(p);
                out.push_back(std::move(p));
                return;
            }
            const int k = plan.k_per_layer[layer];
            std::vector<std::string> labels;
            std::string feature_text;
            for (const auto& id : tree.layers[layer]) {
                const auto& n = tree.node(id);
                labels.push_back(n.label);
                feature_text += "- " + n.label + " (" + std::string(to_string(n.kind));
                if (!n.children.empty()) {
                    feature_text += "; covers ";
                    for (std::size_t i = 0; i < n.children.size(); ++i)
                        feature_text += (i ? ", " : "") + tree.node(n.children[i]).label;
                }
                feature_text += ")\n";
            }
            const std::string prompt = prompts.render("assign", {{"layer", std::to_string(layer)},
                                                                 {"path", path},
                                                                 {"fixed", render_feature_lines(fixed)},
                                                                 {"features", feature_text},
                                                                 {"count", std::to_string(k)}});
            const Shape shape = Shape::list(Shape::map(Shape::text()), static_cast<std::size_t>(k));
            Validator check = [&](const Value& v) -> std::optional<Issue> {
                for (const auto& a : v.as_list())
                    for (const auto& label : labels) {
                        const Value* f = a.find(label);
                        if (!f || trim(f->as_text()).empty())
                            return Issue{ErrorCode::structure_failure, "assignment lacks a value for '" + label + "'"};
                    }
                return std::nullopt;
            };
            auto req = gateway.generation_request({{Role::user, prompt}});
            Value values = gateway.complete_structured(req, shape, repair_budget, check);
            if (detail::has_duplicates(values)) {
                // one dedup round
                req.messages.push_back({Role::assistant, to_json(values).dump()});
                req.messages.push_back({Role::user, "Some assignments are identical. Reply again with exactly " +
                                                        std::to_string(k) + " mutually distinct assignments."});
                values = gateway.complete_structured(req, shape, repair_budget, check);
                if (detail::has_duplicates(values))
                    throw Error(ErrorCode::duplicate_values, "layer " + std::to_string(layer) + " at path " + path +
                                                                 " produced repeated values");
            }
            for (std::size_t i = 0; i < values.as_list().size(); ++i) {
                auto next = fixed;
                for (const auto& label : labels) next[label] = trim(values.as_list()[i].find(label)->as_text());
                assign_layer(layer + 1, next, path + "." + std::to_string(i));
            }
        };
    assign_layer(0, {}, "root");
    std::set<std::string> ids;
    for (const auto& p : out)
        if (!ids.insert(p.user_id).second)
            throw Error(ErrorCode::duplicate_values, "two assignment paths produced the same profile " + p.user_id);
    return out;
}

/// Role-played behavior history: `per_scenario_count` records for every
/// scenario in the registry, each on a platform of that scenario.
inline UserProfile generate_behaviors(UserProfile profile, const Registry& registry, int per_scenario_count,
                                      Gateway& gateway, const PromptSet& prompts = {}, int repair_budget = -1) {
    if (per_scenario_count < 1) throw Error(ErrorCode::precondition, "per_scenario_count must be >= 1");
    profile.history.clear();
    for (const auto& scenario : registry.scenarios) {
        const auto platforms = registry.platforms_in(scenario.id);
        std::set<std::string> names;
        for (const auto* p : platforms) names.insert(p->name);
        const std::string prompt = prompts.render("behaviors", {{"user_id", profile.user_id},
                                                                {"scenario", scenario.name},
                                                                {"basic", render_feature_lines(profile.basic_features)},
                                                                {"implicit", render_feature_lines(profile.implicit_features)},
                                                                {"platforms", render_platforms(platforms)},
                                                                {"count", std::to_string(per_scenario_count)}});
        const Shape shape = Shape::list(Shape::object({{"platform", Shape::text()}, {"action", Shape::text()}}),
                                        static_cast<std::size_t>(per_scenario_count));
        Validator check = [&](const Value& v) -> std::optional<Issue> {
            for (const auto& r : v.as_list()) {
                const auto& platform = r.find("platform")->as_text();
                if (!names.contains(platform))
                    return Issue{ErrorCode::dangling_platform, "unknown platform '" + platform + "'"};
                const std::string action = lower(r.find("action")->as_text());
                if (trim(action).empty()) return Issue{ErrorCode::structure_failure, "empty action"};
                for (const auto& [label, value] : profile.implicit_features)
                    if (value.size() >= 4 && action.find(lower(value)) != std::string::npos)
                        return Issue{ErrorCode::structure_failure,
                                     "action states the preference '" + label + "' verbatim; show it through behavior"};
            }
            return std::nullopt;
        };
        const Value v = gateway.complete_structured(gateway.generation_request({{Role::user, prompt}}), shape,
                                                    repair_budget, check);
        auto& records = profile.history[scenario.name];
        for (const auto& r : v.as_list())
            records.push_back({r.find("platform")->as_text(), trim(r.find("action")->as_text())});
    }
    return profile;
}

} // namespace ptool
