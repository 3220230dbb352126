#pragma once

// Flat-file persistence for every stage plus the train/test split.
// One JSON record per line, fields in a fixed order.

#include "ptool/codec.hpp"
#include "ptool/evalkit.hpp"
#include "ptool/hash.hpp"
#include "ptool/model.hpp"
#include "ptool/profilegen.hpp"
#include "ptool/verify.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ptool {

namespace fs = std::filesystem;

// --- files -------------------------------------------------------------------

/// Write via a temp file and rename so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw Error(ErrorCode::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_jsonl(const fs::path& path, const std::vector<Json>& records) {
    std::string text;
    for (const auto& r : records) text += r.dump() + "\n";
    write_file_atomic(path, text);
}

/// Decode each non-empty line with `decode`; any failure is reported as
/// schema-mismatch with file and line number.
template <typename T, typename Decode>
std::vector<T> read_jsonl(const fs::path& path, Decode decode) {
    const std::string text = read_file(path);
    std::vector<T> out;
    std::size_t line_no = 0, start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        const std::string line = text.substr(start, end - start);
        start = end + 1;
        if (trim(line).empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorCode::schema_mismatch, where + ": malformed JSON");
        try {
            out.push_back(decode(j));
        } catch (const Error& e) {
            throw Error(ErrorCode::schema_mismatch, where + ": " + e.what());
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::schema_mismatch, where + ": " + e.what());
        }
    }
    return out;
}

// --- extra codecs ------------------------------------------------------------

inline Json to_json(const FeatureTree& t) {
    Json j;
    j["root"] = t.root;
    Json nodes = Json::array();
    for (const auto& [id, n] : t.nodes) {
        Json nj;
        nj["id"] = n.id;
        nj["label"] = n.label;
        nj["kind"] = std::string(to_string(n.kind));
        nj["children"] = n.children;
        Json refs = Json::array();
        for (const auto& r : n.source_refs)
            refs.push_back(Json{{"kind", r.kind == SourceRef::Kind::characteristic ? "characteristic" : "parameter"},
                                {"platform_id", r.platform_id},
                                {"api", r.api},
                                {"name", r.name}});
        nj["source_refs"] = std::move(refs);
        nodes.push_back(std::move(nj));
    }
    j["nodes"] = std::move(nodes);
    j["layers"] = t.layers;
    return j;
}

inline FeatureTree feature_tree_from_json(const Json& j) {
    codec::require_fields(j, {"root", "nodes", "layers"}, "feature tree");
    FeatureTree t;
    t.root = codec::str(j, "root", "feature tree");
    if (!j["nodes"].is_array() || !j["layers"].is_array())
        throw Error(ErrorCode::schema_mismatch, "feature tree: nodes and layers must be arrays");
    for (const auto& nj : j["nodes"]) {
        codec::require_fields(nj, {"id", "label", "kind", "children", "source_refs"}, "feature node");
        FeatureNode n;
        n.id = codec::str(nj, "id", "feature node");
        n.label = codec::str(nj, "label", "feature node");
        const auto kind = codec::str(nj, "kind", "feature node");
        if (kind != "basic" && kind != "implicit") throw Error(ErrorCode::schema_mismatch, "feature node: bad kind");
        n.kind = kind == "basic" ? FeatureKind::basic : FeatureKind::implicit;
        n.children = nj["children"].get<std::vector<std::string>>();
        for (const auto& rj : nj["source_refs"]) {
            codec::require_fields(rj, {"kind", "platform_id", "api", "name"}, "source ref");
            SourceRef r;
            r.kind = codec::str(rj, "kind", "source ref") == "characteristic" ? SourceRef::Kind::characteristic
                                                                             : SourceRef::Kind::parameter;
            r.platform_id = codec::str(rj, "platform_id", "source ref");
            r.api = codec::str(rj, "api", "source ref");
            r.name = codec::str(rj, "name", "source ref");
            n.source_refs.push_back(std::move(r));
        }
        t.nodes.emplace(n.id, std::move(n));
    }
    t.layers = j["layers"].get<std::vector<std::vector<std::string>>>();
    return t;
}

inline Json to_json(const Violation& v) {
    Json j;
    j["kind"] = std::string(to_string(v.kind));
    j["call"] = v.call;
    j["param"] = v.param ? Json(*v.param) : Json(nullptr);
    j["detail"] = v.detail;
    return j;
}

inline Json to_json(const Rejection& r) {
    Json j;
    j["sample"] = to_json(r.sample);
    j["reason"] = r.reason();
    Json vs = Json::array();
    for (const auto& v : r.violations) vs.push_back(to_json(v));
    j["violations"] = std::move(vs);
    if (r.verdict) {
        Json v;
        v["pass"] = r.verdict->pass;
        v["param_correctness"] = std::string(to_string(r.verdict->param_correctness));
        v["hallucination"] = std::string(to_string(r.verdict->hallucination));
        v["query_resolution"] = std::string(to_string(r.verdict->query_resolution));
        v["reasons"] = r.verdict->reasons;
        j["verdict"] = std::move(v);
    } else {
        j["verdict"] = nullptr;
    }
    return j;
}

// --- split -------------------------------------------------------------------

/// Uniform integer in [0, n) by rejection sampling; the standard distributions
/// are implementation-defined, this is the same on every platform.
inline std::uint64_t bounded_random(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return x % n;
}

/// First k elements of a seeded partial Fisher-Yates shuffle.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t k, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < k && i < items.size(); ++i) {
        const std::size_t j = i + bounded_random(rng, items.size() - i);
        std::swap(items[i], items[j]);
    }
    items.resize(std::min(k, items.size()));
    return items;
}

struct SplitResult {
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::vector<std::string> untrained_users;  // sorted
    std::size_t test_trained = 0;
    std::size_t test_untrained = 0;

    [[nodiscard]] std::map<std::string, UserSplit> user_split(const std::vector<std::string>& all_users) const {
        std::map<std::string, UserSplit> out;
        for (const auto& u : all_users) out[u] = UserSplit::trained;
        for (const auto& u : untrained_users) out[u] = UserSplit::untrained;
        return out;
    }
};

/// Holds out every query of `untrained_user_count` random users, then moves
/// round(fraction * rest) random queries of the other users to test.
/// Output lists keep input order.
inline SplitResult split_corpus(const std::vector<Sample>& samples, const std::vector<std::string>& user_ids,
                                std::size_t untrained_user_count, double trained_test_fraction, std::uint64_t seed) {
    std::set<std::string> users(user_ids.begin(), user_ids.end());
    if (users.size() != user_ids.size()) throw Error(ErrorCode::precondition, "user ids must be distinct");
    if (untrained_user_count >= users.size() && !(users.empty() && untrained_user_count == 0))
        throw Error(ErrorCode::precondition, "untrained user count must be below the number of users");
    if (!(trained_test_fraction >= 0.0 && trained_test_fraction < 1.0))
        throw Error(ErrorCode::precondition, "trained-test fraction must be in [0, 1)");
    for (const auto& s : samples)
        if (!users.contains(s.user_id)) throw Error(ErrorCode::precondition, "sample " + s.id + " has an unknown user");

    std::mt19937_64 rng(seed);
    SplitResult r;
    auto held = sample_without_replacement(std::vector<std::string>(users.begin(), users.end()), untrained_user_count, rng);
    std::sort(held.begin(), held.end());
    r.untrained_users = held;
    const std::set<std::string> held_set(held.begin(), held.end());

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (!held_set.contains(samples[i].user_id)) candidates.push_back(i);
    const auto k = static_cast<std::size_t>(std::llround(trained_test_fraction * static_cast<double>(candidates.size())));
    const auto picked_list = sample_without_replacement(candidates, k, rng);
    const std::set<std::size_t> picked(picked_list.begin(), picked_list.end());

    for (std::size_t i = 0; i < samples.size(); ++i) {
        Sample s = samples[i];
        const bool untrained = held_set.contains(s.user_id);
        if (untrained || picked.contains(i)) {
            s.split = Split::test;
            ++(untrained ? r.test_untrained : r.test_trained);
            r.test.push_back(std::move(s));
        } else {
            s.split = Split::train;
            r.train.push_back(std::move(s));
        }
    }
    return r;
}

// --- manifest ----------------------------------------------------------------

struct StageRecord {
    std::string fingerprint;  // hash of the stage's config and upstream fingerprints
    friend bool operator==(const StageRecord&, const StageRecord&) = default;
};

struct CorpusManifest {
    std::map<std::string, std::size_t> counts;        // scenarios, platforms, apis, users, queries, ...
    std::map<std::string, std::size_t> split_counts;  // train, test_trained, test_untrained
    std::vector<std::string> untrained_users;
    std::uint64_t seed = 0;
    std::map<std::string, StageRecord> stages;
    std::map<std::string, std::string> checksums;  // file -> sha256

    friend bool operator==(const CorpusManifest&, const CorpusManifest&) = default;
};

inline Json to_json(const CorpusManifest& m) {
    Json j;
    j["seed"] = m.seed;
    j["counts"] = Json::object();
    for (const auto& [k, v] : m.counts) j["counts"][k] = v;
    j["split_counts"] = Json::object();
    for (const auto& [k, v] : m.split_counts) j["split_counts"][k] = v;
    j["untrained_users"] = m.untrained_users;
    j["stages"] = Json::object();
    for (const auto& [k, v] : m.stages) j["stages"][k] = Json{{"fingerprint", v.fingerprint}};
    j["checksums"] = Json::object();
    for (const auto& [k, v] : m.checksums) j["checksums"][k] = v;
    return j;
}

inline CorpusManifest manifest_from_json(const Json& j) {
    codec::require_fields(j, {"seed", "counts", "split_counts", "untrained_users", "stages", "checksums"}, "manifest");
    CorpusManifest m;
    m.seed = j["seed"].get<std::uint64_t>();
    for (auto it = j["counts"].begin(); it != j["counts"].end(); ++it) m.counts[it.key()] = it.value().get<std::size_t>();
    for (auto it = j["split_counts"].begin(); it != j["split_counts"].end(); ++it)
        m.split_counts[it.key()] = it.value().get<std::size_t>();
    m.untrained_users = j["untrained_users"].get<std::vector<std::string>>();
    for (auto it = j["stages"].begin(); it != j["stages"].end(); ++it)
        m.stages[it.key()] = {codec::str(it.value(), "fingerprint", "manifest stage")};
    for (auto it = j["checksums"].begin(); it != j["checksums"].end(); ++it)
        m.checksums[it.key()] = it.value().get<std::string>();
    return m;
}

// --- store -------------------------------------------------------------------

class DatasetStore {
public:
    explicit DatasetStore(fs::path root) : root_(std::move(root)) {}

    [[nodiscard]] const fs::path& root() const { return root_; }
    [[nodiscard]] fs::path path(const std::string& rel) const { return root_ / rel; }
    [[nodiscard]] bool exists(const std::string& rel) const { return fs::exists(path(rel)); }

    // registry: scenarios.jsonl, platforms.jsonl, tools.jsonl
    void save_registry(const Registry& reg) const {
        save_list("scenarios.jsonl", reg.scenarios);
        save_list("platforms.jsonl", reg.platforms);
        save_list("tools.jsonl", reg.apis);
    }
    [[nodiscard]] Registry load_registry() const {
        Registry reg;
        reg.scenarios = read_jsonl<Scenario>(path("scenarios.jsonl"), scenario_from_json);
        reg.platforms = read_jsonl<Platform>(path("platforms.jsonl"), platform_from_json);
        reg.apis = read_jsonl<ToolApi>(path("tools.jsonl"), tool_from_json);
        return reg;
    }

    void save_profiles(const std::vector<UserProfile>& profiles) const { save_list("profiles.jsonl", profiles); }
    [[nodiscard]] std::vector<UserProfile> load_profiles() const {
        return read_jsonl<UserProfile>(path("profiles.jsonl"), profile_from_json);
    }

    void save_feature_tree(const FeatureTree& t) const { write_file_atomic(path("feature_tree.json"), to_json(t).dump(2) + "\n"); }
    [[nodiscard]] FeatureTree load_feature_tree() const {
        Json j = Json::parse(read_file(path("feature_tree.json")), nullptr, false);
        if (j.is_discarded()) throw Error(ErrorCode::schema_mismatch, path("feature_tree.json").string() + ": malformed JSON");
        return feature_tree_from_json(j);
    }

    void save_samples(const std::string& rel, const std::vector<Sample>& samples) const { save_list(rel, samples); }
    [[nodiscard]] std::vector<Sample> load_samples(const std::string& rel) const {
        return read_jsonl<Sample>(path(rel), sample_from_json);
    }

    void save_rejected(const std::vector<Rejection>& rejected) const { save_list("rejected.jsonl", rejected); }

    [[nodiscard]] std::string predictions_file(const std::string& model) const { return "predictions/" + model + ".jsonl"; }

    void save_predictions(const std::string& model, const std::map<std::string, std::string>& by_id,
                          const std::vector<std::string>& order) const {
        std::vector<Json> lines;
        for (const auto& id : order)
            if (auto it = by_id.find(id); it != by_id.end()) lines.push_back(Json{{"id", id}, {"prediction", it->second}});
        write_jsonl(path(predictions_file(model)), lines);
    }

    /// {"id", "prediction"} per line; a repeated id is a schema mismatch.
    [[nodiscard]] static std::map<std::string, std::string> load_predictions(const fs::path& file) {
        std::map<std::string, std::string> out;
        auto rows = read_jsonl<std::pair<std::string, std::string>>(file, [](const Json& j) {
            codec::require_fields(j, {"id", "prediction"}, "prediction");
            return std::pair{codec::str(j, "id", "prediction"), codec::str(j, "prediction", "prediction")};
        });
        for (auto& [id, text] : rows)
            if (!out.emplace(id, std::move(text)).second)
                throw Error(ErrorCode::schema_mismatch, file.string() + ": duplicate prediction for " + id);
        return out;
    }

    void save_report(const std::string& model, const Json& report) const {
        write_file_atomic(path("reports/" + model + ".json"), report.dump(2) + "\n");
    }

    [[nodiscard]] CorpusManifest load_manifest() const {
        if (!exists("manifest.json")) return {};
        Json j = Json::parse(read_file(path("manifest.json")), nullptr, false);
        if (j.is_discarded()) throw Error(ErrorCode::schema_mismatch, path("manifest.json").string() + ": malformed JSON");
        return manifest_from_json(j);
    }
    void save_manifest(const CorpusManifest& m) const { write_file_atomic(path("manifest.json"), to_json(m).dump(2) + "\n"); }

    [[nodiscard]] std::string checksum(const std::string& rel) const { return sha256_hex(read_file(path(rel))); }

    /// Record counts and checksums recomputed from whatever is on disk.
    void refresh_manifest(CorpusManifest& m) const {
        auto lines = [&](const std::string& rel) -> std::optional<std::size_t> {
            if (!exists(rel)) return std::nullopt;
            const std::string text = read_file(path(rel));
            std::size_t n = 0;
            std::size_t start = 0;
            while (start < text.size()) {
                std::size_t end = text.find('\n', start);
                if (end == std::string::npos) end = text.size();
                if (!trim(text.substr(start, end - start)).empty()) ++n;
                start = end + 1;
            }
            return n;
        };
        const std::pair<const char*, const char*> entity_files[] = {
            {"scenarios", "scenarios.jsonl"}, {"platforms", "platforms.jsonl"}, {"apis", "tools.jsonl"},
            {"users", "profiles.jsonl"},      {"generated", "drafts.jsonl"},    {"queries", "samples.jsonl"},
            {"rejected", "rejected.jsonl"}};
        m.counts.clear();
        for (const auto& [name, file] : entity_files)
            if (auto n = lines(file)) m.counts[name] = *n;
        m.checksums.clear();
        for (const char* file : {"scenarios.jsonl", "platforms.jsonl", "tools.jsonl", "profiles.jsonl",
                                 "feature_tree.json", "drafts.jsonl", "samples.jsonl", "rejected.jsonl", "splits/train.jsonl",
                                 "splits/test.jsonl"})
            if (exists(file)) m.checksums[file] = checksum(file);
    }

private:
    template <typename T>
    void save_list(const std::string& rel, const std::vector<T>& items) const {
        std::vector<Json> lines;
        lines.reserve(items.size());
        for (const auto& x : items) lines.push_back(to_json(x));
        write_jsonl(path(rel), lines);
    }

    fs::path root_;
};

} // namespace ptool
