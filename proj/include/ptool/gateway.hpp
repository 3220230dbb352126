#pragma once

// Chat-completion access shared by every generation and verification stage.
//
// A Gateway wraps one Backend (remote OpenAI-compatible endpoint or a scripted
// transcript), an optional on-disk response cache, and a bound on in-flight
// backend requests. complete_structured() adds JSON extraction, shape checking
// and a bounded repair loop on top of complete().

#include "ptool/error.hpp"
#include "ptool/hash.hpp"
#include "ptool/value.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ptool {

enum class Role { system, user, assistant };

inline std::string_view to_string(Role r) {
    switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct ChatRequest {
    std::string model_id;
    std::vector<ChatMessage> messages;
    double temperature = 0.7;
    int max_tokens = 2048;
    std::optional<std::int64_t> seed;

    void validate() const {
        if (messages.empty()) throw Error(ErrorCode::precondition, "chat request has no messages");
        if (temperature < 0) throw Error(ErrorCode::precondition, "temperature must be >= 0");
        if (max_tokens <= 0) throw Error(ErrorCode::precondition, "max_tokens must be positive");
        for (std::size_t i = 0; i < messages.size(); ++i) {
            const auto& m = messages[i];
            if (m.role != Role::assistant && m.content.empty())
                throw Error(ErrorCode::precondition, "empty " + std::string(to_string(m.role)) + " message");
            if (m.role == Role::system && i != 0)
                throw Error(ErrorCode::precondition, "system message must come first");
        }
    }

    /// Flattened "[role]\ncontent" text; what scripted matchers search.
    [[nodiscard]] std::string transcript_text() const {
        std::string out;
        for (const auto& m : messages) {
            out += "[";
            out += to_string(m.role);
            out += "]\n";
            out += m.content;
            out += "\n";
        }
        return out;
    }
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const ChatRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend

/// One transcript entry: answers the first request whose flattened text
/// contains every string in `match`. `times == 0` means reusable forever.
struct ScriptEntry {
    std::vector<std::string> match;
    std::string response;
    int times = 1;
};

/// Deterministic offline stand-in for an LLM. Entries are tried in order and
/// consumed as they are used.
class ScriptedBackend : public Backend {
public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<ScriptEntry> entries) {
        for (auto& e : entries) add(std::move(e));
    }

    void add(ScriptEntry e) {
        std::lock_guard lock(mu_);
        remaining_.push_back(e.times);
        entries_.push_back(std::move(e));
    }

    void add(std::string match, std::string response, int times = 1) {
        add(ScriptEntry{{std::move(match)}, std::move(response), times});
    }

    std::string complete(const ChatRequest& req) override {
        const std::string text = req.transcript_text();
        std::lock_guard lock(mu_);
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].times != 0 && remaining_[i] == 0) continue;
            bool ok = true;
            for (const auto& m : entries_[i].match)
                if (text.find(m) == std::string::npos) {
                    ok = false;
                    break;
                }
            if (!ok) continue;
            if (entries_[i].times != 0) --remaining_[i];
            ++served_;
            return entries_[i].response;
        }
        const auto last_line = text.substr(0, 200);
        throw Error(ErrorCode::scripted_exhausted, "no transcript entry matches request: " + last_line);
    }

    [[nodiscard]] std::size_t served() const {
        std::lock_guard lock(mu_);
        return served_;
    }

    /// Entries with uses left (reusable entries never count).
    [[nodiscard]] std::size_t unconsumed() const {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].times != 0 && remaining_[i] > 0) ++n;
        return n;
    }

    /// JSON lines: {"match": "text" | ["a","b"], "response": "...", "times": 1}
    static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::io, "cannot open transcript " + path.string());
        auto out = std::make_shared<ScriptedBackend>();
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            const auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("match") || !j.contains("response") ||
                !j["response"].is_string())
                throw Error(ErrorCode::schema_mismatch,
                            path.string() + ":" + std::to_string(lineno) + ": bad transcript entry");
            ScriptEntry e;
            if (j["match"].is_string()) e.match.push_back(j["match"].get<std::string>());
            else
                for (const auto& m : j["match"]) e.match.push_back(m.get<std::string>());
            e.response = j["response"].get<std::string>();
            e.times = j.value("times", 1);
            out->add(std::move(e));
        }
        return out;
    }

    static void write_file(const std::filesystem::path& path, const std::vector<ScriptEntry>& entries) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io, "cannot write transcript " + path.string());
        for (const auto& e : entries) {
            nlohmann::ordered_json j;
            j["match"] = e.match;
            j["response"] = e.response;
            j["times"] = e.times;
            out << j.dump() << "\n";
        }
    }

private:
    mutable std::mutex mu_;
    std::vector<ScriptEntry> entries_;
    std::vector<int> remaining_;
    std::size_t served_ = 0;
};

// ---------------------------------------------------------------------------
// Response cache

inline std::string request_cache_key(const ChatRequest& req) {
    nlohmann::ordered_json j;
    j["model"] = req.model_id;
    auto& msgs = j["messages"] = nlohmann::ordered_json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    j["temperature"] = req.temperature;
    j["seed"] = req.seed ? nlohmann::ordered_json(*req.seed) : nlohmann::ordered_json(nullptr);
    return sha256_hex(j.dump());
}

/// One file per request hash. Readers share; writers are serialized and
/// publish via rename so a reader never sees a partial entry.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::optional<std::string> get(const std::string& key) const {
        std::shared_lock lock(mu_);
        std::ifstream in(dir_ / (key + ".json"), std::ios::binary);
        if (!in) return std::nullopt;
        std::stringstream ss;
        ss << in.rdbuf();
        const auto j = nlohmann::json::parse(ss.str(), nullptr, false);
        if (j.is_discarded() || !j.contains("response")) return std::nullopt;
        return j["response"].get<std::string>();
    }

    void put(const std::string& key, const std::string& response) {
        std::unique_lock lock(mu_);
        const auto tmp = dir_ / (key + ".tmp");
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << nlohmann::json{{"response", response}}.dump();
        }
        std::filesystem::rename(tmp, dir_ / (key + ".json"));
    }

private:
    std::filesystem::path dir_;
    mutable std::shared_mutex mu_;
};

// ---------------------------------------------------------------------------
// Structured output shapes

/// Expected structure of a JSON completion. Objects list their required
/// fields; extra fields are allowed.
struct Shape {
    enum class Kind { any, text, number, integer, boolean, list, map, object };

    Kind kind = Kind::any;
    std::shared_ptr<const Shape> element;
    std::vector<std::pair<std::string, Shape>> fields;
    std::optional<std::size_t> exact_size;

    static Shape any() { return {}; }
    static Shape text() { return make(Kind::text); }
    static Shape number() { return make(Kind::number); }
    static Shape integer() { return make(Kind::integer); }
    static Shape boolean() { return make(Kind::boolean); }
    static Shape list(Shape element, std::optional<std::size_t> exact = std::nullopt) {
        Shape s = make(Kind::list);
        s.element = std::make_shared<const Shape>(std::move(element));
        s.exact_size = exact;
        return s;
    }
    static Shape map(Shape element) {
        Shape s = make(Kind::map);
        s.element = std::make_shared<const Shape>(std::move(element));
        return s;
    }
    static Shape object(std::vector<std::pair<std::string, Shape>> fields) {
        Shape s = make(Kind::object);
        s.fields = std::move(fields);
        return s;
    }

    [[nodiscard]] std::string describe() const {
        switch (kind) {
        case Kind::any: return "any JSON value";
        case Kind::text: return "string";
        case Kind::number: return "number";
        case Kind::integer: return "integer";
        case Kind::boolean: return "boolean";
        case Kind::list:
            return "array" + (exact_size ? " of exactly " + std::to_string(*exact_size) : std::string()) +
                   " of " + element->describe();
        case Kind::map: return "object mapping names to " + element->describe();
        case Kind::object: {
            std::string out = "object with fields {";
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (i) out += ", ";
                out += "\"" + fields[i].first + "\": " + fields[i].second.describe();
            }
            return out + "}";
        }
        }
        return "value";
    }

    /// First mismatch as a human-readable message, or nullopt when v conforms.
    [[nodiscard]] std::optional<std::string> check(const Value& v, const std::string& path = "$") const {
        auto mismatch = [&](std::string_view want) {
            return path + ": expected " + std::string(want) + ", got " + std::string(kind_name(v.kind()));
        };
        switch (kind) {
        case Kind::any: return std::nullopt;
        case Kind::text:
            if (!v.is_text()) return mismatch("string");
            return std::nullopt;
        case Kind::number:
            if (!v.is_number()) return mismatch("number");
            return std::nullopt;
        case Kind::integer:
            if (!canonicalize_value(v).is_integer()) return mismatch("integer");
            return std::nullopt;
        case Kind::boolean:
            if (!v.is_bool()) return mismatch("boolean");
            return std::nullopt;
        case Kind::list: {
            if (!v.is_list()) return mismatch("array");
            if (exact_size && v.as_list().size() != *exact_size)
                return path + ": expected exactly " + std::to_string(*exact_size) + " items, got " +
                       std::to_string(v.as_list().size());
            for (std::size_t i = 0; i < v.as_list().size(); ++i)
                if (auto e = element->check(v.as_list()[i], path + "[" + std::to_string(i) + "]")) return e;
            return std::nullopt;
        }
        case Kind::map: {
            if (!v.is_map()) return mismatch("object");
            for (const auto& [k, e] : v.as_map())
                if (auto err = element->check(e, path + "." + k)) return err;
            return std::nullopt;
        }
        case Kind::object: {
            if (!v.is_map()) return mismatch("object");
            for (const auto& [name, s] : fields) {
                const Value* f = v.find(name);
                if (f == nullptr) return path + ": missing field \"" + name + "\"";
                if (auto err = s.check(*f, path + "." + name)) return err;
            }
            return std::nullopt;
        }
        }
        return std::nullopt;
    }

private:
    static Shape make(Kind k) {
        Shape s;
        s.kind = k;
        return s;
    }
};

/// Problem reported by a structured-output validator; the code is what gets
/// thrown if the repair budget runs out on this problem.
struct Issue {
    ErrorCode code = ErrorCode::structure_failure;
    std::string message;
};

using Validator = std::function<std::optional<Issue>(const Value&)>;

/// Pull a JSON value out of a completion, tolerating a surrounding markdown fence.
inline std::optional<Value> extract_json(std::string_view text) {
    std::string body = trim(text);
    if (body.rfind("```", 0) == 0) {
        const auto nl = body.find('\n');
        const auto close = body.rfind("```");
        if (nl != std::string::npos && close != std::string::npos && close > nl)
            body = trim(std::string_view(body).substr(nl + 1, close - nl - 1));
    }
    const auto j = nlohmann::ordered_json::parse(body, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    try {
        return value_from_json(j);
    } catch (const Error&) {
        return std::nullopt;
    }
}

// ---------------------------------------------------------------------------
// Gateway

struct GatewayOptions {
    std::string model_id = "gpt-4-turbo";
    double generation_temperature = 0.7;
    double judge_temperature = 0.0;
    int max_tokens = 2048;
    std::optional<std::int64_t> seed;
    int repair_budget = 2;
    std::optional<std::filesystem::path> cache_dir;
    int max_in_flight = 4;
};

class Gateway {
public:
    explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {})
        : backend_(std::move(backend)),
          options_(std::move(options)),
          slots_(std::max(1, options_.max_in_flight)) {
        if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
    }

    [[nodiscard]] const GatewayOptions& options() const { return options_; }

    /// Request skeleton carrying the configured model, token limit and seed.
    [[nodiscard]] ChatRequest request(std::vector<ChatMessage> messages, double temperature) const {
        ChatRequest r;
        r.model_id = options_.model_id;
        r.messages = std::move(messages);
        r.temperature = temperature;
        r.max_tokens = options_.max_tokens;
        r.seed = options_.seed;
        return r;
    }
    [[nodiscard]] ChatRequest generation_request(std::vector<ChatMessage> messages) const {
        return request(std::move(messages), options_.generation_temperature);
    }
    [[nodiscard]] ChatRequest judge_request(std::vector<ChatMessage> messages) const {
        return request(std::move(messages), options_.judge_temperature);
    }

    std::string complete(const ChatRequest& req) {
        req.validate();
        std::string key;
        if (cache_) {
            key = request_cache_key(req);
            if (auto hit = cache_->get(key)) {
                ++cache_hits_;
                return *hit;
            }
        }
        std::string text;
        {
            slots_.acquire();
            struct Release {
                std::counting_semaphore<>& s;
                ~Release() { s.release(); }
            } release{slots_};
            ++backend_calls_;
            text = backend_->complete(req);
        }
        if (cache_) cache_->put(key, text);
        return text;
    }

    /// Complete, parse as JSON, check against `shape` and `validator`. Each
    /// failure is fed back to the model and retried, at most `repair_budget`
    /// extra times (negative means the configured default).
    Value complete_structured(ChatRequest req, const Shape& shape, int repair_budget = -1,
                              const Validator& validator = {}) {
        if (repair_budget < 0) repair_budget = options_.repair_budget;
        Issue last;
        for (int attempt = 0; attempt <= repair_budget; ++attempt) {
            const std::string text = complete(req);
            std::optional<Issue> issue;
            auto parsed = extract_json(text);
            if (!parsed) {
                issue = Issue{ErrorCode::structure_failure, "reply is not valid JSON"};
            } else if (auto mismatch = shape.check(*parsed)) {
                issue = Issue{ErrorCode::structure_failure, *mismatch};
            } else if (validator) {
                issue = validator(*parsed);
            }
            if (!issue) return std::move(*parsed);
            last = *issue;
            req.messages.push_back({Role::assistant, text});
            req.messages.push_back({Role::user, "Your previous reply was rejected: " + issue->message +
                                                    "\nReply again with only JSON matching: " + shape.describe()});
        }
        throw Error(last.code, last.message + " (repair budget " + std::to_string(repair_budget) + " exhausted)");
    }

    [[nodiscard]] std::size_t backend_calls() const { return backend_calls_; }
    [[nodiscard]] std::size_t cache_hits() const { return cache_hits_; }

private:
    std::shared_ptr<Backend> backend_;
    GatewayOptions options_;
    std::optional<ResponseCache> cache_;
    std::counting_semaphore<> slots_;
    std::atomic<std::size_t> backend_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

} // namespace ptool
