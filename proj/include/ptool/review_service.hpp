#pragma once

// Human review of model-verified samples: a queue, accept/reject/edit
// decisions with an append-only audit log, and export of the accepted set.
// ReviewService holds the state; ReviewServer puts it behind HTTP.

#include "ptool/codec.hpp"
#include "ptool/store.hpp"
#include "ptool/verify.hpp"

#include <httplib.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace ptool {

enum class ReviewAction { accept, reject, edit };

inline std::string_view to_string(ReviewAction a) {
    switch (a) {
    case ReviewAction::accept: return "accept";
    case ReviewAction::reject: return "reject";
    case ReviewAction::edit: return "edit";
    }
    return "?";
}

inline std::optional<ReviewAction> review_action_from(std::string_view s) {
    if (s == "accept") return ReviewAction::accept;
    if (s == "reject") return ReviewAction::reject;
    if (s == "edit") return ReviewAction::edit;
    return std::nullopt;
}

struct ReviewDecision {
    std::string sample_id;
    ReviewAction action = ReviewAction::accept;
    std::optional<Solution> edited_gold;
    std::optional<Provenance> edited_provenance;
    std::string annotator_id;
    std::string timestamp;

    friend bool operator==(const ReviewDecision&, const ReviewDecision&) = default;
};

inline Json to_json(const ReviewDecision& d) {
    Json j;
    j["sample_id"] = d.sample_id;
    j["action"] = std::string(to_string(d.action));
    j["edited_gold"] = d.edited_gold ? Json(serialize_solution(*d.edited_gold)) : Json(nullptr);
    j["edited_provenance"] = d.edited_provenance ? to_json(*d.edited_provenance) : Json(nullptr);
    j["annotator_id"] = d.annotator_id;
    j["timestamp"] = d.timestamp;
    return j;
}

inline ReviewDecision review_decision_from_json(const Json& j) {
    codec::require_fields(j, {"sample_id", "action", "edited_gold", "edited_provenance", "annotator_id", "timestamp"},
                          "review decision");
    ReviewDecision d;
    d.sample_id = codec::str(j, "sample_id", "review decision");
    auto action = review_action_from(codec::str(j, "action", "review decision"));
    if (!action) throw Error(ErrorCode::schema_mismatch, "review decision: unknown action");
    d.action = *action;
    if (!j["edited_gold"].is_null()) {
        auto gold = parse_solution(codec::str(j, "edited_gold", "review decision"));
        if (!gold) throw Error(ErrorCode::schema_mismatch, "review decision: edited_gold does not parse");
        d.edited_gold = std::move(gold).value();
    }
    if (!j["edited_provenance"].is_null()) d.edited_provenance = provenance_from_json(j["edited_provenance"]);
    d.annotator_id = codec::str(j, "annotator_id", "review decision");
    d.timestamp = codec::str(j, "timestamp", "review decision");
    return d;
}

struct DecisionResult {
    enum class Status { ok, not_found, conflict, invalid_edit, bad_request };
    Status status = Status::ok;
    Sample sample;
    std::vector<Violation> violations;
    std::string message;
};

struct SamplePage {
    std::vector<Sample> items;
    std::size_t page = 1;
    std::size_t pages = 0;
    std::size_t total = 0;
};

struct ReviewProgress {
    std::size_t total = 0, pending = 0, accepted = 0, rejected = 0;
};

/// Sample after applying the decision's edits, or the reasons it is invalid.
inline DecisionResult apply_decision(const Sample& current, const ReviewDecision& d, const Registry& registry) {
    DecisionResult r;
    r.sample = current;
    if (d.action == ReviewAction::edit) {
        if (!d.edited_gold && !d.edited_provenance) {
            r.status = DecisionResult::Status::invalid_edit;
            r.message = "an edit needs edited_gold or edited_provenance";
            return r;
        }
        if (d.edited_gold) r.sample.gold = *d.edited_gold;
        if (d.edited_provenance) r.sample.provenance = *d.edited_provenance;
        r.violations = rule_validate(r.sample.gold, registry);
        if (!r.violations.empty()) {
            r.status = DecisionResult::Status::invalid_edit;
            r.message = "edited solution fails rule validation";
            return r;
        }
        if (!r.sample.provenance.is_complete_for(r.sample.gold)) {
            r.status = DecisionResult::Status::invalid_edit;
            r.message = "provenance must tag exactly the gold parameters";
            return r;
        }
    }
    r.sample.status = d.action == ReviewAction::reject ? SampleStatus::rejected : SampleStatus::accepted;
    return r;
}

/// Final sample states after applying audit entries, in order, to the
/// pre-review corpus.
inline std::vector<Sample> replay_audit(std::vector<Sample> initial, const std::vector<ReviewDecision>& log,
                                        const Registry& registry) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < initial.size(); ++i) index[initial[i].id] = i;
    for (const auto& d : log) {
        auto it = index.find(d.sample_id);
        if (it == index.end()) throw Error(ErrorCode::not_found, "audit entry for unknown sample " + d.sample_id);
        auto r = apply_decision(initial[it->second], d, registry);
        if (r.status != DecisionResult::Status::ok)
            throw Error(ErrorCode::invalid_edit, "audit entry for " + d.sample_id + " does not apply: " + r.message);
        initial[it->second] = std::move(r.sample);
    }
    return initial;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class ReviewService {
public:
    /// Reviews the verified corpus in `store` (samples.jsonl). Review state
    /// lives in review/samples.jsonl and review/audit.jsonl.
    explicit ReviewService(DatasetStore store) : store_(std::move(store)) {
        registry_ = store_.load_registry();
        for (auto& p : store_.load_profiles()) profiles_.emplace(p.user_id, std::move(p));
        initial_ = store_.load_samples("samples.jsonl");
        std::map<std::string, Split> split_of;
        for (const char* f : {"splits/train.jsonl", "splits/test.jsonl"})
            if (store_.exists(f))
                for (const auto& s : store_.load_samples(f)) split_of[s.id] = *s.split;
        for (auto& s : initial_)
            if (auto it = split_of.find(s.id); it != split_of.end()) s.split = it->second;
        samples_ = store_.exists(state_file) ? store_.load_samples(state_file) : initial_;
        if (store_.exists(audit_file)) log_ = read_jsonl<ReviewDecision>(store_.path(audit_file), review_decision_from_json);
        order();
    }

    static constexpr const char* state_file = "review/samples.jsonl";
    static constexpr const char* audit_file = "review/audit.jsonl";

    [[nodiscard]] const Registry& registry() const { return registry_; }
    [[nodiscard]] const std::vector<Sample>& initial_samples() const { return initial_; }

    [[nodiscard]] const UserProfile* profile(const std::string& user_id) const {
        auto it = profiles_.find(user_id);
        return it == profiles_.end() ? nullptr : &it->second;
    }

    /// status: "pending" (model-verified, undecided), "accepted", "rejected" or "all".
    /// Pages are 1-based; ordering is scenario then id.
    [[nodiscard]] SamplePage list(const std::string& status, const std::string& scenario, std::size_t page,
                                  std::size_t page_size) const {
        std::shared_lock lock(mu_);
        std::vector<Sample> matching;
        for (const auto& s : samples_) {
            if (!scenario.empty() && s.scenario != scenario) continue;
            if (status == "pending" && s.status != SampleStatus::model_verified) continue;
            if (status == "accepted" && s.status != SampleStatus::accepted) continue;
            if (status == "rejected" && s.status != SampleStatus::rejected) continue;
            matching.push_back(s);
        }
        SamplePage out;
        page_size = std::max<std::size_t>(1, page_size);
        out.total = matching.size();
        out.pages = (matching.size() + page_size - 1) / page_size;
        out.page = std::max<std::size_t>(1, page);
        const std::size_t begin = (out.page - 1) * page_size;
        for (std::size_t i = begin; i < matching.size() && i < begin + page_size; ++i) out.items.push_back(matching[i]);
        return out;
    }

    [[nodiscard]] SamplePage list_pending(const std::string& scenario = {}, std::size_t page = 1,
                                          std::size_t page_size = 20) const {
        return list("pending", scenario, page, page_size);
    }

    [[nodiscard]] std::optional<Sample> get(const std::string& id) const {
        std::shared_lock lock(mu_);
        for (const auto& s : samples_)
            if (s.id == id) return s;
        return std::nullopt;
    }

    [[nodiscard]] ReviewProgress progress() const {
        std::shared_lock lock(mu_);
        ReviewProgress p;
        p.total = samples_.size();
        for (const auto& s : samples_) {
            if (s.status == SampleStatus::model_verified) ++p.pending;
            else if (s.status == SampleStatus::accepted) ++p.accepted;
            else if (s.status == SampleStatus::rejected) ++p.rejected;
        }
        return p;
    }

    DecisionResult submit_decision(const ReviewDecision& d) {
        std::unique_lock lock(mu_);
        DecisionResult r;
        auto it = std::find_if(samples_.begin(), samples_.end(), [&](const Sample& s) { return s.id == d.sample_id; });
        if (it == samples_.end()) {
            r.status = DecisionResult::Status::not_found;
            r.message = "no sample " + d.sample_id;
            return r;
        }
        if (d.annotator_id.empty()) {
            r.status = DecisionResult::Status::bad_request;
            r.message = "annotator id is required";
            return r;
        }
        for (const auto& prior : log_)
            if (prior.sample_id == d.sample_id && prior.annotator_id == d.annotator_id && prior.timestamp == d.timestamp) {
                // same submission again: report the stored outcome
                r.sample = *it;
                return r;
            }
        if (it->status != SampleStatus::model_verified) {
            r.status = DecisionResult::Status::conflict;
            r.sample = *it;
            r.message = "sample " + d.sample_id + " is already " + std::string(to_string(it->status));
            return r;
        }
        r = apply_decision(*it, d, registry_);
        if (r.status != DecisionResult::Status::ok) return r;

        append_audit(d);
        log_.push_back(d);
        *it = r.sample;
        store_.save_samples(state_file, samples_);
        return r;
    }

    /// Writes <destination>/benchmark.jsonl with the accepted samples and
    /// <destination>/manifest.json with counts by split. Returns the count.
    std::size_t export_benchmark(const std::filesystem::path& destination) const {
        std::shared_lock lock(mu_);
        DatasetStore out(destination);
        std::vector<Sample> accepted;
        std::map<std::string, std::size_t> by_split{{"train", 0}, {"test", 0}, {"none", 0}};
        for (const auto& s : samples_)
            if (s.status == SampleStatus::accepted) {
                accepted.push_back(s);
                ++by_split[s.split ? std::string(to_string(*s.split)) : "none"];
            }
        out.save_samples("benchmark.jsonl", accepted);
        Json m;
        m["count"] = accepted.size();
        m["split_counts"] = Json::object();
        for (const auto& [k, v] : by_split) m["split_counts"][k] = v;
        write_file_atomic(out.path("manifest.json"), m.dump(2) + "\n");
        return accepted.size();
    }

    [[nodiscard]] std::vector<ReviewDecision> audit_log() const {
        std::shared_lock lock(mu_);
        return log_;
    }

    [[nodiscard]] std::vector<Sample> current_samples() const {
        std::shared_lock lock(mu_);
        return samples_;
    }

private:
    void order() {
        auto by_key = [](const Sample& a, const Sample& b) {
            return std::tie(a.scenario, a.id) < std::tie(b.scenario, b.id);
        };
        std::sort(samples_.begin(), samples_.end(), by_key);
        std::sort(initial_.begin(), initial_.end(), by_key);
    }

    void append_audit(const ReviewDecision& d) {
        const auto file = store_.path(audit_file);
        std::filesystem::create_directories(file.parent_path());
        std::ofstream out(file, std::ios::binary | std::ios::app);
        if (!out) throw Error(ErrorCode::io, "cannot append to " + file.string());
        out << to_json(d).dump() << "\n";
        if (!out.flush()) throw Error(ErrorCode::io, "append failed for " + file.string());
    }

    DatasetStore store_;
    Registry registry_;
    std::map<std::string, UserProfile> profiles_;
    std::vector<Sample> initial_;
    std::vector<Sample> samples_;
    std::vector<ReviewDecision> log_;
    mutable std::shared_mutex mu_;
};

/// HTTP front end. JSON bodies use the dataset-store sample schema; sample
/// responses also carry the user's profile under "profile".
class ReviewServer {
public:
    ReviewServer(ReviewService& service, std::size_t page_size = 20,
                 std::optional<std::filesystem::path> static_dir = std::nullopt)
        : service_(service), page_size_(page_size) {
        if (static_dir) server_.set_mount_point("/", static_dir->string());
        routes();
    }

    /// Bind to host:port (port 0 picks a free one). Returns the bound port.
    int bind(const std::string& host, int port) {
        if (port == 0) return server_.bind_to_any_port(host);
        return server_.bind_to_port(host, port) ? port : -1;
    }

    bool listen() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

private:
    static void send_json(httplib::Response& res, int status, const Json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
        send_json(res, status, Json{{"error", code}, {"message", message}});
    }

    Json with_profile(const Sample& s) const {
        Json j = to_json(s);
        const UserProfile* p = service_.profile(s.user_id);
        j["profile"] = p ? to_json(*p) : Json(nullptr);
        return j;
    }

    void routes() {
        server_.Get("/api/samples", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string status = req.has_param("status") ? req.get_param_value("status") : "pending";
            if (status != "pending" && status != "accepted" && status != "rejected" && status != "all")
                return send_error(res, 400, "bad-request", "status must be pending, accepted, rejected or all");
            std::size_t page = 1;
            if (req.has_param("page")) {
                try {
                    page = std::stoul(req.get_param_value("page"));
                } catch (...) {
                    return send_error(res, 400, "bad-request", "page must be a positive integer");
                }
            }
            const auto result = service_.list(status, req.get_param_value("scenario"), page, page_size_);
            Json items = Json::array();
            for (const auto& s : result.items) items.push_back(with_profile(s));
            send_json(res, 200, Json{{"items", std::move(items)},
                                     {"page", result.page},
                                     {"pages", result.pages},
                                     {"total", result.total}});
        });

        server_.Get(R"(/api/samples/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = service_.get(req.matches[1]);
            if (!s) return send_error(res, 404, "not-found", "no sample " + std::string(req.matches[1]));
            send_json(res, 200, with_profile(*s));
        });

        server_.Post(R"(/api/samples/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
            const Json body = Json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "bad-request", "body must be a JSON object");
            ReviewDecision d;
            d.sample_id = req.matches[1];
            d.annotator_id = req.get_header_value("X-Annotator-Id");
            if (d.annotator_id.empty()) return send_error(res, 400, "bad-request", "X-Annotator-Id header is required");
            auto action = body.contains("action") && body["action"].is_string()
                              ? review_action_from(body["action"].get<std::string>())
                              : std::nullopt;
            if (!action) return send_error(res, 400, "bad-request", "action must be accept, reject or edit");
            d.action = *action;
            d.timestamp = body.contains("timestamp") && body["timestamp"].is_string() ? body["timestamp"].get<std::string>()
                                                                                       : utc_timestamp();
            if (body.contains("edited_gold") && !body["edited_gold"].is_null()) {
                if (!body["edited_gold"].is_string()) return send_error(res, 400, "bad-request", "edited_gold must be solution text");
                auto gold = parse_solution(body["edited_gold"].get<std::string>());
                if (!gold)
                    return send_json(res, 422, Json{{"error", "invalid-edit"},
                                                    {"message", gold.error().message()},
                                                    {"violations", Json::array({to_json(Violation{
                                                                       ViolationKind::unparsable, 0, std::nullopt,
                                                                       gold.error().message()})})}});
                d.edited_gold = std::move(gold).value();
            }
            if (body.contains("edited_provenance") && !body["edited_provenance"].is_null()) {
                try {
                    d.edited_provenance = provenance_from_json(body["edited_provenance"]);
                } catch (const Error& e) {
                    return send_json(res, 422, Json{{"error", "invalid-edit"}, {"message", e.what()}, {"violations", Json::array()}});
                }
            }
            DecisionResult r;
            try {
                r = service_.submit_decision(d);
            } catch (const Error& e) {
                return send_error(res, 500, std::string(to_string(e.code())), e.what());
            }
            switch (r.status) {
            case DecisionResult::Status::ok: return send_json(res, 200, with_profile(r.sample));
            case DecisionResult::Status::not_found: return send_error(res, 404, "not-found", r.message);
            case DecisionResult::Status::conflict: return send_error(res, 409, "conflict", r.message);
            case DecisionResult::Status::bad_request: return send_error(res, 400, "bad-request", r.message);
            case DecisionResult::Status::invalid_edit: {
                Json vs = Json::array();
                for (const auto& v : r.violations) vs.push_back(to_json(v));
                return send_json(res, 422, Json{{"error", "invalid-edit"}, {"message", r.message}, {"violations", vs}});
            }
            }
        });

        server_.Get("/api/progress", [this](const httplib::Request&, httplib::Response& res) {
            const auto p = service_.progress();
            send_json(res, 200, Json{{"total", p.total}, {"pending", p.pending}, {"accepted", p.accepted}, {"rejected", p.rejected}});
        });

        server_.Post("/api/export", [this](const httplib::Request& req, httplib::Response& res) {
            Json body = req.body.empty() ? Json::object() : Json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "bad-request", "body must be a JSON object");
            std::filesystem::path dest = body.contains("destination") && body["destination"].is_string()
                                             ? std::filesystem::path(body["destination"].get<std::string>())
                                             : std::filesystem::path("export");
            if (dest.is_relative()) dest = default_root_ / dest;
            try {
                const auto n = service_.export_benchmark(dest);
                send_json(res, 200, Json{{"count", n}, {"destination", dest.string()}});
            } catch (const Error& e) {
                send_error(res, 500, std::string(to_string(e.code())), e.what());
            }
        });
    }

public:
    /// Relative export destinations resolve against this directory.
    void set_export_root(std::filesystem::path root) { default_root_ = std::move(root); }

private:
    ReviewService& service_;
    std::size_t page_size_;
    httplib::Server server_;
    std::filesystem::path default_root_ = ".";
};

} // namespace ptool
