#pragma once

// OpenAI-compatible chat-completions client:
//   POST <endpoint>/v1/chat/completions
//   Authorization: Bearer $PTOOL_API_KEY

#include "ptool/gateway.hpp"

#include <httplib.h>
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>

namespace ptool {

struct RemoteOptions {
    std::string endpoint = "https://api.openai.com";
    std::string api_key_env = "PTOOL_API_KEY";
    int max_retries = 4;
    int initial_backoff_ms = 500;
    int max_backoff_ms = 8000;
    int timeout_seconds = 120;
};

class RemoteBackend : public Backend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit RemoteBackend(RemoteOptions options, Sleeper sleeper = {})
        : options_(std::move(options)), sleeper_(std::move(sleeper)) {
        if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
        split_endpoint();
        if (const char* key = std::getenv(options_.api_key_env.c_str())) api_key_ = key;
    }

    std::string complete(const ChatRequest& req) override {
        const std::string body = request_body(req).dump();
        int backoff = options_.initial_backoff_ms;
        std::string last_error;
        for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
            if (attempt > 0) {
                sleeper_(std::chrono::milliseconds(backoff));
                backoff = std::min(backoff * 2, options_.max_backoff_ms);
            }
            httplib::Client client(base_);
            client.set_connection_timeout(options_.timeout_seconds);
            client.set_read_timeout(options_.timeout_seconds);
            client.set_write_timeout(options_.timeout_seconds);
            if (!api_key_.empty()) client.set_bearer_token_auth(api_key_);
            ++attempts_;
            auto res = client.Post(path_, body, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 200) return extract_content(res->body);
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300);
            if (!transient_status(res->status)) break;
        }
        throw Error(ErrorCode::transport_failure, last_error);
    }

    [[nodiscard]] int attempts() const { return attempts_; }
    [[nodiscard]] const std::string& path() const { return path_; }

    static nlohmann::json request_body(const ChatRequest& req) {
        nlohmann::json j;
        j["model"] = req.model_id;
        j["messages"] = nlohmann::json::array();
        for (const auto& m : req.messages)
            j["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
        j["temperature"] = req.temperature;
        j["max_tokens"] = req.max_tokens;
        if (req.seed) j["seed"] = *req.seed;
        return j;
    }

    static bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

private:
    static std::string extract_content(const std::string& body) {
        const auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
            throw Error(ErrorCode::transport_failure, "malformed completion response");
        const auto& msg = j["choices"][0]["message"];
        if (!msg.contains("content") || !msg["content"].is_string())
            throw Error(ErrorCode::transport_failure, "completion has no text content");
        return msg["content"].get<std::string>();
    }

    void split_endpoint() {
        const auto scheme_end = options_.endpoint.find("://");
        const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        const auto slash = options_.endpoint.find('/', host_start);
        base_ = options_.endpoint.substr(0, slash);
        std::string prefix = slash == std::string::npos ? "" : options_.endpoint.substr(slash);
        while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0)
            path_ = prefix + "/chat/completions";
        else
            path_ = prefix + "/v1/chat/completions";
    }

    RemoteOptions options_;
    Sleeper sleeper_;
    std::string base_;
    std::string path_;
    std::string api_key_;
    std::atomic<int> attempts_{0};
};

} // namespace ptool
