#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "detox/errors.hpp"

namespace detox {

/// One chat completion request. Both prompt roles are always present.
struct ChatRequest {
    std::string system_prompt;
    std::string user_prompt;
    std::string model_id;
    double temperature = 0.0;
    int max_output = 1024;
};

inline void validate(const ChatRequest& request) {
    if (request.system_prompt.empty()) throw Error("chat request: empty system prompt");
    if (request.user_prompt.empty()) throw Error("chat request: empty user prompt");
    if (!(request.temperature >= 0.0 && request.temperature <= 1.0))
        throw Error("chat request: temperature out of [0,1]");
    if (request.max_output <= 0) throw Error("chat request: max_output must be positive");
}

/// Backend contract. complete() either returns non-empty text or throws;
/// an empty completion is reported as ProviderError(malformed) rather
/// than handed to callers.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
    virtual std::string identity() const = 0;
    virtual bool share_safe() const { return true; }
};

/// Canned provider for offline runs and tests. Two modes:
///  - sequence: responses are served in order, then ScriptExhausted;
///  - keyed: the first rule whose needle occurs in the request's prompts
///    is served; a default response may catch everything else.
/// All requests are recorded for assertion.
class ScriptedProvider : public ChatProvider {
public:
    static std::shared_ptr<ScriptedProvider> sequence(std::vector<std::string> responses) {
        auto p = std::shared_ptr<ScriptedProvider>(new ScriptedProvider());
        p->sequence_ = std::move(responses);
        p->keyed_mode_ = false;
        return p;
    }

    static std::shared_ptr<ScriptedProvider> keyed(
        std::vector<std::pair<std::string, std::string>> rules, std::string fallback = "",
        bool has_fallback = false) {
        auto p = std::shared_ptr<ScriptedProvider>(new ScriptedProvider());
        p->rules_ = std::move(rules);
        p->fallback_ = std::move(fallback);
        p->has_fallback_ = has_fallback;
        p->keyed_mode_ = true;
        return p;
    }

    static std::shared_ptr<ScriptedProvider> keyed_with_fallback(
        std::vector<std::pair<std::string, std::string>> rules, std::string fallback) {
        return keyed(std::move(rules), std::move(fallback), true);
    }

    std::string complete(const ChatRequest& request) override {
        validate(request);
        std::lock_guard<std::mutex> lock(mutex_);
        requests_.push_back(request);
        std::string response;
        if (keyed_mode_) {
            bool found = false;
            std::string haystack = request.system_prompt + "\n" + request.user_prompt;
            for (const auto& [needle, canned] : rules_) {
                if (haystack.find(needle) != std::string::npos) {
                    response = canned;
                    found = true;
                    break;
                }
            }
            if (!found) {
                if (!has_fallback_) throw ScriptExhaustedError("no rule matches the request");
                response = fallback_;
            }
        } else {
            if (next_ >= sequence_.size())
                throw ScriptExhaustedError("script exhausted after " +
                                           std::to_string(sequence_.size()) + " responses");
            response = sequence_[next_++];
        }
        if (response.empty())
            throw ProviderError(ProviderErrorKind::malformed, "scripted response is empty");
        return response;
    }

    std::string identity() const override { return "scripted"; }

    std::vector<ChatRequest> requests() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_;
    }

    std::size_t call_count() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_.size();
    }

private:
    ScriptedProvider() = default;
    mutable std::mutex mutex_;
    std::vector<ChatRequest> requests_;
    std::vector<std::string> sequence_;
    std::size_t next_ = 0;
    std::vector<std::pair<std::string, std::string>> rules_;
    std::string fallback_;
    bool has_fallback_ = false;
    bool keyed_mode_ = false;
};

/// Wire settings for an OpenAI-style chat endpoint. `response_path` walks
/// the reply JSON with dot-separated keys; numeric segments index arrays.
struct HttpProviderConfig {
    std::string endpoint;  // e.g. http://host:port/v1/chat/completions
    std::string api_key;
    std::string response_path = "choices.0.message.content";
    int max_retries = 3;          // retries after the first attempt
    int initial_backoff_ms = 200; // doubled per retry
    int timeout_s = 60;
    int max_concurrency = 4;
};

namespace detail {

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

inline ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint must be an absolute URL: " + url);
    auto path_begin = url.find('/', scheme_end + 3);
    if (path_begin == std::string::npos) return {url, "/"};
    return {url.substr(0, path_begin), url.substr(path_begin)};
}

inline const nlohmann::json* walk_path(const nlohmann::json& doc, const std::string& path) {
    const nlohmann::json* node = &doc;
    std::size_t begin = 0;
    while (begin <= path.size()) {
        auto end = path.find('.', begin);
        if (end == std::string::npos) end = path.size();
        std::string seg = path.substr(begin, end - begin);
        if (seg.empty()) return nullptr;
        bool numeric = seg.find_first_not_of("0123456789") == std::string::npos;
        if (numeric && node->is_array()) {
            std::size_t idx = std::stoul(seg);
            if (idx >= node->size()) return nullptr;
            node = &(*node)[idx];
        } else if (node->is_object() && node->contains(seg)) {
            node = &(*node)[seg];
        } else {
            return nullptr;
        }
        if (end == path.size()) break;
        begin = end + 1;
    }
    return node;
}

/// Counting semaphore; std::counting_semaphore needs a compile-time max,
/// and the limit here comes from config.
class ConcurrencyLimiter {
public:
    explicit ConcurrencyLimiter(int limit) : available_(limit) {}
    void acquire() {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
    }
    void release() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            ++available_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int available_;
};

}  // namespace detail

/// Chat provider speaking the default wire schema:
/// POST {model, messages:[{role:"system"},{role:"user"}], temperature,
/// max_tokens} with the completion text at `response_path`.
/// 429 and 5xx are retried with exponential backoff; 401/403 raise
/// ProviderError(auth) immediately; unparseable replies raise
/// ProviderError(malformed).
class HttpProvider : public ChatProvider {
public:
    explicit HttpProvider(HttpProviderConfig config)
        : config_(std::move(config)),
          url_(detail::split_url(config_.endpoint)),
          limiter_(config_.max_concurrency) {
        if (config_.endpoint.empty()) throw ConfigError("http provider: endpoint not configured");
    }

    std::string complete(const ChatRequest& request) override {
        validate(request);
        nlohmann::json body = {
            {"model", request.model_id},
            {"messages",
             {{{"role", "system"}, {"content", request.system_prompt}},
              {{"role", "user"}, {"content", request.user_prompt}}}},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output},
        };
        std::string payload = body.dump();

        int backoff_ms = config_.initial_backoff_ms;
        int attempts = config_.max_retries + 1;
        std::string last_error = "unknown";
        bool timed_out = false;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms *= 2;
            }
            auto result = post(payload);
            if (!result) {
                timed_out = result.error() == httplib::Error::ConnectionTimeout ||
                            result.error() == httplib::Error::Read ||
                            result.error() == httplib::Error::Write;
                last_error = httplib::to_string(result.error());
                continue;  // transport-level failure: retry
            }
            timed_out = false;
            int status = result->status;
            if (status == 200) return extract(result->body);
            if (status == 401 || status == 403)
                throw ProviderError(ProviderErrorKind::auth,
                                    "status " + std::to_string(status) + " from " + config_.endpoint);
            if (status == 429 || status >= 500) {
                last_error = "status " + std::to_string(status);
                continue;
            }
            throw ProviderError(ProviderErrorKind::malformed,
                                "unexpected status " + std::to_string(status) + ": " + result->body);
        }
        if (timed_out)
            throw TimeoutError(config_.endpoint + " after " + std::to_string(config_.timeout_s) +
                               "s per attempt");
        if (last_error.rfind("status 429", 0) == 0)
            throw ProviderError(ProviderErrorKind::rate_limit,
                                "still rate-limited after " + std::to_string(attempts) + " attempts");
        throw ProviderError(ProviderErrorKind::network,
                            last_error + " after " + std::to_string(attempts) + " attempts");
    }

    std::string identity() const override { return "http:" + config_.endpoint; }

private:
    httplib::Result post(const std::string& payload) {
        limiter_.acquire();
        struct Release {
            detail::ConcurrencyLimiter& l;
            ~Release() { l.release(); }
        } release{limiter_};
        httplib::Client client(url_.base);
        client.set_connection_timeout(config_.timeout_s, 0);
        client.set_read_timeout(config_.timeout_s, 0);
        client.set_write_timeout(config_.timeout_s, 0);
        httplib::Headers headers;
        if (!config_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        return client.Post(url_.path, headers, payload, "application/json");
    }

    std::string extract(const std::string& body) const {
        nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
        if (doc.is_discarded())
            throw ProviderError(ProviderErrorKind::malformed, "response is not JSON");
        const nlohmann::json* node = detail::walk_path(doc, config_.response_path);
        if (!node || !node->is_string())
            throw ProviderError(ProviderErrorKind::malformed,
                                "no text at response path \"" + config_.response_path + "\"");
        std::string text = node->get<std::string>();
        if (text.empty())
            throw ProviderError(ProviderErrorKind::malformed, "empty completion text");
        return text;
    }

    HttpProviderConfig config_;
    detail::ParsedUrl url_;
    detail::ConcurrencyLimiter limiter_;
};

inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Decorator appending one JSON line per call to an audit file:
/// request hash, model, latency, and the response (or the error).
class AuditingProvider : public ChatProvider {
public:
    AuditingProvider(std::shared_ptr<ChatProvider> inner, std::filesystem::path audit_path)
        : inner_(std::move(inner)), path_(std::move(audit_path)) {}

    std::string complete(const ChatRequest& request) override {
        auto started = std::chrono::steady_clock::now();
        try {
            std::string response = inner_->complete(request);
            log(request, started, &response, nullptr);
            return response;
        } catch (const std::exception& ex) {
            std::string what = ex.what();
            log(request, started, nullptr, &what);
            throw;
        }
    }

    std::string identity() const override { return inner_->identity(); }
    bool share_safe() const override { return inner_->share_safe(); }

private:
    void log(const ChatRequest& request, std::chrono::steady_clock::time_point started,
             const std::string* response, const std::string* error) {
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
        char hash_hex[17];
        std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a(request.system_prompt + "\x1f" +
                                                            request.user_prompt + "\x1f" +
                                                            request.model_id)));
        nlohmann::ordered_json record;
        record["time"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
        record["request_hash"] = hash_hex;
        record["model"] = request.model_id;
        record["latency_ms"] = elapsed;
        if (response) record["response"] = *response;
        if (error) record["error"] = *error;
        std::lock_guard<std::mutex> lock(mutex_);
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        if (out) out << record.dump() << '\n';
    }

    std::shared_ptr<ChatProvider> inner_;
    std::filesystem::path path_;
    std::mutex mutex_;
};

}  // namespace detox
