#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "detox/config.hpp"
#include "detox/matching.hpp"
#include "detox/pipelines.hpp"

namespace detox {

inline nlohmann::ordered_json match_to_json(const TermMatch& match, const Vocabulary& vocab) {
    const auto& entry = vocab.entry(match.entry_id);
    nlohmann::ordered_json doc;
    doc["term"] = entry.term;
    doc["surface"] = match.surface;
    doc["start"] = match.start;
    doc["end"] = match.end;
    doc["distance"] = match.distance;
    auto categories = nlohmann::ordered_json::array();
    for (auto c : entry.categories) categories.push_back(display_name(c));
    doc["categories"] = categories;
    return doc;
}

/// HTTP front end over one loaded Engine. Handlers only read shared
/// immutable state, so the default server thread pool can run them
/// concurrently; downstream pressure is bounded by the provider itself.
class DetectionService {
public:
    DetectionService() { register_routes(); }

    explicit DetectionService(Engine engine) : DetectionService() { attach(std::move(engine)); }

    /// Requests arriving before attach() answer 503.
    void attach(Engine engine) {
        auto loaded = std::make_shared<const Engine>(std::move(engine));
        std::lock_guard<std::mutex> lock(mutex_);
        engine_ = std::move(loaded);
    }

    std::shared_ptr<const Engine> engine() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return engine_;
    }

    httplib::Server& http() { return server_; }

    bool listen(const std::string& bind_address, int port) {
        return server_.listen(bind_address, port);
    }

private:
    static void reply(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void reply_error(httplib::Response& res, int status, const std::string& message) {
        reply(res, status, nlohmann::ordered_json{{"error", message}});
    }

    /// Shared request admission: readiness, body shape, language. Returns
    /// the text to analyze, or nullopt with the error response written.
    std::optional<std::string> admit(const httplib::Request& req, httplib::Response& res,
                                     const std::shared_ptr<const Engine>& engine,
                                     nlohmann::json& body) {
        if (!engine) {
            reply_error(res, 503, "service is starting");
            return std::nullopt;
        }
        body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            reply_error(res, 400, "body must be a JSON object");
            return std::nullopt;
        }
        if (!body.contains("text") || !body["text"].is_string()) {
            reply_error(res, 400, "body needs a string \"text\" field");
            return std::nullopt;
        }
        if (body.contains("language")) {
            if (!body["language"].is_string()) {
                reply_error(res, 400, "\"language\" must be a string");
                return std::nullopt;
            }
            std::string language = body["language"].get<std::string>();
            if (!language_supported(language)) {
                reply_error(res, 422, "unsupported language \"" + language + "\"");
                return std::nullopt;
            }
            if (language != engine->config.language) {
                reply_error(res, 422,
                            "this service is loaded for language \"" +
                                engine->config.language + "\", not \"" + language + "\"");
                return std::nullopt;
            }
        }
        return body["text"].get<std::string>();
    }

    void register_routes() {
        server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            auto engine = this->engine();
            nlohmann::ordered_json doc;
            if (!engine) {
                doc["status"] = "starting";
                reply(res, 503, doc);
                return;
            }
            doc["status"] = "ok";
            doc["vocabulary_size"] = engine->vocabulary.size();
            doc["provider"] = engine->provider->identity();
            reply(res, 200, doc);
        });

        server_.Post("/v1/detect", [this](const httplib::Request& req, httplib::Response& res) {
            auto engine = this->engine();
            nlohmann::json body;
            auto text = admit(req, res, engine, body);
            if (!text) return;
            std::string id = "text-1";
            if (body.contains("id") && body["id"].is_string())
                id = body["id"].get<std::string>();
            try {
                DetectionResult result = detect(*text, id, engine->deps());
                auto record = result_to_json(result, engine->vocabulary);
                // an uncertified item is a failed upstream dependency, but
                // the record still carries the diagnostics
                reply(res, result.errored() ? 502 : 200, record);
            } catch (const std::exception& ex) {
                reply_error(res, 502, ex.what());
            }
        });

        server_.Post("/v1/match", [this](const httplib::Request& req, httplib::Response& res) {
            auto engine = this->engine();
            nlohmann::json body;
            auto text = admit(req, res, engine, body);
            if (!text) return;
            try {
                auto matches = find_matches(*text, engine->vocabulary, *engine->lemmatizer);
                auto doc = nlohmann::ordered_json::array();
                for (const auto& match : matches)
                    doc.push_back(match_to_json(match, engine->vocabulary));
                reply(res, 200, nlohmann::ordered_json{{"matches", doc}});
            } catch (const std::exception& ex) {
                reply_error(res, 500, ex.what());
            }
        });
    }

    httplib::Server server_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Engine> engine_;
};

/// Builds the engine, then serves until the process is stopped.
inline bool run_service(const EngineConfig& config) {
    DetectionService service(build_engine(config));
    return service.listen(config.bind_address, config.port);
}

}  // namespace detox
