#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "detox/chat.hpp"
#include "detox/errors.hpp"
#include "detox/evaluation.hpp"
#include "detox/lemmatizer.hpp"
#include "detox/pipelines.hpp"
#include "detox/vocabulary.hpp"

namespace detox {

enum class ProviderKind { scripted, http };

inline const char* provider_kind_name(ProviderKind kind) {
    return kind == ProviderKind::scripted ? "scripted" : "http";
}

inline ProviderKind parse_provider_kind(std::string_view name) {
    if (name == "scripted") return ProviderKind::scripted;
    if (name == "http") return ProviderKind::http;
    throw ConfigError("provider.kind must be scripted or http, got \"" + std::string(name) +
                      "\"");
}

enum class LemmatizerKind { builtin, identity, command };

inline const char* lemmatizer_kind_name(LemmatizerKind kind) {
    switch (kind) {
        case LemmatizerKind::builtin: return "builtin";
        case LemmatizerKind::identity: return "identity";
        default: return "command";
    }
}

inline LemmatizerKind parse_lemmatizer_kind(std::string_view name) {
    if (name == "builtin") return LemmatizerKind::builtin;
    if (name == "identity") return LemmatizerKind::identity;
    if (name == "command") return LemmatizerKind::command;
    throw ConfigError("lemmatizer.kind must be builtin, identity, or command, got \"" +
                      std::string(name) + "\"");
}

inline const char* variant_rule_name(VariantRuleMode mode) {
    return mode == VariantRuleMode::literal ? "literal" : "swapped";
}

inline VariantRuleMode parse_variant_rule(std::string_view name) {
    if (name == "literal") return VariantRuleMode::literal;
    if (name == "swapped") return VariantRuleMode::swapped;
    throw ConfigError("variant_rule must be literal or swapped, got \"" + std::string(name) +
                      "\"");
}

/// Everything the engine needs, with a working default for each field.
/// An empty config file is a valid config.
struct EngineConfig {
    std::string language = "en";
    std::string data_dir = "data";  // prompts, lemmatizer tables, headings, sources
    std::string vocabulary_path;    // csv or jsonl; required for detection

    LemmatizerKind lemmatizer_kind = LemmatizerKind::builtin;
    std::string lemmatizer_command;  // shell command, used when kind == command

    ProviderKind provider_kind = ProviderKind::scripted;
    std::string provider_fixture;  // scripted reply file, used when kind == scripted
    std::string provider_endpoint; // chat completions URL, used when kind == http
    std::string provider_api_key;
    std::string provider_response_path = "choices.0.message.content";
    int provider_concurrency = 4;  // in-flight request cap inside the provider

    // empty model id defers to the provider's default
    std::string model_term_based;
    std::string model_term_free;
    std::string model_fusion;
    std::string model_vocabulary;

    double temperature = 0.0;
    int parallelism = 1;  // batch worker threads
    int retries = 2;      // http provider retries after the first attempt
    int timeout_s = 60;

    VariantRuleMode variant_rule = VariantRuleMode::literal;
    bool augmented_term_free = false;  // swap in the augmented system prompt

    std::string bind_address = "127.0.0.1";
    int port = 8085;

    bool operator==(const EngineConfig&) const = default;
};

namespace detail {

inline int parse_config_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        int parsed = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError(key + " must be an integer, got \"" + value + "\"");
    }
}

inline double parse_config_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double parsed = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError(key + " must be a number, got \"" + value + "\"");
    }
}

inline bool parse_config_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError(key + " must be true or false, got \"" + value + "\"");
}

}  // namespace detail

inline void set_config_key(EngineConfig& config, const std::string& key,
                           const std::string& value) {
    if (key == "language") config.language = value;
    else if (key == "data_dir") config.data_dir = value;
    else if (key == "vocabulary.path") config.vocabulary_path = value;
    else if (key == "lemmatizer.kind") config.lemmatizer_kind = parse_lemmatizer_kind(value);
    else if (key == "lemmatizer.command") config.lemmatizer_command = value;
    else if (key == "provider.kind") config.provider_kind = parse_provider_kind(value);
    else if (key == "provider.fixture") config.provider_fixture = value;
    else if (key == "provider.endpoint") config.provider_endpoint = value;
    else if (key == "provider.api_key") config.provider_api_key = value;
    else if (key == "provider.response_path") config.provider_response_path = value;
    else if (key == "provider.concurrency")
        config.provider_concurrency = detail::parse_config_int(key, value);
    else if (key == "model.term_based") config.model_term_based = value;
    else if (key == "model.term_free") config.model_term_free = value;
    else if (key == "model.fusion") config.model_fusion = value;
    else if (key == "model.vocabulary") config.model_vocabulary = value;
    else if (key == "temperature") config.temperature = detail::parse_config_double(key, value);
    else if (key == "parallelism") config.parallelism = detail::parse_config_int(key, value);
    else if (key == "retries") config.retries = detail::parse_config_int(key, value);
    else if (key == "timeout_s") config.timeout_s = detail::parse_config_int(key, value);
    else if (key == "variant_rule") config.variant_rule = parse_variant_rule(value);
    else if (key == "prompts.augmented_term_free")
        config.augmented_term_free = detail::parse_config_bool(key, value);
    else if (key == "server.bind") config.bind_address = value;
    else if (key == "server.port") config.port = detail::parse_config_int(key, value);
    else throw ConfigError("unknown config key: " + key);
}

/// Flat `key = value` lines. Blank lines and lines whose first non-space
/// character is '#' are skipped. A value may be wrapped in double quotes to
/// keep leading or trailing spaces.
inline EngineConfig load_config_text(const std::string& text) {
    EngineConfig config;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) +
                              ": expected key = value, got \"" + stripped + "\"");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        set_config_key(config, key, value);
    }
    return config;
}

using EnvLookup = std::function<const char*(const char*)>;

/// DETOX_LLM_ENDPOINT switches the provider to http and sets its URL;
/// DETOX_LLM_KEY sets the API key; DETOX_DATA_DIR relocates the data tree.
inline void apply_env_overrides(EngineConfig& config, const EnvLookup& lookup = {}) {
    auto get = [&](const char* name) -> const char* {
        return lookup ? lookup(name) : std::getenv(name);
    };
    if (const char* v = get("DETOX_LLM_ENDPOINT"); v && *v) {
        config.provider_kind = ProviderKind::http;
        config.provider_endpoint = v;
    }
    if (const char* v = get("DETOX_LLM_KEY"); v && *v) config.provider_api_key = v;
    if (const char* v = get("DETOX_DATA_DIR"); v && *v) config.data_dir = v;
}

inline EngineConfig load_config(const std::filesystem::path& path, bool with_env = true) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError(path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    EngineConfig config = load_config_text(buffer.str());
    if (with_env) apply_env_overrides(config);
    return config;
}

/// Structural checks. With check_paths every referenced file must exist.
inline void validate_config(const EngineConfig& config, bool check_paths = false) {
    if (!language_supported(config.language))
        throw ConfigError("unsupported language \"" + config.language + "\"");
    if (config.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (config.provider_concurrency < 1) throw ConfigError("provider.concurrency must be >= 1");
    if (config.retries < 0) throw ConfigError("retries must be >= 0");
    if (config.timeout_s < 1) throw ConfigError("timeout_s must be >= 1");
    if (!(config.temperature >= 0.0 && config.temperature <= 1.0))
        throw ConfigError("temperature must be in [0, 1]");
    if (config.port < 1 || config.port > 65535) throw ConfigError("server.port out of range");
    if (config.lemmatizer_kind == LemmatizerKind::command && config.lemmatizer_command.empty())
        throw ConfigError("lemmatizer.command is required when lemmatizer.kind = command");
    if (config.provider_kind == ProviderKind::http) {
        if (config.provider_endpoint.empty())
            throw ConfigError("provider.endpoint is required when provider.kind = http");
        if (config.provider_endpoint.find("://") == std::string::npos)
            throw ConfigError("provider.endpoint must be an absolute URL");
    }
    if (check_paths) {
        namespace fs = std::filesystem;
        if (!fs::exists(config.data_dir))
            throw ConfigError("data_dir does not exist: " + config.data_dir);
        if (!config.vocabulary_path.empty() && !fs::exists(config.vocabulary_path))
            throw ConfigError("vocabulary.path does not exist: " + config.vocabulary_path);
        if (config.provider_kind == ProviderKind::scripted && !config.provider_fixture.empty() &&
            !fs::exists(config.provider_fixture))
            throw ConfigError("provider.fixture does not exist: " + config.provider_fixture);
    }
}

/// The effective config as a parseable file, one line per field, every
/// field present. load_config_text(effective_config_text(c)) == c.
inline std::string effective_config_text(const EngineConfig& config) {
    std::ostringstream out;
    auto quoted = [](const std::string& value) {
        if (!value.empty() && (value.front() == ' ' || value.back() == ' '))
            return "\"" + value + "\"";
        return value;
    };
    out << "language = " << config.language << "\n";
    out << "data_dir = " << quoted(config.data_dir) << "\n";
    out << "vocabulary.path = " << quoted(config.vocabulary_path) << "\n";
    out << "lemmatizer.kind = " << lemmatizer_kind_name(config.lemmatizer_kind) << "\n";
    out << "lemmatizer.command = " << quoted(config.lemmatizer_command) << "\n";
    out << "provider.kind = " << provider_kind_name(config.provider_kind) << "\n";
    out << "provider.fixture = " << quoted(config.provider_fixture) << "\n";
    out << "provider.endpoint = " << quoted(config.provider_endpoint) << "\n";
    out << "provider.api_key = " << quoted(config.provider_api_key) << "\n";
    out << "provider.response_path = " << config.provider_response_path << "\n";
    out << "provider.concurrency = " << config.provider_concurrency << "\n";
    out << "model.term_based = " << quoted(config.model_term_based) << "\n";
    out << "model.term_free = " << quoted(config.model_term_free) << "\n";
    out << "model.fusion = " << quoted(config.model_fusion) << "\n";
    out << "model.vocabulary = " << quoted(config.model_vocabulary) << "\n";
    out << "temperature = " << config.temperature << "\n";
    out << "parallelism = " << config.parallelism << "\n";
    out << "retries = " << config.retries << "\n";
    out << "timeout_s = " << config.timeout_s << "\n";
    out << "variant_rule = " << variant_rule_name(config.variant_rule) << "\n";
    out << "prompts.augmented_term_free = " << (config.augmented_term_free ? "true" : "false")
        << "\n";
    out << "server.bind = " << config.bind_address << "\n";
    out << "server.port = " << config.port << "\n";
    return out.str();
}

/// Canned provider replies for offline runs. Two layouts:
///   {"mode": "sequence", "responses": ["...", ...]}
///   {"mode": "keyed", "rules": [{"contains": "...", "response": "..."}],
///    "fallback": "..."}            (fallback optional)
inline std::shared_ptr<ChatProvider> load_scripted_fixture(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError(path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(0, path.string() + ": " + ex.what());
    }
    if (!doc.is_object() || !doc.contains("mode") || !doc["mode"].is_string())
        throw FormatError(0, path.string() + ": expected an object with a \"mode\" string");
    std::string mode = doc["mode"].get<std::string>();
    if (mode == "sequence") {
        if (!doc.contains("responses") || !doc["responses"].is_array())
            throw FormatError(0, path.string() + ": sequence mode needs a \"responses\" array");
        std::vector<std::string> responses;
        for (const auto& item : doc["responses"]) {
            if (!item.is_string())
                throw FormatError(0, path.string() + ": responses must be strings");
            responses.push_back(item.get<std::string>());
        }
        return ScriptedProvider::sequence(std::move(responses));
    }
    if (mode == "keyed") {
        if (!doc.contains("rules") || !doc["rules"].is_array())
            throw FormatError(0, path.string() + ": keyed mode needs a \"rules\" array");
        std::vector<std::pair<std::string, std::string>> rules;
        for (const auto& item : doc["rules"]) {
            if (!item.is_object() || !item.contains("contains") || !item.contains("response") ||
                !item["contains"].is_string() || !item["response"].is_string())
                throw FormatError(0, path.string() +
                                  ": each rule needs \"contains\" and \"response\" strings");
            rules.emplace_back(item["contains"].get<std::string>(),
                               item["response"].get<std::string>());
        }
        if (doc.contains("fallback")) {
            if (!doc["fallback"].is_string())
                throw FormatError(0, path.string() + ": fallback must be a string");
            return ScriptedProvider::keyed_with_fallback(std::move(rules),
                                                         doc["fallback"].get<std::string>());
        }
        return ScriptedProvider::keyed(std::move(rules));
    }
    throw FormatError(0, path.string() + ": mode must be sequence or keyed");
}

inline std::shared_ptr<Lemmatizer> build_lemmatizer(const EngineConfig& config) {
    switch (config.lemmatizer_kind) {
        case LemmatizerKind::builtin:
            return default_lemmatizer(config.language, config.data_dir);
        case LemmatizerKind::identity:
            return std::make_shared<IdentityLemmatizer>(
                config.language, config.language == "fr" ? ApostropheMode::elision
                                                         : ApostropheMode::interior);
        default:
            return std::make_shared<CommandLemmatizer>(config.language,
                                                       config.lemmatizer_command);
    }
}

inline std::shared_ptr<ChatProvider> build_provider(const EngineConfig& config) {
    if (config.provider_kind == ProviderKind::scripted) {
        if (config.provider_fixture.empty())
            throw ConfigError("provider.fixture is required when provider.kind = scripted");
        return load_scripted_fixture(config.provider_fixture);
    }
    HttpProviderConfig http;
    http.endpoint = config.provider_endpoint;
    http.api_key = config.provider_api_key;
    http.response_path = config.provider_response_path;
    http.max_retries = config.retries;
    http.timeout_s = config.timeout_s;
    http.max_concurrency = config.provider_concurrency;
    return std::make_shared<HttpProvider>(std::move(http));
}

/// Loaded, immutable engine state shared by the CLI and the service.
struct Engine {
    EngineConfig config;
    Vocabulary vocabulary;
    std::shared_ptr<Lemmatizer> lemmatizer;
    std::shared_ptr<ChatProvider> provider;
    PromptSet prompts;

    DetectDeps deps() const {
        DetectDeps d;
        d.vocab = &vocabulary;
        d.lemmatizer = lemmatizer.get();
        d.provider = provider.get();
        d.prompts = &prompts;
        d.term_based_model = config.model_term_based;
        d.term_free_model = config.model_term_free;
        d.fusion_model = config.model_fusion;
        d.temperature = config.temperature;
        return d;
    }
};

/// Validates, loads every referenced asset, and indexes the vocabulary.
inline Engine build_engine(const EngineConfig& config) {
    validate_config(config, /*check_paths=*/true);
    if (config.vocabulary_path.empty())
        throw ConfigError("vocabulary.path is required for detection");
    Engine engine;
    engine.config = config;
    engine.lemmatizer = build_lemmatizer(config);
    engine.provider = build_provider(config);
    engine.prompts = load_prompt_set(config.language, config.data_dir,
                                     config.augmented_term_free);
    engine.vocabulary = load_vocabulary(config.vocabulary_path, config.language);
    engine.vocabulary.build_index(*engine.lemmatizer);
    return engine;
}

}  // namespace detox
