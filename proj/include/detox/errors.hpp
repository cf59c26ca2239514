#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace detox {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// --- file / format ---

class FileNotFoundError : public Error {
public:
    explicit FileNotFoundError(const std::string& path)
        : Error("file not found: " + path) {}
};

/// Structural problem in an input file. `row` is 1-based (0 = whole file).
class FormatError : public Error {
public:
    FormatError(std::size_t row, const std::string& reason)
        : Error("format error at row " + std::to_string(row) + ": " + reason),
          row(row), reason(reason) {}
    std::size_t row;
    std::string reason;
};

/// A row parsed fine but violates a domain invariant.
class ValidationError : public Error {
public:
    ValidationError(std::size_t row, const std::string& rule)
        : Error("validation error at row " + std::to_string(row) + ": " + rule),
          row(row), rule(rule) {}
    std::size_t row;
    std::string rule;
};

// --- vocabulary / matching ---

class LemmatizationError : public Error {
public:
    explicit LemmatizationError(const std::string& term)
        : Error("lemmatizer produced no tokens for term: \"" + term + "\""),
          term(term) {}
    std::string term;
};

class UnsupportedLanguageError : public Error {
public:
    explicit UnsupportedLanguageError(const std::string& language)
        : Error("unsupported language: " + language), language(language) {}
    std::string language;
};

// --- prompt templates / response parsing ---

class MissingVariableError : public Error {
public:
    explicit MissingVariableError(const std::string& name)
        : Error("template variable not provided: " + name), name(name) {}
    std::string name;
};

class UnknownVariableError : public Error {
public:
    explicit UnknownVariableError(const std::string& name)
        : Error("variable not referenced by template: " + name), name(name) {}
    std::string name;
};

class MissingTagError : public Error {
public:
    explicit MissingTagError(const std::string& tag)
        : Error("response is missing tag <" + tag + ">"), tag(tag) {}
    std::string tag;
};

class UnclosedTagError : public Error {
public:
    explicit UnclosedTagError(const std::string& tag)
        : Error("response has unclosed tag <" + tag + ">"), tag(tag) {}
    std::string tag;
};

class AmbiguousDecisionError : public Error {
public:
    explicit AmbiguousDecisionError(const std::string& text)
        : Error("ambiguous decision text: \"" + text + "\""), text(text) {}
    std::string text;
};

class ResponseParseError : public Error {
public:
    explicit ResponseParseError(const std::string& why)
        : Error("cannot parse model response: " + why) {}
};

class InconsistentVerdictError : public Error {
public:
    explicit InconsistentVerdictError(const std::string& why)
        : Error("inconsistent verdict: " + why) {}
};

// --- providers / network ---

enum class ProviderErrorKind { network, auth, rate_limit, malformed };

class ProviderError : public Error {
public:
    ProviderError(ProviderErrorKind kind, const std::string& why)
        : Error("provider error (" + kind_name(kind) + "): " + why), kind(kind) {}
    ProviderErrorKind kind;

    static std::string kind_name(ProviderErrorKind k) {
        switch (k) {
            case ProviderErrorKind::network: return "network";
            case ProviderErrorKind::auth: return "auth";
            case ProviderErrorKind::rate_limit: return "rate_limit";
            case ProviderErrorKind::malformed: return "malformed";
        }
        return "?";
    }
};

class TimeoutError : public Error {
public:
    explicit TimeoutError(const std::string& what) : Error("timeout: " + what) {}
};

class ScriptExhaustedError : public Error {
public:
    ScriptExhaustedError() : Error("scripted provider has no response left") {}
    explicit ScriptExhaustedError(const std::string& why)
        : Error("scripted provider has no response left: " + why) {}
};

class NetworkError : public Error {
public:
    explicit NetworkError(const std::string& why) : Error("network error: " + why) {}
};

/// Error reported by the remote API itself (or a non-2xx HTTP status).
class ApiError : public Error {
public:
    ApiError(const std::string& code, const std::string& message)
        : Error("api error [" + code + "]: " + message), code(code), message(message) {}
    std::string code;
    std::string message;
};

// --- pipelines ---

class FusionError : public Error {
public:
    explicit FusionError(const std::string& why) : Error("fusion failed: " + why) {}
};

// --- evaluation ---

class IdMismatchError : public Error {
public:
    explicit IdMismatchError(const std::string& id)
        : Error("no prediction for id: " + id), id(id) {}
    std::string id;
};

class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& why)
        : Error("insufficient data: " + why) {}
};

class MissingOriginalLabelError : public Error {
public:
    explicit MissingOriginalLabelError(const std::string& id)
        : Error("no original label for id: " + id), id(id) {}
    std::string id;
};

class EmptyDatasetError : public Error {
public:
    EmptyDatasetError() : Error("dataset has no items") {}
};

// --- configuration ---

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& why) : Error("config error: " + why) {}
};

}  // namespace detox
