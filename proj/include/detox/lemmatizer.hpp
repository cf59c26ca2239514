#pragma once

#include <unistd.h>

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "detox/errors.hpp"
#include "detox/unicode.hpp"

namespace detox {

/// One token of analyzed text. Offsets are Unicode codepoint indices into
/// the input; `surface` equals the input slice [start, end).
struct Token {
    std::string surface;
    std::string lemma;  // lowercase, NFC
    std::size_t start = 0;
    std::size_t end = 0;
};

/// Contract for anything that can turn text into lemmatized tokens.
///
/// Tokens must be non-overlapping, ordered by start offset, with non-empty
/// lemmas. An external engine (Stanza, ILSP, ...) can be plugged in behind
/// this interface; the library ships a deterministic rule-based default.
class Lemmatizer {
public:
    virtual ~Lemmatizer() = default;

    virtual std::vector<Token> analyze(std::string_view text) const = 0;

    /// BCP-47 tag, or empty when the lemmatizer is language-agnostic.
    virtual std::string language() const = 0;

    virtual bool share_safe() const { return true; }
};

enum class ApostropheMode {
    interior,  // apostrophe stays inside the token: "don't"
    elision    // apostrophe closes the token: "l'" + "ami"
};

/// Splits on Unicode whitespace/punctuation, keeping codepoint offsets.
inline std::vector<Token> tokenize(std::string_view text, ApostropheMode mode) {
    std::vector<Token> tokens;
    auto cps = uni::decode(text);
    std::size_t n = cps.size();
    std::size_t i = 0;
    while (i < n) {
        if (!uni::is_word_char(cps[i])) {
            ++i;
            continue;
        }
        std::size_t start = i;
        while (i < n) {
            if (uni::is_word_char(cps[i])) {
                ++i;
            } else if (uni::is_apostrophe(cps[i]) && i > start) {
                if (mode == ApostropheMode::elision) {
                    ++i;  // keep the apostrophe, close the token
                    break;
                }
                if (i + 1 < n && uni::is_word_char(cps[i + 1])) {
                    ++i;  // interior apostrophe: don't, queen's
                } else {
                    break;
                }
            } else {
                break;
            }
        }
        Token t;
        t.start = start;
        t.end = i;
        t.surface = uni::encode({cps.begin() + static_cast<std::ptrdiff_t>(start),
                                 cps.begin() + static_cast<std::ptrdiff_t>(i)});
        tokens.push_back(std::move(t));
    }
    return tokens;
}

/// Lemma = lowercase NFC surface. Useful in tests and as a no-op baseline.
class IdentityLemmatizer : public Lemmatizer {
public:
    explicit IdentityLemmatizer(std::string language = "",
                                ApostropheMode mode = ApostropheMode::interior)
        : language_(std::move(language)), mode_(mode) {}

    std::vector<Token> analyze(std::string_view text) const override {
        auto tokens = tokenize(text, mode_);
        for (auto& t : tokens) t.lemma = uni::fold(t.surface);
        return tokens;
    }

    std::string language() const override { return language_; }

private:
    std::string language_;
    ApostropheMode mode_;
};

/// Deterministic lemmatizer driven by two shipped data files per language:
/// an exceptions table (`surface<TAB>lemma`) consulted first, then ordered
/// suffix-rewrite rules (`suffix<TAB>replacement`, first match wins). A rule
/// whose replacement equals its suffix acts as a stop. Unknown words
/// lemmatize to their lowercase NFC form.
class RuleLemmatizer : public Lemmatizer {
public:
    RuleLemmatizer(std::string language, ApostropheMode mode)
        : language_(std::move(language)), mode_(mode) {}

    void add_exception(std::string_view surface, std::string_view lemma) {
        exceptions_[uni::fold(surface)] = uni::fold(lemma);
    }

    void add_rule(std::string_view suffix, std::string_view replacement) {
        rules_.push_back({uni::fold(suffix), uni::fold(replacement)});
    }

    std::vector<Token> analyze(std::string_view text) const override {
        auto tokens = tokenize(text, mode_);
        for (auto& t : tokens) t.lemma = lemma_of(t.surface);
        return tokens;
    }

    std::string language() const override { return language_; }

    std::string lemma_of(std::string_view surface) const {
        std::string folded = uni::fold(surface);
        if (auto it = exceptions_.find(folded); it != exceptions_.end())
            return it->second;
        for (const auto& [suffix, replacement] : rules_) {
            if (folded.size() < suffix.size()) continue;
            if (folded.compare(folded.size() - suffix.size(), suffix.size(), suffix) != 0)
                continue;
            std::string candidate = folded.substr(0, folded.size() - suffix.size()) + replacement;
            if (candidate.empty()) continue;
            return candidate;
        }
        return folded;
    }

    static RuleLemmatizer from_files(const std::string& language,
                                     const std::filesystem::path& rules_path,
                                     const std::filesystem::path& exceptions_path,
                                     ApostropheMode mode) {
        RuleLemmatizer lx(language, mode);
        // In a rules file a line without a tab strips the suffix (empty
        // replacement); editors tend to drop trailing tabs, so requiring
        // one would make such rules impossible to keep in the file.
        auto read_pairs = [](const std::filesystem::path& path, bool allow_empty_right,
                             auto&& visit) {
            std::ifstream in(path);
            if (!in) throw FileNotFoundError(path.string());
            std::string line;
            std::size_t lineno = 0;
            while (std::getline(in, line)) {
                ++lineno;
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.empty() || line[0] == '#') continue;
                auto tab = line.find('\t');
                if (tab == std::string::npos) {
                    if (!allow_empty_right)
                        throw FormatError(lineno, "expected <left><TAB><right> in " + path.string());
                    visit(line, std::string());
                } else {
                    visit(line.substr(0, tab), line.substr(tab + 1));
                }
            }
        };
        read_pairs(exceptions_path, false,
                   [&](const std::string& a, const std::string& b) { lx.add_exception(a, b); });
        read_pairs(rules_path, true,
                   [&](const std::string& a, const std::string& b) { lx.add_rule(a, b); });
        return lx;
    }

private:
    struct Rule {
        std::string suffix;
        std::string replacement;
    };
    std::string language_;
    ApostropheMode mode_;
    std::unordered_map<std::string, std::string> exceptions_;
    std::vector<Rule> rules_;
};

inline bool language_supported(std::string_view language) {
    return language == "en" || language == "fr" || language == "el";
}

/// Directory holding the shipped data files (lemmatizer tables, prompts,
/// POS headings, source lists). Overridable via DETOX_DATA_DIR.
inline std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("DETOX_DATA_DIR"); env && *env) return env;
    return "data";
}

/// Builds the shipped rule-based lemmatizer for one of en/fr/el.
inline std::shared_ptr<Lemmatizer> default_lemmatizer(
    const std::string& language,
    const std::filesystem::path& data_dir = default_data_dir()) {
    if (!language_supported(language)) throw UnsupportedLanguageError(language);
    ApostropheMode mode = language == "fr" ? ApostropheMode::elision : ApostropheMode::interior;
    auto dir = data_dir / "lemmatizer";
    return std::make_shared<RuleLemmatizer>(RuleLemmatizer::from_files(
        language, dir / (language + ".rules"), dir / (language + ".exceptions"), mode));
}

/// Adapter for an external lemma engine invoked as a shell command.
/// Tokenization stays internal so offsets remain codepoint-exact; the
/// command reads one folded surface per line on stdin and must print
/// exactly one lemma per line on stdout.
class CommandLemmatizer : public Lemmatizer {
public:
    CommandLemmatizer(std::string language, std::string command)
        : language_(std::move(language)),
          command_(std::move(command)),
          mode_(language_ == "fr" ? ApostropheMode::elision : ApostropheMode::interior) {}

    std::vector<Token> analyze(std::string_view text) const override {
        auto tokens = tokenize(text, mode_);
        if (tokens.empty()) return tokens;

        static std::atomic<unsigned> serial{0};
        auto stem = std::filesystem::temp_directory_path() /
                    ("detox_lemma_" + std::to_string(::getpid()) + "_" +
                     std::to_string(serial.fetch_add(1)));
        auto in_path = stem.string() + ".in";
        auto out_path = stem.string() + ".out";
        {
            std::ofstream out(in_path, std::ios::binary);
            for (const auto& t : tokens) out << uni::fold(t.surface) << "\n";
        }
        std::string shell = command_ + " < '" + in_path + "' > '" + out_path + "'";
        int rc = std::system(shell.c_str());
        std::vector<std::string> lemmas;
        {
            std::ifstream in(out_path, std::ios::binary);
            std::string line;
            while (std::getline(in, line)) lemmas.push_back(line);
        }
        std::filesystem::remove(in_path);
        std::filesystem::remove(out_path);
        if (rc != 0)
            throw LemmatizationError("external command failed (exit " + std::to_string(rc) +
                                     "): " + command_);
        if (lemmas.size() != tokens.size())
            throw LemmatizationError("external command returned " +
                                     std::to_string(lemmas.size()) + " lemmas for " +
                                     std::to_string(tokens.size()) + " tokens");
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            std::string lemma = uni::fold(lemmas[i]);
            if (lemma.empty())
                throw LemmatizationError("external command returned an empty lemma for \"" +
                                         tokens[i].surface + "\"");
            tokens[i].lemma = std::move(lemma);
        }
        return tokens;
    }

    std::string language() const override { return language_; }

    // each call uses its own temp files, so sharing across threads is fine
    bool share_safe() const override { return true; }

private:
    std::string language_;
    std::string command_;
    ApostropheMode mode_;
};

}  // namespace detox
