#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "detox/errors.hpp"
#include "detox/lemmatizer.hpp"  // default_data_dir

namespace detox {

/// A named two-part prompt. Placeholders are written `{name}`; literal
/// braces are escaped `{{` and `}}`. Substitution is single-pass: text
/// inserted for one placeholder is never rescanned, so values may safely
/// contain brace characters.
struct PromptTemplate {
    std::string name;
    std::string language;
    std::string system;
    std::string user;
};

namespace detail {

inline bool identifier_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

template <typename OnLiteral, typename OnPlaceholder>
inline void scan_template(std::string_view text, OnLiteral&& literal, OnPlaceholder&& placeholder) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '{') {
            if (i + 1 < text.size() && text[i + 1] == '{') {
                literal('{');
                ++i;
                continue;
            }
            std::size_t j = i + 1;
            while (j < text.size() && identifier_char(text[j])) ++j;
            if (j == i + 1 || j >= text.size() || text[j] != '}')
                throw Error("malformed placeholder at offset " + std::to_string(i) +
                            "; write {{ for a literal brace");
            placeholder(std::string(text.substr(i + 1, j - i - 1)));
            i = j;
        } else if (c == '}') {
            if (i + 1 < text.size() && text[i + 1] == '}') {
                literal('}');
                ++i;
                continue;
            }
            throw Error("unmatched '}' at offset " + std::to_string(i) +
                        "; write }} for a literal brace");
        } else {
            literal(c);
        }
    }
}

}  // namespace detail

/// Placeholder names appearing in one template text.
inline std::set<std::string> placeholders(std::string_view text) {
    std::set<std::string> names;
    detail::scan_template(
        text, [](char) {}, [&](std::string name) { names.insert(std::move(name)); });
    return names;
}

/// Substitutes `vars` into one template text. Every placeholder must be
/// covered and every provided variable must be used.
inline std::string render_text(std::string_view text,
                               const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(text.size());
    detail::scan_template(
        text, [&](char c) { out.push_back(c); },
        [&](const std::string& name) {
            auto it = vars.find(name);
            if (it == vars.end()) throw MissingVariableError(name);
            out += it->second;
        });
    return out;
}

/// Renders both parts of a template. A variable that appears in neither
/// part is rejected, which catches misspelled variable names early.
inline std::pair<std::string, std::string> render(const PromptTemplate& tmpl,
                                                  const std::map<std::string, std::string>& vars) {
    auto used = placeholders(tmpl.system);
    auto user_names = placeholders(tmpl.user);
    used.insert(user_names.begin(), user_names.end());
    for (const auto& [name, value] : vars)
        if (!used.count(name)) throw UnknownVariableError(name);
    return {render_text(tmpl.system, vars), render_text(tmpl.user, vars)};
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError(path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

/// Loads `<data_dir>/prompts/<language>/<name>.<part>.txt`, falling back
/// to the English file when the language lacks a translation.
inline std::string load_prompt_part(const std::string& name, const std::string& part,
                                    const std::string& language,
                                    const std::filesystem::path& data_dir = default_data_dir()) {
    auto path = data_dir / "prompts" / language / (name + "." + part + ".txt");
    if (std::filesystem::exists(path)) return read_text_file(path);
    auto fallback = data_dir / "prompts" / "en" / (name + "." + part + ".txt");
    if (std::filesystem::exists(fallback)) return read_text_file(fallback);
    throw FileNotFoundError(path.string());
}

inline PromptTemplate load_prompt_template(const std::string& name, const std::string& language,
                                           const std::filesystem::path& data_dir = default_data_dir()) {
    PromptTemplate tmpl;
    tmpl.name = name;
    tmpl.language = language;
    tmpl.system = load_prompt_part(name, "system", language, data_dir);
    tmpl.user = load_prompt_part(name, "user", language, data_dir);
    return tmpl;
}

namespace detail {
inline std::string_view trim_view(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && static_cast<unsigned char>(s[b]) <= ' ') ++b;
    while (e > b && static_cast<unsigned char>(s[e - 1]) <= ' ') --e;
    return s.substr(b, e - b);
}
}  // namespace detail

/// Extracts `<TAG>content</TAG>` blocks. Text outside tags is ignored;
/// the first occurrence of a repeated tag wins; content is trimmed.
inline std::map<std::string, std::string> parse_tagged(std::string_view response,
                                                       const std::vector<std::string>& required_tags) {
    std::map<std::string, std::string> out;
    for (const auto& tag : required_tags) {
        std::string open = "<" + tag + ">";
        std::string close = "</" + tag + ">";
        auto begin = response.find(open);
        if (begin == std::string_view::npos) throw MissingTagError(tag);
        begin += open.size();
        auto end = response.find(close, begin);
        if (end == std::string_view::npos) throw UnclosedTagError(tag);
        out[tag] = std::string(detail::trim_view(response.substr(begin, end - begin)));
    }
    return out;
}

/// Folds a decision string for comparison: lowercase, letters and digits
/// only. "Non hateful." and "non-hateful" fold identically.
inline std::string fold_decision(std::string_view s) {
    std::string out;
    for (char32_t cp : uni::decode(s)) {
        char32_t lower = uni::to_lower(cp);
        if (uni::is_letter(lower) || uni::is_digit(lower)) uni::append_utf8(out, lower);
    }
    return out;
}

/// Maps a free-form decision onto the positive/negative pair. Only an
/// exact folded match counts; anything else is ambiguous.
inline bool parse_decision(std::string_view text, std::string_view positive,
                           std::string_view negative) {
    std::string folded = fold_decision(text);
    std::string pos = fold_decision(positive);
    std::string neg = fold_decision(negative);
    bool is_pos = folded == pos;
    bool is_neg = folded == neg;
    if (is_pos == is_neg) throw AmbiguousDecisionError(std::string(text));
    return is_pos;
}

}  // namespace detox
