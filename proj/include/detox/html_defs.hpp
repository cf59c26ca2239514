#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "detox/errors.hpp"
#include "detox/lemmatizer.hpp"  // default_data_dir
#include "detox/unicode.hpp"
#include "detox/vocabulary.hpp"  // trim

namespace detox {

namespace detail {

inline void append_entity_decoded(std::string& out, std::string_view entity) {
    // entity excludes '&' and ';'
    if (entity == "amp") { out += '&'; return; }
    if (entity == "lt") { out += '<'; return; }
    if (entity == "gt") { out += '>'; return; }
    if (entity == "quot") { out += '"'; return; }
    if (entity == "apos") { out += '\''; return; }
    if (entity == "nbsp") { out += ' '; return; }
    if (entity.size() > 1 && entity[0] == '#') {
        char32_t cp = 0;
        bool ok = false;
        if (entity[1] == 'x' || entity[1] == 'X') {
            for (std::size_t i = 2; i < entity.size(); ++i) {
                int d = std::isxdigit(static_cast<unsigned char>(entity[i]))
                            ? (std::isdigit(static_cast<unsigned char>(entity[i]))
                                   ? entity[i] - '0'
                                   : (std::tolower(static_cast<unsigned char>(entity[i])) - 'a' + 10))
                            : -1;
                if (d < 0) { ok = false; break; }
                cp = cp * 16 + static_cast<char32_t>(d);
                ok = true;
            }
        } else {
            for (std::size_t i = 1; i < entity.size(); ++i) {
                if (!std::isdigit(static_cast<unsigned char>(entity[i]))) { ok = false; break; }
                cp = cp * 10 + static_cast<char32_t>(entity[i] - '0');
                ok = true;
            }
        }
        if (ok && cp > 0 && cp <= 0x10FFFF) {
            uni::append_utf8(out, cp);
            return;
        }
    }
    out += '&';
    out += entity;
    out += ';';
}

inline std::string decode_entities(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    std::size_t i = 0;
    while (i < raw.size()) {
        if (raw[i] == '&') {
            auto end = raw.find(';', i + 1);
            if (end != std::string_view::npos && end - i <= 12) {
                append_entity_decoded(out, raw.substr(i + 1, end - i - 1));
                i = end + 1;
                continue;
            }
        }
        out += raw[i++];
    }
    return out;
}

/// Decodes entities, drops stray angle brackets, collapses whitespace.
inline std::string clean_fragment(std::string_view raw) {
    std::string decoded = decode_entities(raw);
    std::string out;
    out.reserve(decoded.size());
    bool pending_space = false;
    for (char c : decoded) {
        if (c == '<' || c == '>') continue;
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

struct HtmlTag {
    std::string name;   // lowercase
    bool closing = false;
    std::size_t end = 0;  // index just past '>'
};

/// Parses the tag starting at `pos` (which holds '<'). Returns false for
/// comments/doctype/processing instructions, after setting `end` past them.
inline bool parse_tag(std::string_view html, std::size_t pos, HtmlTag& tag) {
    if (html.compare(pos, 4, "<!--") == 0) {
        auto close = html.find("-->", pos + 4);
        tag.end = close == std::string_view::npos ? html.size() : close + 3;
        return false;
    }
    std::size_t i = pos + 1;
    if (i < html.size() && (html[i] == '!' || html[i] == '?')) {
        auto close = html.find('>', i);
        tag.end = close == std::string_view::npos ? html.size() : close + 1;
        return false;
    }
    tag.closing = i < html.size() && html[i] == '/';
    if (tag.closing) ++i;
    tag.name.clear();
    while (i < html.size() && (std::isalnum(static_cast<unsigned char>(html[i])) != 0))
        tag.name += static_cast<char>(std::tolower(static_cast<unsigned char>(html[i++])));
    auto close = html.find('>', i);
    tag.end = close == std::string_view::npos ? html.size() : close + 1;
    if (tag.name.empty()) return false;
    return true;
}

inline int heading_level(const std::string& name) {
    if (name.size() == 2 && name[0] == 'h' && name[1] >= '1' && name[1] <= '6')
        return name[1] - '0';
    return 0;
}

/// True when the heading text names one of the wanted sections. Trailing
/// bracketed groups (section edit links render as "[edit]") are ignored.
inline bool heading_matches(const std::string& text, const std::set<std::string>& wanted) {
    std::string t = trim(clean_fragment(text));
    if (wanted.count(uni::fold(t)) > 0) return true;
    auto bracket = t.rfind('[');
    if (bracket != std::string::npos && !t.empty() && t.back() == ']') {
        std::string head = trim(t.substr(0, bracket));
        if (wanted.count(uni::fold(head)) > 0) return true;
    }
    return false;
}

}  // namespace detail

/// Extracts definition lines from a rendered wiki article: the text of each
/// top-level list item under a heading named in `pos_headings`. Nested lists
/// inside an item (usage examples, quotations) are excluded. Unparseable
/// input yields an empty list, never an error.
inline std::vector<std::string> parse_definitions(std::string_view html,
                                                  const std::set<std::string>& pos_headings) {
    std::vector<std::string> defs;
    bool section_wanted = false;
    bool in_heading = false;
    std::string heading_text;
    int list_depth = 0;   // ol/ul nesting inside a wanted section
    int dl_depth = 0;     // dl blocks carry quotations, never definitions
    bool in_item = false; // inside a top-level li
    std::string item_text;

    auto finish_item = [&] {
        if (!in_item) return;
        std::string text = trim(detail::clean_fragment(item_text));
        if (!text.empty()) defs.push_back(std::move(text));
        item_text.clear();
        in_item = false;
    };

    std::size_t i = 0;
    while (i < html.size()) {
        if (html[i] != '<') {
            auto next = html.find('<', i);
            if (next == std::string_view::npos) next = html.size();
            auto span = html.substr(i, next - i);
            if (in_heading)
                heading_text.append(span);
            else if (in_item && list_depth == 1 && dl_depth == 0)
                item_text.append(span);
            i = next;
            continue;
        }
        detail::HtmlTag tag;
        if (!detail::parse_tag(html, i, tag)) {
            i = tag.end;
            continue;
        }
        i = tag.end;
        if (tag.name == "script" || tag.name == "style") {
            if (!tag.closing) {
                std::string close = "</" + tag.name;
                auto at = html.find(close, i);
                i = at == std::string_view::npos ? html.size() : html.find('>', at) + 1;
            }
            continue;
        }
        if (int level = detail::heading_level(tag.name); level > 0) {
            if (!tag.closing) {
                finish_item();
                list_depth = dl_depth = 0;
                section_wanted = false;
                in_heading = true;
                heading_text.clear();
            } else if (in_heading) {
                in_heading = false;
                section_wanted = detail::heading_matches(heading_text, pos_headings);
            }
            continue;
        }
        if (in_heading) continue;  // tags inside a heading are presentation
        if (tag.name == "ol" || tag.name == "ul") {
            if (!section_wanted) continue;
            if (!tag.closing) {
                ++list_depth;
            } else if (list_depth > 0) {
                if (list_depth == 1) finish_item();
                --list_depth;
            }
            continue;
        }
        if (tag.name == "dl") {
            if (section_wanted && list_depth > 0) dl_depth += tag.closing ? -1 : 1;
            if (dl_depth < 0) dl_depth = 0;
            continue;
        }
        if (tag.name == "li" && section_wanted && list_depth == 1 && dl_depth == 0) {
            finish_item();
            if (!tag.closing) in_item = true;
            continue;
        }
        // other tags inside an item separate words, never glue them
        if (in_item && list_depth == 1 && dl_depth == 0 && !item_text.empty())
            item_text += ' ';
    }
    finish_item();
    return defs;
}

/// Loads `<data_dir>/pos_headings/<language>.txt` as a folded set.
inline std::set<std::string> load_pos_headings(
    const std::string& language, const std::filesystem::path& data_dir = default_data_dir()) {
    if (!language_supported(language)) throw UnsupportedLanguageError(language);
    auto path = data_dir / "pos_headings" / (language + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError(path.string());
    std::set<std::string> headings;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (!t.empty()) headings.insert(uni::fold(t));
    }
    return headings;
}

}  // namespace detox
