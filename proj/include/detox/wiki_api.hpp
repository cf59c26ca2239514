#pragma once

#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "detox/chat.hpp"  // detail::split_url
#include "detox/errors.hpp"
#include "detox/lemmatizer.hpp"  // default_data_dir, language_supported
#include "detox/prompt.hpp"      // read_text_file

namespace detox {

/// Where a candidate term was discovered: a wiki category listing, or a
/// tag page whose backlinks mark tagged terms.
struct CategorySource {
    enum class Kind { category, tag };
    std::string language;
    Kind kind = Kind::category;
    std::string title;
};

inline std::string category_prefix(const std::string& language) {
    if (language == "en") return "Category:";
    if (language == "fr") return "Catégorie:";
    if (language == "el") return "Κατηγορία:";
    throw UnsupportedLanguageError(language);
}

/// Loads `<data_dir>/sources/<language>.txt` (`kind<TAB>title` lines).
inline std::vector<CategorySource> load_sources(
    const std::string& language, const std::filesystem::path& data_dir = default_data_dir()) {
    std::string prefix = category_prefix(language);
    auto path = data_dir / "sources" / (language + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError(path.string());
    std::vector<CategorySource> sources;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw FormatError(lineno, "expected kind<TAB>title in " + path.string());
        CategorySource src;
        src.language = language;
        std::string kind = line.substr(0, tab);
        src.title = line.substr(tab + 1);
        if (kind == "category")
            src.kind = CategorySource::Kind::category;
        else if (kind == "tag")
            src.kind = CategorySource::Kind::tag;
        else
            throw FormatError(lineno, "unknown source kind \"" + kind + "\"");
        if (src.title.empty()) throw FormatError(lineno, "empty source title");
        if (src.kind == CategorySource::Kind::category && src.title.rfind(prefix, 0) != 0)
            throw FormatError(lineno, "category title must begin with \"" + prefix + "\"");
        sources.push_back(std::move(src));
    }
    return sources;
}

/// A page reference as returned by the API member listings.
struct PageRef {
    std::string title;
    long long page_id = 0;
};

struct WikiClientConfig {
    std::string api_base;    // e.g. https://en.wiktionary.org/w/api.php
    std::string language;    // used for cache layout and defaults
    std::filesystem::path cache_dir = "cache";
    int page_size = 500;     // API ceiling
    int delay_ms = 0;        // politeness delay between requests
    int timeout_s = 30;
    int max_retries = 2;
    bool offline = false;    // cache misses become errors instead of fetches
};

inline std::string default_api_base(const std::string& language) {
    if (!language_supported(language)) throw UnsupportedLanguageError(language);
    return "https://" + language + ".wiktionary.org/w/api.php";
}

/// MediaWiki API client with an on-disk cache. Page HTML is cached under
/// `<cache_dir>/<language>/<page_id>.html` and member listings under
/// `<cache_dir>/<language>/members/`; a populated cache answers every
/// query without touching the network.
class WikiClient {
public:
    explicit WikiClient(WikiClientConfig config) : config_(std::move(config)) {
        if (config_.api_base.empty()) config_.api_base = default_api_base(config_.language);
        if (config_.page_size < 1 || config_.page_size > 500)
            throw ConfigError("page_size must be in [1, 500]");
    }

    const WikiClientConfig& config() const { return config_; }
    std::size_t network_calls() const { return network_calls_; }

    /// All members of one category, following continuation tokens.
    std::vector<PageRef> fetch_category_members(const CategorySource& source) {
        if (source.kind != CategorySource::Kind::category)
            throw Error("fetch_category_members requires a category source");
        return fetch_members_cached("category", source.title, [&](const std::string& cont) {
            httplib::Params params = {
                {"action", "query"},
                {"list", "categorymembers"},
                {"cmtitle", source.title},
                {"cmprop", "title|ids"},
                {"format", "json"},
                {"cmlimit", std::to_string(config_.page_size)},
            };
            if (!cont.empty()) params.emplace("cmcontinue", cont);
            auto doc = call(params);
            Page page;
            if (doc.contains("query") && doc["query"].contains("categorymembers"))
                for (const auto& m : doc["query"]["categorymembers"])
                    append_member(page.members, m);
            if (doc.contains("continue") && doc["continue"].contains("cmcontinue"))
                page.next = doc["continue"]["cmcontinue"].get<std::string>();
            return page;
        });
    }

    /// All pages linking to a tag page, following continuation tokens.
    std::vector<PageRef> fetch_linkhere_members(const std::string& term_page) {
        return fetch_members_cached("tag", term_page, [&](const std::string& cont) {
            httplib::Params params = {
                {"action", "query"},
                {"prop", "linkhere"},
                {"titles", term_page},
                {"lhprop", "title|pageid"},
                {"format", "json"},
                {"lhlimit", std::to_string(config_.page_size)},
            };
            if (!cont.empty()) params.emplace("lhcontinue", cont);
            auto doc = call(params);
            Page page;
            if (doc.contains("query") && doc["query"].contains("pages"))
                for (const auto& [key, page_doc] : doc["query"]["pages"].items()) {
                    // servers answer with "linkshere"; accept the requested
                    // spelling too
                    for (const char* field : {"linkshere", "linkhere"})
                        if (page_doc.contains(field))
                            for (const auto& m : page_doc[field]) append_member(page.members, m);
                }
            if (doc.contains("continue") && doc["continue"].contains("lhcontinue")) {
                const auto& c = doc["continue"]["lhcontinue"];
                page.next = c.is_string() ? c.get<std::string>() : c.dump();
            }
            return page;
        });
    }

    std::vector<PageRef> fetch_members(const CategorySource& source) {
        return source.kind == CategorySource::Kind::category ? fetch_category_members(source)
                                                             : fetch_linkhere_members(source.title);
    }

    /// Rendered page HTML, from cache when present.
    std::string fetch_page_html(long long page_id) {
        auto path = page_cache_path(page_id);
        if (std::filesystem::exists(path)) return read_text_file(path);
        if (config_.offline)
            throw NetworkError("offline mode: page " + std::to_string(page_id) + " not in cache");
        httplib::Params params = {
            {"action", "parse"},
            {"pageid", std::to_string(page_id)},
            {"prop", "text"},
            {"redirects", "1"},
            {"format", "json"},
        };
        auto doc = call(params);
        if (!doc.contains("parse") || !doc["parse"].contains("text"))
            throw ApiError("parse", "no rendered text for page " + std::to_string(page_id));
        const auto& text = doc["parse"]["text"];
        std::string html =
            text.is_string() ? text.get<std::string>() : text.value("*", std::string());
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        out << html;
        return html;
    }

    std::filesystem::path page_cache_path(long long page_id) const {
        return config_.cache_dir / config_.language / (std::to_string(page_id) + ".html");
    }

private:
    struct Page {
        std::vector<PageRef> members;
        std::string next;  // continuation token, empty when done
    };

    static void append_member(std::vector<PageRef>& out, const nlohmann::json& m) {
        if (m.contains("ns") && m["ns"].is_number() && m["ns"].get<long long>() != 0)
            return;  // only main-namespace pages are term candidates
        PageRef ref;
        ref.title = m.value("title", std::string());
        ref.page_id = m.value("pageid", 0LL);
        if (!ref.title.empty() && ref.page_id != 0) out.push_back(std::move(ref));
    }

    template <typename FetchPage>
    std::vector<PageRef> fetch_members_cached(const std::string& kind, const std::string& title,
                                              FetchPage&& fetch_page) {
        auto cache = member_cache_path(kind, title);
        if (std::filesystem::exists(cache)) {
            nlohmann::json doc = nlohmann::json::parse(read_text_file(cache));
            std::vector<PageRef> members;
            for (const auto& m : doc)
                members.push_back({m.at("title").get<std::string>(), m.at("pageid").get<long long>()});
            return members;
        }
        if (config_.offline)
            throw NetworkError("offline mode: members of \"" + title + "\" not in cache");
        std::vector<PageRef> members;
        std::set<long long> seen;
        std::string cont;
        for (;;) {
            Page page = fetch_page(cont);
            for (auto& m : page.members)
                if (seen.insert(m.page_id).second) members.push_back(std::move(m));
            if (page.next.empty()) break;
            cont = page.next;
        }
        nlohmann::json doc = nlohmann::json::array();
        for (const auto& m : members)
            doc.push_back({{"title", m.title}, {"pageid", m.page_id}});
        std::filesystem::create_directories(cache.parent_path());
        std::ofstream out(cache, std::ios::binary);
        out << doc.dump();
        return members;
    }

    std::filesystem::path member_cache_path(const std::string& kind, const std::string& title) const {
        std::string safe;
        for (unsigned char c : title)
            safe += (std::isalnum(c) != 0) ? static_cast<char>(c) : '_';
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016llx",
                      static_cast<unsigned long long>(fnv1a(kind + ":" + title)));
        return config_.cache_dir / config_.language / "members" /
               (kind + "_" + safe.substr(0, 40) + "_" + hash + ".json");
    }

    nlohmann::json call(const httplib::Params& params) {
        if (config_.delay_ms > 0 && network_calls_ > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(config_.delay_ms));
        auto url = detail::split_url(config_.api_base);
        std::string last_error = "unknown";
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(100 * attempt));
            httplib::Client client(url.base);
            client.set_connection_timeout(config_.timeout_s, 0);
            client.set_read_timeout(config_.timeout_s, 0);
            ++network_calls_;
            auto result = client.Get(url.path, params, httplib::Headers{});
            if (!result) {
                last_error = httplib::to_string(result.error());
                continue;
            }
            if (result->status != 200) {
                if (result->status >= 500) {
                    last_error = "status " + std::to_string(result->status);
                    continue;
                }
                throw ApiError(std::to_string(result->status), result->body.substr(0, 200));
            }
            nlohmann::json doc = nlohmann::json::parse(result->body, nullptr, false);
            if (doc.is_discarded()) throw ApiError("parse", "response is not JSON");
            if (doc.contains("error"))
                throw ApiError(doc["error"].value("code", "?"), doc["error"].value("info", "?"));
            return doc;
        }
        throw NetworkError(last_error + " calling " + config_.api_base);
    }

    WikiClientConfig config_;
    std::size_t network_calls_ = 0;
};

}  // namespace detox
