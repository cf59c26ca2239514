#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "detox/csv.hpp"
#include "detox/errors.hpp"
#include "detox/lemmatizer.hpp"
#include "detox/unicode.hpp"

namespace detox {

/// Protected identity characteristics a term can target. `Other` is the
/// catch-all for terms whose target fits none of the named groups.
enum class IdentityCharacteristic {
    Gender,
    SexualOrientation,
    Race,
    Ethnicity,
    Religion,
    PoliticalAffiliation,
    SocioeconomicStatus,
    Occupation,
    Age,
    Disability,
    Addiction,
    PhysicalAppearance,
    PublicInstitutions,
    Other,
};

inline constexpr IdentityCharacteristic kAllCharacteristics[] = {
    IdentityCharacteristic::Gender,
    IdentityCharacteristic::SexualOrientation,
    IdentityCharacteristic::Race,
    IdentityCharacteristic::Ethnicity,
    IdentityCharacteristic::Religion,
    IdentityCharacteristic::PoliticalAffiliation,
    IdentityCharacteristic::SocioeconomicStatus,
    IdentityCharacteristic::Occupation,
    IdentityCharacteristic::Age,
    IdentityCharacteristic::Disability,
    IdentityCharacteristic::Addiction,
    IdentityCharacteristic::PhysicalAppearance,
    IdentityCharacteristic::PublicInstitutions,
    IdentityCharacteristic::Other,
};

/// Human-readable name, also the serialized form in CSV/JSON output.
inline std::string display_name(IdentityCharacteristic c) {
    switch (c) {
        case IdentityCharacteristic::Gender: return "Gender";
        case IdentityCharacteristic::SexualOrientation: return "Sexual Orientation";
        case IdentityCharacteristic::Race: return "Race";
        case IdentityCharacteristic::Ethnicity: return "Ethnicity";
        case IdentityCharacteristic::Religion: return "Religion";
        case IdentityCharacteristic::PoliticalAffiliation: return "Political Affiliation";
        case IdentityCharacteristic::SocioeconomicStatus: return "Socioeconomic Status";
        case IdentityCharacteristic::Occupation: return "Occupation";
        case IdentityCharacteristic::Age: return "Age";
        case IdentityCharacteristic::Disability: return "Disability";
        case IdentityCharacteristic::Addiction: return "Addiction";
        case IdentityCharacteristic::PhysicalAppearance: return "Physical Appearance";
        case IdentityCharacteristic::PublicInstitutions: return "Public Institutions";
        case IdentityCharacteristic::Other: return "Other";
    }
    return "Other";
}

namespace detail {
inline std::string characteristic_key(std::string_view s) {
    std::string out;
    for (char32_t cp : uni::decode(s)) {
        if (cp == U' ' || cp == U'_' || cp == U'-') continue;
        uni::append_utf8(out, uni::to_lower(cp));
    }
    return out;
}
}  // namespace detail

/// Parses a characteristic name. Accepts the display form, the compact
/// PascalCase form, and common shorthands, all case-insensitively.
inline std::optional<IdentityCharacteristic> try_parse_characteristic(std::string_view s) {
    std::string key = detail::characteristic_key(s);
    for (IdentityCharacteristic c : kAllCharacteristics) {
        if (key == detail::characteristic_key(display_name(c))) return c;
    }
    if (key == "socioeconomic") return IdentityCharacteristic::SocioeconomicStatus;
    return std::nullopt;
}

inline IdentityCharacteristic parse_characteristic(std::string_view s) {
    if (auto c = try_parse_characteristic(s)) return *c;
    throw ValidationError(0, "unknown identity characteristic: \"" + std::string(s) + "\"");
}

/// One vocabulary term. `categories` is kept sorted and unique; `source`
/// points at the page the term was taken from.
struct VocabularyEntry {
    std::string term;
    std::string description;
    std::vector<IdentityCharacteristic> categories;
    std::string source;
    std::string language;  // "en", "fr", "el"
};

inline bool is_absolute_url(std::string_view s) {
    auto pos = s.find("://");
    if (pos == std::string_view::npos || pos == 0) return false;
    for (char ch : s.substr(0, pos)) {
        bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                  (ch >= '0' && ch <= '9') || ch == '+' || ch == '-' || ch == '.';
        if (!ok) return false;
    }
    return pos + 3 < s.size();
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (static_cast<unsigned char>(s[b]) <= ' ')) ++b;
    while (e > b && (static_cast<unsigned char>(s[e - 1]) <= ' ')) --e;
    return std::string(s.substr(b, e - b));
}

/// Validates one entry; `row` is only used for error messages.
inline void validate_entry(const VocabularyEntry& entry, std::size_t row) {
    if (trim(entry.term).empty())
        throw ValidationError(row, "term must be non-empty");
    if (trim(entry.description).empty())
        throw ValidationError(row, "description must be non-empty");
    if (entry.categories.empty())
        throw ValidationError(row, "at least one category is required");
    if (!is_absolute_url(entry.source))
        throw ValidationError(row, "source must be an absolute URL: \"" + entry.source + "\"");
    if (!language_supported(entry.language))
        throw ValidationError(row, "unsupported language: \"" + entry.language + "\"");
}

inline void sort_categories(std::vector<IdentityCharacteristic>& cats) {
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
}

/// Index key for a lemma: lowercase, NFC, Greek final sigma medialized so
/// that inflection-position differences cannot split index buckets.
inline std::string lemma_key(std::string_view lemma) {
    return uni::final_sigma_to_medial(uni::fold(lemma));
}

/// Immutable lemma-sequence index over a fixed entry list. Entries are
/// addressed by their position in the source file; lookup is by the exact
/// sequence of lemma keys a term analyzes to.
class VocabularyIndex {
public:
    VocabularyIndex() = default;

    /// Entry ids whose lemma-key sequence is exactly `keys`.
    const std::vector<std::size_t>* find(const std::vector<std::string>& keys) const {
        auto it = by_sequence_.find(join(keys));
        return it == by_sequence_.end() ? nullptr : &it->second;
    }

    /// Entry ids whose sequence starts with `key` (for window scanning).
    const std::vector<std::size_t>* by_first_key(const std::string& key) const {
        auto it = by_first_.find(key);
        return it == by_first_.end() ? nullptr : &it->second;
    }

    std::size_t max_sequence_length() const { return max_len_; }
    const std::vector<std::string>& sequence_of(std::size_t entry_id) const {
        return sequences_.at(entry_id);
    }

    static std::string join(const std::vector<std::string>& keys) {
        std::string out;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (i) out.push_back('\x1f');  // US separator, cannot occur in a lemma
            out += keys[i];
        }
        return out;
    }

private:
    friend class Vocabulary;
    std::map<std::string, std::vector<std::size_t>> by_sequence_;
    std::map<std::string, std::vector<std::size_t>> by_first_;
    std::vector<std::vector<std::string>> sequences_;
    std::size_t max_len_ = 0;
};

/// A loaded vocabulary: entries in file order plus the lemma index built
/// with the lemmatizer handed to `build_index`. The entry list never
/// changes after load; matching threads may share a vocabulary freely.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<VocabularyEntry> entries, std::string language)
        : entries_(std::move(entries)), language_(std::move(language)) {}

    const std::vector<VocabularyEntry>& entries() const { return entries_; }
    const VocabularyEntry& entry(std::size_t id) const { return entries_.at(id); }
    std::size_t size() const { return entries_.size(); }
    const std::string& language() const { return language_; }
    const VocabularyIndex& index() const { return index_; }
    bool indexed() const { return indexed_; }

    /// Lemmatizes every term and fills the index. A term that produces no
    /// tokens cannot be matched and is a hard error.
    void build_index(const Lemmatizer& lemmatizer) {
        if (!lemmatizer.language().empty() && lemmatizer.language() != language_)
            throw Error("lemmatizer language \"" + lemmatizer.language() +
                        "\" does not match vocabulary language \"" + language_ + "\"");
        index_ = VocabularyIndex();
        index_.sequences_.resize(entries_.size());
        for (std::size_t id = 0; id < entries_.size(); ++id) {
            auto tokens = lemmatizer.analyze(entries_[id].term);
            if (tokens.empty()) throw LemmatizationError(entries_[id].term);
            std::vector<std::string> keys;
            keys.reserve(tokens.size());
            for (const auto& t : tokens) keys.push_back(lemma_key(t.lemma));
            index_.by_sequence_[VocabularyIndex::join(keys)].push_back(id);
            index_.by_first_[keys.front()].push_back(id);
            index_.max_len_ = std::max(index_.max_len_, keys.size());
            index_.sequences_[id] = std::move(keys);
        }
        indexed_ = true;
    }

private:
    std::vector<VocabularyEntry> entries_;
    std::string language_;
    VocabularyIndex index_;
    bool indexed_ = false;
};

namespace detail {

inline std::vector<IdentityCharacteristic> parse_category_list(std::string_view joined,
                                                               std::size_t row) {
    std::vector<IdentityCharacteristic> cats;
    std::size_t begin = 0;
    while (begin <= joined.size()) {
        std::size_t end = joined.find(';', begin);
        if (end == std::string_view::npos) end = joined.size();
        std::string piece = trim(joined.substr(begin, end - begin));
        if (!piece.empty()) {
            auto c = try_parse_characteristic(piece);
            if (!c) throw ValidationError(row, "unknown identity characteristic: \"" + piece + "\"");
            cats.push_back(*c);
        }
        if (end == joined.size()) break;
        begin = end + 1;
    }
    sort_categories(cats);
    return cats;
}

inline void check_duplicates(const std::vector<VocabularyEntry>& entries) {
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : entries) {
        auto key = std::make_pair(uni::fold(e.term), e.language);
        if (!seen.insert(key).second)
            throw ValidationError(0, "duplicate term \"" + e.term + "\" for language " + e.language);
    }
}

}  // namespace detail

/// Loads a vocabulary CSV (header `term,description,categories,source`,
/// categories ';'-separated). Any bad row rejects the whole file.
inline Vocabulary load_vocabulary_csv(const std::filesystem::path& path,
                                      const std::string& language) {
    if (!language_supported(language)) throw UnsupportedLanguageError(language);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError(path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto rows = csv::parse(buffer.str());
    if (rows.empty()) throw FormatError(0, "missing header row in " + path.string());
    const auto& header = rows.front().fields;
    const std::vector<std::string> expected = {"term", "description", "categories", "source"};
    if (header.size() != expected.size() ||
        !std::equal(header.begin(), header.end(), expected.begin(),
                    [](const std::string& a, const std::string& b) { return trim(a) == b; }))
        throw FormatError(rows.front().line, "header must be term,description,categories,source");
    std::vector<VocabularyEntry> entries;
    entries.reserve(rows.size() - 1);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.fields.size() == 1 && trim(row.fields[0]).empty()) continue;
        if (row.fields.size() != 4)
            throw FormatError(row.line, "expected 4 fields, got " + std::to_string(row.fields.size()));
        VocabularyEntry e;
        e.term = trim(row.fields[0]);
        e.description = trim(row.fields[1]);
        e.categories = detail::parse_category_list(row.fields[2], row.line);
        e.source = trim(row.fields[3]);
        e.language = language;
        validate_entry(e, row.line);
        entries.push_back(std::move(e));
    }
    detail::check_duplicates(entries);
    return Vocabulary(std::move(entries), language);
}

/// Loads a vocabulary from JSON Lines; each line carries its own
/// `language`, all of which must agree with the requested one.
inline Vocabulary load_vocabulary_jsonl(const std::filesystem::path& path,
                                        const std::string& language) {
    if (!language_supported(language)) throw UnsupportedLanguageError(language);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError(path.string());
    std::vector<VocabularyEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& ex) {
            throw FormatError(lineno, std::string("invalid JSON: ") + ex.what());
        }
        if (!doc.is_object()) throw FormatError(lineno, "expected a JSON object");
        VocabularyEntry e;
        try {
            e.term = trim(doc.at("term").get<std::string>());
            e.description = trim(doc.at("description").get<std::string>());
            for (const auto& c : doc.at("categories")) {
                auto parsed = try_parse_characteristic(c.get<std::string>());
                if (!parsed)
                    throw ValidationError(lineno, "unknown identity characteristic: \"" +
                                                      c.get<std::string>() + "\"");
                e.categories.push_back(*parsed);
            }
            e.source = trim(doc.at("source").get<std::string>());
            e.language = doc.value("language", language);
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(lineno, std::string("bad record: ") + ex.what());
        }
        sort_categories(e.categories);
        if (e.language != language)
            throw ValidationError(lineno, "record language \"" + e.language +
                                              "\" does not match requested \"" + language + "\"");
        validate_entry(e, lineno);
        entries.push_back(std::move(e));
    }
    detail::check_duplicates(entries);
    return Vocabulary(std::move(entries), language);
}

/// Dispatches on extension: .csv or .jsonl/.ndjson.
inline Vocabulary load_vocabulary(const std::filesystem::path& path, const std::string& language) {
    auto ext = path.extension().string();
    if (ext == ".jsonl" || ext == ".ndjson") return load_vocabulary_jsonl(path, language);
    return load_vocabulary_csv(path, language);
}

inline std::string categories_field(const std::vector<IdentityCharacteristic>& cats) {
    std::string out;
    for (std::size_t i = 0; i < cats.size(); ++i) {
        if (i) out.push_back(';');
        out += display_name(cats[i]);
    }
    return out;
}

inline void save_vocabulary_csv(const Vocabulary& vocab, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << csv::write_row({"term", "description", "categories", "source"});
    for (const auto& e : vocab.entries())
        out << csv::write_row({e.term, e.description, categories_field(e.categories), e.source});
}

inline void save_vocabulary_jsonl(const Vocabulary& vocab, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    for (const auto& e : vocab.entries()) {
        nlohmann::ordered_json doc;
        doc["term"] = e.term;
        doc["description"] = e.description;
        auto cats = nlohmann::json::array();
        for (auto c : e.categories) cats.push_back(display_name(c));
        doc["categories"] = std::move(cats);
        doc["source"] = e.source;
        doc["language"] = e.language;
        out << doc.dump() << '\n';
    }
}

}  // namespace detox
