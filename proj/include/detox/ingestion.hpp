#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "detox/chat.hpp"
#include "detox/csv.hpp"
#include "detox/errors.hpp"
#include "detox/html_defs.hpp"
#include "detox/prompt.hpp"
#include "detox/vocabulary.hpp"
#include "detox/wiki_api.hpp"

namespace detox {

/// A term pulled from the wiki, with the definitions found on its page and
/// the source listings that surfaced it.
struct TermCandidate {
    std::string term;
    long long page_id = 0;
    std::vector<std::string> definitions;
    std::vector<std::string> sources;
};

/// The model's judgement on one candidate. A negative verdict carries no
/// categories and no entry text; a positive one carries both.
struct CandidateVerdict {
    std::string reasoning;
    bool hate_speech = false;
    std::vector<IdentityCharacteristic> categories;
    std::string vocabulary_entry;
};

inline void validate_verdict(const CandidateVerdict& v) {
    if (v.hate_speech) {
        if (v.categories.empty())
            throw InconsistentVerdictError("positive verdict without categories");
        if (trim(v.vocabulary_entry).empty())
            throw InconsistentVerdictError("positive verdict without a vocabulary entry");
    } else {
        if (!v.categories.empty())
            throw InconsistentVerdictError("negative verdict with categories");
        if (!trim(v.vocabulary_entry).empty())
            throw InconsistentVerdictError("negative verdict with a vocabulary entry");
    }
}

namespace detail {

/// Pulls the JSON object out of a model reply that may wrap it in markdown
/// fences or chatter.
inline nlohmann::json extract_json_object(const std::string& text) {
    auto begin = text.find('{');
    auto end = text.rfind('}');
    if (begin == std::string::npos || end == std::string::npos || end < begin)
        throw ResponseParseError("no JSON object in model reply");
    auto doc = nlohmann::json::parse(text.substr(begin, end - begin + 1), nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ResponseParseError("model reply is not a JSON object");
    return doc;
}

inline std::string numbered_descriptions(const std::vector<std::string>& definitions) {
    std::string out;
    for (std::size_t i = 0; i < definitions.size(); ++i) {
        if (i > 0) out += '\n';
        out += std::to_string(i + 1) + ". " + definitions[i];
    }
    return out;
}

}  // namespace detail

/// Asks the model whether one candidate belongs in the vocabulary.
/// Inconsistent replies (flag and payload disagree) are errors, never values.
inline CandidateVerdict assess_candidate(const TermCandidate& candidate, ChatProvider& provider,
                                         const PromptTemplate& tmpl, const std::string& model_id,
                                         double temperature = 0.0) {
    if (candidate.definitions.empty())
        throw ValidationError(0, "candidate \"" + candidate.term + "\" has no definitions");
    ChatRequest request;
    request.system_prompt = render_text(tmpl.system, {});
    request.user_prompt = render_text(
        tmpl.user, {{"term", candidate.term},
                    {"descriptions", detail::numbered_descriptions(candidate.definitions)}});
    request.model_id = model_id;
    request.temperature = temperature;
    std::string reply = provider.complete(request);
    nlohmann::json doc = detail::extract_json_object(reply);

    CandidateVerdict verdict;
    if (doc.contains("reasoning") && doc["reasoning"].is_string())
        verdict.reasoning = doc["reasoning"].get<std::string>();
    else if (doc.contains("Reasoning") && doc["Reasoning"].is_string())
        verdict.reasoning = doc["Reasoning"].get<std::string>();
    if (!doc.contains("hate_speech") || !doc["hate_speech"].is_boolean())
        throw ResponseParseError("hate_speech flag missing or not boolean");
    verdict.hate_speech = doc["hate_speech"].get<bool>();
    if (doc.contains("categories")) {
        if (!doc["categories"].is_array()) throw ResponseParseError("categories is not an array");
        for (const auto& c : doc["categories"]) {
            if (!c.is_string()) throw ResponseParseError("category is not a string");
            auto parsed = try_parse_characteristic(c.get<std::string>());
            if (!parsed) throw ResponseParseError("unknown category \"" + c.get<std::string>() + "\"");
            verdict.categories.push_back(*parsed);
        }
        sort_categories(verdict.categories);
    }
    if (doc.contains("vocabulary_entry")) {
        if (!doc["vocabulary_entry"].is_string())
            throw ResponseParseError("vocabulary_entry is not a string");
        verdict.vocabulary_entry = doc["vocabulary_entry"].get<std::string>();
    }
    validate_verdict(verdict);
    return verdict;
}

/// One line of the human-review file: the verdict for a candidate, or the
/// error that kept it out of the vocabulary.
struct ReviewRow {
    std::string term;
    bool hate_speech = false;
    std::string categories;  // ';'-joined display names
    std::string vocabulary_entry;
    std::string reasoning;
    std::string error;  // empty when the verdict stands
};

struct ReviewReport {
    std::vector<ReviewRow> rows;
};

inline const char* kReviewHeader = "term,hate_speech,categories,vocabulary_entry,reasoning,error";

inline void save_review_csv(const ReviewReport& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write review file: " + path.string());
    out << kReviewHeader << "\n";
    for (const auto& r : report.rows)
        out << csv::write_row({r.term, r.hate_speech ? "true" : "false", r.categories,
                               r.vocabulary_entry, r.reasoning, r.error})
            << "\n";
}

inline std::string wiki_page_url(const std::string& language, const std::string& title) {
    std::string path;
    for (char c : title) path += (c == ' ') ? '_' : c;
    return "https://" + language + ".wiktionary.org/wiki/" + path;
}

/// Runs every candidate through the model. Positive verdicts become
/// vocabulary entries; every candidate lands in the review report, carrying
/// either its verdict or the error that excluded it.
inline std::pair<Vocabulary, ReviewReport> build_vocabulary_from_candidates(
    const std::vector<TermCandidate>& candidates, ChatProvider& provider,
    const PromptTemplate& tmpl, const std::string& model_id, const std::string& language,
    const std::filesystem::path& review_path = {}, double temperature = 0.0) {
    std::vector<VocabularyEntry> entries;
    ReviewReport report;
    std::set<std::string> seen;
    for (const auto& candidate : candidates) {
        ReviewRow row;
        row.term = candidate.term;
        if (candidate.definitions.empty()) {
            row.error = "no definitions extracted";
            report.rows.push_back(std::move(row));
            continue;
        }
        if (!seen.insert(uni::fold(candidate.term)).second) {
            row.error = "duplicate term";
            report.rows.push_back(std::move(row));
            continue;
        }
        try {
            CandidateVerdict verdict =
                assess_candidate(candidate, provider, tmpl, model_id, temperature);
            row.hate_speech = verdict.hate_speech;
            row.categories = categories_field(verdict.categories);
            row.vocabulary_entry = verdict.vocabulary_entry;
            row.reasoning = verdict.reasoning;
            if (verdict.hate_speech) {
                VocabularyEntry entry;
                entry.term = candidate.term;
                entry.description = verdict.vocabulary_entry;
                entry.categories = verdict.categories;
                entry.source = wiki_page_url(language, candidate.term);
                entry.language = language;
                entries.push_back(std::move(entry));
            }
        } catch (const Error& ex) {
            row.error = ex.what();
        }
        report.rows.push_back(std::move(row));
    }
    if (!review_path.empty()) save_review_csv(report, review_path);
    return {Vocabulary(std::move(entries), language), std::move(report)};
}

/// Re-imports a human-corrected review file. Rows marked hate_speech=true
/// with no error become entries; everything else is dropped.
inline Vocabulary load_review_csv(const std::filesystem::path& path, const std::string& language) {
    if (!language_supported(language)) throw UnsupportedLanguageError(language);
    std::string text = read_text_file(path);
    auto rows = csv::parse(text);
    if (rows.empty()) throw FormatError(1, "review file is empty: " + path.string());
    std::vector<std::string> expected = {"term", "hate_speech", "categories",
                                         "vocabulary_entry", "reasoning", "error"};
    if (rows[0].fields != expected)
        throw FormatError(rows[0].line, "review header must be: " + std::string(kReviewHeader));
    std::vector<VocabularyEntry> entries;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.fields.size() == 1 && trim(row.fields[0]).empty()) continue;
        if (row.fields.size() != expected.size())
            throw FormatError(row.line, "expected 6 fields, got " +
                                            std::to_string(row.fields.size()));
        if (!trim(row.fields[5]).empty()) continue;  // errored rows never import
        std::string flag = uni::fold(trim(row.fields[1]));
        if (flag != "true" && flag != "false")
            throw FormatError(row.line, "hate_speech must be true or false");
        if (flag != "true") continue;
        VocabularyEntry entry;
        entry.term = trim(row.fields[0]);
        entry.categories = detail::parse_category_list(row.fields[2], row.line);
        entry.description = row.fields[3];
        entry.source = wiki_page_url(language, entry.term);
        entry.language = language;
        validate_entry(entry, row.line);
        entries.push_back(std::move(entry));
    }
    detail::check_duplicates(entries);
    return Vocabulary(std::move(entries), language);
}

/// Collects candidates from every source listing: members are unioned by
/// page_id (first sighting sets the order) and each page's definitions are
/// extracted from its cached HTML.
inline std::vector<TermCandidate> fetch_candidates(WikiClient& client,
                                                   const std::vector<CategorySource>& sources,
                                                   const std::set<std::string>& pos_headings) {
    std::vector<TermCandidate> candidates;
    std::map<long long, std::size_t> by_page;
    for (const auto& source : sources) {
        for (const auto& member : client.fetch_members(source)) {
            auto it = by_page.find(member.page_id);
            if (it == by_page.end()) {
                by_page.emplace(member.page_id, candidates.size());
                TermCandidate c;
                c.term = member.title;
                c.page_id = member.page_id;
                c.sources.push_back(source.title);
                candidates.push_back(std::move(c));
            } else {
                auto& have = candidates[it->second].sources;
                if (std::find(have.begin(), have.end(), source.title) == have.end())
                    have.push_back(source.title);
            }
        }
    }
    for (auto& candidate : candidates) {
        std::string html = client.fetch_page_html(candidate.page_id);
        candidate.definitions = parse_definitions(html, pos_headings);
    }
    return candidates;
}

}  // namespace detox
