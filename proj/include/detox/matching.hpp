#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "detox/errors.hpp"
#include "detox/lemmatizer.hpp"
#include "detox/unicode.hpp"
#include "detox/vocabulary.hpp"

namespace detox {

/// Unit-cost edit distance over Unicode scalar values.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
    auto ca = uni::decode(a);
    auto cb = uni::decode(b);
    if (ca.size() < cb.size()) std::swap(ca, cb);
    std::vector<std::size_t> row(cb.size() + 1);
    std::iota(row.begin(), row.end(), std::size_t{0});
    for (std::size_t i = 1; i <= ca.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= cb.size(); ++j) {
            std::size_t next = std::min({row[j] + 1, row[j - 1] + 1,
                                         diag + (ca[i - 1] == cb[j - 1] ? 0 : 1)});
            diag = row[j];
            row[j] = next;
        }
    }
    return row.back();
}

/// One located vocabulary term. Offsets are codepoint offsets into the
/// input text; `entry_id` indexes the vocabulary's entry list.
struct TermMatch {
    std::size_t entry_id = 0;
    std::size_t start = 0;
    std::size_t end = 0;
    std::string surface;
    std::vector<std::string> lemma_key;
    std::size_t distance = 0;
};

namespace detail {

struct SpanCandidate {
    std::size_t start = 0;  // codepoint offsets
    std::size_t end = 0;
    std::vector<std::string> keys;
    std::vector<std::size_t> entry_ids;
};

/// Longest character span wins; ties go to the earliest start. Survivors
/// must not overlap anything already retained.
inline std::vector<SpanCandidate> retain_longest(std::vector<SpanCandidate> candidates) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const SpanCandidate& a, const SpanCandidate& b) {
                         auto la = a.end - a.start, lb = b.end - b.start;
                         if (la != lb) return la > lb;
                         return a.start < b.start;
                     });
    std::vector<SpanCandidate> kept;
    for (auto& c : candidates) {
        bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const SpanCandidate& k) {
            return c.start < k.end && k.start < c.end;
        });
        if (!overlaps) kept.push_back(std::move(c));
    }
    std::sort(kept.begin(), kept.end(),
              [](const SpanCandidate& a, const SpanCandidate& b) { return a.start < b.start; });
    return kept;
}

/// Minimum edit distance between the folded surface and each entry's
/// folded term; ties go to vocabulary file order (lowest id).
inline std::pair<std::size_t, std::size_t> pick_entry(const Vocabulary& vocab,
                                                      const std::string& surface,
                                                      const std::vector<std::size_t>& entry_ids) {
    std::string folded_surface = uni::fold(surface);
    std::size_t best_id = entry_ids.front();
    std::size_t best_distance = std::size_t(-1);
    for (std::size_t id : entry_ids) {
        std::size_t d = levenshtein(folded_surface, uni::fold(vocab.entry(id).term));
        if (d < best_distance) {
            best_distance = d;
            best_id = id;
        }
    }
    return {best_id, best_distance};
}

}  // namespace detail

/// Finds vocabulary terms in `text` by lemma-sequence lookup over
/// contiguous token windows. Overlapping candidates are resolved to the
/// longest character span (earliest start on ties); entries sharing a
/// lemma sequence are resolved to the smallest edit distance from the
/// matched surface (file order on ties). Returned matches are
/// non-overlapping and ordered by start offset.
inline std::vector<TermMatch> find_matches(std::string_view text, const Vocabulary& vocab,
                                           const Lemmatizer& lemmatizer) {
    if (!lemmatizer.language().empty() && lemmatizer.language() != vocab.language())
        throw Error("lemmatizer language \"" + lemmatizer.language() +
                    "\" does not match vocabulary language \"" + vocab.language() + "\"");
    if (!vocab.indexed()) throw Error("vocabulary index has not been built");

    auto tokens = lemmatizer.analyze(text);
    if (tokens.empty()) return {};
    std::vector<std::string> keys;
    keys.reserve(tokens.size());
    for (const auto& t : tokens) keys.push_back(lemma_key(t.lemma));

    std::vector<detail::SpanCandidate> candidates;
    std::size_t max_len = std::min(vocab.index().max_sequence_length(), tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (vocab.index().by_first_key(keys[i]) == nullptr) continue;
        std::vector<std::string> window;
        for (std::size_t len = 1; len <= max_len && i + len <= tokens.size(); ++len) {
            window.push_back(keys[i + len - 1]);
            const auto* ids = vocab.index().find(window);
            if (!ids) continue;
            detail::SpanCandidate c;
            c.start = tokens[i].start;
            c.end = tokens[i + len - 1].end;
            c.keys = window;
            c.entry_ids = *ids;
            candidates.push_back(std::move(c));
        }
    }
    if (candidates.empty()) return {};

    auto cps = uni::decode(text);
    std::vector<TermMatch> matches;
    for (auto& c : detail::retain_longest(std::move(candidates))) {
        TermMatch m;
        m.start = c.start;
        m.end = c.end;
        m.surface = uni::encode({cps.begin() + static_cast<std::ptrdiff_t>(c.start),
                                 cps.begin() + static_cast<std::ptrdiff_t>(c.end)});
        m.lemma_key = std::move(c.keys);
        auto [id, distance] = detail::pick_entry(vocab, m.surface, c.entry_ids);
        m.entry_id = id;
        m.distance = distance;
        matches.push_back(std::move(m));
    }
    return matches;
}

}  // namespace detox
