#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "detox/chat.hpp"
#include "detox/errors.hpp"
#include "detox/matching.hpp"
#include "detox/prompt.hpp"
#include "detox/vocabulary.hpp"

namespace detox {

/// Outcome of disambiguating one matched vocabulary entry against the text.
/// Every occurrence span of the entry hangs off the same verdict; the model
/// is consulted once per entry, not once per occurrence.
struct TermVerdict {
    std::size_t entry_id = 0;
    std::vector<TermMatch> matches;
    std::string step1;  // meaning of the term in this text
    std::string step2;  // applicability of the vocabulary description
    bool hateful = false;
    std::string explanation;  // shown to users when hateful
    std::string raw_response;
    std::string error;  // non-empty: verdict unusable, fields above unreliable
    bool errored() const { return !error.empty(); }
};

/// Outcome of the whole-text pipeline that needs no vocabulary.
struct FreeVerdict {
    bool hateful = false;
    std::string explanation;
    std::string raw_response;
    std::string error;
    bool errored() const { return !error.empty(); }
};

enum class Provenance { none, term_based, term_free, both_fused };

inline const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::none: return "none";
        case Provenance::term_based: return "term_based";
        case Provenance::term_free: return "term_free";
        case Provenance::both_fused: return "both_fused";
    }
    return "none";
}

inline std::optional<Provenance> parse_provenance(std::string_view name) {
    if (name == "none") return Provenance::none;
    if (name == "term_based") return Provenance::term_based;
    if (name == "term_free") return Provenance::term_free;
    if (name == "both_fused") return Provenance::both_fused;
    return std::nullopt;
}

struct DetectionResult {
    std::string text_id;
    bool label = false;
    std::string explanation;  // empty exactly when label is false
    std::vector<TermVerdict> term_verdicts;
    std::optional<FreeVerdict> free_verdict;
    Provenance provenance = Provenance::none;
    std::vector<std::string> warnings;  // flag stands, but something degraded
    std::vector<std::string> errors;    // non-empty: no trustworthy label
    bool errored() const { return !errors.empty(); }
};

/// The prompt material one detection run needs, loaded once.
struct PromptSet {
    PromptTemplate term_based;
    PromptTemplate term_free;
    PromptTemplate fusion;
    std::string retry_note;  // appended to the user prompt on a format retry
};

inline PromptSet load_prompt_set(const std::string& language,
                                 const std::filesystem::path& data_dir = default_data_dir(),
                                 bool augmented_term_free = false) {
    PromptSet set;
    set.term_based = load_prompt_template("term_based", language, data_dir);
    set.term_free = load_prompt_template("term_free", language, data_dir);
    if (augmented_term_free) {
        // the augmented variant only swaps the system prompt; the user
        // template and its output format are shared
        set.term_free.name = "term_free_augmented";
        set.term_free.system = load_prompt_part("term_free_augmented", "system", language, data_dir);
    }
    set.fusion = load_prompt_template("fusion", language, data_dir);
    set.retry_note = load_prompt_part("retry", "user", language, data_dir);
    return set;
}

namespace detail {

/// Calls the model, parses with `parse`, and on a format error retries once
/// with a corrective note appended to the user prompt. Transport errors
/// propagate untouched.
template <typename Parse>
auto complete_with_format_retry(ChatProvider& provider, ChatRequest request,
                                const std::string& retry_note, std::string& raw_out,
                                Parse&& parse) {
    try {
        raw_out = provider.complete(request);
        return parse(raw_out);
    } catch (const MissingTagError&) {
    } catch (const UnclosedTagError&) {
    } catch (const AmbiguousDecisionError&) {
    } catch (const ResponseParseError&) {
    }
    if (!retry_note.empty()) request.user_prompt += "\n\n" + retry_note;
    raw_out = provider.complete(request);
    return parse(raw_out);
}

}  // namespace detail

/// Disambiguates each distinct matched entry with one model call. A verdict
/// that cannot be parsed is marked errored and the batch continues.
inline std::vector<TermVerdict> run_term_based(const std::string& text,
                                               const std::vector<TermMatch>& matches,
                                               const Vocabulary& vocab, ChatProvider& provider,
                                               const PromptSet& prompts,
                                               const std::string& model_id,
                                               double temperature = 0.0) {
    std::vector<TermVerdict> verdicts;
    std::map<std::size_t, std::size_t> by_entry;  // entry_id -> verdict index
    for (const auto& match : matches) {
        auto it = by_entry.find(match.entry_id);
        if (it == by_entry.end()) {
            by_entry.emplace(match.entry_id, verdicts.size());
            TermVerdict v;
            v.entry_id = match.entry_id;
            v.matches.push_back(match);
            verdicts.push_back(std::move(v));
        } else {
            verdicts[it->second].matches.push_back(match);
        }
    }
    for (auto& verdict : verdicts) {
        const auto& entry = vocab.entry(verdict.entry_id);
        std::string characteristics;
        for (std::size_t i = 0; i < entry.categories.size(); ++i) {
            if (i > 0) characteristics += "; ";
            characteristics += display_name(entry.categories[i]);
        }
        ChatRequest request;
        request.system_prompt = render_text(prompts.term_based.system, {});
        request.user_prompt = render_text(prompts.term_based.user,
                                          {{"term", entry.term},
                                           {"description", entry.description},
                                           {"text", text},
                                           {"characteristics", characteristics}});
        request.model_id = model_id;
        request.temperature = temperature;
        try {
            detail::complete_with_format_retry(
                provider, request, prompts.retry_note, verdict.raw_response,
                [&](const std::string& raw) {
                    auto steps = parse_tagged(raw, {"STEP_1", "STEP_2", "STEP_3", "STEP_4"});
                    verdict.step1 = steps["STEP_1"];
                    verdict.step2 = steps["STEP_2"];
                    verdict.hateful = parse_decision(steps["STEP_3"], "Hateful", "Non hateful");
                    verdict.explanation = steps["STEP_4"];
                    if (verdict.hateful && trim(verdict.explanation).empty())
                        throw ResponseParseError("hateful verdict with empty explanation");
                    return 0;
                });
        } catch (const Error& ex) {
            verdict.error = ex.what();
        }
    }
    return verdicts;
}

/// Whole-text detection without vocabulary grounding: one call, one verdict.
inline FreeVerdict run_term_free(const std::string& text, ChatProvider& provider,
                                 const PromptSet& prompts, const std::string& model_id,
                                 double temperature = 0.0) {
    FreeVerdict verdict;
    ChatRequest request;
    request.system_prompt = render_text(prompts.term_free.system, {});
    request.user_prompt = render_text(prompts.term_free.user, {{"text", text}});
    request.model_id = model_id;
    request.temperature = temperature;
    try {
        detail::complete_with_format_retry(
            provider, request, prompts.retry_note, verdict.raw_response,
            [&](const std::string& raw) {
                auto tags = parse_tagged(raw, {"DECISION", "EXPLANATION"});
                verdict.explanation = tags["EXPLANATION"];
                verdict.hateful = parse_decision(tags["DECISION"], "Hate speech", "Not hate speech");
                if (trim(verdict.explanation).empty())
                    throw ResponseParseError("empty explanation");
                return 0;
            });
    } catch (const Error& ex) {
        verdict.error = ex.what();
    }
    return verdict;
}

/// Merges ≥2 explanations into one paragraph via the fusion prompt.
inline std::string fuse(const std::vector<std::string>& explanations, ChatProvider& provider,
                        const PromptSet& prompts, const std::string& model_id,
                        double temperature = 0.0) {
    if (explanations.size() < 2)
        throw Error("fuse requires at least two explanations");
    std::string analyses;
    for (std::size_t i = 0; i < explanations.size(); ++i) {
        if (i > 0) analyses += "\n\n";
        analyses += "Text " + std::to_string(i + 1) + ": " + explanations[i];
    }
    ChatRequest request;
    request.system_prompt = render_text(prompts.fusion.system, {});
    request.user_prompt = render_text(prompts.fusion.user, {{"analyses", analyses}});
    request.model_id = model_id;
    request.temperature = temperature;
    std::string merged = trim(provider.complete(request));
    if (merged.empty()) throw FusionError("model returned an empty merge");
    return merged;
}

struct DetectDeps {
    const Vocabulary* vocab = nullptr;        // indexed
    const Lemmatizer* lemmatizer = nullptr;
    ChatProvider* provider = nullptr;
    const PromptSet* prompts = nullptr;
    std::string model_id;          // used by any stage without an override
    std::string term_based_model;  // optional per-stage overrides
    std::string term_free_model;
    std::string fusion_model;
    double temperature = 0.0;
};

namespace detail {
inline const std::string& stage_model(const DetectDeps& deps, const std::string& preferred) {
    return preferred.empty() ? deps.model_id : preferred;
}
}  // namespace detail

/// Runs both pipelines and applies the agreement rule: text passes as clean
/// only when neither pipeline flags it.
inline DetectionResult detect(const std::string& text, const std::string& text_id,
                              const DetectDeps& deps) {
    DetectionResult result;
    result.text_id = text_id;
    std::vector<TermMatch> matches;
    try {
        matches = find_matches(text, *deps.vocab, *deps.lemmatizer);
    } catch (const Error& ex) {
        result.errors.push_back(std::string("matching failed: ") + ex.what());
        return result;
    }
    if (!matches.empty())
        result.term_verdicts =
            run_term_based(text, matches, *deps.vocab, *deps.provider, *deps.prompts,
                           detail::stage_model(deps, deps.term_based_model), deps.temperature);
    result.free_verdict = run_term_free(text, *deps.provider, *deps.prompts,
                                        detail::stage_model(deps, deps.term_free_model),
                                        deps.temperature);

    std::vector<std::string> hateful_explanations;
    bool term_errored = false;
    for (const auto& v : result.term_verdicts) {
        if (v.errored())
            term_errored = true;
        else if (v.hateful)
            hateful_explanations.push_back(v.explanation);
    }
    bool any_term_hateful = !hateful_explanations.empty();
    bool free_errored = result.free_verdict->errored();
    bool free_hateful = !free_errored && result.free_verdict->hateful;

    // a flagged side overrules an errored one; an errored side blocks a
    // clean verdict, because agreement cannot be certified
    if (!any_term_hateful && !free_hateful && (term_errored || free_errored)) {
        if (term_errored)
            for (const auto& v : result.term_verdicts)
                if (v.errored())
                    result.errors.push_back("term pipeline [" +
                                            deps.vocab->entry(v.entry_id).term + "]: " + v.error);
        if (free_errored) result.errors.push_back("term-free pipeline: " + result.free_verdict->error);
        return result;
    }
    if (term_errored)
        for (const auto& v : result.term_verdicts)
            if (v.errored())
                result.warnings.push_back("term pipeline [" + deps.vocab->entry(v.entry_id).term +
                                          "] errored: " + v.error);
    if (free_errored)
        result.warnings.push_back("term-free pipeline errored: " + result.free_verdict->error);

    std::vector<std::string> to_fuse = hateful_explanations;
    if (free_hateful) to_fuse.push_back(result.free_verdict->explanation);
    result.label = !to_fuse.empty();
    if (!result.label) return result;  // provenance stays none, explanation empty

    if (any_term_hateful && free_hateful)
        result.provenance = Provenance::both_fused;
    else if (any_term_hateful)
        result.provenance = Provenance::term_based;
    else
        result.provenance = Provenance::term_free;

    if (to_fuse.size() == 1) {
        result.explanation = to_fuse.front();
    } else {
        try {
            result.explanation = fuse(to_fuse, *deps.provider, *deps.prompts,
                                      detail::stage_model(deps, deps.fusion_model),
                                      deps.temperature);
        } catch (const Error& ex) {
            // the flag is still sound; fall back to the unmerged explanations
            std::string joined;
            for (std::size_t i = 0; i < to_fuse.size(); ++i) {
                if (i > 0) joined += "\n\n";
                joined += to_fuse[i];
            }
            result.explanation = joined;
            result.warnings.push_back(std::string("fusion failed, explanations left unmerged: ") +
                                      ex.what());
        }
    }
    return result;
}

/// Batch detection with a bounded worker pool. Results keep input order;
/// one item failing never touches its neighbours.
inline std::vector<DetectionResult> detect_batch(
    const std::vector<std::pair<std::string, std::string>>& items,  // (text_id, text)
    const DetectDeps& deps, int parallelism = 1) {
    if (parallelism < 1) throw Error("parallelism must be >= 1");
    std::vector<DetectionResult> results(items.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            try {
                results[i] = detect(items[i].second, items[i].first, deps);
            } catch (const std::exception& ex) {
                DetectionResult r;
                r.text_id = items[i].first;
                r.errors.push_back(ex.what());
                results[i] = std::move(r);
            }
        }
    };
    if (parallelism == 1 || items.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        int n = std::min<int>(parallelism, static_cast<int>(items.size()));
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return results;
}

/// One result as the JSON-lines record consumed by evaluation and served by
/// the HTTP endpoint.
inline nlohmann::ordered_json result_to_json(const DetectionResult& result,
                                             const Vocabulary& vocab) {
    nlohmann::ordered_json doc;
    doc["id"] = result.text_id;
    doc["label"] = result.label;
    doc["explanation"] = result.explanation;
    doc["provenance"] = provenance_name(result.provenance);
    auto matches = nlohmann::ordered_json::array();
    std::vector<std::pair<std::size_t, const TermVerdict*>> spans;
    for (const auto& v : result.term_verdicts)
        for (const auto& m : v.matches) spans.emplace_back(m.start, &v);
    std::sort(spans.begin(), spans.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [start, verdict] : spans) {
        const auto* match = &verdict->matches.front();
        for (const auto& m : verdict->matches)
            if (m.start == start) match = &m;
        const auto& entry = vocab.entry(verdict->entry_id);
        nlohmann::ordered_json m;
        m["term"] = entry.term;
        m["start"] = match->start;
        m["end"] = match->end;
        auto cats = nlohmann::ordered_json::array();
        for (auto c : entry.categories) cats.push_back(display_name(c));
        m["categories"] = cats;
        m["hateful"] = !verdict->errored() && verdict->hateful;
        matches.push_back(std::move(m));
    }
    doc["matches"] = std::move(matches);
    auto errors = nlohmann::ordered_json::array();
    for (const auto& e : result.errors) errors.push_back(e);
    for (const auto& w : result.warnings) errors.push_back("warning: " + w);
    doc["errors"] = std::move(errors);
    return doc;
}

inline void write_results_jsonl(const std::vector<DetectionResult>& results,
                                const Vocabulary& vocab, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write results file: " + path.string());
    for (const auto& r : results) out << result_to_json(r, vocab).dump() << "\n";
}

}  // namespace detox
