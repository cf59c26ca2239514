#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "detox/errors.hpp"
#include "detox/prompt.hpp"  // read_text_file
#include "detox/unicode.hpp"
#include "detox/vocabulary.hpp"  // trim

namespace detox {

/// One rater's answer, coded on the interval scale used for agreement.
enum class RaterLabel { Yes, Unsure, No };

inline double interval_value(RaterLabel label) {
    switch (label) {
        case RaterLabel::Yes: return 1.0;
        case RaterLabel::Unsure: return 0.5;
        case RaterLabel::No: return 0.0;
    }
    return 0.0;
}

inline const char* rater_label_name(RaterLabel label) {
    switch (label) {
        case RaterLabel::Yes: return "Yes";
        case RaterLabel::Unsure: return "Unsure";
        case RaterLabel::No: return "No";
    }
    return "No";
}

inline std::optional<RaterLabel> parse_rater_label(std::string_view name) {
    std::string key = uni::fold(name);
    if (key == "yes") return RaterLabel::Yes;
    if (key == "unsure") return RaterLabel::Unsure;
    if (key == "no") return RaterLabel::No;
    return std::nullopt;
}

using RaterTriple = std::array<RaterLabel, 3>;

struct AnnotationRecord {
    std::string text_id;
    std::string text;
    std::string language;
    RaterTriple labels{};
    std::optional<bool> original_label;
};

enum class Variant { Safe, Majority, Permissive, Strict };

inline constexpr std::array<Variant, 4> kAllVariants = {Variant::Safe, Variant::Majority,
                                                        Variant::Permissive, Variant::Strict};

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Safe: return "Safe";
        case Variant::Majority: return "Majority";
        case Variant::Permissive: return "Permissive";
        case Variant::Strict: return "Strict";
    }
    return "Safe";
}

inline std::optional<Variant> parse_variant(std::string_view name) {
    std::string key = uni::fold(name);
    if (key == "safe") return Variant::Safe;
    if (key == "majority") return Variant::Majority;
    if (key == "permissive") return Variant::Permissive;
    if (key == "strict") return Variant::Strict;
    return std::nullopt;
}

namespace detail {

/// Doubled interval sum: Yes counts 2, Unsure 1, No 0. Keeps the mean
/// comparison in integers, so the 0.5 boundary is exact.
inline int doubled_sum(const RaterTriple& labels) {
    int sum = 0;
    for (auto l : labels) sum += l == RaterLabel::Yes ? 2 : (l == RaterLabel::Unsure ? 1 : 0);
    return sum;
}

inline bool unanimous(const RaterTriple& labels) {
    return labels[0] == labels[1] && labels[1] == labels[2];
}

inline bool any_is(const RaterTriple& labels, RaterLabel which) {
    for (auto l : labels)
        if (l == which) return true;
    return false;
}

}  // namespace detail

/// Borderline: somebody was unsure, or the raters disagree.
inline bool is_borderline(const RaterTriple& labels) {
    return detail::any_is(labels, RaterLabel::Unsure) || !detail::unanimous(labels);
}

/// Mean of the interval values decides; a mean of exactly 0.5 is discarded.
inline std::optional<bool> resolve_majority(const RaterTriple& labels) {
    int sum = detail::doubled_sum(labels);  // mean == sum / 6
    if (sum > 3) return true;
    if (sum < 3) return false;
    return std::nullopt;
}

/// Keeps only unanimous Yes / unanimous No items.
inline std::optional<bool> resolve_safe(const RaterTriple& labels) {
    if (is_borderline(labels)) return std::nullopt;
    return labels[0] == RaterLabel::Yes;
}

/// Borderline items count positive when anyone said Yes; unanimous items
/// keep their label.
inline bool resolve_permissive(const RaterTriple& labels) {
    if (!is_borderline(labels)) return labels[0] == RaterLabel::Yes;
    return detail::any_is(labels, RaterLabel::Yes);
}

/// Borderline items count positive when nobody said No; unanimous items
/// keep their label.
inline bool resolve_strict(const RaterTriple& labels) {
    if (!is_borderline(labels)) return labels[0] == RaterLabel::Yes;
    return !detail::any_is(labels, RaterLabel::No);
}

/// The published wording of the Permissive/Strict rules clashes with the
/// positive rates reported next to them; `swapped` trades the two rules
/// while keeping the variant names, so either reading can be evaluated.
enum class VariantRuleMode { literal, swapped };

inline std::optional<bool> resolve(Variant variant, const RaterTriple& labels,
                                   VariantRuleMode mode = VariantRuleMode::literal) {
    switch (variant) {
        case Variant::Safe: return resolve_safe(labels);
        case Variant::Majority: return resolve_majority(labels);
        case Variant::Permissive:
            return mode == VariantRuleMode::literal ? resolve_permissive(labels)
                                                    : resolve_strict(labels);
        case Variant::Strict:
            return mode == VariantRuleMode::literal ? resolve_strict(labels)
                                                    : resolve_permissive(labels);
    }
    return std::nullopt;
}

struct ResolvedDataset {
    Variant variant = Variant::Majority;
    std::vector<std::pair<std::string, bool>> items;  // (text_id, label)
    std::vector<std::string> discarded;
};

inline ResolvedDataset resolve_dataset(const std::vector<AnnotationRecord>& records,
                                       Variant variant,
                                       VariantRuleMode mode = VariantRuleMode::literal) {
    ResolvedDataset out;
    out.variant = variant;
    for (const auto& record : records) {
        auto label = resolve(variant, record.labels, mode);
        if (label)
            out.items.emplace_back(record.text_id, *label);
        else
            out.discarded.push_back(record.text_id);
    }
    return out;
}

struct MetricsReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long long tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Precision/recall/F1 with the 0-when-undefined convention.
inline MetricsReport compute_metrics(const std::map<std::string, bool>& predictions,
                                     const ResolvedDataset& truth) {
    MetricsReport m;
    for (const auto& [id, actual] : truth.items) {
        auto it = predictions.find(id);
        if (it == predictions.end()) throw IdMismatchError(id);
        bool predicted = it->second;
        if (predicted && actual) ++m.tp;
        else if (predicted && !actual) ++m.fp;
        else if (!predicted && actual) ++m.fn;
        else ++m.tn;
    }
    m.precision = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
    m.recall = (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

/// Krippendorff's alpha, interval metric, over per-unit rating lists.
/// Computed from pair sums; test oracles rebuild the coincidence matrix.
inline double krippendorff_alpha_values(const std::vector<std::vector<double>>& units) {
    if (units.size() < 2) throw InsufficientDataError("need at least 2 units");
    for (const auto& unit : units)
        if (unit.size() < 2)
            throw InsufficientDataError("every unit needs at least 2 ratings");
    double n_total = 0.0;
    double observed_sum = 0.0;  // sum over units of ordered-pair distances / (n_u - 1)
    std::map<double, double> margin;
    for (const auto& unit : units) {
        double n_u = static_cast<double>(unit.size());
        n_total += n_u;
        double pair_sum = 0.0;
        for (std::size_t i = 0; i < unit.size(); ++i) {
            margin[unit[i]] += 1.0;
            for (std::size_t j = i + 1; j < unit.size(); ++j) {
                double d = unit[i] - unit[j];
                pair_sum += d * d;
            }
        }
        observed_sum += 2.0 * pair_sum / (n_u - 1.0);
    }
    double d_observed = observed_sum / n_total;
    if (d_observed == 0.0) return 1.0;  // perfect agreement, no estimate needed
    double expected_sum = 0.0;
    for (const auto& [va, na] : margin)
        for (const auto& [vb, nb] : margin) {
            double d = va - vb;
            expected_sum += na * nb * d * d;
        }
    double d_expected = expected_sum / (n_total * (n_total - 1.0));
    if (d_expected == 0.0) return 1.0;
    return 1.0 - d_observed / d_expected;
}

inline double krippendorff_alpha(const std::vector<AnnotationRecord>& records) {
    std::vector<std::vector<double>> units;
    units.reserve(records.size());
    for (const auto& record : records) {
        std::vector<double> unit;
        for (auto label : record.labels) unit.push_back(interval_value(label));
        units.push_back(std::move(unit));
    }
    return krippendorff_alpha_values(units);
}

/// Fraction of resolved items whose label matches the dataset's original one.
inline double agreement_rate(const ResolvedDataset& resolved,
                             const std::map<std::string, bool>& original_labels) {
    if (resolved.items.empty()) throw EmptyDatasetError();
    long long agree = 0;
    for (const auto& [id, label] : resolved.items) {
        auto it = original_labels.find(id);
        if (it == original_labels.end()) throw MissingOriginalLabelError(id);
        if (it->second == label) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(resolved.items.size());
}

inline double positive_rate(const ResolvedDataset& resolved) {
    if (resolved.items.empty()) throw EmptyDatasetError();
    long long positive = 0;
    for (const auto& [id, label] : resolved.items)
        if (label) ++positive;
    return static_cast<double>(positive) / static_cast<double>(resolved.items.size());
}

// --- dataset files ---

/// JSON-lines annotations: {"id", "text", "language", "labels": [3 strings],
/// "original_label"?}.
inline std::vector<AnnotationRecord> load_annotations_jsonl(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    std::vector<AnnotationRecord> records;
    std::size_t lineno = 0;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        auto end = text.find('\n', begin);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(begin, end - begin);
        begin = end + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw FormatError(lineno, "annotation line is not a JSON object");
        AnnotationRecord record;
        if (!doc.contains("id") || !doc["id"].is_string())
            throw FormatError(lineno, "missing string field \"id\"");
        record.text_id = doc["id"].get<std::string>();
        record.text = doc.value("text", std::string());
        record.language = doc.value("language", std::string());
        if (!doc.contains("labels") || !doc["labels"].is_array() || doc["labels"].size() != 3)
            throw FormatError(lineno, "\"labels\" must be an array of exactly 3 entries");
        for (std::size_t i = 0; i < 3; ++i) {
            const auto& l = doc["labels"][i];
            if (!l.is_string()) throw FormatError(lineno, "label is not a string");
            auto parsed = parse_rater_label(l.get<std::string>());
            if (!parsed)
                throw FormatError(lineno, "unknown label \"" + l.get<std::string>() + "\"");
            record.labels[i] = *parsed;
        }
        if (doc.contains("original_label") && !doc["original_label"].is_null()) {
            if (!doc["original_label"].is_boolean())
                throw FormatError(lineno, "\"original_label\" must be boolean");
            record.original_label = doc["original_label"].get<bool>();
        }
        records.push_back(std::move(record));
    }
    return records;
}

inline void save_annotations_jsonl(const std::vector<AnnotationRecord>& records,
                                   const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write annotations file: " + path.string());
    for (const auto& record : records) {
        nlohmann::ordered_json doc;
        doc["id"] = record.text_id;
        doc["text"] = record.text;
        doc["language"] = record.language;
        auto labels = nlohmann::ordered_json::array();
        for (auto l : record.labels) labels.push_back(rater_label_name(l));
        doc["labels"] = std::move(labels);
        if (record.original_label) doc["original_label"] = *record.original_label;
        out << doc.dump() << "\n";
    }
}

/// Reads detection result records, keeping id -> label for usable items.
/// Records carrying errors have no certified label and are skipped;
/// "warning:"-prefixed entries do not disqualify a record.
inline std::map<std::string, bool> load_predictions_jsonl(const std::filesystem::path& path) {
    std::string text = read_text_file(path);
    std::map<std::string, bool> predictions;
    std::size_t lineno = 0;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        auto end = text.find('\n', begin);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(begin, end - begin);
        begin = end + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw FormatError(lineno, "prediction line is not a JSON object");
        if (!doc.contains("id") || !doc.contains("label") || !doc["label"].is_boolean())
            throw FormatError(lineno, "prediction needs \"id\" and boolean \"label\"");
        bool errored = false;
        if (doc.contains("errors") && doc["errors"].is_array())
            for (const auto& e : doc["errors"])
                if (e.is_string() && e.get<std::string>().rfind("warning:", 0) != 0) errored = true;
        if (errored) continue;
        predictions[doc["id"].get<std::string>()] = doc["label"].get<bool>();
    }
    return predictions;
}

// --- reporting ---

struct VariantRow {
    Variant variant = Variant::Majority;
    std::size_t kept = 0;
    std::size_t discarded = 0;
    bool empty = false;  // nothing survived the discard rule
    MetricsReport metrics;
    double positive_rate = 0.0;
    std::optional<double> agreement;  // vs original labels, when present
};

struct EvaluationReport {
    VariantRuleMode rule_mode = VariantRuleMode::literal;
    std::optional<double> alpha;
    std::vector<VariantRow> rows;
};

/// Resolves all four variants, scores the predictions against each, and
/// computes inter-rater agreement over the raw annotations.
inline EvaluationReport evaluate_all(const std::vector<AnnotationRecord>& records,
                                     const std::map<std::string, bool>& predictions,
                                     VariantRuleMode mode = VariantRuleMode::literal) {
    if (records.empty()) throw EmptyDatasetError();
    EvaluationReport report;
    report.rule_mode = mode;
    if (records.size() >= 2) report.alpha = krippendorff_alpha(records);
    std::map<std::string, bool> originals;
    bool all_originals = true;
    for (const auto& record : records) {
        if (record.original_label)
            originals[record.text_id] = *record.original_label;
        else
            all_originals = false;
    }
    for (auto variant : kAllVariants) {
        VariantRow row;
        row.variant = variant;
        auto resolved = resolve_dataset(records, variant, mode);
        row.kept = resolved.items.size();
        row.discarded = resolved.discarded.size();
        if (resolved.items.empty()) {
            row.empty = true;
        } else {
            row.metrics = compute_metrics(predictions, resolved);
            row.positive_rate = positive_rate(resolved);
            if (all_originals) row.agreement = agreement_rate(resolved, originals);
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

inline nlohmann::ordered_json report_to_json(const EvaluationReport& report) {
    nlohmann::ordered_json doc;
    doc["variant_rule"] = report.rule_mode == VariantRuleMode::literal ? "literal" : "swapped";
    if (report.alpha) doc["krippendorff_alpha"] = *report.alpha;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : report.rows) {
        nlohmann::ordered_json r;
        r["variant"] = variant_name(row.variant);
        r["kept"] = row.kept;
        r["discarded"] = row.discarded;
        if (row.empty) {
            r["empty"] = true;
        } else {
            r["precision"] = row.metrics.precision;
            r["recall"] = row.metrics.recall;
            r["f1"] = row.metrics.f1;
            r["tp"] = row.metrics.tp;
            r["fp"] = row.metrics.fp;
            r["fn"] = row.metrics.fn;
            r["tn"] = row.metrics.tn;
            r["positive_rate"] = row.positive_rate;
            if (row.agreement) r["agreement_rate"] = *row.agreement;
        }
        rows.push_back(std::move(r));
    }
    doc["variants"] = std::move(rows);
    return doc;
}

/// Plain-text table, one aligned row per variant.
inline std::string format_report_table(const EvaluationReport& report) {
    char buffer[160];
    std::string out;
    out += "variant     precision  recall  f1      pos-rate  kept  discarded\n";
    for (const auto& row : report.rows) {
        if (row.empty) {
            std::snprintf(buffer, sizeof buffer, "%-11s %-43s %4zu  %9zu\n",
                          variant_name(row.variant), "(empty after discard)", row.kept,
                          row.discarded);
        } else {
            std::snprintf(buffer, sizeof buffer,
                          "%-11s %9.2f  %6.2f  %6.2f  %8.2f  %4zu  %9zu\n",
                          variant_name(row.variant), row.metrics.precision, row.metrics.recall,
                          row.metrics.f1, row.positive_rate, row.kept, row.discarded);
        }
        out += buffer;
    }
    if (report.alpha) {
        std::snprintf(buffer, sizeof buffer, "krippendorff_alpha %.4f\n", *report.alpha);
        out += buffer;
    }
    out += std::string("variant_rule ") +
           (report.rule_mode == VariantRuleMode::literal ? "literal" : "swapped") + "\n";
    return out;
}

}  // namespace detox
