#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <random>

#include "detox/evaluation.hpp"

using namespace detox;

namespace {

namespace fs = std::filesystem;

constexpr RaterLabel Y = RaterLabel::Yes;
constexpr RaterLabel U = RaterLabel::Unsure;
constexpr RaterLabel N = RaterLabel::No;

// Independent alpha oracle: builds the coincidence matrix explicitly and
// evaluates the textbook definition term by term.
double alpha_oracle(const std::vector<std::vector<double>>& units) {
    std::vector<double> values;  // distinct rating values
    for (const auto& unit : units)
        for (double v : unit)
            if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
    std::sort(values.begin(), values.end());
    auto index = [&](double v) {
        return std::find(values.begin(), values.end(), v) - values.begin();
    };
    std::size_t k = values.size();
    std::vector<std::vector<double>> o(k, std::vector<double>(k, 0.0));
    double n = 0.0;
    for (const auto& unit : units) {
        double m = static_cast<double>(unit.size());
        n += m;
        for (std::size_t a = 0; a < unit.size(); ++a)
            for (std::size_t b = 0; b < unit.size(); ++b)
                if (a != b) o[index(unit[a])][index(unit[b])] += 1.0 / (m - 1.0);
    }
    std::vector<double> margin(k, 0.0);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t d = 0; d < k; ++d) margin[c] += o[c][d];
    double d_obs = 0.0, d_exp = 0.0;
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t d = 0; d < k; ++d) {
            double dist = (values[c] - values[d]) * (values[c] - values[d]);
            d_obs += o[c][d] * dist;
            d_exp += margin[c] * margin[d] * dist;
        }
    d_obs /= n;
    d_exp /= n * (n - 1.0);
    if (d_obs == 0.0) return 1.0;
    if (d_exp == 0.0) return 1.0;
    return 1.0 - d_obs / d_exp;
}

AnnotationRecord make_record(const std::string& id, RaterTriple labels,
                             std::optional<bool> original = std::nullopt) {
    AnnotationRecord r;
    r.text_id = id;
    r.text = "text " + id;
    r.language = "en";
    r.labels = labels;
    r.original_label = original;
    return r;
}

}  // namespace

TEST_CASE("resolver truth table: all ten multisets, all four variants") {
    struct Expected {
        RaterTriple labels;
        std::optional<bool> majority, safe;
        bool permissive, strict;
    };
    const std::vector<Expected> table = {
        {{Y, Y, Y}, true, true, true, true},
        {{Y, Y, U}, true, std::nullopt, true, true},
        {{Y, Y, N}, true, std::nullopt, true, false},
        {{Y, U, U}, true, std::nullopt, true, true},
        {{Y, U, N}, std::nullopt, std::nullopt, true, false},
        {{Y, N, N}, false, std::nullopt, true, false},
        {{U, U, U}, std::nullopt, std::nullopt, false, true},
        {{U, U, N}, false, std::nullopt, false, false},
        {{U, N, N}, false, std::nullopt, false, false},
        {{N, N, N}, false, false, false, false},
    };
    for (const auto& row : table) {
        INFO("labels " << rater_label_name(row.labels[0]) << " "
                       << rater_label_name(row.labels[1]) << " "
                       << rater_label_name(row.labels[2]));
        CHECK(resolve_majority(row.labels) == row.majority);
        CHECK(resolve_safe(row.labels) == row.safe);
        CHECK(resolve_permissive(row.labels) == row.permissive);
        CHECK(resolve_strict(row.labels) == row.strict);
    }
}

TEST_CASE("resolvers depend only on the label multiset") {
    const std::array<RaterLabel, 3> values = {Y, U, N};
    for (auto a : values)
        for (auto b : values)
            for (auto c : values) {
                RaterTriple ordered = {a, b, c};
                RaterTriple sorted = ordered;
                std::sort(sorted.begin(), sorted.end(),
                          [](RaterLabel x, RaterLabel y) {
                              return static_cast<int>(x) < static_cast<int>(y);
                          });
                CHECK(resolve_majority(ordered) == resolve_majority(sorted));
                CHECK(resolve_safe(ordered) == resolve_safe(sorted));
                CHECK(resolve_permissive(ordered) == resolve_permissive(sorted));
                CHECK(resolve_strict(ordered) == resolve_strict(sorted));
            }
}

TEST_CASE("permissive and strict monotonicity") {
    const std::array<RaterLabel, 3> values = {Y, U, N};
    for (auto a : values)
        for (auto b : values)
            for (auto c : values) {
                RaterTriple base = {a, b, c};
                for (int slot = 0; slot < 3; ++slot) {
                    RaterTriple up = base;
                    up[slot] = Y;
                    // adding a Yes never turns permissive off
                    if (resolve_permissive(base)) CHECK(resolve_permissive(up));
                    RaterTriple down = base;
                    down[slot] = N;
                    // adding a No never turns strict on
                    if (!resolve_strict(base)) CHECK_FALSE(resolve_strict(down));
                }
            }
}

TEST_CASE("swapped rule mode exchanges permissive and strict, names intact") {
    RaterTriple borderline = {Y, N, N};
    CHECK(resolve(Variant::Permissive, borderline, VariantRuleMode::literal) == true);
    CHECK(resolve(Variant::Strict, borderline, VariantRuleMode::literal) == false);
    CHECK(resolve(Variant::Permissive, borderline, VariantRuleMode::swapped) == false);
    CHECK(resolve(Variant::Strict, borderline, VariantRuleMode::swapped) == true);
    // safe and majority ignore the switch
    CHECK(resolve(Variant::Majority, borderline, VariantRuleMode::swapped) == false);
    CHECK(resolve(Variant::Safe, borderline, VariantRuleMode::swapped) == std::nullopt);
}

TEST_CASE("dataset resolution partitions items and discards") {
    std::vector<AnnotationRecord> records = {
        make_record("a", {Y, Y, Y}),
        make_record("b", {Y, U, N}),
        make_record("c", {N, N, N}),
        make_record("d", {Y, U, U}),
    };
    auto resolved = resolve_dataset(records, Variant::Majority);
    REQUIRE(resolved.items.size() == 3);
    REQUIRE(resolved.discarded.size() == 1);
    CHECK(resolved.discarded[0] == "b");
    CHECK(resolved.items[0] == std::make_pair(std::string("a"), true));
    CHECK(resolved.items[1] == std::make_pair(std::string("c"), false));
    CHECK(resolved.items[2] == std::make_pair(std::string("d"), true));

    auto safe = resolve_dataset(records, Variant::Safe);
    CHECK(safe.items.size() == 2);
    CHECK(safe.discarded.size() == 2);
    // partition covers the input exactly
    CHECK(safe.items.size() + safe.discarded.size() == records.size());
}

TEST_CASE("metrics arithmetic and conventions") {
    ResolvedDataset truth;
    truth.variant = Variant::Majority;
    truth.items = {{"1", true}, {"2", true}, {"3", false}, {"4", false}, {"5", true}};
    SECTION("mixed predictions") {
        std::map<std::string, bool> pred = {
            {"1", true}, {"2", false}, {"3", true}, {"4", false}, {"5", true}};
        auto m = compute_metrics(pred, truth);
        CHECK(m.tp == 2);
        CHECK(m.fp == 1);
        CHECK(m.fn == 1);
        CHECK(m.tn == 1);
        CHECK(m.tp + m.fp + m.fn + m.tn == static_cast<long long>(truth.items.size()));
        CHECK(m.precision == Catch::Approx(2.0 / 3.0));
        CHECK(m.recall == Catch::Approx(2.0 / 3.0));
        CHECK(m.f1 == Catch::Approx(2.0 / 3.0));
    }
    SECTION("perfect predictions") {
        std::map<std::string, bool> pred = {
            {"1", true}, {"2", true}, {"3", false}, {"4", false}, {"5", true}};
        auto m = compute_metrics(pred, truth);
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
    }
    SECTION("all-negative predictions use the zero conventions") {
        std::map<std::string, bool> pred = {
            {"1", false}, {"2", false}, {"3", false}, {"4", false}, {"5", false}};
        auto m = compute_metrics(pred, truth);
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
    }
    SECTION("missing prediction is an id mismatch") {
        std::map<std::string, bool> pred = {{"1", true}};
        CHECK_THROWS_AS(compute_metrics(pred, truth), IdMismatchError);
    }
}

TEST_CASE("published precision/recall pair rounds to the published f1") {
    MetricsReport m;
    m.precision = 0.92;
    m.recall = 0.89;
    double f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
    CHECK(f1 == Catch::Approx(0.9048).margin(0.0001));
    CHECK(std::round(f1 * 100) / 100 == Catch::Approx(0.90));
}

TEST_CASE("alpha: perfect agreement is exactly 1.0") {
    std::vector<AnnotationRecord> records = {
        make_record("a", {Y, Y, Y}),
        make_record("b", {N, N, N}),
        make_record("c", {U, U, U}),
    };
    CHECK(krippendorff_alpha(records) == 1.0);
}

TEST_CASE("alpha: frozen fixture value") {
    std::vector<AnnotationRecord> records = {
        make_record("a", {Y, Y, Y}),
        make_record("b", {N, N, N}),
        make_record("c", {Y, U, N}),
        make_record("d", {U, U, U}),
    };
    double alpha = krippendorff_alpha(records);
    CHECK(alpha == Catch::Approx(0.65625).epsilon(1e-12));
    // matches the explicit coincidence-matrix computation
    std::vector<std::vector<double>> units = {
        {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}, {1.0, 0.5, 0.0}, {0.5, 0.5, 0.5}};
    CHECK(alpha == Catch::Approx(alpha_oracle(units)).margin(1e-12));
}

TEST_CASE("alpha: within-unit agreement counts even when units differ") {
    std::vector<std::vector<double>> units = {{1.0, 1.0}, {0.0, 0.0}};
    CHECK(krippendorff_alpha_values(units) == 1.0);
    CHECK(alpha_oracle(units) == 1.0);
}

TEST_CASE("alpha: engine equals the coincidence-matrix oracle on random matrices") {
    std::mt19937 rng(20240819);
    std::uniform_int_distribution<int> unit_count(2, 8);
    std::uniform_int_distribution<int> rater_count(2, 5);
    std::uniform_int_distribution<int> label(0, 2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::vector<double>> units;
        int n_units = unit_count(rng);
        for (int u = 0; u < n_units; ++u) {
            std::vector<double> unit;
            int n_raters = rater_count(rng);
            for (int r = 0; r < n_raters; ++r) unit.push_back(label(rng) * 0.5);
            units.push_back(std::move(unit));
        }
        INFO("trial " << trial);
        CHECK(krippendorff_alpha_values(units) ==
              Catch::Approx(alpha_oracle(units)).margin(1e-9));
    }
}

TEST_CASE("alpha: invariant to unit order and rater order") {
    std::vector<std::vector<double>> units = {
        {1.0, 0.5, 0.0}, {0.0, 0.0, 0.5}, {1.0, 1.0, 0.5, 0.0}, {0.5, 0.5}};
    double base = krippendorff_alpha_values(units);
    std::mt19937 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto shuffled = units;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (auto& unit : shuffled) std::shuffle(unit.begin(), unit.end(), rng);
        CHECK(krippendorff_alpha_values(shuffled) == Catch::Approx(base).margin(1e-12));
    }
}

TEST_CASE("alpha: insufficient data is an error") {
    CHECK_THROWS_AS(krippendorff_alpha_values({{1.0, 0.0}}), InsufficientDataError);
    CHECK_THROWS_AS(krippendorff_alpha_values({{1.0, 0.0}, {0.5}}), InsufficientDataError);
}

TEST_CASE("agreement and positive rates") {
    ResolvedDataset resolved;
    resolved.items = {{"1", true}, {"2", false}, {"3", true}, {"4", true}};
    std::map<std::string, bool> originals = {
        {"1", true}, {"2", false}, {"3", false}, {"4", true}};
    CHECK(agreement_rate(resolved, originals) == Catch::Approx(0.75));
    CHECK(positive_rate(resolved) == Catch::Approx(0.75));

    std::map<std::string, bool> inverted = {
        {"1", false}, {"2", true}, {"3", false}, {"4", false}};
    CHECK(agreement_rate(resolved, inverted) == 0.0);

    ResolvedDataset empty;
    CHECK_THROWS_AS(positive_rate(empty), EmptyDatasetError);
    CHECK_THROWS_AS(agreement_rate(empty, originals), EmptyDatasetError);
    std::map<std::string, bool> partial = {{"1", true}};
    CHECK_THROWS_AS(agreement_rate(resolved, partial), MissingOriginalLabelError);
}

TEST_CASE("annotation files round trip") {
    auto dir = fs::path(DETOX_BINARY_DIR) / "eval_test";
    fs::create_directories(dir);
    std::vector<AnnotationRecord> records = {
        make_record("a", {Y, U, N}, true),
        make_record("b", {N, N, N}),
    };
    auto path = dir / "annotations.jsonl";
    save_annotations_jsonl(records, path);
    auto loaded = load_annotations_jsonl(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].text_id == "a");
    CHECK(loaded[0].labels == records[0].labels);
    CHECK(loaded[0].original_label == true);
    CHECK_FALSE(loaded[1].original_label.has_value());
    CHECK(loaded[1].language == "en");
}

TEST_CASE("annotation files reject wrong label arity and unknown labels") {
    auto dir = fs::path(DETOX_BINARY_DIR) / "eval_test";
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const std::string& body) {
        auto p = dir / name;
        std::ofstream out(p, std::ios::binary);
        out << body;
        return p;
    };
    CHECK_THROWS_AS(load_annotations_jsonl(write(
                        "two.jsonl", R"({"id":"a","labels":["Yes","No"]})" "\n")),
                    FormatError);
    CHECK_THROWS_AS(load_annotations_jsonl(write(
                        "odd.jsonl", R"({"id":"a","labels":["Yes","No","Maybe"]})" "\n")),
                    FormatError);
    CHECK_THROWS_AS(load_annotations_jsonl(write("nojson.jsonl", "plain text\n")), FormatError);
}

TEST_CASE("prediction files skip errored records but keep warned ones") {
    auto dir = fs::path(DETOX_BINARY_DIR) / "eval_test";
    fs::create_directories(dir);
    auto path = dir / "predictions.jsonl";
    {
        std::ofstream out(path, std::ios::binary);
        out << R"({"id":"1","label":true,"errors":[]})" << "\n";
        out << R"({"id":"2","label":false,"errors":["warning: fusion failed"]})" << "\n";
        out << R"({"id":"3","label":false,"errors":["term-free pipeline: timeout"]})" << "\n";
    }
    auto predictions = load_predictions_jsonl(path);
    REQUIRE(predictions.size() == 2);
    CHECK(predictions.at("1") == true);
    CHECK(predictions.at("2") == false);
    CHECK(predictions.count("3") == 0);
}

TEST_CASE("full evaluation report over a small dataset") {
    std::vector<AnnotationRecord> records = {
        make_record("1", {Y, Y, Y}, true),
        make_record("2", {N, N, N}, false),
        make_record("3", {Y, Y, U}, true),
        make_record("4", {Y, U, N}, false),
        make_record("5", {U, U, N}, false),
    };
    std::map<std::string, bool> predictions = {
        {"1", true}, {"2", false}, {"3", true}, {"4", true}, {"5", false}};
    auto report = evaluate_all(records, predictions);
    REQUIRE(report.rows.size() == 4);
    REQUIRE(report.alpha.has_value());

    const auto& safe = report.rows[0];
    CHECK(safe.variant == Variant::Safe);
    CHECK(safe.kept == 2);
    CHECK(safe.discarded == 3);
    CHECK(safe.metrics.tp == 1);
    CHECK(safe.metrics.tn == 1);
    CHECK(safe.metrics.f1 == 1.0);
    REQUIRE(safe.agreement.has_value());
    CHECK(*safe.agreement == 1.0);

    const auto& majority = report.rows[1];
    CHECK(majority.variant == Variant::Majority);
    CHECK(majority.kept == 4);  // item 4 discarded
    CHECK(majority.positive_rate == Catch::Approx(0.5));

    auto doc = report_to_json(report);
    CHECK(doc["variants"].size() == 4);
    CHECK(doc["variant_rule"] == "literal");
    CHECK(doc["variants"][0]["variant"] == "Safe");
    CHECK(doc["variants"][0]["precision"] == 1.0);

    auto table = format_report_table(report);
    CHECK(table.find("Safe") != std::string::npos);
    CHECK(table.find("Majority") != std::string::npos);
    CHECK(table.find("krippendorff_alpha") != std::string::npos);
}

TEST_CASE("report flags variants emptied by discarding") {
    std::vector<AnnotationRecord> records = {
        make_record("1", {Y, U, N}),
        make_record("2", {Y, N, U}),
    };
    std::map<std::string, bool> predictions = {{"1", true}, {"2", false}};
    auto report = evaluate_all(records, predictions);
    CHECK(report.rows[0].empty);  // safe: everything borderline
    CHECK(report.rows[1].empty);  // majority: fully divergent pairs discarded
    CHECK_FALSE(report.rows[2].empty);
    auto table = format_report_table(report);
    CHECK(table.find("empty after discard") != std::string::npos);
    auto doc = report_to_json(report);
    CHECK(doc["variants"][0]["empty"] == true);
}

TEST_CASE("swapped mode shows up in the report and changes borderline rows") {
    std::vector<AnnotationRecord> records = {
        make_record("1", {Y, N, N}),
        make_record("2", {Y, Y, Y}),
    };
    std::map<std::string, bool> predictions = {{"1", true}, {"2", true}};
    auto literal = evaluate_all(records, predictions, VariantRuleMode::literal);
    auto swapped = evaluate_all(records, predictions, VariantRuleMode::swapped);
    // permissive row: {Y,N,N} is positive literally, negative when swapped
    CHECK(literal.rows[2].positive_rate == 1.0);
    CHECK(swapped.rows[2].positive_rate == 0.5);
    CHECK(report_to_json(swapped)["variant_rule"] == "swapped");
}
