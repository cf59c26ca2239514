// Command-line front end: vocabulary building, detection, evaluation, and
// the HTTP service, all driven by one config file plus flag overrides.
//
// Exit codes: 0 success, 1 some items failed, 2 configuration or usage
// error, 3 fatal runtime error (including a batch where nothing succeeded).

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "detox/config.hpp"
#include "detox/evaluation.hpp"
#include "detox/ingestion.hpp"
#include "detox/service.hpp"

namespace {

using namespace detox;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kPartial = 1;
constexpr int kConfig = 2;
constexpr int kFatal = 3;

EngineConfig load_effective_config(const std::string& path) {
    if (path.empty()) {
        EngineConfig config;
        apply_env_overrides(config);
        return config;
    }
    return load_config(path);
}

struct BuildVocabArgs {
    std::string out;
    std::string review;
    std::string cache_dir = "cache";
    std::string api_base;
    std::string language;
    int limit = 0;
    bool offline = false;
};

int run_build_vocab(EngineConfig config, const BuildVocabArgs& args) {
    if (!args.language.empty()) config.language = args.language;
    validate_config(config);

    auto sources = load_sources(config.language, config.data_dir);
    auto headings = load_pos_headings(config.language, config.data_dir);

    WikiClientConfig wiki;
    wiki.language = config.language;
    wiki.api_base = args.api_base;
    wiki.cache_dir = args.cache_dir;
    wiki.offline = args.offline;
    wiki.timeout_s = config.timeout_s;
    wiki.max_retries = config.retries;
    WikiClient client(wiki);

    auto candidates = fetch_candidates(client, sources, headings);
    std::cout << "candidates fetched: " << candidates.size() << "\n";
    if (args.limit > 0 && candidates.size() > static_cast<std::size_t>(args.limit))
        candidates.resize(args.limit);

    auto provider = build_provider(config);
    auto tmpl = load_prompt_template("vocabulary", config.language, config.data_dir);
    auto [vocab, report] = build_vocabulary_from_candidates(
        candidates, *provider, tmpl, config.model_vocabulary, config.language,
        args.review.empty() ? fs::path{} : fs::path(args.review), config.temperature);

    std::size_t errored = 0;
    for (const auto& row : report.rows)
        if (!row.error.empty() && row.error != "no definitions extracted" &&
            row.error != "duplicate term")
            ++errored;
    std::cout << "candidates assessed: " << report.rows.size() << "\n";
    std::cout << "vocabulary entries: " << vocab.size() << "\n";
    std::cout << "rejected or skipped: " << (report.rows.size() - vocab.size() - errored)
              << "\n";
    std::cout << "assessment errors: " << errored << "\n";
    std::cout << "network calls: " << client.network_calls() << "\n";

    save_vocabulary_csv(vocab, args.out);
    std::cout << "wrote " << args.out << "\n";
    if (!args.review.empty()) std::cout << "wrote " << args.review << "\n";
    if (errored == 0) return kOk;
    return errored == report.rows.size() ? kFatal : kPartial;
}

struct DetectArgs {
    std::string text;
    std::string id = "text-1";
    std::string input;
    std::string output;
    bool explain_only_positive = false;
};

int run_detect(const EngineConfig& config, const DetectArgs& args) {
    if (args.text.empty() && args.input.empty())
        throw ConfigError("detect needs --text or --input");
    Engine engine = build_engine(config);

    // slot i is either a live item routed through the batch or a
    // pre-filled error record for a malformed input line
    std::vector<DetectionResult> results;
    std::vector<std::pair<std::string, std::string>> items;
    std::vector<std::size_t> item_slots;

    if (!args.text.empty()) {
        results.resize(1);
        items.emplace_back(args.id, args.text);
        item_slots.push_back(0);
    } else {
        std::ifstream in(args.input, std::ios::binary);
        if (!in) throw FileNotFoundError(args.input);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            std::size_t slot = results.size();
            results.emplace_back();
            auto doc = nlohmann::json::parse(line, nullptr, false);
            if (doc.is_discarded() || !doc.is_object() || !doc.contains("text") ||
                !doc["text"].is_string()) {
                results[slot].text_id = "line-" + std::to_string(line_no);
                results[slot].errors.push_back("malformed input line " +
                                               std::to_string(line_no));
                continue;
            }
            std::string id = doc.contains("id") && doc["id"].is_string()
                                 ? doc["id"].get<std::string>()
                                 : "line-" + std::to_string(line_no);
            items.emplace_back(id, doc["text"].get<std::string>());
            item_slots.push_back(slot);
        }
    }

    auto batch = detect_batch(items, engine.deps(), config.parallelism);
    for (std::size_t i = 0; i < batch.size(); ++i)
        results[item_slots[i]] = std::move(batch[i]);

    std::ofstream file_out;
    if (!args.output.empty()) {
        file_out.open(args.output, std::ios::binary);
        if (!file_out) throw Error("cannot open output file: " + args.output);
    }
    std::ostream& out = args.output.empty() ? std::cout : file_out;

    std::size_t failed = 0;
    for (const auto& result : results) {
        if (result.errored()) {
            ++failed;
            std::cerr << result.text_id << ": " << result.errors.front() << "\n";
        }
        auto record = result_to_json(result, engine.vocabulary);
        if (args.explain_only_positive && record["explanation"] == "")
            record.erase("explanation");
        out << record.dump() << "\n";
    }
    if (failed == 0) return kOk;
    return failed == results.size() ? kFatal : kPartial;
}

struct EvaluateArgs {
    std::string annotations;
    std::string predictions;
    std::string variant_rule;
    bool json_output = false;
};

int run_evaluate(const EngineConfig& config, const EvaluateArgs& args) {
    auto records = load_annotations_jsonl(args.annotations);
    VariantRuleMode mode =
        args.variant_rule.empty() ? config.variant_rule : parse_variant_rule(args.variant_rule);

    std::map<std::string, bool> predictions;
    if (!args.predictions.empty()) {
        predictions = load_predictions_jsonl(args.predictions);
    } else {
        Engine engine = build_engine(config);
        std::vector<std::pair<std::string, std::string>> items;
        for (const auto& record : records) items.emplace_back(record.text_id, record.text);
        for (const auto& result : detect_batch(items, engine.deps(), config.parallelism))
            if (!result.errored()) predictions[result.text_id] = result.label;
    }

    // items without a usable prediction cannot enter the metrics
    std::vector<AnnotationRecord> usable;
    for (auto& record : records)
        if (predictions.count(record.text_id)) usable.push_back(std::move(record));
    if (usable.size() != records.size())
        std::cerr << (records.size() - usable.size())
                  << " item(s) had no usable prediction and were excluded\n";

    auto report = evaluate_all(usable, predictions, mode);
    if (args.json_output)
        std::cout << report_to_json(report).dump(2) << "\n";
    else
        std::cout << format_report_table(report);
    return kOk;
}

struct ServeArgs {
    std::string bind;
    int port = 0;
};

int run_serve(EngineConfig config, const ServeArgs& args) {
    if (!args.bind.empty()) config.bind_address = args.bind;
    if (args.port > 0) config.port = args.port;
    DetectionService service(build_engine(config));
    std::cerr << "listening on " << config.bind_address << ":" << config.port << "\n";
    return service.listen(config.bind_address, config.port) ? kOk : kFatal;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid hate speech detection toolkit"};
    app.require_subcommand(0, 1);
    app.fallthrough();  // global options may follow the subcommand name

    std::string config_path;
    bool print_config = false;
    app.add_option("--config", config_path, "config file (key = value lines)");
    app.add_flag("--print-config", print_config,
                 "print the fully resolved config and exit");

    BuildVocabArgs vocab_args;
    auto* build = app.add_subcommand("build-vocab",
                                     "collect candidate terms and build the vocabulary");
    build->add_option("--out", vocab_args.out, "vocabulary CSV to write")->required();
    build->add_option("--review", vocab_args.review, "review CSV to write");
    build->add_option("--cache-dir", vocab_args.cache_dir, "page cache directory");
    build->add_option("--api-base", vocab_args.api_base, "override the wiki API base URL");
    build->add_option("--lang", vocab_args.language, "override the configured language");
    build->add_option("--limit", vocab_args.limit, "assess at most N candidates");
    build->add_flag("--offline", vocab_args.offline, "fail on cache misses instead of fetching");

    DetectArgs detect_args;
    auto* detect_cmd = app.add_subcommand("detect", "classify texts and explain flags");
    auto* text_opt = detect_cmd->add_option("--text", detect_args.text, "one text to classify");
    auto* input_opt =
        detect_cmd->add_option("--input", detect_args.input, "JSON-lines batch input");
    text_opt->excludes(input_opt);
    detect_cmd->add_option("--id", detect_args.id, "record id for --text");
    detect_cmd->add_option("--output", detect_args.output,
                           "write records here instead of stdout");
    detect_cmd->add_flag("--explain-only-positive", detect_args.explain_only_positive,
                         "omit the explanation field when it is empty");

    EvaluateArgs eval_args;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "score predictions against annotations");
    evaluate_cmd->add_option("--annotations", eval_args.annotations, "annotation JSON-lines")
        ->required();
    evaluate_cmd->add_option("--predictions", eval_args.predictions,
                             "prediction JSON-lines; omitted = run detection live");
    evaluate_cmd->add_option("--variant-rule", eval_args.variant_rule,
                             "literal or swapped rule assignment");
    evaluate_cmd->add_flag("--json", eval_args.json_output, "emit the report as JSON");

    ServeArgs serve_args;
    auto* serve_cmd = app.add_subcommand("serve", "run the HTTP service");
    serve_cmd->add_option("--bind", serve_args.bind, "bind address override");
    serve_cmd->add_option("--port", serve_args.port, "port override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        EngineConfig config = load_effective_config(config_path);
        if (print_config) {
            std::cout << effective_config_text(config);
            return kOk;
        }
        if (build->parsed()) return run_build_vocab(std::move(config), vocab_args);
        if (detect_cmd->parsed()) return run_detect(config, detect_args);
        if (evaluate_cmd->parsed()) return run_evaluate(config, eval_args);
        if (serve_cmd->parsed()) return run_serve(std::move(config), serve_args);
        std::cerr << app.help();
        return kConfig;
    } catch (const ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kConfig;
    } catch (const UnsupportedLanguageError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kConfig;
    } catch (const FileNotFoundError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kConfig;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kFatal;
    }
}
