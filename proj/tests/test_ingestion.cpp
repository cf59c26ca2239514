#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "detox/ingestion.hpp"

using namespace detox;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::path(DETOX_BINARY_DIR) / "ingest_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

PromptTemplate vocab_prompt() {
    return load_prompt_template("vocabulary", "en", fs::path(DETOX_SOURCE_DIR) / "data");
}

TermCandidate make_candidate(const std::string& term, std::vector<std::string> defs) {
    TermCandidate c;
    c.term = term;
    c.page_id = 1;
    c.definitions = std::move(defs);
    return c;
}

std::string verdict_json(bool hate, const std::string& cats, const std::string& entry,
                         const std::string& reasoning = "because") {
    json doc = {{"reasoning", reasoning},
                {"hate_speech", hate},
                {"categories", json::parse(cats)},
                {"vocabulary_entry", entry}};
    return doc.dump();
}

}  // namespace

TEST_CASE("assessment renders the prompt and parses the verdict") {
    auto provider = ScriptedProvider::sequence(
        {verdict_json(true, R"(["Race", "Socioeconomic Status"])", "entry text")});
    auto tmpl = vocab_prompt();
    auto candidate = make_candidate("welfare queen",
                                    {"A woman collecting welfare, seen as doing so out of laziness, "
                                     "rather than genuine need."});
    auto verdict = assess_candidate(candidate, *provider, tmpl, "m");
    CHECK(verdict.hate_speech);
    REQUIRE(verdict.categories.size() == 2);
    CHECK(verdict.categories[0] == IdentityCharacteristic::Race);
    CHECK(verdict.categories[1] == IdentityCharacteristic::SocioeconomicStatus);
    CHECK(verdict.vocabulary_entry == "entry text");
    CHECK(verdict.reasoning == "because");

    auto requests = provider->requests();
    REQUIRE(requests.size() == 1);
    const auto& req = requests[0];
    CHECK(req.user_prompt.find("TERM: welfare queen") != std::string::npos);
    CHECK(req.user_prompt.find("1. A woman collecting welfare") != std::string::npos);
    // literal braces in the system prompt survived template rendering
    CHECK(req.system_prompt.find("{{") == std::string::npos);
    CHECK(req.system_prompt.find("\"hate_speech\": true") != std::string::npos);
}

TEST_CASE("negative verdict carries no payload") {
    auto provider = ScriptedProvider::sequence({verdict_json(false, "[]", "")});
    auto verdict =
        assess_candidate(make_candidate("nerd", {"A person who is intellectual."}), *provider,
                         vocab_prompt(), "m");
    CHECK_FALSE(verdict.hate_speech);
    CHECK(verdict.categories.empty());
    CHECK(verdict.vocabulary_entry.empty());
}

TEST_CASE("multiple definitions are numbered in order") {
    auto provider = ScriptedProvider::sequence({verdict_json(false, "[]", "")});
    assess_candidate(make_candidate("word", {"first", "second", "third"}), *provider,
                     vocab_prompt(), "m");
    auto requests = provider->requests();
    const auto& user = requests[0].user_prompt;
    auto p1 = user.find("1. first");
    auto p2 = user.find("2. second");
    auto p3 = user.find("3. third");
    REQUIRE(p1 != std::string::npos);
    REQUIRE(p2 != std::string::npos);
    REQUIRE(p3 != std::string::npos);
    CHECK(p1 < p2);
    CHECK(p2 < p3);
}

TEST_CASE("inconsistent verdicts are rejected") {
    auto tmpl = vocab_prompt();
    auto candidate = make_candidate("word", {"def"});
    SECTION("positive without categories") {
        auto p = ScriptedProvider::sequence({verdict_json(true, "[]", "entry")});
        CHECK_THROWS_AS(assess_candidate(candidate, *p, tmpl, "m"), InconsistentVerdictError);
    }
    SECTION("positive without entry") {
        auto p = ScriptedProvider::sequence({verdict_json(true, R"(["Race"])", "  ")});
        CHECK_THROWS_AS(assess_candidate(candidate, *p, tmpl, "m"), InconsistentVerdictError);
    }
    SECTION("negative with categories") {
        auto p = ScriptedProvider::sequence({verdict_json(false, R"(["Race"])", "")});
        CHECK_THROWS_AS(assess_candidate(candidate, *p, tmpl, "m"), InconsistentVerdictError);
    }
    SECTION("negative with entry text") {
        auto p = ScriptedProvider::sequence({verdict_json(false, "[]", "leftover")});
        CHECK_THROWS_AS(assess_candidate(candidate, *p, tmpl, "m"), InconsistentVerdictError);
    }
}

TEST_CASE("malformed model output is a parse error") {
    auto tmpl = vocab_prompt();
    auto candidate = make_candidate("word", {"def"});
    SECTION("no JSON at all") {
        auto p = ScriptedProvider::sequence({"I think this is hate speech."});
        CHECK_THROWS_AS(assess_candidate(candidate, *p, tmpl, "m"), ResponseParseError);
    }
    SECTION("missing flag") {
        auto p = ScriptedProvider::sequence({R"({"reasoning": "hm"})"});
        CHECK_THROWS_AS(assess_candidate(candidate, *p, tmpl, "m"), ResponseParseError);
    }
    SECTION("flag is a string") {
        auto p = ScriptedProvider::sequence({R"({"hate_speech": "true"})"});
        CHECK_THROWS_AS(assess_candidate(candidate, *p, tmpl, "m"), ResponseParseError);
    }
    SECTION("unknown category") {
        auto p = ScriptedProvider::sequence(
            {R"({"hate_speech": true, "categories": ["Favorite Color"], "vocabulary_entry": "e"})"});
        CHECK_THROWS_AS(assess_candidate(candidate, *p, tmpl, "m"), ResponseParseError);
    }
}

TEST_CASE("markdown fences and chatter around the JSON are tolerated") {
    auto p = ScriptedProvider::sequence(
        {"Sure, here is the analysis:\n```json\n" + verdict_json(false, "[]", "") + "\n```\nDone."});
    auto verdict = assess_candidate(make_candidate("word", {"def"}), *p, vocab_prompt(), "m");
    CHECK_FALSE(verdict.hate_speech);
}

TEST_CASE("capitalized reasoning key is accepted") {
    auto p = ScriptedProvider::sequence(
        {R"({"Reasoning": "capital", "hate_speech": false, "categories": [], "vocabulary_entry": ""})"});
    auto verdict = assess_candidate(make_candidate("word", {"def"}), *p, vocab_prompt(), "m");
    CHECK(verdict.reasoning == "capital");
}

TEST_CASE("batch build: positives enter the vocabulary, everything enters the report") {
    std::vector<TermCandidate> candidates = {
        make_candidate("slur one", {"offensive to a group"}),
        make_candidate("harmless", {"a neutral word"}),
        make_candidate("slur two", {"another group insult"}),
    };
    auto provider = ScriptedProvider::sequence({
        verdict_json(true, R"(["Gender"])", "entry one"),
        verdict_json(false, "[]", ""),
        verdict_json(true, R"(["Disability", "Age"])", "entry two"),
    });
    auto review = fresh_dir("batch") / "review.csv";
    auto [vocab, report] =
        build_vocabulary_from_candidates(candidates, *provider, vocab_prompt(), "m", "en", review);

    REQUIRE(vocab.size() == 2);
    CHECK(vocab.language() == "en");
    CHECK(vocab.entry(0).term == "slur one");
    CHECK(vocab.entry(0).source == "https://en.wiktionary.org/wiki/slur_one");
    CHECK(vocab.entry(1).term == "slur two");
    CHECK(vocab.entry(1).categories ==
          std::vector<IdentityCharacteristic>{IdentityCharacteristic::Age,
                                              IdentityCharacteristic::Disability});

    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].hate_speech);
    CHECK_FALSE(report.rows[1].hate_speech);
    CHECK(report.rows[1].error.empty());
    CHECK(report.rows[2].categories == "Age;Disability");
    REQUIRE(fs::exists(review));
}

TEST_CASE("batch build: failures become error rows without aborting") {
    std::vector<TermCandidate> candidates = {
        make_candidate("a", {"def"}),
        make_candidate("b", {"def"}),
        make_candidate("c", {"def"}),
    };
    auto provider = ScriptedProvider::sequence({"not json", "also not json", "nope"});
    auto [vocab, report] =
        build_vocabulary_from_candidates(candidates, *provider, vocab_prompt(), "m", "en");
    CHECK(vocab.size() == 0);
    REQUIRE(report.rows.size() == 3);
    for (const auto& row : report.rows) CHECK(!row.error.empty());
}

TEST_CASE("batch build: empty definitions and duplicates are reported, not assessed") {
    std::vector<TermCandidate> candidates = {
        make_candidate("empty page", {}),
        make_candidate("word", {"def"}),
        make_candidate("Word", {"def again"}),
    };
    auto provider = ScriptedProvider::sequence({verdict_json(false, "[]", "")});
    auto [vocab, report] =
        build_vocabulary_from_candidates(candidates, *provider, vocab_prompt(), "m", "en");
    CHECK(vocab.size() == 0);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].error == "no definitions extracted");
    CHECK(report.rows[1].error.empty());
    CHECK(report.rows[2].error == "duplicate term");
    CHECK(provider->call_count() == 1);
}

TEST_CASE("review file round trip with a human correction") {
    std::vector<TermCandidate> candidates = {
        make_candidate("slur one", {"offensive"}),
        make_candidate("borderline", {"ambiguous"}),
    };
    auto provider = ScriptedProvider::sequence({
        verdict_json(true, R"(["Gender"])", "entry one"),
        verdict_json(true, R"(["Race"])", "entry two"),
    });
    auto dir = fresh_dir("roundtrip");
    auto review = dir / "review.csv";
    build_vocabulary_from_candidates(candidates, *provider, vocab_prompt(), "m", "en", review);

    // the reviewer swaps a category on row 2
    std::string text = read_text_file(review);
    auto at = text.find("Race");
    REQUIRE(at != std::string::npos);
    text.replace(at, 4, "Religion");
    {
        std::ofstream out(review, std::ios::binary);
        out << text;
    }

    auto vocab = load_review_csv(review, "en");
    REQUIRE(vocab.size() == 2);
    CHECK(vocab.entry(0).term == "slur one");
    CHECK(vocab.entry(0).description == "entry one");
    CHECK(vocab.entry(0).source == "https://en.wiktionary.org/wiki/slur_one");
    CHECK(vocab.entry(1).categories ==
          std::vector<IdentityCharacteristic>{IdentityCharacteristic::Religion});
}

TEST_CASE("review import skips errored and negative rows") {
    auto dir = fresh_dir("import");
    auto path = dir / "review.csv";
    {
        std::ofstream out(path, std::ios::binary);
        out << "term,hate_speech,categories,vocabulary_entry,reasoning,error\n";
        out << "keep,true,Gender,an entry,why,\n";
        out << "negative,false,,,why not,\n";
        out << "broken,true,Gender,an entry,why,provider timeout\n";
    }
    auto vocab = load_review_csv(path, "en");
    REQUIRE(vocab.size() == 1);
    CHECK(vocab.entry(0).term == "keep");
}

TEST_CASE("review import rejects damaged files") {
    auto dir = fresh_dir("import_bad");
    auto write = [&](const std::string& name, const std::string& body) {
        auto p = dir / name;
        std::ofstream out(p, std::ios::binary);
        out << body;
        return p;
    };
    CHECK_THROWS_AS(load_review_csv(write("h.csv", "term,flag\nx,y\n"), "en"), FormatError);
    CHECK_THROWS_AS(
        load_review_csv(
            write("f.csv", "term,hate_speech,categories,vocabulary_entry,reasoning,error\n"
                           "x,maybe,Gender,e,r,\n"),
            "en"),
        FormatError);
    CHECK_THROWS_AS(
        load_review_csv(
            write("c.csv", "term,hate_speech,categories,vocabulary_entry,reasoning,error\n"
                           "x,true,Sparkle,e,r,\n"),
            "en"),
        ValidationError);
}

TEST_CASE("candidates from several sources union by page and keep provenance") {
    httplib::Server server;
    server.Get("/w/api.php", [](const httplib::Request& req, httplib::Response& res) {
        json doc;
        if (req.get_param_value("action") == "parse") {
            long long id = std::stoll(req.get_param_value("pageid"));
            std::string defs = id == 11 ? "<h3>Noun</h3><ol><li>first def</li><li>second def</li></ol>"
                                        : "<h3>Pronunciation</h3><ul><li>ipa only</li></ul>";
            doc = {{"parse", {{"text", {{"*", defs}}}}}};
        } else if (req.get_param_value("list") == "categorymembers") {
            doc = {{"query",
                    {{"categorymembers",
                      json::array({{{"pageid", 11}, {"ns", 0}, {"title", "shared"}},
                                   {{"pageid", 12}, {"ns", 0}, {"title", "cat only"}}})}}}};
        } else {
            doc = {{"query",
                    {{"pages",
                      {{"9",
                        {{"pageid", 9},
                         {"title", "tagpage"},
                         {"linkshere",
                          json::array({{{"pageid", 11}, {"ns", 0}, {"title", "shared"}}})}}}}}}}};
        }
        res.set_content(doc.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    WikiClientConfig cfg;
    cfg.api_base = "http://127.0.0.1:" + std::to_string(port) + "/w/api.php";
    cfg.language = "en";
    cfg.cache_dir = fresh_dir("union");
    WikiClient client(cfg);
    std::vector<CategorySource> sources = {
        {"en", CategorySource::Kind::category, "Category:A"},
        {"en", CategorySource::Kind::tag, "derogatory"},
    };
    auto candidates = fetch_candidates(client, sources, {"noun"});
    server.stop();
    thread.join();

    REQUIRE(candidates.size() == 2);
    CHECK(candidates[0].term == "shared");
    CHECK(candidates[0].sources == std::vector<std::string>{"Category:A", "derogatory"});
    CHECK(candidates[0].definitions ==
          std::vector<std::string>{"first def", "second def"});
    CHECK(candidates[1].term == "cat only");
    CHECK(candidates[1].definitions.empty());
}
