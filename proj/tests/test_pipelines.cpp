#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "detox/pipelines.hpp"

using namespace detox;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

const fs::path kData = fs::path(DETOX_SOURCE_DIR) / "data";

struct Fixture {
    std::shared_ptr<Lemmatizer> lemmatizer;
    Vocabulary vocab;
    PromptSet prompts;

    Fixture() {
        lemmatizer = default_lemmatizer("en", kData);
        std::vector<VocabularyEntry> entries;
        auto add = [&](const std::string& term, std::vector<IdentityCharacteristic> cats) {
            VocabularyEntry e;
            e.term = term;
            e.description = "description of " + term;
            e.categories = std::move(cats);
            e.source = "https://en.wiktionary.org/wiki/" + term;
            e.language = "en";
            entries.push_back(std::move(e));
        };
        add("bitch", {IdentityCharacteristic::Gender, IdentityCharacteristic::SexualOrientation});
        add("sissy", {IdentityCharacteristic::Gender});
        add("nigga", {IdentityCharacteristic::Race});
        vocab = Vocabulary(std::move(entries), "en");
        vocab.build_index(*lemmatizer);
        prompts = load_prompt_set("en", kData);
    }

    DetectDeps deps(ChatProvider& provider) {
        DetectDeps d;
        d.vocab = &vocab;
        d.lemmatizer = lemmatizer.get();
        d.provider = &provider;
        d.prompts = &prompts;
        d.model_id = "test-model";
        return d;
    }
};

std::string term_response(bool hateful, const std::string& explanation = "term explanation") {
    return "<STEP_1> the term's meaning here </STEP_1>\n"
           "<STEP_2> description applicability </STEP_2>\n"
           "<STEP_3> " + std::string(hateful ? "Hateful" : "Non hateful") + " </STEP_3>\n"
           "<STEP_4> " + explanation + " </STEP_4>";
}

std::string free_response(bool hateful, const std::string& explanation = "free explanation") {
    return "<DECISION> " + std::string(hateful ? "Hate speech" : "Not hate speech") +
           " </DECISION>\n<EXPLANATION> " + explanation + " </EXPLANATION>";
}

}  // namespace

TEST_CASE("term pipeline: hateful use of a gendered slur") {
    Fixture fx;
    std::string text = "That bitch is always complaining, why can't women be more rational like us?";
    auto matches = find_matches(text, fx.vocab, *fx.lemmatizer);
    REQUIRE(matches.size() == 1);
    auto provider = ScriptedProvider::sequence({term_response(true)});
    auto verdicts = run_term_based(text, matches, fx.vocab, *provider, fx.prompts, "m");

    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].hateful);
    CHECK(verdicts[0].explanation == "term explanation");
    CHECK(verdicts[0].step1 == "the term's meaning here");
    CHECK(verdicts[0].step2 == "description applicability");
    CHECK_FALSE(verdicts[0].errored());
    REQUIRE(verdicts[0].matches.size() == 1);
    CHECK(verdicts[0].matches[0].entry_id == 0);

    auto requests = provider->requests();
    REQUIRE(requests.size() == 1);
    CHECK(requests[0].user_prompt.find("Term: bitch") != std::string::npos);
    CHECK(requests[0].user_prompt.find("Description: description of bitch") != std::string::npos);
    CHECK(requests[0].user_prompt.find("Text: " + text) != std::string::npos);
    CHECK(requests[0].user_prompt.find("Characteristics: Gender; Sexual Orientation") !=
          std::string::npos);
}

TEST_CASE("term pipeline: neutral use stays clean") {
    Fixture fx;
    std::string text = "my dog is a bitch (female)";
    auto matches = find_matches(text, fx.vocab, *fx.lemmatizer);
    REQUIRE(matches.size() == 1);
    auto provider = ScriptedProvider::sequence({term_response(false)});
    auto verdicts = run_term_based(text, matches, fx.vocab, *provider, fx.prompts, "m");
    REQUIRE(verdicts.size() == 1);
    CHECK_FALSE(verdicts[0].hateful);
}

TEST_CASE("term pipeline: no matches means no calls") {
    Fixture fx;
    auto provider = ScriptedProvider::sequence({});
    auto verdicts = run_term_based("nothing here", {}, fx.vocab, *provider, fx.prompts, "m");
    CHECK(verdicts.empty());
    CHECK(provider->call_count() == 0);
}

TEST_CASE("term pipeline: one call per distinct entry, spans grouped") {
    Fixture fx;
    std::string text = "bitch this, bitch that, you sissy";
    auto matches = find_matches(text, fx.vocab, *fx.lemmatizer);
    REQUIRE(matches.size() == 3);
    auto provider = ScriptedProvider::keyed({
        {"Term: bitch", term_response(true, "about the slur")},
        {"Term: sissy", term_response(false)},
    });
    auto verdicts = run_term_based(text, matches, fx.vocab, *provider, fx.prompts, "m");
    REQUIRE(verdicts.size() == 2);
    CHECK(provider->call_count() == 2);
    CHECK(verdicts[0].entry_id == 0);
    CHECK(verdicts[0].matches.size() == 2);
    CHECK(verdicts[1].entry_id == 1);
    CHECK(verdicts[1].matches.size() == 1);
}

TEST_CASE("term pipeline: a bad response retries once with the format note") {
    Fixture fx;
    std::string text = "what a bitch";
    auto matches = find_matches(text, fx.vocab, *fx.lemmatizer);
    auto provider = ScriptedProvider::sequence({"no tags at all", term_response(true)});
    auto verdicts = run_term_based(text, matches, fx.vocab, *provider, fx.prompts, "m");
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].hateful);
    CHECK_FALSE(verdicts[0].errored());
    auto requests = provider->requests();
    REQUIRE(requests.size() == 2);
    CHECK(requests[1].user_prompt.find("did not follow the required output format") !=
          std::string::npos);
    // the retry keeps the original request intact in front of the note
    CHECK(requests[1].user_prompt.rfind(requests[0].user_prompt, 0) == 0);
}

TEST_CASE("term pipeline: persistent failure is recorded, batch continues") {
    Fixture fx;
    std::string text = "that bitch is a sissy";
    auto matches = find_matches(text, fx.vocab, *fx.lemmatizer);
    REQUIRE(matches.size() == 2);
    auto provider = ScriptedProvider::keyed({
        {"Term: bitch", "still not the format"},
        {"Term: sissy", term_response(true, "second entry verdict")},
    });
    auto verdicts = run_term_based(text, matches, fx.vocab, *provider, fx.prompts, "m");
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].errored());
    CHECK_FALSE(verdicts[1].errored());
    CHECK(verdicts[1].explanation == "second entry verdict");
    CHECK(provider->call_count() == 3);  // two tries for the first, one for the second
}

TEST_CASE("term pipeline: ambiguous step-3 decision errors after retry") {
    Fixture fx;
    auto matches = find_matches("bitch", fx.vocab, *fx.lemmatizer);
    std::string ambiguous = "<STEP_1> a </STEP_1><STEP_2> b </STEP_2>"
                            "<STEP_3> it depends </STEP_3><STEP_4> c </STEP_4>";
    auto provider = ScriptedProvider::sequence({ambiguous, ambiguous});
    auto verdicts = run_term_based("bitch", matches, fx.vocab, *provider, fx.prompts, "m");
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].errored());
    CHECK(provider->call_count() == 2);
}

TEST_CASE("free pipeline: both outcomes parse") {
    Fixture fx;
    std::string text = "He should be arrested and jailed; he's a Muslim, so he's a terrorist...";
    auto positive = ScriptedProvider::sequence({free_response(true, "targets religion")});
    auto verdict = run_term_free(text, *positive, fx.prompts, "m");
    CHECK(verdict.hateful);
    CHECK(verdict.explanation == "targets religion");
    CHECK_FALSE(verdict.errored());
    auto requests = positive->requests();
    REQUIRE(requests.size() == 1);
    CHECK(requests[0].user_prompt.find("Text for analysis: " + text) != std::string::npos);

    auto negative = ScriptedProvider::sequence({free_response(false)});
    auto clean = run_term_free("have a nice day", *negative, fx.prompts, "m");
    CHECK_FALSE(clean.hateful);
    CHECK_FALSE(clean.errored());
}

TEST_CASE("free pipeline: missing explanation twice becomes an errored verdict") {
    Fixture fx;
    std::string missing = "<DECISION> Hate speech </DECISION>";
    auto provider = ScriptedProvider::sequence({missing, missing});
    auto verdict = run_term_free("text", *provider, fx.prompts, "m");
    CHECK(verdict.errored());
    CHECK(provider->call_count() == 2);
}

TEST_CASE("fusion renders numbered inputs and returns the merge verbatim") {
    Fixture fx;
    auto provider = ScriptedProvider::sequence({"  merged paragraph  "});
    auto merged = fuse({"first analysis", "second analysis"}, *provider, fx.prompts, "m");
    CHECK(merged == "merged paragraph");
    auto requests = provider->requests();
    REQUIRE(requests.size() == 1);
    CHECK(requests[0].user_prompt.find("Text 1: first analysis") != std::string::npos);
    CHECK(requests[0].user_prompt.find("Text 2: second analysis") != std::string::npos);
    CHECK(requests[0].user_prompt.find("Please merge the following hate speech analyses") !=
          std::string::npos);
}

TEST_CASE("fusion refuses fewer than two inputs and empty merges") {
    Fixture fx;
    auto provider = ScriptedProvider::sequence({"whatever"});
    CHECK_THROWS_AS(fuse({"only one"}, *provider, fx.prompts, "m"), Error);
    auto blank = ScriptedProvider::sequence({"   "});
    CHECK_THROWS_AS(fuse({"a", "b"}, *blank, fx.prompts, "m"), FusionError);
}

TEST_CASE("decision table: all four pipeline combinations") {
    Fixture fx;
    std::string with_term = "that bitch ruined everything";
    std::string no_term = "what a lovely morning";

    SECTION("neither flags: clean only because both agree") {
        auto provider = ScriptedProvider::keyed({
            {"Term: bitch", term_response(false)},
            {"Text for analysis:", free_response(false)},
        });
        auto result = detect(with_term, "a", fx.deps(*provider));
        CHECK_FALSE(result.label);
        CHECK(result.provenance == Provenance::none);
        CHECK(result.explanation.empty());
        CHECK_FALSE(result.errored());
        REQUIRE(result.term_verdicts.size() == 1);
        REQUIRE(result.free_verdict.has_value());
    }
    SECTION("term pipeline only: flag with the verdict's own explanation") {
        auto provider = ScriptedProvider::keyed({
            {"Term: bitch", term_response(true, "slur explanation")},
            {"Text for analysis:", free_response(false)},
        });
        auto result = detect(with_term, "b", fx.deps(*provider));
        CHECK(result.label);
        CHECK(result.provenance == Provenance::term_based);
        CHECK(result.explanation == "slur explanation");
        // single explanation: the fusion prompt must never fire
        for (const auto& r : provider->requests())
            CHECK(r.user_prompt.find("Please merge") == std::string::npos);
    }
    SECTION("free pipeline only, no matches in text") {
        auto provider = ScriptedProvider::keyed({
            {"Text for analysis:", free_response(true, "stereotype explanation")},
        });
        auto result = detect(no_term, "c", fx.deps(*provider));
        CHECK(result.label);
        CHECK(result.provenance == Provenance::term_free);
        CHECK(result.explanation == "stereotype explanation");
        CHECK(result.term_verdicts.empty());
        CHECK(provider->call_count() == 1);
    }
    SECTION("free pipeline only, matched term judged neutral") {
        auto provider = ScriptedProvider::keyed({
            {"Term: bitch", term_response(false)},
            {"Text for analysis:", free_response(true, "implicit stereotype")},
        });
        auto result = detect(with_term, "d", fx.deps(*provider));
        CHECK(result.label);
        CHECK(result.provenance == Provenance::term_free);
        CHECK(result.explanation == "implicit stereotype");
    }
    SECTION("both pipelines flag: fused explanation") {
        auto provider = ScriptedProvider::keyed({
            {"Term: nigga", term_response(true, "inherently offensive term")},
            {"Text for analysis:", free_response(true, "racial stereotype")},
            {"Please merge", "fused: offensive term plus racial stereotype"},
        });
        auto result = detect("That nigga always causes trouble, like the rest of them.", "e",
                             fx.deps(*provider));
        CHECK(result.label);
        CHECK(result.provenance == Provenance::both_fused);
        CHECK(result.explanation == "fused: offensive term plus racial stereotype");
        CHECK(provider->call_count() == 3);
    }
}

TEST_CASE("label monotonicity: adding a hateful term never clears the flag") {
    Fixture fx;
    auto free_only = ScriptedProvider::keyed({
        {"Text for analysis:", free_response(true)},
    });
    auto base = detect("plain stereotype text", "m1", fx.deps(*free_only));
    REQUIRE(base.label);

    auto both = ScriptedProvider::keyed({
        {"Term: bitch", term_response(true)},
        {"Text for analysis:", free_response(true)},
        {"Please merge", "merged"},
    });
    auto extended = detect("stereotype text with bitch", "m2", fx.deps(*both));
    CHECK(extended.label);
    CHECK(extended.provenance == Provenance::both_fused);
}

TEST_CASE("errored pipeline with the other flagging: flag stands with a warning") {
    Fixture fx;
    SECTION("free errored, term hateful") {
        auto provider = ScriptedProvider::keyed({
            {"Term: bitch", term_response(true, "term explanation")},
            {"Text for analysis:", "garbled"},
        });
        auto result = detect("that bitch", "w1", fx.deps(*provider));
        CHECK(result.label);
        CHECK(result.provenance == Provenance::term_based);
        CHECK_FALSE(result.errored());
        REQUIRE(!result.warnings.empty());
        CHECK(result.warnings[0].find("term-free") != std::string::npos);
    }
    SECTION("term errored, free hateful") {
        auto provider = ScriptedProvider::keyed({
            {"Term: bitch", "garbled"},
            {"Text for analysis:", free_response(true, "free explanation")},
        });
        auto result = detect("that bitch", "w2", fx.deps(*provider));
        CHECK(result.label);
        CHECK(result.provenance == Provenance::term_free);
        CHECK_FALSE(result.errored());
        REQUIRE(!result.warnings.empty());
        CHECK(result.warnings[0].find("bitch") != std::string::npos);
    }
}

TEST_CASE("errored pipeline with the other negative: item cannot be certified") {
    Fixture fx;
    SECTION("free errored, term negative") {
        auto provider = ScriptedProvider::keyed({
            {"Term: bitch", term_response(false)},
            {"Text for analysis:", "garbled"},
        });
        auto result = detect("that bitch", "x1", fx.deps(*provider));
        CHECK(result.errored());
        CHECK_FALSE(result.label);
        CHECK(result.provenance == Provenance::none);
    }
    SECTION("term errored, free negative") {
        auto provider = ScriptedProvider::keyed({
            {"Term: bitch", "garbled"},
            {"Text for analysis:", free_response(false)},
        });
        auto result = detect("that bitch", "x2", fx.deps(*provider));
        CHECK(result.errored());
        CHECK_FALSE(result.label);
    }
}

TEST_CASE("failed fusion falls back to unmerged explanations, flag intact") {
    Fixture fx;
    auto provider = ScriptedProvider::keyed({
        {"Term: bitch", term_response(true, "first part")},
        {"Text for analysis:", free_response(true, "second part")},
        {"Please merge", ""},  // empty scripted response raises ProviderError
    });
    auto result = detect("that bitch again", "f1", fx.deps(*provider));
    CHECK(result.label);
    CHECK(result.provenance == Provenance::both_fused);
    CHECK(result.explanation == "first part\n\nsecond part");
    REQUIRE(!result.warnings.empty());
    CHECK(result.warnings[0].find("fusion failed") != std::string::npos);
    CHECK_FALSE(result.errored());
}

TEST_CASE("system prompts reach the provider byte-identical to the shipped files") {
    Fixture fx;
    auto provider = ScriptedProvider::keyed({
        {"Term: bitch", term_response(true, "one")},
        {"Text for analysis:", free_response(true, "two")},
        {"Please merge", "merged"},
    });
    detect("that bitch", "g1", fx.deps(*provider));
    auto requests = provider->requests();
    REQUIRE(requests.size() == 3);
    CHECK(requests[0].system_prompt ==
          read_text_file(kData / "prompts" / "en" / "term_based.system.txt"));
    CHECK(requests[1].system_prompt ==
          read_text_file(kData / "prompts" / "en" / "term_free.system.txt"));
    CHECK(requests[2].system_prompt ==
          read_text_file(kData / "prompts" / "en" / "fusion.system.txt"));
}

TEST_CASE("augmented free-pipeline prompt is config-selected, default off") {
    auto plain = load_prompt_set("en", kData, false);
    auto augmented = load_prompt_set("en", kData, true);
    CHECK(plain.term_free.system ==
          read_text_file(kData / "prompts" / "en" / "term_free.system.txt"));
    CHECK(augmented.term_free.system ==
          read_text_file(kData / "prompts" / "en" / "term_free_augmented.system.txt"));
    CHECK(plain.term_free.system != augmented.term_free.system);
    // both variants share the user template and its placeholder
    CHECK(augmented.term_free.user == plain.term_free.user);
}

TEST_CASE("batch keeps input order and isolates failures") {
    Fixture fx;
    auto provider = ScriptedProvider::keyed_with_fallback(
        {
            {"first text", free_response(true, "first explanation")},
            {"second text", "unparseable"},
            {"third text", free_response(false)},
        },
        free_response(false));
    std::vector<std::pair<std::string, std::string>> items = {
        {"id1", "first text"}, {"id2", "second text"}, {"id3", "third text"}};
    auto results = detect_batch(items, fx.deps(*provider), 2);
    REQUIRE(results.size() == 3);
    CHECK(results[0].text_id == "id1");
    CHECK(results[0].label);
    CHECK(results[1].text_id == "id2");
    CHECK(results[1].errored());
    CHECK(results[2].text_id == "id3");
    CHECK_FALSE(results[2].label);
    CHECK_FALSE(results[2].errored());

    CHECK(detect_batch({}, fx.deps(*provider), 4).empty());
    CHECK_THROWS_AS(detect_batch(items, fx.deps(*provider), 0), Error);
}

TEST_CASE("result records carry spans, categories, and degradation notes") {
    Fixture fx;
    auto provider = ScriptedProvider::keyed({
        {"Term: bitch", term_response(true, "term explanation")},
        {"Term: sissy", term_response(false)},
        {"Text for analysis:", free_response(true, "free explanation")},
        {"Please merge", "merged text"},
    });
    std::string text = "bitch and sissy and bitch";
    auto result = detect(text, "r1", fx.deps(*provider));
    auto doc = result_to_json(result, fx.vocab);

    CHECK(doc["id"] == "r1");
    CHECK(doc["label"] == true);
    CHECK(doc["explanation"] == "merged text");
    CHECK(doc["provenance"] == "both_fused");
    REQUIRE(doc["matches"].size() == 3);
    // spans come back sorted by start offset
    CHECK(doc["matches"][0]["term"] == "bitch");
    CHECK(doc["matches"][0]["start"] == 0);
    CHECK(doc["matches"][0]["hateful"] == true);
    CHECK(doc["matches"][1]["term"] == "sissy");
    CHECK(doc["matches"][1]["hateful"] == false);
    CHECK(doc["matches"][2]["term"] == "bitch");
    CHECK(doc["matches"][1]["categories"].size() == 1);
    CHECK(doc["matches"][1]["categories"][0] == "Gender");
    CHECK(doc["errors"].empty());

    // an errored item reports its errors in the same record shape
    auto broken = ScriptedProvider::keyed({{"Text for analysis:", "junk"}});
    auto errored = detect("no terms here", "r2", fx.deps(*broken));
    auto errdoc = result_to_json(errored, fx.vocab);
    CHECK(errdoc["label"] == false);
    REQUIRE(!errdoc["errors"].empty());

    auto dir = fs::path(DETOX_BINARY_DIR) / "pipe_test";
    fs::create_directories(dir);
    write_results_jsonl({result, errored}, fx.vocab, dir / "results.jsonl");
    std::ifstream in(dir / "results.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        CHECK(json::parse(line).contains("id"));
        ++lines;
    }
    CHECK(lines == 2);
}

TEST_CASE("provenance names round trip") {
    for (auto p : {Provenance::none, Provenance::term_based, Provenance::term_free,
                   Provenance::both_fused}) {
        auto parsed = parse_provenance(provenance_name(p));
        REQUIRE(parsed.has_value());
        CHECK(*parsed == p);
    }
    CHECK_FALSE(parse_provenance("invented").has_value());
}
