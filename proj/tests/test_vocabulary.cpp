#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "detox/vocabulary.hpp"

using namespace detox;

namespace {

std::filesystem::path fixtures() {
    return std::filesystem::path(DETOX_SOURCE_DIR) / "tests" / "fixtures";
}

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("characteristic names parse both spellings") {
    CHECK(parse_characteristic("Gender") == IdentityCharacteristic::Gender);
    CHECK(parse_characteristic("gender") == IdentityCharacteristic::Gender);
    CHECK(parse_characteristic("Sexual Orientation") == IdentityCharacteristic::SexualOrientation);
    CHECK(parse_characteristic("SexualOrientation") == IdentityCharacteristic::SexualOrientation);
    CHECK(parse_characteristic("sexual_orientation") == IdentityCharacteristic::SexualOrientation);
    CHECK(parse_characteristic("Socioeconomic") == IdentityCharacteristic::SocioeconomicStatus);
    CHECK(parse_characteristic("Socioeconomic Status") == IdentityCharacteristic::SocioeconomicStatus);
    CHECK(parse_characteristic("Public Institutions") == IdentityCharacteristic::PublicInstitutions);
    CHECK(parse_characteristic("ETHNICITY") == IdentityCharacteristic::Ethnicity);
    CHECK(parse_characteristic("occupation") == IdentityCharacteristic::Occupation);
    CHECK(parse_characteristic("Addiction") == IdentityCharacteristic::Addiction);
    CHECK_FALSE(try_parse_characteristic("Sport Team").has_value());
    CHECK_FALSE(try_parse_characteristic("National Origin").has_value());
    CHECK_THROWS_AS(parse_characteristic(""), ValidationError);
}

TEST_CASE("display names round trip through parse") {
    for (auto c : kAllCharacteristics) CHECK(parse_characteristic(display_name(c)) == c);
}

TEST_CASE("loads the sample csv") {
    auto vocab = load_vocabulary(fixtures() / "vocab_en.csv", "en");
    REQUIRE(vocab.size() == 5);
    const auto& bitch = vocab.entry(0);
    CHECK(bitch.term == "bitch");
    CHECK(bitch.categories ==
          std::vector<IdentityCharacteristic>{IdentityCharacteristic::Gender,
                                              IdentityCharacteristic::SexualOrientation});
    CHECK(bitch.source == "https://en.wiktionary.org/wiki/bitch");
    CHECK(bitch.language == "en");
    CHECK(vocab.entry(3).term == "welfare queen");
}

TEST_CASE("csv and jsonl load the same entries") {
    auto a = load_vocabulary(fixtures() / "vocab_en.csv", "en");
    auto tmp = write_temp("vocab_rt.jsonl", "");
    save_vocabulary_jsonl(a, tmp);
    auto b = load_vocabulary(tmp, "en");
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.entry(i).term == b.entry(i).term);
        CHECK(a.entry(i).description == b.entry(i).description);
        CHECK(a.entry(i).categories == b.entry(i).categories);
        CHECK(a.entry(i).source == b.entry(i).source);
    }
    std::filesystem::remove(tmp);
}

TEST_CASE("csv save and reload is the identity") {
    auto a = load_vocabulary(fixtures() / "vocab_en.csv", "en");
    auto tmp = write_temp("vocab_rt.csv", "");
    save_vocabulary_csv(a, tmp);
    auto b = load_vocabulary(tmp, "en");
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.entry(i).term == b.entry(i).term);
        CHECK(a.entry(i).categories == b.entry(i).categories);
    }
    std::filesystem::remove(tmp);
}

TEST_CASE("whole file rejected on any bad row") {
    auto missing_field = write_temp("vocab_bad1.csv",
                                    "term,description,categories,source\n"
                                    "slur,desc,Race,https://example.org/a\n"
                                    "oops,desc,Race\n");
    CHECK_THROWS_AS(load_vocabulary(missing_field, "en"), FormatError);

    auto bad_category = write_temp("vocab_bad2.csv",
                                   "term,description,categories,source\n"
                                   "slur,desc,NotACategory,https://example.org/a\n");
    CHECK_THROWS_AS(load_vocabulary(bad_category, "en"), ValidationError);

    auto empty_term = write_temp("vocab_bad3.csv",
                                 "term,description,categories,source\n"
                                 "   ,desc,Race,https://example.org/a\n");
    CHECK_THROWS_AS(load_vocabulary(empty_term, "en"), ValidationError);

    auto relative_url = write_temp("vocab_bad4.csv",
                                   "term,description,categories,source\n"
                                   "slur,desc,Race,wiki/slur\n");
    CHECK_THROWS_AS(load_vocabulary(relative_url, "en"), ValidationError);

    auto bad_header = write_temp("vocab_bad5.csv", "word,meaning\nx,y\n");
    CHECK_THROWS_AS(load_vocabulary(bad_header, "en"), FormatError);

    for (auto* name : {"vocab_bad1.csv", "vocab_bad2.csv", "vocab_bad3.csv", "vocab_bad4.csv",
                       "vocab_bad5.csv"})
        std::filesystem::remove(std::filesystem::temp_directory_path() / name);
}

TEST_CASE("validation errors carry the row number") {
    auto p = write_temp("vocab_row.csv",
                        "term,description,categories,source\n"
                        "fine,desc,Race,https://example.org/a\n"
                        "bad,desc,Mystery,https://example.org/b\n");
    try {
        load_vocabulary(p, "en");
        FAIL("expected ValidationError");
    } catch (const ValidationError& ex) {
        CHECK(ex.row == 3);
    }
    std::filesystem::remove(p);
}

TEST_CASE("duplicate term and language is rejected") {
    auto p = write_temp("vocab_dup.csv",
                        "term,description,categories,source\n"
                        "slur,desc,Race,https://example.org/a\n"
                        "SLUR,other desc,Gender,https://example.org/b\n");
    CHECK_THROWS_AS(load_vocabulary(p, "en"), ValidationError);
    std::filesystem::remove(p);
}

TEST_CASE("missing file is its own error") {
    CHECK_THROWS_AS(load_vocabulary(fixtures() / "no_such.csv", "en"), FileNotFoundError);
}

TEST_CASE("unknown language is rejected up front") {
    CHECK_THROWS_AS(load_vocabulary(fixtures() / "vocab_en.csv", "xx"), UnsupportedLanguageError);
}

TEST_CASE("index maps lemma sequences to entries") {
    auto vocab = load_vocabulary(fixtures() / "vocab_en.csv", "en");
    IdentityLemmatizer lx("en");
    vocab.build_index(lx);
    REQUIRE(vocab.indexed());

    const auto* hits = vocab.index().find({"bitch"});
    REQUIRE(hits != nullptr);
    REQUIRE(hits->size() == 1);
    CHECK(vocab.entry(hits->front()).term == "bitch");

    const auto* multi = vocab.index().find({"welfare", "queen"});
    REQUIRE(multi != nullptr);
    CHECK(vocab.entry(multi->front()).term == "welfare queen");

    CHECK(vocab.index().find({"queen"}) == nullptr);
    CHECK(vocab.index().max_sequence_length() == 2);

    const auto* first = vocab.index().by_first_key("welfare");
    REQUIRE(first != nullptr);
    CHECK(first->size() == 1);
}

TEST_CASE("index keys medialize greek final sigma") {
    std::vector<VocabularyEntry> entries;
    VocabularyEntry e;
    e.term = "αλήτης";  // ends in final sigma
    e.description = "d";
    e.categories = {IdentityCharacteristic::Other};
    e.source = "https://el.wiktionary.org/wiki/x";
    e.language = "el";
    entries.push_back(e);
    Vocabulary vocab(std::move(entries), "el");
    IdentityLemmatizer lx("el");
    vocab.build_index(lx);
    const auto* hits = vocab.index().find({lemma_key("αλήτησ")});
    REQUIRE(hits != nullptr);
    CHECK(hits->size() == 1);
}

TEST_CASE("index rejects mismatched lemmatizer language") {
    auto vocab = load_vocabulary(fixtures() / "vocab_en.csv", "en");
    IdentityLemmatizer lx("fr");
    CHECK_THROWS_AS(vocab.build_index(lx), Error);
}
