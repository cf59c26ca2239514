#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "detox/html_defs.hpp"

using namespace detox;

namespace {
const std::set<std::string> kEnHeadings = {"noun", "verb", "adjective", "interjection"};
}

TEST_CASE("single section with ordered list") {
    std::string html =
        "<h3>Noun</h3>"
        "<ol><li>def one</li><li>def <a>two</a></li></ol>";
    auto defs = parse_definitions(html, kEnHeadings);
    REQUIRE(defs.size() == 2);
    CHECK(defs[0] == "def one");
    CHECK(defs[1] == "def two");
}

TEST_CASE("sections that are not part-of-speech are skipped") {
    std::string html =
        "<h3>Pronunciation</h3>"
        "<ul><li>IPA: /tɛst/</li></ul>"
        "<h3>Noun</h3>"
        "<ol><li>a real definition</li></ol>"
        "<h3>References</h3>"
        "<ul><li>some book</li></ul>";
    auto defs = parse_definitions(html, kEnHeadings);
    REQUIRE(defs.size() == 1);
    CHECK(defs[0] == "a real definition");
}

TEST_CASE("two part-of-speech sections concatenate in document order") {
    std::string html =
        "<h3>Noun</h3><ol><li>first noun sense</li><li>second noun sense</li></ol>"
        "<h4>Synonyms</h4><ul><li>not a definition</li></ul>"
        "<h3>Verb</h3><ol><li>verb sense</li></ol>";
    auto defs = parse_definitions(html, kEnHeadings);
    REQUIRE(defs.size() == 3);
    CHECK(defs[0] == "first noun sense");
    CHECK(defs[1] == "second noun sense");
    CHECK(defs[2] == "verb sense");
}

TEST_CASE("rendered heading chrome does not defeat the match") {
    // section headings render with span wrappers and an edit link
    std::string html =
        "<h3><span class=\"mw-headline\" id=\"Noun\">Noun</span>"
        "<span class=\"mw-editsection\">"
        "<span class=\"mw-editsection-bracket\">[</span><a href=\"/e\">edit</a>"
        "<span class=\"mw-editsection-bracket\">]</span></span></h3>\n"
        "<ol><li>wrapped heading still counts</li></ol>";
    auto defs = parse_definitions(html, kEnHeadings);
    REQUIRE(defs.size() == 1);
    CHECK(defs[0] == "wrapped heading still counts");
}

TEST_CASE("nested lists inside an item are excluded") {
    std::string html =
        "<h3>Noun</h3>"
        "<ol>"
        "<li>top sense"
        "<ul><li>usage example to drop</li></ul>"
        " tail text</li>"
        "<li>second sense<dl><dd>quotation to drop</dd></dl></li>"
        "</ol>";
    auto defs = parse_definitions(html, kEnHeadings);
    REQUIRE(defs.size() == 2);
    CHECK(defs[0] == "top sense tail text");
    CHECK(defs[1] == "second sense");
}

TEST_CASE("items without explicit closing tags still split") {
    std::string html = "<h3>Noun</h3><ul><li>alpha<li>beta<li>gamma</ul>";
    auto defs = parse_definitions(html, kEnHeadings);
    REQUIRE(defs.size() == 3);
    CHECK(defs[0] == "alpha");
    CHECK(defs[1] == "beta");
    CHECK(defs[2] == "gamma");
}

TEST_CASE("entities decode and markup never glues words") {
    std::string html =
        "<h3>Noun</h3>"
        "<ol><li>rock &amp; roll, &#39;quoted&#x2019;, caf&#233;, a&nbsp;b</li>"
        "<li><b>bold</b><i>italic</i></li></ol>";
    auto defs = parse_definitions(html, kEnHeadings);
    REQUIRE(defs.size() == 2);
    CHECK(defs[0] == "rock & roll, 'quoted’, café, a b");
    CHECK(defs[1] == "bold italic");
}

TEST_CASE("scripts, styles, and comments are invisible") {
    std::string html =
        "<script>var noun = ['fake'];</script>"
        "<h3>Noun</h3>"
        "<!-- <li>commented out</li> -->"
        "<style>.x { color: red }</style>"
        "<ol><li>kept <!-- inline comment --> text</li></ol>";
    auto defs = parse_definitions(html, kEnHeadings);
    REQUIRE(defs.size() == 1);
    CHECK(defs[0] == "kept text");
}

TEST_CASE("lists outside any section and unparseable input yield nothing") {
    CHECK(parse_definitions("<ol><li>orphan</li></ol>", kEnHeadings).empty());
    CHECK(parse_definitions("", kEnHeadings).empty());
    CHECK(parse_definitions("plain text, no markup", kEnHeadings).empty());
    CHECK(parse_definitions("<h3>Noun</h3><p>prose, no list</p>", kEnHeadings).empty());
}

TEST_CASE("heading match folds case and accents consistently") {
    std::set<std::string> fr = {uni::fold("Nom commun"), uni::fold("Adjectif")};
    std::string html =
        "<h3>NOM COMMUN</h3><ol><li>sens un</li></ol>"
        "<h3>Verbe</h3><ol><li>pas pris</li></ol>";
    auto defs = parse_definitions(html, fr);
    REQUIRE(defs.size() == 1);
    CHECK(defs[0] == "sens un");

    std::set<std::string> el = {uni::fold("Ουσιαστικό")};
    std::string greek =
        "<h4><span class=\"mw-headline\">Ουσιαστικό</span></h4><ul><li>ορισμός</li></ul>";
    auto gdefs = parse_definitions(greek, el);
    REQUIRE(gdefs.size() == 1);
    CHECK(gdefs[0] == "ορισμός");
}

TEST_CASE("greek empty-line and multiple definitions in one page") {
    std::string html =
        "<h3>Ετυμολογία</h3><p>από ...</p>"
        "<h3>Ουσιαστικό</h3>"
        "<ol><li>πρώτος ορισμός</li><li></li><li>δεύτερος ορισμός</li></ol>";
    auto defs = parse_definitions(html, {uni::fold("Ουσιαστικό")});
    REQUIRE(defs.size() == 2);  // empty item dropped
    CHECK(defs[0] == "πρώτος ορισμός");
    CHECK(defs[1] == "δεύτερος ορισμός");
}

TEST_CASE("shipped heading lists load folded for every language") {
    auto data = std::filesystem::path(DETOX_SOURCE_DIR) / "data";
    auto en = load_pos_headings("en", data);
    CHECK(en.count("noun") == 1);
    CHECK(en.count("verb") == 1);
    auto fr = load_pos_headings("fr", data);
    CHECK(fr.count(uni::fold("Nom commun")) == 1);
    auto el = load_pos_headings("el", data);
    CHECK(el.count(uni::fold("Ουσιαστικό")) == 1);
    CHECK_THROWS_AS(load_pos_headings("xx", data), UnsupportedLanguageError);
}
