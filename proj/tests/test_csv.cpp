#include <catch2/catch_amalgamated.hpp>

#include "detox/csv.hpp"
#include "detox/errors.hpp"

using namespace detox;

TEST_CASE("plain rows") {
    auto rows = csv::parse("a,b,c\n1,2,3\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].fields == std::vector<std::string>{"a", "b", "c"});
    CHECK(rows[1].fields == std::vector<std::string>{"1", "2", "3"});
    CHECK(rows[0].line == 1);
    CHECK(rows[1].line == 2);
}

TEST_CASE("quoted fields with commas newlines and escaped quotes") {
    auto rows = csv::parse("\"a,b\",\"line1\nline2\",\"say \"\"hi\"\"\"\n");
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].fields.size() == 3);
    CHECK(rows[0].fields[0] == "a,b");
    CHECK(rows[0].fields[1] == "line1\nline2");
    CHECK(rows[0].fields[2] == "say \"hi\"");
}

TEST_CASE("crlf and missing trailing newline") {
    auto rows = csv::parse("a,b\r\nc,d");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].fields == std::vector<std::string>{"a", "b"});
    CHECK(rows[1].fields == std::vector<std::string>{"c", "d"});
}

TEST_CASE("line numbers advance past embedded newlines") {
    auto rows = csv::parse("\"x\ny\",1\nz,2\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].line == 3);
}

TEST_CASE("malformed quoting is rejected") {
    CHECK_THROWS_AS(csv::parse("\"unterminated\n"), FormatError);
    CHECK_THROWS_AS(csv::parse("ab\"cd,e\n"), FormatError);
    CHECK_THROWS_AS(csv::parse("\"a\"b,c\n"), FormatError);
}

TEST_CASE("escape round trips through parse") {
    std::vector<std::string> fields = {"plain", "with,comma", "with\"quote", "multi\nline", ""};
    std::string line = csv::write_row(fields);
    auto rows = csv::parse(line);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].fields == fields);
}
