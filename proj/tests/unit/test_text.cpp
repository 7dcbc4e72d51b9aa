#include <doctest.h>

#include "nlidb/text.hpp"

using namespace nlidb;

TEST_CASE("tokenize splits punctuation and keeps offsets") {
  std::string q = "Which film directed by Jerzy Antczak?";
  auto toks = tokenize(q);
  REQUIRE(toks.size() == 7);
  CHECK(toks[0].text == "which");
  CHECK(toks[5].text == "antczak");
  CHECK(toks[6].text == "?");
  for (const auto& t : toks) {
    CHECK(casefold(q.substr(t.begin, t.end - t.begin)) == t.text);
  }
}

TEST_CASE("underscores separate words and digit groups stay whole") {
  CHECK(tokenize_words("English_Name") == std::vector<std::string>{"english", "name"});
  CHECK(tokenize_words("1,225.5 people") == std::vector<std::string>{"1,225.5", "people"});
  CHECK(tokenize_words("Chopin: Desire") == std::vector<std::string>{"chopin", ":", "desire"});
  CHECK(tokenize_words("don't") == std::vector<std::string>{"don't"});
  CHECK(tokenize_words("64%") == std::vector<std::string>{"64", "%"});
  CHECK(tokenize_words("   ").empty());
}

TEST_CASE("normalize_phrase collapses case and spacing") {
  CHECK(normalize_phrase("  Piotr   ADAMCZYK ") == "piotr adamczyk");
  CHECK(normalize_phrase("Nomination Date") == normalize_phrase("nomination_date"));
}

TEST_CASE("parse_number") {
  CHECK(parse_number("356") == doctest::Approx(356.0));
  CHECK(*parse_number(" 1,225 ") == doctest::Approx(1225.0));
  CHECK(*parse_number("-2.5") == doctest::Approx(-2.5));
  CHECK(*parse_number(".5") == doctest::Approx(0.5));
  CHECK_FALSE(parse_number("nan"));
  CHECK_FALSE(parse_number("inf"));
  CHECK_FALSE(parse_number("64%"));
  CHECK_FALSE(parse_number(""));
  CHECK_FALSE(parse_number("12abc"));
}

TEST_CASE("format_number round-trips") {
  CHECK(format_number(356.0) == "356");
  CHECK(format_number(-4.0) == "-4");
  CHECK(format_number(0.1) == "0.1");
  for (double v : {0.1, 1.0 / 3.0, 1e-7, 123456.789, 2.5e20}) {
    CHECK(*parse_number(format_number(v)) == v);
  }
}

TEST_CASE("function tokens") {
  CHECK(is_stop_word("the"));
  CHECK_FALSE(is_stop_word("film"));
  CHECK(is_punctuation("?"));
  CHECK(is_punctuation("..."));
  CHECK_FALSE(is_punctuation("a."));
  CHECK(is_function_token("of"));
}

TEST_CASE("trim and join") {
  CHECK(trim("\t x y \n") == "x y");
  CHECK(trim("   ").empty());
  CHECK(join({"a", "b", "c"}, "-") == "a-b-c");
}
