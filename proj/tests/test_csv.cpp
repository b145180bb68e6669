#include "catch_amalgamated.hpp"

#include "orthoscore/csv.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace orthoscore;

TEST_CASE("reads a simple table") {
  std::istringstream in("a,b,c\r\n1,2,3\n\"x\",,5\n\n");
  const csv::Table t = csv::read(in);
  REQUIRE(t.header.size() == 3);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][0] == "x");
  CHECK(t.rows[1][1].empty());
  CHECK(t.column("c") == 2);
  CHECK_THROWS_AS(t.column("zzz"), csv::ParseError);
}

TEST_CASE("rejects quoted separators and ragged rows") {
  std::istringstream quoted("a,b\n\"1,5\",2\n");
  CHECK_THROWS_AS(csv::read(quoted), csv::ParseError);
  std::istringstream ragged("a,b\n1,2,3\n");
  CHECK_THROWS_AS(csv::read(ragged), csv::ParseError);
  std::istringstream stray("a,b\n1\"2,3\n");
  CHECK_THROWS_AS(csv::read(stray), csv::ParseError);
  std::istringstream empty("");
  CHECK_THROWS_AS(csv::read(empty), csv::ParseError);
}

TEST_CASE("number parsing and missing markers") {
  CHECK(csv::parse_number("1.5").value() == 1.5);
  CHECK(csv::parse_number("-2e3").value() == -2000.0);
  CHECK(csv::parse_number(" 4 ").value() == 4.0);
  CHECK_FALSE(csv::parse_number("abc").has_value());
  CHECK_FALSE(csv::parse_number("1.5x").has_value());
  CHECK_FALSE(csv::parse_number("").has_value());
  CHECK_FALSE(csv::parse_number("nan").has_value());
  for (const char* m : {"", "NA", "NaN", "nan", "."}) CHECK(csv::is_missing(m));
  CHECK_FALSE(csv::is_missing("0"));
}

TEST_CASE("shortest formatting round-trips") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(-1e6, 1e6);
  for (int k = 0; k < 1000; ++k) {
    const double v = unif(rng) * std::pow(10.0, k % 20 - 10);
    CHECK(csv::parse_number(csv::format_number(v)).value() == v);
  }
  CHECK(csv::format_number(0.1) == "0.1");
  CHECK(csv::format_number(1.8) == "1.8");
  CHECK(csv::format_short(1.23456789) == "1.23457");
  CHECK(csv::format_short(0.964) == "0.964");
}

TEST_CASE("writer output round-trips through the reader") {
  csv::Table t;
  t.header = {"method", "value"};
  t.rows = {{"r-lr", csv::format_number(1.0 / 3.0)}, {"m", csv::format_number(-2.5e-9)}};
  std::ostringstream out;
  csv::write(out, t);
  const std::string text = out.str();
  CHECK(text.back() == '\n');
  std::istringstream in(text);
  const csv::Table back = csv::read(in);
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  CHECK(csv::parse_number(back.rows[0][1]).value() == 1.0 / 3.0);

  t.rows.push_back({"a,b", "1"});
  std::ostringstream bad;
  CHECK_THROWS(csv::write(bad, t));
}
