#include <gtest/gtest.h>

#include <string>

#include "rlvr/random.hpp"
#include "rlvr/rational.hpp"

using namespace rlvr;

namespace {

Rational q(long long n, long long d = 1) { return Rational(n, d); }

}  // namespace

TEST(ParseRational, CanonicalEquivalents) {
  // 1/2, 0.5, 2/4 and 0.50 are the same value.
  for (const char* s : {"1/2", "0.5", "2/4", "0.50", " 1 / 2 ", "+0.5"}) {
    auto v = parse_rational(s);
    ASSERT_TRUE(v.has_value()) << s;
    EXPECT_EQ(*v, q(1, 2)) << s;
  }
}

TEST(ParseRational, SignsAndIntegers) {
  EXPECT_EQ(*parse_rational("-3"), q(-3));
  EXPECT_EQ(*parse_rational("-6/4"), q(-3, 2));
  EXPECT_EQ(*parse_rational("0"), q(0));
  EXPECT_EQ(*parse_rational("12.125"), q(97, 8));
  EXPECT_EQ(*parse_rational(".5"), q(1, 2));
  EXPECT_EQ(*parse_rational("5."), q(5));
}

TEST(ParseRational, RejectsMalformed) {
  for (const char* s : {"", "abc", "1/0", "1//2", "1/2/3", "--1", "1e3",
                        "0x10", ".", "1/-2", "1 2", "1.2.3", "/2", "2/"}) {
    EXPECT_FALSE(parse_rational(s).has_value()) << s;
  }
}

TEST(ParseRational, HugeValuesStayExact) {
  const std::string big = "123456789012345678901234567890";
  auto v = parse_rational(big + "/" + big + "0");
  ASSERT_TRUE(v);
  EXPECT_EQ(*v, q(1, 10));
}

TEST(FormatRational, LowestTerms) {
  EXPECT_EQ(format_rational(q(2, 4)), "1/2");
  EXPECT_EQ(format_rational(q(-6, 3)), "-2");
  EXPECT_EQ(format_rational(q(0)), "0");
  EXPECT_EQ(format_rational(q(-7, 21)), "-1/3");
}

TEST(FormatDecimal, TerminatingOnly) {
  EXPECT_EQ(format_decimal(q(1, 2)).value(), "0.5");
  EXPECT_EQ(format_decimal(q(-97, 8)).value(), "-12.125");
  EXPECT_EQ(format_decimal(q(3, 40)).value(), "0.075");
  EXPECT_EQ(format_decimal(q(5)).value(), "5");
  EXPECT_FALSE(format_decimal(q(1, 3)).has_value());
}

TEST(FormatRational, RoundTripsThroughParse) {
  Stream rng = derive_stream(11, StreamPurpose::kEvaluation);
  for (int i = 0; i < 2000; ++i) {
    const long long n = static_cast<long long>(uniform_index(rng, 20001)) - 10000;
    const long long d = static_cast<long long>(uniform_index(rng, 999)) + 1;
    const Rational r(n, d);
    ASSERT_EQ(*parse_rational(format_rational(r)), r);
    if (auto dec = format_decimal(r)) ASSERT_EQ(*parse_rational(*dec), r);
  }
}
