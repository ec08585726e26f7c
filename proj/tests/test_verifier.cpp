#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include "rlvr/random.hpp"
#include "rlvr/verifier.hpp"

using namespace rlvr;

namespace {

NumericTruth numeric(long long n, long long d = 1) { return {Rational(n, d)}; }

std::string repeat(const std::string& s, int times) {
  std::string out;
  for (int i = 0; i < times; ++i) out += s;
  return out;
}

// Independent oracle: distinct windows by ordered set of token vectors.
double brute_dup_fraction(const std::string& text, std::size_t n) {
  const auto toks = split_tokens(text);
  if (toks.size() < n) return 0.0;
  std::set<std::vector<std::string_view>> seen;
  const std::size_t windows = toks.size() - n + 1;
  for (std::size_t i = 0; i < windows; ++i)
    seen.insert(std::vector<std::string_view>(toks.begin() + i, toks.begin() + i + n));
  return static_cast<double>(windows - seen.size()) / static_cast<double>(windows);
}

}  // namespace

TEST(ParseResponse, WellFormed) {
  const auto p = parse_response("<think>abc</think>ans \\box[42]");
  EXPECT_EQ(p.think_text, "abc");
  EXPECT_EQ(p.answer_text, "ans \\box[42]");
  ASSERT_EQ(p.boxed_spans.size(), 1u);
  EXPECT_EQ(p.boxed_spans[0], "42");
  EXPECT_EQ(p.token_length, 2);
}

TEST(ParseResponse, NoTagsTwoBoxes) {
  const auto p = parse_response("no tags \\box[7] \\box[7]");
  EXPECT_EQ(p.think_text, "");
  EXPECT_EQ(p.boxed_spans, (std::vector<std::string>{"7", "7"}));
}

TEST(ParseResponse, OpenTagOnly) {
  const std::string text = "<think>open only";
  const auto p = parse_response(text);
  EXPECT_EQ(p.think_text, "");
  EXPECT_EQ(p.answer_text, text);
}

TEST(ParseResponse, FirstWellFormedPairAndSlashSpelling) {
  const auto p = parse_response(
      "x </think> <think>a b</think> c <think>d</think> /box[1] \\box[2");
  EXPECT_EQ(p.think_text, "a b");
  EXPECT_EQ(p.answer_text, " c <think>d</think> /box[1] \\box[2");
  // The unterminated marker yields no span.
  EXPECT_EQ(p.boxed_spans, (std::vector<std::string>{"1"}));
}

TEST(ParseResponse, NoNestingInBoxes) {
  const auto p = parse_response("\\box[a[b]c] \\box[]");
  EXPECT_EQ(p.boxed_spans, (std::vector<std::string>{"a[b", ""}));
}

TEST(ParseResponse, TotalOnArbitraryBytes) {
  Stream rng = derive_stream(1, StreamPurpose::kEvaluation);
  const std::vector<std::string> pieces = {"<think>", "</think>", "\\box[", "/box[",
                                           "]", " ", "x", "\n", "\xff", "42"};
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    const auto n = uniform_index(rng, 12);
    for (std::uint64_t j = 0; j < n; ++j) s += pieces[uniform_index(rng, pieces.size())];
    const auto p = parse_response(s);
    ASSERT_EQ(p.token_length, count_tokens(s));
    ASSERT_LE(p.think_text.size() + p.answer_text.size(), s.size());
  }
}

TEST(AnswerReward, CanonicalRationalComparison) {
  EXPECT_EQ(answer_reward(parse_response("\\box[0.50]"), numeric(1, 2)), 1.0);
  EXPECT_EQ(answer_reward(parse_response("\\box[2/4]"), numeric(1, 2)), 1.0);
  EXPECT_EQ(answer_reward(parse_response("\\box[0.51]"), numeric(1, 2)), 0.0);
  EXPECT_EQ(answer_reward(parse_response("\\box[half]"), numeric(1, 2)), 0.0);
}

TEST(AnswerReward, LastBoxedSpanCounts) {
  EXPECT_EQ(answer_reward(parse_response("\\box[3] \\box[1/2]"), numeric(1, 2)), 1.0);
  EXPECT_EQ(answer_reward(parse_response("\\box[1/2] \\box[3]"), numeric(1, 2)), 0.0);
}

TEST(AnswerReward, NoBoxedSpanScoresZero) {
  EXPECT_EQ(answer_reward(parse_response("the answer is 1/2"), numeric(1, 2)), 0.0);
}

TEST(AnswerReward, InvariantUnderTruthFormatting) {
  for (const char* truth : {"3/4", "0.75", "6/8"}) {
    const NumericTruth t{*parse_rational(truth)};
    EXPECT_EQ(answer_reward(parse_response("\\box[0.75]"), t), 1.0);
    EXPECT_EQ(answer_reward(parse_response("\\box[3/4]"), t), 1.0);
  }
}

TEST(AnswerReward, CodeRequiresAllTests) {
  CodeTruth truth;
  truth.tests = {{Rational(2), Rational(4)}, {Rational(3), Rational(9)}};
  EXPECT_EQ(answer_reward(parse_response("\\box[x*x]"), truth), 1.0);
  // x+x passes 2->4 but fails 3->9.
  EXPECT_EQ(answer_reward(parse_response("\\box[x+x]"), truth), 0.0);
  EXPECT_EQ(answer_reward(parse_response("\\box[x*]"), truth), 0.0);
  EXPECT_EQ(answer_reward(parse_response("\\box[1/(x-2)]"), truth), 0.0);
  CodeTruth empty;
  EXPECT_EQ(answer_reward(parse_response("\\box[x]"), empty), 0.0);
}

TEST(AnswerReward, Constraints) {
  ConstraintTruth truth;
  truth.constraints = {{Constraint::Kind::kExactlyOneBoxed, {}},
                       {Constraint::Kind::kContainsKeyword, "alarm"}};
  EXPECT_EQ(answer_reward(parse_response("<think>alarm</think> set \\box[ok]"), truth), 0.0);
  EXPECT_EQ(answer_reward(parse_response("<think>t</think> alarm \\box[ok]"), truth), 1.0);
  EXPECT_EQ(answer_reward(parse_response("alarm \\box[a] \\box[b]"), truth), 0.0);
}

TEST(FormatCoefficient, Examples) {
  const std::string fifty = repeat("w ", 50);
  EXPECT_EQ(format_coefficient(parse_response("<think>" + fifty + "</think> \\box[1] \\box[2]")), 0.1);
  EXPECT_EQ(format_coefficient(parse_response("<think>a b c</think> \\box[1]")), 0.1);
  EXPECT_EQ(format_coefficient(parse_response("<think>" + fifty + "</think> \\box[1]")), 1.0);
  // Exactly at the threshold is not brief.
  EXPECT_EQ(format_coefficient(parse_response("<think>" + repeat("w ", 8) + "</think> \\box[1]")), 1.0);
  EXPECT_EQ(format_coefficient(parse_response("<think>" + repeat("w ", 7) + "</think> \\box[1]")), 0.1);
  // Boxes inside the reasoning trace count too.
  EXPECT_EQ(format_coefficient(parse_response("<think>" + fifty + "\\box[1]</think> \\box[1]")), 0.1);
}

TEST(Repetition, RepeatedPhrase) {
  const std::string text = repeat("a b c d ", 20);
  EXPECT_NEAR(duplicate_ngram_fraction(text, 4), 73.0 / 77.0, 1e-15);
  EXPECT_EQ(repetition_coefficient(parse_response(text), 4), 0.1);
  EXPECT_EQ(repetition_coefficient(parse_response(text)), 0.1);
}

TEST(Repetition, DistinctTokens) {
  std::string text;
  for (int i = 0; i < 200; ++i) text += "w" + std::to_string(i) + " ";
  EXPECT_EQ(duplicate_ngram_fraction(text, 8), 0.0);
  EXPECT_EQ(repetition_coefficient(parse_response(text)), 1.0);
}

TEST(Repetition, ShortTexts) {
  EXPECT_EQ(duplicate_ngram_fraction("a b c", 8), 0.0);
  EXPECT_EQ(repetition_coefficient(parse_response("a a a")), 1.0);
  EXPECT_EQ(repetition_coefficient(parse_response("")), 1.0);
  EXPECT_THROW(duplicate_ngram_fraction("a b", 1), InvalidArgument);
}

TEST(Repetition, MatchesBruteForceOracle) {
  Stream rng = derive_stream(2, StreamPurpose::kEvaluation);
  const std::vector<std::string> vocab = {"a", "b", "cc", "dd", "eee", "abcdefghij",
                                          "abcdefghik", "\xc3\xa9"};
  for (int trial = 0; trial < 1500; ++trial) {
    std::string text;
    const auto len = uniform_index(rng, 120);
    const auto alphabet = 1 + uniform_index(rng, vocab.size());
    for (std::uint64_t i = 0; i < len; ++i) {
      text += vocab[uniform_index(rng, alphabet)];
      text += uniform_index(rng, 5) == 0 ? "\n\t " : " ";
    }
    const auto n = static_cast<std::int64_t>(2 + uniform_index(rng, 7));
    const double expect = brute_dup_fraction(text, static_cast<std::size_t>(n));
    ASSERT_EQ(duplicate_ngram_fraction(text, n), expect) << trial;
    for (double ratio : {0.0, 0.1, 0.3, 0.5, 0.9}) {
      ASSERT_EQ(repetition_detected(text, n, ratio), expect > ratio)
          << trial << " ratio " << ratio;
    }
  }
}

TEST(Repetition, DecisionBoundaryIsExact) {
  // 10 windows with 3 duplicates: fraction 0.3 is not above 0.3.
  const std::string text = "a b a b a b a b q r s t u";
  ASSERT_NEAR(duplicate_ngram_fraction(text, 4), 0.3, 1e-15);
  EXPECT_EQ(repetition_detected(text, 4, 0.3),
            duplicate_ngram_fraction(text, 4) > 0.3);
  EXPECT_EQ(repetition_detected(text, 4, 0.29), true);
}

TEST(Repetition, InvariantUnderPermutationWhenDistinct) {
  std::vector<std::string> words;
  for (int i = 0; i < 60; ++i) words.push_back("t" + std::to_string(i * 7919 % 1000));
  Stream rng = derive_stream(3, StreamPurpose::kEvaluation);
  for (int trial = 0; trial < 50; ++trial) {
    for (std::size_t i = words.size(); i > 1; --i)
      std::swap(words[i - 1], words[uniform_index(rng, i)]);
    std::string text;
    for (const auto& w : words) text += w + " ";
    ASSERT_EQ(repetition_coefficient(parse_response(text)), 1.0);
  }
}

TEST(RuleFlags, IndependentlyAssignable) {
  std::string unique;
  for (int i = 0; i < 20; ++i) unique += "u" + std::to_string(i) + " ";
  const std::string looped = repeat("x y z w ", 30);
  for (int mask = 0; mask < 8; ++mask) {
    const bool correct = mask & 1, bad_format = mask & 2, repetitive = mask & 4;
    std::string text = "<think>" + (repetitive ? looped : unique) + "</think> ";
    text += bad_format ? "\\box[9] " : "";
    text += correct ? "\\box[5]" : "\\box[6]";
    const RuleFlags f = rule_flags(parse_response(text), numeric(5));
    EXPECT_EQ(f.answer_correct, correct) << mask;
    EXPECT_EQ(f.format_violation, bad_format) << mask;
    EXPECT_EQ(f.repetition_detected, repetitive) << mask;
  }
}
