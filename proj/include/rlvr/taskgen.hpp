#pragma once

// Synthetic reasoning tasks and the environment's correctness model.
//
// A rollout outcome is a (length bucket, correctness) pair. The probability
// that a response in bucket b solves a task of difficulty d saturates with
// the bucket's token count:
//
//   p(b, d) = p_max * (1 - exp(-T_b / (tau0 * (1 + gamma * d))))
//
// so longer reasoning never hurts accuracy but quickly stops helping. Under a
// length penalty the shortest near-saturated bucket becomes optimal.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rlvr/errors.hpp"
#include "rlvr/expr.hpp"
#include "rlvr/random.hpp"
#include "rlvr/rational.hpp"
#include "rlvr/tokens.hpp"

namespace rlvr {

enum class TaskFamily : int {
  kMath = 0,
  kCode = 1,
  kStem = 2,
  kInstructionFollowing = 3,
  kMobileService = 4,
};

inline constexpr std::array<TaskFamily, 5> kAllFamilies = {
    TaskFamily::kMath, TaskFamily::kCode, TaskFamily::kStem,
    TaskFamily::kInstructionFollowing, TaskFamily::kMobileService};

inline constexpr std::size_t kFamilyCount = kAllFamilies.size();

inline std::string_view family_name(TaskFamily f) {
  switch (f) {
    case TaskFamily::kMath: return "Math";
    case TaskFamily::kCode: return "Code";
    case TaskFamily::kStem: return "Stem";
    case TaskFamily::kInstructionFollowing: return "InstructionFollowing";
    case TaskFamily::kMobileService: return "MobileService";
  }
  return "?";
}

inline std::optional<TaskFamily> parse_family(std::string_view name) {
  for (TaskFamily f : kAllFamilies)
    if (family_name(f) == name) return f;
  return std::nullopt;
}

inline std::size_t family_index(TaskFamily f) {
  return static_cast<std::size_t>(f);
}

struct NumericTruth {
  Rational value;
};

struct CodeTest {
  Rational input;
  Rational expected;
};

struct CodeTruth {
  std::vector<CodeTest> tests;  // never empty
};

struct Constraint {
  enum class Kind { kExactlyOneBoxed, kContainsKeyword };
  Kind kind = Kind::kExactlyOneBoxed;
  std::string keyword;  // kContainsKeyword only
};

struct ConstraintTruth {
  std::vector<Constraint> constraints;
};

using GroundTruth = std::variant<NumericTruth, CodeTruth, ConstraintTruth>;

struct TaskInstance {
  std::string id;
  TaskFamily family = TaskFamily::kMath;
  std::string prompt;
  GroundTruth ground_truth;
  double difficulty = 0.0;
  bool think_mode = false;
};

// Which ground-truth alternative each family must carry.
inline bool truth_matches_family(TaskFamily f, const GroundTruth& truth) {
  switch (f) {
    case TaskFamily::kMath:
    case TaskFamily::kStem:
      return std::holds_alternative<NumericTruth>(truth);
    case TaskFamily::kCode:
      return std::holds_alternative<CodeTruth>(truth);
    case TaskFamily::kInstructionFollowing:
    case TaskFamily::kMobileService:
      return std::holds_alternative<ConstraintTruth>(truth);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Environment model

struct EnvModel {
  std::vector<std::int64_t> bucket_tokens = {64, 256, 1024, 4096, 16384};
  std::array<double, kFamilyCount> p_max = {0.95, 0.95, 0.95, 0.95, 0.95};
  double tau0 = 1000.0;
  double gamma = 1.0;

  std::size_t bucket_count() const { return bucket_tokens.size(); }

  void validate() const {
    if (bucket_tokens.empty())
      throw InvalidConfig("env: bucket_tokens must be non-empty");
    for (std::size_t i = 0; i < bucket_tokens.size(); ++i) {
      if (bucket_tokens[i] <= 0)
        throw InvalidConfig("env: bucket_tokens must be positive");
      if (i > 0 && bucket_tokens[i] <= bucket_tokens[i - 1])
        throw InvalidConfig("env: bucket_tokens must be strictly increasing");
    }
    for (double p : p_max)
      if (!(p > 0.0 && p <= 1.0))
        throw InvalidConfig("env: p_max must lie in (0, 1]");
    if (!(tau0 > 0.0)) throw InvalidConfig("env: tau0 must be positive");
    if (!(gamma >= 0.0)) throw InvalidConfig("env: gamma must be >= 0");
  }
};

inline double correctness_probability(const EnvModel& env, TaskFamily family,
                                      std::size_t bucket_index,
                                      double difficulty) {
  if (bucket_index >= env.bucket_tokens.size())
    throw IndexError("correctness_probability: bucket index " +
                     std::to_string(bucket_index) + " out of range");
  if (!(difficulty >= 0.0 && difficulty <= 1.0))
    throw InvalidArgument("correctness_probability: difficulty outside [0,1]");
  const double scale = env.tau0 * (1.0 + env.gamma * difficulty);
  const double tokens = static_cast<double>(env.bucket_tokens[bucket_index]);
  return env.p_max[family_index(family)] * -std::expm1(-tokens / scale);
}

// ---------------------------------------------------------------------------
// Task generation

namespace detail {

inline std::int64_t uniform_int(Stream& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(
                  uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

// Largest-remainder apportionment of `count` slots by weight; ties go to the
// earlier family.
inline std::array<std::int64_t, kFamilyCount> apportion(
    const std::array<double, kFamilyCount>& weights, std::int64_t count) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::array<std::int64_t, kFamilyCount> out{};
  std::array<double, kFamilyCount> rem{};
  std::int64_t assigned = 0;
  for (std::size_t f = 0; f < kFamilyCount; ++f) {
    const double quota = static_cast<double>(count) * weights[f] / total;
    out[f] = static_cast<std::int64_t>(std::floor(quota));
    rem[f] = quota - static_cast<double>(out[f]);
    assigned += out[f];
  }
  while (assigned < count) {
    std::size_t best = kFamilyCount;
    for (std::size_t f = 0; f < kFamilyCount; ++f) {
      if (weights[f] <= 0.0) continue;
      if (best == kFamilyCount || rem[f] > rem[best]) best = f;
    }
    out[best] += 1;
    rem[best] = -1.0;
    ++assigned;
  }
  return out;
}

inline const std::vector<std::string>& keyword_pool(TaskFamily f) {
  static const std::vector<std::string> kInstruction = {
      "concise", "formal",  "bulleted", "summary",
      "title",   "numbered", "polite",  "headline"};
  static const std::vector<std::string> kMobile = {
      "battery", "alarm",  "wifi",     "bluetooth",
      "screen",  "volume", "calendar", "reminder"};
  return f == TaskFamily::kMobileService ? kMobile : kInstruction;
}

inline TaskInstance make_task(std::uint64_t seed, std::size_t index,
                              TaskFamily family, double think_fraction) {
  Stream rng = derive_stream(seed, StreamPurpose::kTaskGeneration,
                             {static_cast<std::uint64_t>(index)});
  TaskInstance t;
  t.id = "t" + std::to_string(seed) + "-" + std::to_string(index);
  t.family = family;
  t.difficulty = uniform01(rng);
  t.think_mode = uniform01(rng) < think_fraction;

  switch (family) {
    case TaskFamily::kMath: {
      const std::int64_t a = uniform_int(rng, -40, 40);
      const std::int64_t b = uniform_int(rng, 1, 12);
      const std::int64_t c = uniform_int(rng, -40, 40);
      const std::int64_t d = uniform_int(rng, 1, 12);
      const Rational value = Rational(a, b) + Rational(c, d);
      t.prompt = "Compute " + std::to_string(a) + "/" + std::to_string(b) +
                 " + " + std::to_string(c) + "/" + std::to_string(d) +
                 ". Put the final answer in \\box[].";
      t.ground_truth = NumericTruth{value};
      break;
    }
    case TaskFamily::kStem: {
      const std::int64_t dist = uniform_int(rng, 1, 900);
      const std::int64_t secs = uniform_int(rng, 1, 60);
      t.prompt = "A cart travels " + std::to_string(dist) + " m in " +
                 std::to_string(secs) +
                 " s at constant speed. Give its speed in m/s in \\box[].";
      t.ground_truth = NumericTruth{Rational(dist, secs)};
      break;
    }
    case TaskFamily::kCode: {
      const std::int64_t c2 = uniform_int(rng, -3, 3);
      const std::int64_t c1 = uniform_int(rng, -9, 9);
      const std::int64_t c0 = uniform_int(rng, -9, 9);
      CodeTruth truth;
      std::vector<std::int64_t> inputs;
      while (inputs.size() < 4) {
        const std::int64_t x = uniform_int(rng, -6, 6);
        bool dup = false;
        for (auto v : inputs) dup = dup || v == x;
        if (!dup) inputs.push_back(x);
      }
      for (std::int64_t x : inputs)
        truth.tests.push_back({Rational(x), Rational(c2 * x * x + c1 * x + c0)});
      t.prompt = "Write an expression in x that maps each test input to its "
                 "expected output. Put the expression in \\box[].";
      t.ground_truth = std::move(truth);
      break;
    }
    case TaskFamily::kInstructionFollowing:
    case TaskFamily::kMobileService: {
      const auto& pool = keyword_pool(family);
      ConstraintTruth truth;
      truth.constraints.push_back({Constraint::Kind::kExactlyOneBoxed, {}});
      const std::size_t first = uniform_index(rng, pool.size());
      truth.constraints.push_back(
          {Constraint::Kind::kContainsKeyword, pool[first]});
      std::string prompt = "Respond mentioning '" + pool[first] + "'";
      if (uniform01(rng) < 0.5) {
        std::size_t second = uniform_index(rng, pool.size() - 1);
        if (second >= first) ++second;
        truth.constraints.push_back(
            {Constraint::Kind::kContainsKeyword, pool[second]});
        prompt += " and '" + pool[second] + "'";
      }
      t.prompt = prompt + ", with exactly one label in \\box[].";
      t.ground_truth = std::move(truth);
      break;
    }
  }
  return t;
}

}  // namespace detail

using FamilyMix = std::map<TaskFamily, double>;

inline std::vector<TaskInstance> generate_tasks(std::uint64_t seed,
                                                std::int64_t count,
                                                const FamilyMix& family_mix,
                                                double think_fraction = 0.5) {
  if (count < 1) throw InvalidConfig("generate_tasks: count must be >= 1");
  if (!(think_fraction >= 0.0 && think_fraction <= 1.0))
    throw InvalidConfig("generate_tasks: think_fraction outside [0,1]");
  std::array<double, kFamilyCount> weights{};
  double total = 0.0;
  for (const auto& [family, w] : family_mix) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw InvalidConfig("generate_tasks: weights must be non-negative");
    weights[family_index(family)] = w;
    total += w;
  }
  if (!(total > 0.0))
    throw InvalidConfig("generate_tasks: family weights are all zero");

  const auto counts = detail::apportion(weights, count);
  std::vector<TaskFamily> order;
  order.reserve(static_cast<std::size_t>(count));
  for (std::size_t f = 0; f < kFamilyCount; ++f)
    order.insert(order.end(), static_cast<std::size_t>(counts[f]),
                 kAllFamilies[f]);
  Stream shuffle = derive_stream(seed, StreamPurpose::kTaskShuffle);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[uniform_index(shuffle, i)]);

  std::vector<TaskInstance> tasks;
  tasks.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    tasks.push_back(detail::make_task(seed, i, order[i], think_fraction));
  return tasks;
}

// ---------------------------------------------------------------------------
// Surrogate responses

struct SynthesisOptions {
  // Matches the verifier's brevity threshold; bucket 0 emits half of it.
  std::int64_t min_reasoning_tokens = 8;
};

namespace detail {

// Degree < n Newton interpolant through the test points, written in the
// expression language without whitespace.
inline std::string interpolating_program(const std::vector<CodeTest>& tests) {
  const std::size_t n = tests.size();
  std::vector<Rational> coef(n);
  for (std::size_t i = 0; i < n; ++i) coef[i] = tests[i].expected;
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = n - 1; i >= j; --i)
      coef[i] = (coef[i] - coef[i - 1]) / (tests[i].input - tests[i - j].input);
  auto lit = [](const Rational& r) { return "(" + format_rational(r) + ")"; };
  std::string out = lit(coef[n - 1]);
  for (std::size_t k = n - 1; k-- > 0;)
    out = lit(coef[k]) + "+(x-" + lit(tests[k].input) + ")*(" + out + ")";
  return out;
}

inline std::string numeric_answer(const Rational& value, bool correct,
                                  Stream& rng) {
  if (!correct) return format_rational(value + 1);
  const std::uint64_t style = uniform_index(rng, 3);
  if (style == 1) {
    if (auto dec = format_decimal(value)) return *dec;
  } else if (style == 2 && boost::multiprecision::denominator(value) != 1) {
    const BigInt k = 2 + static_cast<int>(uniform_index(rng, 3));
    return (boost::multiprecision::numerator(value) * k).str() + "/" +
           (boost::multiprecision::denominator(value) * k).str();
  }
  return format_rational(value);
}

// All 26^3 three-letter lowercase words, each followed by a space.
inline const std::vector<char>& filler_words() {
  static const std::vector<char> table = [] {
    std::vector<char> t;
    t.reserve(26 * 26 * 26 * 4);
    for (char a = 'a'; a <= 'z'; ++a)
      for (char b = 'a'; b <= 'z'; ++b)
        for (char c = 'a'; c <= 'z'; ++c) t.insert(t.end(), {a, b, c, ' '});
    return t;
  }();
  return table;
}

// Appends n filler words. Each 16-bit slice of a draw picks a word by
// multiply-shift (bias below 2^-16 per word, irrelevant for filler).
inline void append_filler(std::string& out, std::int64_t n, Stream& rng) {
  if (n <= 0) return;
  const char* words = filler_words().data();
  const std::size_t old = out.size();
  out.resize(old + static_cast<std::size_t>(n) * 4);
  char* p = out.data() + old;
  std::uint64_t bits = 0;
  int left = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (left == 0) {
      bits = rng();
      left = 4;
    }
    const std::uint64_t w = ((bits & 0xFFFFu) * 17576u) >> 16;
    std::memcpy(p, words + w * 4, 4);
    p += 4;
    bits >>= 16;
    --left;
  }
}

}  // namespace detail

// Emits "<think> ... </think> <answer words> \box[...]" with a whitespace
// token count of exactly bucket_tokens[bucket_index]. Bucket 0 carries a
// think block shorter than the brevity threshold; its remaining tokens move to
// the answer region.
inline std::string synthesize_response(const TaskInstance& task,
                                       const EnvModel& env,
                                       std::size_t bucket_index,
                                       bool is_correct, Stream& rng,
                                       const SynthesisOptions& opts = {}) {
  if (bucket_index >= env.bucket_tokens.size())
    throw IndexError("synthesize_response: bucket index out of range");
  const std::int64_t target = env.bucket_tokens[bucket_index];

  std::string answer_words;
  std::string boxed;
  std::visit(
      [&](const auto& truth) {
        using T = std::decay_t<decltype(truth)>;
        if constexpr (std::is_same_v<T, NumericTruth>) {
          answer_words = "so the answer is";
          boxed = detail::numeric_answer(truth.value, is_correct, rng);
        } else if constexpr (std::is_same_v<T, CodeTruth>) {
          answer_words = "the program is";
          boxed = detail::interpolating_program(truth.tests);
          if (!is_correct) boxed += "+1";
        } else {
          answer_words = "here is the reply";
          for (const auto& c : truth.constraints) {
            if (c.kind != Constraint::Kind::kContainsKeyword) continue;
            if (is_correct) {
              answer_words += " " + c.keyword;
            } else {
              answer_words += " ";
              detail::append_filler(answer_words, 1, rng);
              answer_words.pop_back();
            }
          }
          boxed = "done";
        }
      },
      task.ground_truth);

  const std::int64_t fixed = 3 + count_tokens(answer_words);
  const std::int64_t brief = opts.min_reasoning_tokens / 2;
  std::int64_t think = 0;
  std::int64_t answer_filler = 0;
  if (bucket_index == 0) {
    think = brief;
    answer_filler = target - fixed - think;
  } else {
    think = target - fixed;
  }
  if (answer_filler < 0 || think < 0 ||
      (bucket_index > 0 && think < opts.min_reasoning_tokens))
    throw InvalidConfig("synthesize_response: bucket of " +
                        std::to_string(target) +
                        " tokens cannot hold the response skeleton");

  std::string out;
  out.reserve(static_cast<std::size_t>(target) * 4 + answer_words.size() +
              boxed.size() + 32);
  out += "<think> ";
  detail::append_filler(out, think, rng);
  out += "</think> ";
  detail::append_filler(out, answer_filler, rng);
  out += answer_words;
  out += " \\box[";
  out += boxed;
  out += "]";
  return out;
}

// ---------------------------------------------------------------------------
// Line-delimited JSON import/export

inline nlohmann::json ground_truth_to_json(const GroundTruth& truth) {
  using nlohmann::json;
  return std::visit(
      [](const auto& t) -> json {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, NumericTruth>) {
          return {{"kind", "numeric"}, {"value", format_rational(t.value)}};
        } else if constexpr (std::is_same_v<T, CodeTruth>) {
          json tests = json::array();
          for (const auto& c : t.tests)
            tests.push_back({{"input", format_rational(c.input)},
                             {"expected", format_rational(c.expected)}});
          return {{"kind", "code_tests"}, {"tests", std::move(tests)}};
        } else {
          json cs = json::array();
          for (const auto& c : t.constraints) {
            if (c.kind == Constraint::Kind::kExactlyOneBoxed)
              cs.push_back({{"type", "exactly_one_boxed"}});
            else
              cs.push_back({{"type", "contains_keyword"},
                            {"keyword", c.keyword}});
          }
          return {{"kind", "constraints"}, {"constraints", std::move(cs)}};
        }
      },
      truth);
}

inline Rational rational_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw InvalidArgument(std::string("ground_truth: missing string field '") +
                          key + "'");
  auto r = parse_rational(j.at(key).get<std::string>());
  if (!r)
    throw InvalidArgument(std::string("ground_truth: '") + key +
                          "' is not an exact rational");
  return *r;
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  // Shorthand: a bare string or integer is a numeric truth.
  if (j.is_string() || j.is_number_integer()) {
    auto r = parse_rational(j.is_string() ? j.get<std::string>() : j.dump());
    if (!r) throw InvalidArgument("ground_truth: not an exact rational");
    return NumericTruth{*r};
  }
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw InvalidArgument("ground_truth: expected object with 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "numeric") return NumericTruth{rational_field(j, "value")};
  if (kind == "code_tests") {
    if (!j.contains("tests") || !j.at("tests").is_array())
      throw InvalidArgument("ground_truth: code_tests needs 'tests' array");
    CodeTruth truth;
    for (const auto& t : j.at("tests"))
      truth.tests.push_back(
          {rational_field(t, "input"), rational_field(t, "expected")});
    if (truth.tests.empty())
      throw InvalidArgument("ground_truth: code_tests must be non-empty");
    return truth;
  }
  if (kind == "constraints") {
    if (!j.contains("constraints") || !j.at("constraints").is_array())
      throw InvalidArgument("ground_truth: needs 'constraints' array");
    ConstraintTruth truth;
    for (const auto& c : j.at("constraints")) {
      const std::string type = c.value("type", "");
      if (type == "exactly_one_boxed") {
        truth.constraints.push_back({Constraint::Kind::kExactlyOneBoxed, {}});
      } else if (type == "contains_keyword" && c.contains("keyword") &&
                 c.at("keyword").is_string()) {
        truth.constraints.push_back({Constraint::Kind::kContainsKeyword,
                                     c.at("keyword").get<std::string>()});
      } else {
        throw InvalidArgument("ground_truth: unknown constraint '" + type + "'");
      }
    }
    return truth;
  }
  throw InvalidArgument("ground_truth: unknown kind '" + kind + "'");
}

inline nlohmann::json task_to_json(const TaskInstance& t) {
  return {{"id", t.id},
          {"family", family_name(t.family)},
          {"prompt", t.prompt},
          {"ground_truth", ground_truth_to_json(t.ground_truth)},
          {"difficulty", t.difficulty},
          {"think_mode", t.think_mode}};
}

inline TaskInstance task_from_json(const nlohmann::json& j) {
  try {
    TaskInstance t;
    t.id = j.at("id").get<std::string>();
    auto family = parse_family(j.at("family").get<std::string>());
    if (!family) throw InvalidArgument("task: unknown family");
    t.family = *family;
    t.prompt = j.at("prompt").get<std::string>();
    t.ground_truth = ground_truth_from_json(j.at("ground_truth"));
    t.difficulty = j.at("difficulty").get<double>();
    t.think_mode = j.at("think_mode").get<bool>();
    if (!(t.difficulty >= 0.0 && t.difficulty <= 1.0))
      throw InvalidArgument("task: difficulty outside [0,1]");
    if (!truth_matches_family(t.family, t.ground_truth))
      throw InvalidArgument("task: ground_truth kind does not match family");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("task: ") + e.what());
  }
}

inline void write_tasks_jsonl(std::ostream& out,
                              const std::vector<TaskInstance>& tasks) {
  for (const auto& t : tasks) out << task_to_json(t).dump() << '\n';
}

inline std::vector<TaskInstance> read_tasks_jsonl(std::istream& in) {
  std::vector<TaskInstance> tasks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      tasks.push_back(task_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("tasks line " + std::to_string(lineno) + ": " +
                            e.what());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("tasks line " + std::to_string(lineno) + ": " +
                            e.what());
    }
  }
  return tasks;
}

}  // namespace rlvr
