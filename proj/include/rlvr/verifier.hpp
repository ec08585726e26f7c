#pragma once

// Rule-based verification of responses: answer correctness against ground
// truth, the format-penalty coefficient and the repetition-penalty
// coefficient. Coefficients are 0.1 when the penalty fires and 1.0 otherwise.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "rlvr/errors.hpp"
#include "rlvr/expr.hpp"
#include "rlvr/rational.hpp"
#include "rlvr/taskgen.hpp"
#include "rlvr/tokens.hpp"

namespace rlvr {

inline constexpr double kPenaltyCoefficient = 0.1;
inline constexpr double kNoPenalty = 1.0;

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";

struct ParsedResponse {
  std::string text;  // full response
  std::string think_text;
  std::string answer_text;
  std::vector<std::string> boxed_spans;  // document order, whole text
  std::int64_t token_length = 0;
};

struct RuleFlags {
  bool answer_correct = false;
  bool format_violation = false;
  bool repetition_detected = false;
};

struct VerifierConfig {
  std::int64_t min_reasoning_tokens = 8;
  std::int64_t max_boxed = 1;
  std::int64_t ngram_n = 8;
  double max_dup_ratio = 0.3;
  expr::Limits sandbox;
};

struct ThinkSplit {
  std::string_view think;
  std::string_view answer;
};

// Single source of truth for the <think> rule: the first "<think>" followed
// by a later "</think>" delimits the reasoning block; otherwise there is no
// block and the whole text is the answer.
inline ThinkSplit split_think(std::string_view text) {
  const std::size_t open = text.find(kThinkOpen);
  if (open == std::string_view::npos) return {{}, text};
  const std::size_t body = open + kThinkOpen.size();
  const std::size_t close = text.find(kThinkClose, body);
  if (close == std::string_view::npos) return {{}, text};
  return {text.substr(body, close - body),
          text.substr(close + kThinkClose.size())};
}

// Payloads of "\box[...]" (the "/box[...]" spelling is accepted too). The
// payload ends at the first ']'; an unterminated marker ends the scan.
inline std::vector<std::string> extract_boxed(std::string_view text) {
  std::vector<std::string> spans;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t a = text.find("\\box[", pos);
    const std::size_t b = text.find("/box[", pos);
    const std::size_t start = std::min(a, b);
    if (start == std::string_view::npos) break;
    const std::size_t body = start + 5;
    const std::size_t close = text.find(']', body);
    if (close == std::string_view::npos) break;
    spans.emplace_back(text.substr(body, close - body));
    pos = close + 1;
  }
  return spans;
}

inline ParsedResponse parse_response(std::string_view text) {
  ParsedResponse out;
  const ThinkSplit split = split_think(text);
  out.text = std::string(text);
  out.think_text = std::string(split.think);
  out.answer_text = std::string(split.answer);
  out.boxed_spans = extract_boxed(text);
  out.token_length = count_tokens(text);
  return out;
}

// ---------------------------------------------------------------------------
// Answer reward

inline bool code_passes(std::string_view candidate, const CodeTruth& truth,
                        const expr::Limits& limits) {
  if (truth.tests.empty()) return false;
  const auto program = expr::parse(candidate, limits);
  if (!program) return false;
  for (const auto& test : truth.tests) {
    const auto got = expr::evaluate(*program, test.input, limits);
    if (!got || *got != test.expected) return false;
  }
  return true;
}

inline bool constraints_hold(const ParsedResponse& parsed,
                             const ConstraintTruth& truth) {
  for (const auto& c : truth.constraints) {
    switch (c.kind) {
      case Constraint::Kind::kExactlyOneBoxed:
        if (parsed.boxed_spans.size() != 1) return false;
        break;
      case Constraint::Kind::kContainsKeyword:
        if (c.keyword.empty() ||
            parsed.answer_text.find(c.keyword) == std::string::npos)
          return false;
        break;
    }
  }
  return true;
}

inline double answer_reward(const ParsedResponse& parsed,
                            const GroundTruth& truth,
                            const VerifierConfig& cfg = {}) {
  return std::visit(
      [&](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, ConstraintTruth>) {
          return constraints_hold(parsed, t) ? 1.0 : 0.0;
        } else {
          if (parsed.boxed_spans.empty()) return 0.0;
          const std::string& last = parsed.boxed_spans.back();
          if constexpr (std::is_same_v<T, NumericTruth>) {
            const auto value = parse_rational(last);
            return value && *value == t.value ? 1.0 : 0.0;
          } else {
            return code_passes(last, t, cfg.sandbox) ? 1.0 : 0.0;
          }
        }
      },
      truth);
}

// ---------------------------------------------------------------------------
// Format penalty

inline bool format_violation(const ParsedResponse& parsed,
                             const VerifierConfig& cfg = {}) {
  const auto boxed = static_cast<std::int64_t>(parsed.boxed_spans.size());
  return boxed > cfg.max_boxed ||
         count_tokens(parsed.think_text) < cfg.min_reasoning_tokens;
}

inline double format_coefficient(const ParsedResponse& parsed,
                                 const VerifierConfig& cfg = {}) {
  return format_violation(parsed, cfg) ? kPenaltyCoefficient : kNoPenalty;
}

// ---------------------------------------------------------------------------
// Repetition penalty

namespace detail {

// Word-at-a-time token hash; only used to bucket windows, equality is always
// confirmed on the bytes. `limit` is the end of the readable buffer, which
// allows a full 8-byte load for the short tail when it fits.
inline std::uint64_t token_hash(const char* p, std::size_t len,
                                const char* limit) noexcept {
  constexpr std::uint64_t kMul = 0x9FB21C651E98DF25ull;
  std::uint64_t h = len * 0x9E3779B97F4A7C15ull;
  while (len >= 8) {
    std::uint64_t w;
    std::memcpy(&w, p, 8);
    h = (h ^ w) * kMul;
    h ^= h >> 29;
    p += 8;
    len -= 8;
  }
  if (len > 0) {
    std::uint64_t w = 0;
    if (limit - p >= 8) {
      std::memcpy(&w, p, 8);
      const unsigned drop = static_cast<unsigned>(8 - len) * 8;
      if constexpr (std::endian::native == std::endian::little)
        w = (w << drop) >> drop;
      else
        w >>= drop;
    } else {
      // Same value the masked load would produce.
      for (std::size_t i = 0; i < len; ++i) {
        const auto byte = static_cast<std::uint64_t>(static_cast<unsigned char>(p[i]));
        if constexpr (std::endian::native == std::endian::little)
          w |= byte << (8 * i);
        else
          w = (w << 8) | byte;
      }
    }
    h = (h ^ w) * kMul;
  }
  h = (h ^ (h >> 32)) * kMul;
  return h ^ (h >> 29);
}

}  // namespace detail

namespace detail {

struct NgramCount {
  std::size_t windows = 0;
  std::size_t duplicates = 0;
};

// Counts repeated n-gram windows. With `stop_ratio` in [0, 1) the scan ends as
// soon as duplicates / windows > stop_ratio is decided; the returned count is
// then partial but lies on the decided side.
inline NgramCount count_ngram_duplicates(std::string_view text, std::int64_t n,
                                         double stop_ratio) {
  if (n < 2) throw InvalidArgument("repetition: n-gram size must be >= 2");
  const auto un = static_cast<std::size_t>(n);
  const auto count = static_cast<std::size_t>(count_tokens(text));
  if (count < un) return {};
  const std::size_t windows = count - un + 1;
  if (windows >= (std::size_t{1} << 31))
    throw InvalidArgument("repetition: text too long");

  // `most` is the largest count d with d / windows <= stop_ratio, found with
  // the same floating-point expression the caller compares.
  const bool early = stop_ratio >= 0.0 && stop_ratio < 1.0;
  std::size_t most = 0;
  if (early) {
    const auto total = static_cast<double>(windows);
    most = static_cast<std::size_t>(stop_ratio * total);
    while (most > 0 && static_cast<double>(most) / total > stop_ratio) --most;
    while (most < windows && static_cast<double>(most + 1) / total <= stop_ratio) ++most;
  }

  // Scratch space is reused across calls on the same thread.
  thread_local std::vector<TokenSpan> tok;
  thread_local std::vector<std::uint64_t> th;
  thread_local std::vector<std::uint64_t> wh;
  thread_local std::vector<std::uint64_t> slots;  // hash fragment << 32 | pos + 1
  tok.resize(count);
  th.resize(count);
  wh.resize(windows);
  int bits = 4;
  while ((std::size_t{1} << bits) < windows * 2) ++bits;
  const std::size_t cap = std::size_t{1} << bits;
  slots.assign(cap, 0);

  auto token = [&](std::size_t k) {
    return text.substr(tok[k].begin, tok[k].end - tok[k].begin);
  };
  auto same_window = [&](std::size_t a, std::size_t b) {
    for (std::size_t j = 0; j < un; ++j)
      if (token(a + j) != token(b + j)) return false;
    return true;
  };

  std::size_t dups = 0;
  std::size_t probed = 0;
  // Probes window `probed`; false once the comparison is decided.
  auto probe = [&]() -> bool {
    const std::size_t w = probed++;
    const std::uint64_t mixed = wh[w];
    const std::uint64_t frag = mixed & 0xFFFFFFFF00000000ull;
    std::size_t idx = static_cast<std::size_t>(mixed >> (64 - bits));
    for (;;) {
      const std::uint64_t slot = slots[idx];
      if (slot == 0) {
        slots[idx] = frag | (w + 1);
        break;
      }
      if ((slot & 0xFFFFFFFF00000000ull) == frag &&
          same_window((slot & 0xFFFFFFFFull) - 1, w)) {
        ++dups;
        break;
      }
      idx = (idx + 1) & (cap - 1);
    }
    return !(early && (dups > most || dups + (windows - probed) <= most));
  };

  constexpr std::uint64_t kBase = 0x9E3779B97F4A7C15ull;
  std::uint64_t top = 1;  // kBase^(n-1)
  for (std::size_t k = 1; k < un; ++k) top *= kBase;
  // Probing trails hashing by kAhead windows so slot loads can be prefetched.
  constexpr std::size_t kAhead = 16;
  std::uint64_t h = 0;
  std::size_t k = 0;
  bool running = true;
  for_each_token(text, [&](std::size_t b, std::size_t e) -> bool {
    tok[k] = {b, e};
    th[k] = detail::token_hash(text.data() + b, e - b, text.data() + text.size());
    if (k >= un) h -= th[k - un] * top;
    h = h * kBase + th[k];
    ++k;
    if (k < un) return true;
    const std::size_t w = k - un;
    wh[w] = h * 0xD6E8FEB86659FD93ull;
#if defined(__GNUC__)
    __builtin_prefetch(&slots[static_cast<std::size_t>(wh[w] >> (64 - bits))], 1);
#endif
    if (w >= kAhead) running = probe();
    return running;
  });
  while (running && probed < windows) running = probe();
  return {windows, dups};
}

}  // namespace detail

// Fraction of token n-gram windows that repeat an earlier window:
// (windows - distinct windows) / windows. Texts with fewer than n tokens have
// no windows and score 0.
inline double duplicate_ngram_fraction(std::string_view text, std::int64_t n) {
  const detail::NgramCount c = detail::count_ngram_duplicates(
      text, n, std::numeric_limits<double>::infinity());
  if (c.windows == 0) return 0.0;
  return static_cast<double>(c.duplicates) / static_cast<double>(c.windows);
}

inline bool repetition_detected(std::string_view text, std::int64_t n = 8,
                                double max_dup_ratio = 0.3) {
  // Same decision as duplicate_ngram_fraction(text, n) > max_dup_ratio, with
  // the scan stopped once the outcome is fixed.
  const detail::NgramCount c =
      detail::count_ngram_duplicates(text, n, max_dup_ratio);
  if (c.windows == 0) return 0.0 > max_dup_ratio;
  return static_cast<double>(c.duplicates) / static_cast<double>(c.windows) >
         max_dup_ratio;
}

inline double repetition_coefficient(const ParsedResponse& parsed,
                                     std::int64_t n = 8,
                                     double max_dup_ratio = 0.3) {
  return repetition_detected(parsed.text, n, max_dup_ratio)
             ? kPenaltyCoefficient
             : kNoPenalty;
}

inline RuleFlags rule_flags(const ParsedResponse& parsed,
                            const GroundTruth& truth,
                            const VerifierConfig& cfg = {}) {
  return {answer_reward(parsed, truth, cfg) == 1.0,
          format_violation(parsed, cfg),
          repetition_detected(parsed.text, cfg.ngram_n, cfg.max_dup_ratio)};
}

}  // namespace rlvr
