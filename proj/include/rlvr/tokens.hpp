#pragma once

// Whitespace token rule shared by every module: a token is a maximal run of
// non-whitespace bytes, where whitespace is the ASCII set " \t\n\v\f\r".
// The rule is locale-independent and byte-oriented.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <type_traits>
#include <vector>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace rlvr {

constexpr bool is_token_space(char c) noexcept {
  // ' ' or one of '\t' '\n' '\v' '\f' '\r' (9..13).
  const auto u = static_cast<unsigned char>(c);
  return (u == ' ') | (static_cast<unsigned char>(u - 9) < 5);
}

struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the last byte
};

namespace detail {

// Bit i is set when block[i] is whitespace; `n` <= 16 bytes are examined.
inline std::uint32_t space_mask(const char* block, std::size_t n) noexcept {
#if defined(__SSE2__)
  if (n == 16) {
    const __m128i v = _mm_loadu_si128(reinterpret_cast<const __m128i*>(block));
    const __m128i t = _mm_sub_epi8(v, _mm_set1_epi8(9));
    const __m128i ctl = _mm_cmpeq_epi8(_mm_min_epu8(t, _mm_set1_epi8(4)), t);
    const __m128i sp = _mm_cmpeq_epi8(v, _mm_set1_epi8(' '));
    return static_cast<std::uint32_t>(_mm_movemask_epi8(_mm_or_si128(ctl, sp)));
  }
#endif
  std::uint32_t m = 0;
  for (std::size_t i = 0; i < n; ++i)
    m |= static_cast<std::uint32_t>(is_token_space(block[i])) << i;
  return m;
}

// Visits whitespace masks of consecutive 16-byte blocks.
template <typename Fn>
void for_each_space_block(std::string_view text, Fn&& fn) {
  const std::size_t size = text.size();
  for (std::size_t off = 0; off < size; off += 16) {
    const std::size_t n = std::min<std::size_t>(16, size - off);
    fn(off, n, space_mask(text.data() + off, n));
  }
}

}  // namespace detail

inline std::int64_t count_tokens(std::string_view text) noexcept {
  // Counts token starts: a non-space byte preceded by a space (or the start).
  std::int64_t n = 0;
  std::uint32_t carry = 1;
  detail::for_each_space_block(
      text, [&](std::size_t, std::size_t len, std::uint32_t sp) {
        const std::uint32_t valid = len == 16 ? 0xFFFFu : (1u << len) - 1u;
        const std::uint32_t starts = ~sp & ((sp << 1) | carry) & valid;
        n += std::popcount(starts);
        carry = (sp >> (len - 1)) & 1u;
      });
  return n;
}

// Calls fn(begin, end) for every token, in order. When fn returns bool, a
// false result stops the walk.
template <typename Fn>
void for_each_token(std::string_view text, Fn&& fn) {
  auto emit = [&](std::size_t b, std::size_t e) -> bool {
    if constexpr (std::is_same_v<std::invoke_result_t<Fn&, std::size_t, std::size_t>, bool>)
      return fn(b, e);
    else {
      fn(b, e);
      return true;
    }
  };
  std::size_t start = 0;
  bool open = false;
  std::uint32_t carry = 1;
  const std::size_t size = text.size();
  for (std::size_t off = 0; off < size; off += 16) {
    const std::size_t len = std::min<std::size_t>(16, size - off);
    const std::uint32_t sp = detail::space_mask(text.data() + off, len);
    const std::uint32_t valid = len == 16 ? 0xFFFFu : (1u << len) - 1u;
    // A bit flips wherever space-ness changes: token starts and ends
    // alternate.
    std::uint32_t edges = (sp ^ ((sp << 1) | carry)) & valid;
    while (edges != 0) {
      const std::size_t i = off + static_cast<std::size_t>(std::countr_zero(edges));
      edges &= edges - 1;
      if (open) {
        if (!emit(start, i)) return;
      } else {
        start = i;
      }
      open = !open;
    }
    carry = (sp >> (len - 1)) & 1u;
  }
  if (open) emit(start, size);
}

inline std::vector<std::string_view> split_tokens(std::string_view text) {
  std::vector<std::string_view> out;
  for_each_token(text, [&](std::size_t b, std::size_t e) {
    out.push_back(text.substr(b, e - b));
  });
  return out;
}

inline std::vector<TokenSpan> token_spans(std::string_view text) {
  std::vector<TokenSpan> out;
  for_each_token(text, [&](std::size_t b, std::size_t e) { out.push_back({b, e}); });
  return out;
}

}  // namespace rlvr
