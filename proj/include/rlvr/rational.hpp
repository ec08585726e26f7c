#pragma once

// Exact rational parsing for answer comparison. Accepted forms, with optional
// surrounding whitespace and an optional leading sign:
//   integer     42, -7, +3
//   decimal     0.50, .5, 5., -1.25
//   fraction    1/2, -3/4, 0.5/2   (numerator and denominator may be decimals)
// Anything else is unparseable.

#include <boost/multiprecision/cpp_int.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace rlvr {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\n' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\n' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Unsigned decimal literal: digits [ '.' digits ] with at least one digit.
inline std::optional<Rational> parse_unsigned_decimal(std::string_view s) {
  if (s.empty() || s.size() > 4096) return std::nullopt;
  BigInt numer = 0;
  BigInt denom = 1;
  bool seen_point = false;
  bool seen_digit = false;
  for (char c : s) {
    if (is_digit(c)) {
      numer = numer * 10 + (c - '0');
      if (seen_point) denom *= 10;
      seen_digit = true;
    } else if (c == '.' && !seen_point) {
      seen_point = true;
    } else {
      return std::nullopt;
    }
  }
  if (!seen_digit) return std::nullopt;
  return Rational(numer, denom);
}

inline std::optional<Rational> parse_signed_decimal(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  auto v = parse_unsigned_decimal(s);
  if (!v) return std::nullopt;
  return negative ? Rational(-*v) : *v;
}

}  // namespace detail

inline std::optional<Rational> parse_rational(std::string_view text) {
  const std::string_view s = detail::trim(text);
  const std::size_t slash = s.find('/');
  if (slash == std::string_view::npos) return detail::parse_signed_decimal(s);
  if (s.find('/', slash + 1) != std::string_view::npos) return std::nullopt;
  auto num = detail::parse_signed_decimal(detail::trim(s.substr(0, slash)));
  auto den = detail::parse_unsigned_decimal(detail::trim(s.substr(slash + 1)));
  if (!num || !den || *den == 0) return std::nullopt;
  return Rational(*num / *den);
}

// Canonical "p/q" (or "p" when q == 1) in lowest terms.
inline std::string format_rational(const Rational& r) {
  const BigInt num = boost::multiprecision::numerator(r);
  const BigInt den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

// Terminating decimal form, if the reduced denominator is 2^a * 5^b.
inline std::optional<std::string> format_decimal(const Rational& r) {
  BigInt den = boost::multiprecision::denominator(r);
  int twos = 0, fives = 0;
  while (den % 2 == 0) { den /= 2; ++twos; }
  while (den % 5 == 0) { den /= 5; ++fives; }
  if (den != 1) return std::nullopt;
  const int places = twos > fives ? twos : fives;
  if (places == 0) return boost::multiprecision::numerator(r).str();
  BigInt scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  const BigInt scaled = boost::multiprecision::numerator(r) * scale /
                        boost::multiprecision::denominator(r);
  const bool negative = scaled < 0;
  std::string digits = (negative ? BigInt(-scaled) : scaled).str();
  if (digits.size() <= static_cast<std::size_t>(places))
    digits.insert(0, static_cast<std::size_t>(places) + 1 - digits.size(), '0');
  digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
  return negative ? "-" + digits : digits;
}

}  // namespace rlvr
