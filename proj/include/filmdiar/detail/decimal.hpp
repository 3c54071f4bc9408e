// Copyright 2026 The filmdiar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Decimal helpers for time values read from and written to text formats.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

namespace filmdiar::detail {

/// Strict decimal number: optional '-', digits, optional '.' digits.
inline bool is_plain_decimal(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && s[i] == '-') ++i;
  bool digits = false;
  bool dot = false;
  for (; i < s.size(); ++i) {
    if (s[i] >= '0' && s[i] <= '9') {
      digits = true;
    } else if (s[i] == '.' && !dot) {
      dot = true;
    } else {
      return false;
    }
  }
  return digits;
}

/// Parses a finite real. Accepts plain decimals and exponent notation;
/// rejects "nan", "inf", hex floats and trailing garbage.
inline std::optional<double> parse_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  for (char c : s) {
    const bool ok = (c >= '0' && c <= '9') || c == '.' || c == '-' ||
                    c == '+' || c == 'e' || c == 'E';
    if (!ok) return std::nullopt;
  }
  double value = 0.0;
  const char *first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value))
    return std::nullopt;
  return value;
}

namespace internal {

struct Scaled {
  __int128 mantissa = 0;
  int scale = 0;  // value = mantissa / 10^scale
};

inline std::optional<Scaled> to_scaled(std::string_view s) {
  if (!is_plain_decimal(s)) return std::nullopt;
  Scaled out;
  bool negative = false;
  bool after_dot = false;
  int digits = 0;
  for (char c : s) {
    if (c == '-') {
      negative = true;
    } else if (c == '.') {
      after_dot = true;
    } else {
      if (++digits > 30) return std::nullopt;
      out.mantissa = out.mantissa * 10 + (c - '0');
      if (after_dot) ++out.scale;
    }
  }
  if (negative) out.mantissa = -out.mantissa;
  return out;
}

inline std::string scaled_to_string(Scaled v) {
  const bool negative = v.mantissa < 0;
  __int128 m = negative ? -v.mantissa : v.mantissa;
  std::string digits;
  do {
    digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(m % 10)));
    m /= 10;
  } while (m > 0);
  while (static_cast<int>(digits.size()) <= v.scale) digits.insert(digits.begin(), '0');
  if (v.scale > 0) digits.insert(digits.end() - v.scale, '.');
  if (negative) digits.insert(digits.begin(), '-');
  return digits;
}

}  // namespace internal

/// Returns the double nearest to the exact decimal sum a + b. Falls back to
/// binary addition when either operand is not a plain decimal.
inline std::optional<double> add_decimals(std::string_view a,
                                          std::string_view b) {
  auto sa = internal::to_scaled(a);
  auto sb = internal::to_scaled(b);
  if (!sa || !sb) {
    auto da = parse_real(a);
    auto db = parse_real(b);
    if (!da || !db) return std::nullopt;
    return *da + *db;
  }
  while (sa->scale < sb->scale) {
    sa->mantissa *= 10;
    ++sa->scale;
  }
  while (sb->scale < sa->scale) {
    sb->mantissa *= 10;
    ++sb->scale;
  }
  internal::Scaled sum{sa->mantissa + sb->mantissa, sa->scale};
  return parse_real(internal::scaled_to_string(sum));
}

/// Rounds to integer milliseconds, half away from zero, using the shortest
/// decimal representation of x (so 1.2345 rounds to 1235).
inline std::int64_t round_to_millis(double x) {
  char buf[512];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x,
                                 std::chars_format::fixed);
  if (ec != std::errc()) return std::llround(x * 1000.0);
  std::string_view s(buf, static_cast<std::size_t>(ptr - buf));

  bool negative = false;
  if (!s.empty() && s.front() == '-') {
    negative = true;
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  std::string_view int_part = s.substr(0, dot);
  std::string_view frac = dot == std::string_view::npos ? std::string_view{}
                                                        : s.substr(dot + 1);
  std::int64_t ms = 0;
  for (char c : int_part) ms = ms * 10 + (c - '0');
  for (std::size_t i = 0; i < 3; ++i) {
    ms = ms * 10 + (i < frac.size() ? frac[i] - '0' : 0);
  }
  if (frac.size() > 3 && frac[3] >= '5') ++ms;
  return negative ? -ms : ms;
}

/// "1234" -> "1.234"
inline std::string format_millis(std::int64_t ms) {
  char buf[64];
  const bool negative = ms < 0;
  const std::int64_t a = negative ? -ms : ms;
  std::snprintf(buf, sizeof(buf), "%s%lld.%03lld", negative ? "-" : "",
                static_cast<long long>(a / 1000),
                static_cast<long long>(a % 1000));
  return buf;
}

}  // namespace filmdiar::detail
