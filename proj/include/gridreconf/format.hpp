#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "gridreconf/network.hpp"

namespace gridreconf {

/// Round to `digits` decimals, halves away from zero. Non-finite values pass through.
inline double round_to(double v, int digits) {
  if (!std::isfinite(v)) return v;
  const double scale = std::pow(10.0, digits);
  const double scaled = v * scale;
  if (!std::isfinite(scaled) || std::abs(scaled) >= 9e15) return v;
  return std::round(scaled) / scale;
}

inline Complex round_to(Complex v, int digits) { return {round_to(v.real(), digits), round_to(v.imag(), digits)}; }

/// Fixed notation with `digits` decimals, trailing zeros stripped, at least one decimal kept
/// ("1.0", "0.999", "14.349"). A negative `digits` selects the shortest round-trip form.
inline std::string format_decimal(double v, int digits = -1) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::to_chars_result r = digits < 0 ? std::to_chars(buf, buf + sizeof buf, v)
                                      : std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  std::string s(buf, r.ptr);
  if (s.find_first_of("eE") != std::string::npos) return s;
  if (s.find('.') == std::string::npos) return s + ".0";
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.push_back('0');
  if (s == "-0.0") s = "0.0";
  return s;
}

/// Python-style complex literal: "0j", "(0.0333+0j)", "(0.0174+0.0116j)".
inline std::string format_complex(Complex c, int digits = -1) {
  auto part = [&](double v) {
    std::string s = format_decimal(v, digits);
    if (s.size() > 2 && s.ends_with(".0")) s.resize(s.size() - 2);
    return s;
  };
  if (c.real() == 0.0 && !std::signbit(c.real())) return part(c.imag()) + "j";
  std::string im = part(c.imag());
  if (im.front() != '-') im.insert(im.begin(), '+');
  return "(" + part(c.real()) + im + "j)";
}

inline std::string format_pair_list(std::span<const LinePair> pairs, bool compact, bool brackets) {
  std::string out = brackets ? "[" : "";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += ", ";
    out += "(" + std::to_string(pairs[i].lo) + (compact ? "," : ", ") + std::to_string(pairs[i].hi) + ")";
  }
  if (brackets) out += "]";
  return out;
}

inline std::string format_number_list(std::span<const double> values, int digits, bool brackets) {
  std::string out = brackets ? "[" : "";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format_decimal(values[i], digits);
  }
  if (brackets) out += "]";
  return out;
}

inline std::string format_complex_list(std::span<const Complex> values, int digits) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format_complex(values[i], digits);
  }
  return out + "]";
}

/// 64-bit FNV-1a; stable across platforms, used for manifest and config hashes.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

/// Forward-only cursor over text used by the list readers and the response parser.
class Scanner {
 public:
  explicit Scanner(std::string_view text, std::size_t pos = 0) : text_(text), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }
  bool done() const { return pos_ >= text_.size(); }
  char peek() const { return done() ? '\0' : text_[pos_]; }

  void skip_space() {
    while (!done() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) ++pos_;
  }
  void skip_space_and_newlines() {
    while (!done() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_space();
    if (peek() != c) return false;
    ++pos_;
    return true;
  }

  std::optional<double> number() {
    skip_space();
    std::size_t start = pos_;
    if (peek() == '+') ++pos_;
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr == first || !std::isfinite(v)) {
      pos_ = start;
      return std::nullopt;
    }
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return v;
  }

  std::optional<long long> integer() {
    skip_space();
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    long long v = 0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr == first) return std::nullopt;
    // reject "12.5" as an integer
    if (ptr != last && (*ptr == '.' || *ptr == 'e' || *ptr == 'E')) return std::nullopt;
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return v;
  }

  /// "(a, b)" with integer bus ids; orientation is canonicalized.
  std::optional<LinePair> pair() {
    std::size_t start = pos_;
    auto fail = [&]() -> std::optional<LinePair> {
      pos_ = start;
      return std::nullopt;
    };
    if (!eat('(')) return fail();
    auto a = integer();
    if (!a || !eat(',')) return fail();
    auto b = integer();
    if (!b || !eat(')')) return fail();
    constexpr long long lim = 1'000'000'000;
    if (*a < -lim || *a > lim || *b < -lim || *b > lim) return fail();
    return LinePair{static_cast<BusId>(*a), static_cast<BusId>(*b)};
  }

  /// Python complex literal: "0j", "0.5j", "(0.1+0.2j)", "(0.1-0j)", or a bare real.
  std::optional<Complex> complex_value() {
    std::size_t start = pos_;
    skip_space();
    if (eat('(')) {
      auto re = number();
      if (!re) {
        pos_ = start;
        return std::nullopt;
      }
      skip_space();
      Complex out{*re, 0.0};
      if (peek() == 'j') {  // "(0.5j)"
        ++pos_;
        out = {0.0, *re};
      } else if (peek() == '+' || peek() == '-') {
        const double sign = peek() == '-' ? -1.0 : 1.0;
        ++pos_;
        auto im = number();
        if (!im || peek() != 'j') {
          pos_ = start;
          return std::nullopt;
        }
        ++pos_;
        out = {*re, sign * *im};
      }
      if (!eat(')')) {
        pos_ = start;
        return std::nullopt;
      }
      return out;
    }
    auto v = number();
    if (!v) {
      pos_ = start;
      return std::nullopt;
    }
    if (peek() == 'j') {
      ++pos_;
      return Complex{0.0, *v};
    }
    return Complex{*v, 0.0};
  }

 private:
  std::string_view text_;
  std::size_t pos_;
};

/// Reads a whole cell such as "[(1, 2), (2, 3)]"; throws FormatError on anything else.
inline std::vector<LinePair> parse_pair_list(std::string_view text) {
  Scanner s(text);
  std::vector<LinePair> out;
  const bool bracket = s.eat('[');
  s.skip_space();
  if (!(bracket && s.eat(']'))) {
    while (true) {
      auto p = s.pair();
      if (!p) throw FormatError("expected (a, b) pair in '" + std::string(text.substr(0, 80)) + "'");
      out.push_back(*p);
      if (!s.eat(',')) break;
    }
    if (bracket && !s.eat(']')) throw FormatError("unterminated pair list");
  }
  s.skip_space_and_newlines();
  if (!s.done()) throw FormatError("trailing text after pair list");
  return out;
}

inline std::vector<double> parse_number_list(std::string_view text) {
  Scanner s(text);
  std::vector<double> out;
  const bool bracket = s.eat('[');
  if (!(bracket && s.eat(']'))) {
    while (true) {
      auto v = s.number();
      if (!v) throw FormatError("expected number in '" + std::string(text.substr(0, 80)) + "'");
      out.push_back(*v);
      if (!s.eat(',')) break;
    }
    if (bracket && !s.eat(']')) throw FormatError("unterminated number list");
  }
  s.skip_space_and_newlines();
  if (!s.done()) throw FormatError("trailing text after number list");
  return out;
}

inline std::vector<Complex> parse_complex_list(std::string_view text) {
  Scanner s(text);
  std::vector<Complex> out;
  const bool bracket = s.eat('[');
  if (!(bracket && s.eat(']'))) {
    while (true) {
      auto v = s.complex_value();
      if (!v) throw FormatError("expected complex value in '" + std::string(text.substr(0, 80)) + "'");
      out.push_back(*v);
      if (!s.eat(',')) break;
    }
    if (bracket && !s.eat(']')) throw FormatError("unterminated complex list");
  }
  s.skip_space_and_newlines();
  if (!s.done()) throw FormatError("trailing text after complex list");
  return out;
}

}  // namespace gridreconf
