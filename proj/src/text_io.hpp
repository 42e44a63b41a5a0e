#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ots/core.hpp"

namespace ots::detail {

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline double parse_double(const std::string& token) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || end != token.data() + token.size()) {
    throw ConfigError("malformed number '" + token + "'");
  }
  return v;
}

inline void write_array(std::ostream& out, const std::string& name,
                        std::span<const double> values) {
  out << name << ' ' << values.size() << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << format_double(values[i]) << ((i + 1) % 16 == 0 || i + 1 == values.size() ? '\n' : ' ');
  }
}

inline std::string expect_token(std::istream& in, const std::string& what) {
  std::string token;
  if (!(in >> token)) throw ConfigError("unexpected end of file, wanted " + what);
  return token;
}

inline void expect_keyword(std::istream& in, const std::string& keyword) {
  const std::string token = expect_token(in, keyword);
  if (token != keyword) {
    throw ConfigError("expected '" + keyword + "', found '" + token + "'");
  }
}

inline std::vector<double> read_array(std::istream& in, const std::string& name) {
  expect_keyword(in, name);
  const auto count = std::stoull(expect_token(in, name + " count"));
  std::vector<double> values(count);
  for (auto& v : values) v = parse_double(expect_token(in, name + " value"));
  return values;
}

}  // namespace ots::detail
