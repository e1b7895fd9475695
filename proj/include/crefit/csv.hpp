#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <string>
#include <vector>

#include "crefit/errors.hpp"

namespace crefit {

// Strict comma-separated reader: one header row, optional double quotes with
// "" escapes, CRLF tolerated, every row must match the header width.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {
    if (!read_record(header_)) throw SchemaError("csv: empty input, expected a header row");
    if (header_.empty() || (header_.size() == 1 && header_[0].empty()))
      throw SchemaError("csv: header row has no columns");
  }

  const std::vector<std::string>& header() const { return header_; }

  // Reads the next data row into fields; returns false at end of input.
  bool next(std::vector<std::string>& fields) {
    if (!read_record(fields)) return false;
    if (fields.size() == 1 && fields[0].empty() && in_.peek() == EOF) return false;  // trailing blank line
    if (fields.size() != header_.size())
      throw ParseError("csv line " + std::to_string(line_) + ": expected " +
                       std::to_string(header_.size()) + " fields, got " + std::to_string(fields.size()));
    return true;
  }

  std::size_t line() const { return line_; }

 private:
  bool read_record(std::vector<std::string>& fields) {
    std::string raw;
    if (!std::getline(in_, raw)) return false;
    ++line_;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    fields.clear();
    std::string cur;
    bool quoted = false;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      const char c = raw[k];
      if (quoted) {
        if (c == '"') {
          if (k + 1 < raw.size() && raw[k + 1] == '"') {
            cur += '"';
            ++k;
          } else {
            quoted = false;
          }
        } else {
          cur += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (quoted) throw ParseError("csv line " + std::to_string(line_) + ": unterminated quote");
    fields.push_back(cur);
    return true;
  }

  std::istream& in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

inline double parse_double(const std::string& s, std::size_t line, const std::string& column) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  double out = 0.0;
  const auto res = std::from_chars(s.data() + b, s.data() + e, out);
  if (res.ec != std::errc{} || res.ptr != s.data() + e || b == e)
    throw ParseError("csv line " + std::to_string(line) + ": column '" + column +
                     "' has non-numeric value '" + s + "'");
  return out;
}

// Shortest exact decimal round-trip formatting.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  // try to shorten while preserving the value bit-for-bit
  for (int prec = 1; prec < 17; ++prec) {
    char tmp[40];
    std::snprintf(tmp, sizeof(tmp), "%.*g", prec, x);
    double back = 0.0;
    std::sscanf(tmp, "%lf", &back);
    if (back == x) return tmp;
  }
  return buf;
}

}  // namespace crefit
