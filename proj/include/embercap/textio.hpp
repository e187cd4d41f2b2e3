#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "embercap/errors.hpp"

namespace embercap {

/// Split text into lines, dropping a trailing '\r' from each (CRLF input).
inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.emplace_back(text.substr(start));
      break;
    }
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  return lines;
}

inline std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream iss{std::string(line)};
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

/// Parse one finite double; rejects garbage, partial matches, and non-finite values.
inline double parse_double(const std::string& tok, int line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("expected a number, got '" + tok + "'", line);
  if (!std::isfinite(v))
    throw ParseError("non-finite number '" + tok + "'", line);
  return v;
}

inline long parse_int(const std::string& tok, int line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("expected an integer, got '" + tok + "'", line);
  return v;
}

/// Shortest decimal form that round-trips the exact double. Keeps emitted
/// files byte-stable across writes of the same data.
inline std::string format_double(double v) {
  char buf[32];
  int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  for (int prec = 15; prec < 17; ++prec) {
    char shorter[32];
    int m = std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    std::from_chars(shorter, shorter + m, back);
    if (back == v) return std::string(shorter, m);
  }
  return std::string(buf, n);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write via temp file + rename so readers never observe partial content.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace embercap
