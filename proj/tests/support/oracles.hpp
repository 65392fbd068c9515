#pragma once

// Independent reimplementations used as test oracles.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

// Steps as groups of consecutive non-blank lines. A line is blank when it is
// only spaces, tabs, CR, VT or FF.
inline std::vector<std::string> line_group_steps(const std::string& text) {
  auto blank = [](const std::string& l) {
    return std::all_of(l.begin(), l.end(), [](char c) {
      return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
    });
  };
  auto trim = [](std::string s) {
    const char* ws = " \t\r\n\v\f";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
  };
  std::vector<std::string> steps;
  std::string cur;
  bool open = false;
  std::size_t i = 0;
  while (i <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', i), text.size());
    const std::string line = text.substr(i, nl - i);
    if (blank(line)) {
      if (open) steps.push_back(trim(cur));
      cur.clear();
      open = false;
    } else {
      cur += open ? "\n" + line : line;
      open = true;
    }
    i = nl + 1;
  }
  if (open) steps.push_back(trim(cur));
  return steps;
}

// Textbook O(nm) Levenshtein over code points (input already decoded).
inline std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> D(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) D[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) D[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      D[i][j] = std::min({D[i - 1][j] + 1, D[i][j - 1] + 1,
                          D[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return D[a.size()][b.size()];
}

// Minimal UTF-8 decoder for well-formed input.
inline std::u32string utf8_decode(const std::string& s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

// FNV-1a 64 over a byte string, for checksumming outputs in tests.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace oracle
