#include "densesteer/answer.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace densesteer {

std::optional<std::string> extract_boxed_answer(std::string_view text) {
  static constexpr std::string_view kOpen = "\\boxed{";
  std::optional<std::string> last;
  std::size_t from = 0;
  while (true) {
    const std::size_t at = text.find(kOpen, from);
    if (at == std::string_view::npos) break;
    const std::size_t body = at + kOpen.size();
    int depth = 1;
    std::size_t i = body;
    for (; i < text.size(); ++i) {
      if (text[i] == '{') {
        ++depth;
      } else if (text[i] == '}' && --depth == 0) {
        break;
      }
    }
    if (depth == 0) last = std::string(text.substr(body, i - body));
    from = body;
  }
  return last;
}

std::string normalize_answer(std::string_view raw) {
  std::string s;
  s.reserve(raw.size());
  for (char c : raw) {
    if (c != ',') s.push_back(c);
  }
  const auto trim = [](std::string& t) {
    std::size_t b = 0, e = t.size();
    while (b < e && std::isspace(static_cast<unsigned char>(t[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(t[e - 1]))) --e;
    t = t.substr(b, e - b);
  };
  trim(s);
  while (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
    s = s.substr(1, s.size() - 2);
    trim(s);
  }
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

namespace {

std::optional<double> parse_decimal(const std::string& s) {
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  std::size_t digits = 0;
  bool dot = false;
  for (; i < s.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      ++digits;
    } else if (s[i] == '.' && !dot) {
      dot = true;
    } else {
      return std::nullopt;
    }
  }
  if (digits == 0) return std::nullopt;
  return std::strtod(s.c_str(), nullptr);
}

}  // namespace

bool answers_match(std::string_view pred, std::string_view gold) {
  const std::string p = normalize_answer(pred);
  const std::string g = normalize_answer(gold);
  const auto pn = parse_decimal(p);
  const auto gn = parse_decimal(g);
  if (pn && gn) return std::fabs(*pn - *gn) <= 1e-6;
  return p == g;
}

}  // namespace densesteer
