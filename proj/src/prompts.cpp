#include "densesteer/prompts.hpp"

#include "densesteer/errors.hpp"
#include "prompt_assets.hpp"

namespace densesteer::prompts {

std::string_view cot_template() { return assets::kCot; }
std::string_view dense_rewrite_template() { return assets::kDenseRewrite; }
std::string_view dense_inference_preamble() { return assets::kDenseInference; }

Style parse_style(std::string_view s) {
  if (s == "cot") return Style::kCot;
  if (s == "dense") return Style::kDenseInference;
  throw ConfigError("unknown prompt style: " + std::string(s));
}

std::string fill(std::string_view tmpl, std::string_view key, std::string_view value) {
  std::string out;
  out.reserve(tmpl.size() + value.size());
  std::size_t i = 0;
  while (true) {
    const std::size_t hit = tmpl.find(key, i);
    if (hit == std::string_view::npos) break;
    out.append(tmpl.substr(i, hit - i));
    out.append(value);
    i = hit + key.size();
  }
  out.append(tmpl.substr(i));
  return out;
}

std::string format_cot(std::string_view problem, Style style) {
  std::string prompt = fill(cot_template(), "{problem}", problem);
  if (style == Style::kDenseInference) {
    return std::string(dense_inference_preamble()) + "\n\n" + prompt;
  }
  return prompt;
}

std::string format_dense_rewrite(std::string_view question, std::string_view original_resp) {
  // Split the template at {original_resp} first so a question containing that
  // literal placeholder is not expanded.
  const std::string_view tmpl = dense_rewrite_template();
  const std::string_view key = "{original_resp}";
  const std::size_t at = tmpl.find(key);
  std::string out = fill(tmpl.substr(0, at), "{question}", question);
  if (at != std::string_view::npos) {
    out.append(original_resp);
    out.append(fill(tmpl.substr(at + key.size()), "{question}", question));
  }
  return out;
}

}  // namespace densesteer::prompts
