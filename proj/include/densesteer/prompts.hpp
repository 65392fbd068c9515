#pragma once

#include <string>
#include <string_view>

namespace densesteer::prompts {

// Raw templates, embedded from assets/prompts at build time.
std::string_view cot_template();             // placeholder {problem}
std::string_view dense_rewrite_template();   // placeholders {question}, {original_resp}
std::string_view dense_inference_preamble();

enum class Style { kCot, kDenseInference };

Style parse_style(std::string_view s);

// Chain-of-thought prompt for a question. The dense style prefixes the
// inference-time dense-reasoning rules, separated by a blank line.
std::string format_cot(std::string_view problem, Style style = Style::kCot);

std::string format_dense_rewrite(std::string_view question, std::string_view original_resp);

// Replaces every occurrence of `key` (e.g. "{question}") in a single pass, so
// substituted text is never rescanned.
std::string fill(std::string_view tmpl, std::string_view key, std::string_view value);

}  // namespace densesteer::prompts
