#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace densesteer {

// Contents of the last balanced \boxed{...} in `text`.
std::optional<std::string> extract_boxed_answer(std::string_view text);

// Trim, drop commas, strip surrounding '$', lowercase.
std::string normalize_answer(std::string_view raw);

// Numeric comparison (absolute tolerance 1e-6) when both normalized sides are
// plain decimals, exact string comparison otherwise. No symbolic algebra.
bool answers_match(std::string_view pred, std::string_view gold);

}  // namespace densesteer
