#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace densesteer {

struct EvalItem {
  std::string question_id;
  std::string question;
  std::string gold_answer;  // normalized, non-empty
};

enum class DatasetFormat { kGsm8kJsonl, kPlainJsonl };

DatasetFormat parse_dataset_format(std::string_view s);

// gsm8k-jsonl: gold is the text after the last "#### " in "answer".
// plain-jsonl: gold is "answer" itself.
// Ids come from "question_id" or "id" when present, else the 1-based line
// number. Blank lines are skipped.
// Throws ParseError (with the line number), MissingGold.
std::vector<EvalItem> parse_dataset(std::string_view content, DatasetFormat format);
std::vector<EvalItem> ingest_dataset(const std::filesystem::path& path, DatasetFormat format);

// Natural order: all-digit ids compare numerically, everything else
// lexicographically, digits before non-digits.
bool id_less(std::string_view a, std::string_view b);

void sort_by_id(std::vector<EvalItem>& items);

struct Split {
  std::vector<EvalItem> validation;
  std::vector<EvalItem> test;
};

// Seeded shuffle (Fisher-Yates over id-sorted items, std::mt19937_64,
// index j + next() % (n - j)), first `validation_size` to validation. Both
// halves are returned in id order.
Split split_items(std::vector<EvalItem> items, std::size_t validation_size, std::uint64_t seed);

}  // namespace densesteer
