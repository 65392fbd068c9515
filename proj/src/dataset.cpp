#include "densesteer/dataset.hpp"

#include <algorithm>
#include <random>

#include "densesteer/answer.hpp"
#include "densesteer/errors.hpp"
#include "densesteer/io.hpp"
#include "densesteer/trace.hpp"

namespace densesteer {

DatasetFormat parse_dataset_format(std::string_view s) {
  if (s == "gsm8k-jsonl") return DatasetFormat::kGsm8kJsonl;
  if (s == "plain-jsonl") return DatasetFormat::kPlainJsonl;
  throw ConfigError("unknown dataset format: " + std::string(s));
}

namespace {

std::string id_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw std::invalid_argument("question id must be a string or an integer");
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

std::vector<EvalItem> parse_dataset(std::string_view content, DatasetFormat format) {
  std::vector<EvalItem> items;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (is_blank(line)) {
      if (end == content.size()) break;
      continue;
    }

    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object() || !rec.contains("question") || !rec["question"].is_string() ||
        !rec.contains("answer")) {
      throw ParseError(line_no, "record needs string \"question\" and \"answer\" fields");
    }

    EvalItem item;
    item.question = rec["question"].get<std::string>();
    try {
      if (rec.contains("question_id")) {
        item.question_id = id_to_string(rec["question_id"]);
      } else if (rec.contains("id")) {
        item.question_id = id_to_string(rec["id"]);
      } else {
        item.question_id = std::to_string(line_no);
      }
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }

    std::string answer;
    if (rec["answer"].is_string()) {
      answer = rec["answer"].get<std::string>();
    } else if (rec["answer"].is_number()) {
      answer = rec["answer"].dump();
    } else {
      throw ParseError(line_no, "\"answer\" must be a string or a number");
    }

    if (format == DatasetFormat::kGsm8kJsonl) {
      const std::size_t at = answer.rfind("#### ");
      if (at == std::string::npos) {
        throw MissingGold("line " + std::to_string(line_no) + ": no \"#### \" marker in answer");
      }
      answer = answer.substr(at + 5);
    }
    item.gold_answer = normalize_answer(answer);
    if (item.gold_answer.empty()) {
      throw MissingGold("line " + std::to_string(line_no) + ": empty gold answer");
    }
    items.push_back(std::move(item));
    if (end == content.size()) break;
  }
  return items;
}

std::vector<EvalItem> ingest_dataset(const std::filesystem::path& path, DatasetFormat format) {
  return parse_dataset(read_file(path), format);
}

bool id_less(std::string_view a, std::string_view b) {
  const bool da = all_digits(a);
  const bool db = all_digits(b);
  if (da && db) {
    const auto strip = [](std::string_view s) {
      const std::size_t nz = s.find_first_not_of('0');
      return nz == std::string_view::npos ? std::string_view("0") : s.substr(nz);
    };
    const std::string_view sa = strip(a), sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
    return a < b;
  }
  if (da != db) return da;
  return a < b;
}

void sort_by_id(std::vector<EvalItem>& items) {
  std::stable_sort(items.begin(), items.end(),
                   [](const EvalItem& x, const EvalItem& y) { return id_less(x.question_id, y.question_id); });
}

Split split_items(std::vector<EvalItem> items, std::size_t validation_size, std::uint64_t seed) {
  if (validation_size > items.size()) {
    throw DomainError("validation size " + std::to_string(validation_size) + " exceeds " +
                      std::to_string(items.size()) + " items");
  }
  sort_by_id(items);
  std::mt19937_64 gen(seed);
  const std::size_t n = items.size();
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const std::size_t r = j + static_cast<std::size_t>(gen() % (n - j));
    std::swap(items[j], items[r]);
  }
  Split s;
  s.validation.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(validation_size));
  s.test.assign(items.begin() + static_cast<std::ptrdiff_t>(validation_size), items.end());
  sort_by_id(s.validation);
  sort_by_id(s.test);
  return s;
}

}  // namespace densesteer
