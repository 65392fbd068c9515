#include "densesteer/records.hpp"

#include "densesteer/errors.hpp"
#include "densesteer/io.hpp"

namespace densesteer {

void for_each_jsonl(std::string_view content,
                    const std::function<void(std::size_t, const json&)>& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    const std::string_view line = content.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (is_blank(line)) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(line_no, "record is not a JSON object");
    try {
      fn(line_no, rec);
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

namespace {

std::string id_field(const json& rec) {
  const json& v = rec.at("question_id");
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

std::string traces_to_jsonl(std::span<const TraceRecord> traces) {
  std::string out;
  for (const TraceRecord& t : traces) {
    const json rec = {{"question_id", t.question_id},
                      {"question", t.question},
                      {"solution", t.solution},
                      {"sample_index", t.sample_index}};
    out += json_dump(rec);
    out.push_back('\n');
  }
  return out;
}

std::vector<TraceRecord> traces_from_jsonl(std::string_view content) {
  std::vector<TraceRecord> out;
  for_each_jsonl(content, [&](std::size_t, const json& rec) {
    TraceRecord t;
    t.question_id = id_field(rec);
    t.question = rec.value("question", "");
    t.solution = rec.at("solution").get<std::string>();
    t.sample_index = rec.value("sample_index", std::size_t{0});
    out.push_back(std::move(t));
  });
  return out;
}

std::vector<TraceRecord> read_traces(const std::filesystem::path& path) {
  return traces_from_jsonl(read_file(path));
}

std::string pairs_to_jsonl(std::span<const ContrastivePair> pairs) {
  std::string out;
  for (const ContrastivePair& p : pairs) {
    const json rec = {{"question_id", p.question_id},
                      {"question", p.question},
                      {"negative", p.negative.solution},
                      {"positive", p.positive.solution},
                      {"rewriter_tag", p.rewriter_tag}};
    out += json_dump(rec);
    out.push_back('\n');
  }
  return out;
}

std::vector<ContrastivePair> pairs_from_jsonl(std::string_view content,
                                              const TokenizeFn& tokenize) {
  std::vector<ContrastivePair> out;
  for_each_jsonl(content, [&](std::size_t line_no, const json& rec) {
    ContrastivePair p;
    p.question_id = id_field(rec);
    p.question = rec.at("question").get<std::string>();
    p.negative = ReasoningTrace::make(p.question, rec.at("negative").get<std::string>(), tokenize);
    p.positive = ReasoningTrace::make(p.question, rec.at("positive").get<std::string>(), tokenize);
    p.rewriter_tag = rec.value("rewriter_tag", "");
    if (is_blank(p.negative.solution) || is_blank(p.positive.solution)) {
      throw ParseError(line_no, "pair has an empty trace");
    }
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<ContrastivePair> read_pairs(const std::filesystem::path& path,
                                        const TokenizeFn& tokenize) {
  return pairs_from_jsonl(read_file(path), tokenize);
}

}  // namespace densesteer
