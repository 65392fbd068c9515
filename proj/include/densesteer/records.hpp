#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densesteer/io.hpp"
#include "densesteer/pairgen.hpp"

namespace densesteer {

// Trace corpus lines: {"question_id","question","solution","sample_index"}.
std::string traces_to_jsonl(std::span<const TraceRecord> traces);
std::vector<TraceRecord> traces_from_jsonl(std::string_view content);
std::vector<TraceRecord> read_traces(const std::filesystem::path& path);

// Pair lines: {"question_id","question","negative","positive","rewriter_tag"}.
std::string pairs_to_jsonl(std::span<const ContrastivePair> pairs);
std::vector<ContrastivePair> pairs_from_jsonl(std::string_view content,
                                              const TokenizeFn& tokenize = ByteTokenizer::tokenize);
std::vector<ContrastivePair> read_pairs(const std::filesystem::path& path,
                                        const TokenizeFn& tokenize = ByteTokenizer::tokenize);

// Calls fn(line_number, parsed_object) for each non-blank line; wraps JSON
// failures in ParseError.
void for_each_jsonl(std::string_view content,
                    const std::function<void(std::size_t, const json&)>& fn);

}  // namespace densesteer
