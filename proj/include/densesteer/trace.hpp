#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densesteer/tokenizer.hpp"

namespace densesteer {

using TokenizeFn = std::function<std::vector<TokenId>(std::string_view)>;

// Canonical step delimiter used when steps are re-joined.
inline constexpr std::string_view kStepDelimiter = "\n\n";

// A step's trimmed content as a byte range of the source text.
struct StepSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Splits on runs of two or more newlines; whitespace-only lines inside a run
// count as blank. Segments are trimmed and empty ones dropped.
std::vector<std::string> segment_steps(std::string_view text);

// Same boundaries as segment_steps, reported as offsets into `text`.
std::vector<StepSpan> segment_step_spans(std::string_view text);

std::string join_steps(std::span<const std::string> steps);

bool is_blank(std::string_view text);

struct ReasoningTrace {
  std::string question;
  std::string solution;
  std::vector<std::string> steps;
  std::vector<TokenId> token_ids;  // solution only

  std::size_t n_tokens() const { return token_ids.size(); }
  std::size_t n_steps() const { return steps.size(); }

  // Segments and tokenizes `solution`. The default tokenizer is the byte
  // tokenizer shared by the micro backend.
  static ReasoningTrace make(std::string question, std::string solution,
                             const TokenizeFn& tokenize = ByteTokenizer::tokenize);
};

struct DensityMetrics {
  double rho = 0.0;  // tokens per step
  std::size_t n_tokens = 0;
  std::size_t n_steps = 0;
};

// Throws EmptyTrace when the solution is blank.
DensityMetrics density(const ReasoningTrace& trace);
DensityMetrics density(std::size_t n_tokens, std::size_t n_steps);

// log(rho) - nll. Throws DomainError when rho <= 0 or nll is not finite.
double das(double rho, double mean_nll);

struct TraceSample {
  std::string question_id;
  ReasoningTrace trace;
};

struct CorpusStats {
  std::size_t n_questions = 0;
  double mean_steps = 0.0;
  double mean_rho = 0.0;
  double mean_tokens = 0.0;
  // Absent when fewer than two questions are present.
  std::optional<double> sem_steps;
  std::optional<double> sem_rho;
  std::optional<double> sem_tokens;
};

// Per-question means first, then mean and standard error across questions.
// Result does not depend on the order of `samples`.
CorpusStats corpus_stats(std::span<const TraceSample> samples);

}  // namespace densesteer
