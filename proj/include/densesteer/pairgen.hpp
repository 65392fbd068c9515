#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densesteer/dataset.hpp"
#include "densesteer/model.hpp"
#include "densesteer/prompts.hpp"
#include "densesteer/rewriter_client.hpp"
#include "densesteer/steering.hpp"
#include "densesteer/trace.hpp"

namespace densesteer {

enum class RewriterMode { kRuleBased, kExternal, kRandomCompression };

RewriterMode parse_rewriter_mode(std::string_view s);
std::string_view to_string(RewriterMode m);

// A step opening with one of these words (followed by a non-letter or the
// end of the step) continues the previous one.
inline constexpr std::array<std::string_view, 5> kContinuationConnectives = {
    "So", "Therefore", "Thus", "Then", "Hence"};

struct RewriterConfig {
  RewriterMode mode = RewriterMode::kRuleBased;
  std::size_t max_merges_per_trace = 3;
  // Steps with fewer tokens than this are "short" for the rule-based rewriter.
  std::size_t short_step_threshold = 12;
  std::optional<std::uint64_t> merge_seed;  // random-compression only
  ExternalRewriterConfig external;           // external only

  // Throws ConfigError.
  void validate() const;
};

// Left-to-right scan over adjacent steps (i, i+1). The pair merges when both
// steps are short or step i+1 opens with a continuation connective. A merged
// pair is not merged again; the scan resumes at i+2. Merging replaces the
// delimiter between the two steps with a single space; every other byte of
// the solution is kept. Stops after max_merges_per_trace merges.
ReasoningTrace rule_rewrite(const ReasoningTrace& trace, const RewriterConfig& config,
                            const TokenizeFn& tokenize = ByteTokenizer::tokenize);

// Boundaries the random compressor removes for an n-step trace: std::mt19937_64
// seeded with `seed`, partial Fisher-Yates over boundary indices 0..n-2 with
// swap index j + next() % (m - j), first k kept, returned ascending.
std::vector<std::size_t> sample_boundaries(std::size_t n_steps, std::uint64_t seed,
                                           std::size_t k_merges);

// Removes k sampled boundaries (each replaced by one space).
// Throws DomainError unless 1 <= k_merges < n_steps.
ReasoningTrace random_compress(const ReasoningTrace& trace, std::uint64_t seed,
                               std::size_t k_merges,
                               const TokenizeFn& tokenize = ByteTokenizer::tokenize);

// Solution with step delimiters removed and whitespace runs collapsed.
std::string content_signature(std::string_view solution);

// "<<...>>" spans in order of appearance.
std::vector<std::string> special_markers(std::string_view text);

// Character-level (Unicode scalar) edit distance.
std::size_t levenshtein(std::string_view a, std::string_view b);

struct AuditReport {
  double steps_neg = 0.0;
  double steps_pos = 0.0;
  double density_neg = 0.0;
  double density_pos = 0.0;
  double edit_similarity = 1.0;
  double adjacent_merge_ratio = 0.0;
  bool answer_preserved = true;
  bool markers_preserved = true;
};

// edit_similarity = 1 - lev(neg, pos) / max(len_neg, len_pos);
// adjacent_merge_ratio = (steps_neg - steps_pos) / max(steps_neg - 1, 1),
// clamped to [0, 1]; answers compare with answers_match (both absent counts as
// preserved); markers_preserved when every "<<...>>" span of the negative
// appears in the positive at least as often.
AuditReport audit(const ContrastivePair& pair);

struct AuditSummary {
  std::size_t n_pairs = 0;
  AuditReport mean;  // booleans: all pairs
  double answer_preserved_rate = 0.0;
  double markers_preserved_rate = 0.0;
};

AuditSummary summarize_audits(std::span<const AuditReport> reports);

struct TraceRecord {
  std::string question_id;
  std::string question;
  std::string solution;
  std::size_t sample_index = 0;
};

struct GenerationOptions {
  std::size_t max_new_tokens = 2048;
  std::size_t samples_per_question = 1;
  prompts::Style style = prompts::Style::kCot;
  int workers = 1;
};

struct GenerationFailure {
  std::string question_id;
  std::string reason;
};

struct NegativeSet {
  std::vector<TraceRecord> traces;  // id order, then sample index
  std::vector<GenerationFailure> failures;
};

// Decoded generation for one question. Invalid UTF-8 is replaced so the text
// can be persisted.
std::string generate_solution(const LanguageModel& model, std::string_view question,
                              std::size_t max_new_tokens, const InjectionHook* hook = nullptr,
                              prompts::Style style = prompts::Style::kCot);

NegativeSet generate_negatives(const LanguageModel& model, std::span<const EvalItem> questions,
                               const GenerationOptions& opts = {});

struct BuildPairsOptions {
  GenerationOptions generation;
  // Drop questions whose negative does not reach the gold answer.
  bool drop_wrong_negatives = false;
  ChatCompletionsClient* client = nullptr;  // required in external mode
};

struct PairExclusion {
  std::string question_id;
  std::string reason;
};

struct PairSet {
  std::vector<ContrastivePair> pairs;  // question-id order
  std::vector<AuditReport> audits;
  std::vector<PairExclusion> exclusions;
};

// Seed random-compression uses for one question: merge_seed XOR FNV-1a-64(id).
std::uint64_t question_seed(std::uint64_t merge_seed, std::string_view question_id);

// Walks questions in id order and keeps the first n_pairs candidates whose
// audit preserves both the answer and the markers. Throws InsufficientPairs.
PairSet build_pairs(const LanguageModel& model, std::vector<EvalItem> questions,
                    const RewriterConfig& config, std::size_t n_pairs,
                    const BuildPairsOptions& opts = {});

}  // namespace densesteer
