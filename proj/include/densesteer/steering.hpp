#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "densesteer/model.hpp"
#include "densesteer/prompts.hpp"
#include "densesteer/trace.hpp"

namespace densesteer {

inline constexpr std::string_view kTagRuleBased = "rule-based";
inline constexpr std::string_view kTagExternal = "external";
inline constexpr std::string_view kTagRandomCompression = "random-compression";

struct ContrastivePair {
  std::string question_id;
  std::string question;
  ReasoningTrace positive;  // dense rewrite
  ReasoningTrace negative;  // the model's own output
  std::string rewriter_tag;
};

struct SteeringVector {
  std::size_t layer = 0;
  std::vector<float> values;
  std::size_t n_pairs = 0;
  std::string model_fingerprint;
  std::string created_from;
};

struct ExtractionOptions {
  // Encode the bare question instead of the chain-of-thought template.
  bool bare_question = false;
  prompts::Style style = prompts::Style::kCot;
  int workers = 1;
};

// Prompt ids used to encode a trace for extraction.
std::vector<TokenId> extraction_prompt(const LanguageModel& model, std::string_view question,
                                       const ExtractionOptions& opts = {});

// Block-`layer` output at the last trace token of prompt + trace, unhooked.
// Throws EmptyTrace, LengthError.
std::vector<double> final_token_state(const LanguageModel& model, std::string_view question,
                                     std::span<const TokenId> trace_ids, std::size_t layer,
                                     const ExtractionOptions& opts = {});

// Mean over pairs of (positive state - negative state), accumulated in double
// in pair-index order. Throws EmptySet; LengthError names the failing pair.
std::vector<double> mean_difference(const LanguageModel& model,
                                    std::span<const ContrastivePair> pairs, std::size_t layer,
                                    const ExtractionOptions& opts = {});

// mean_difference rounded to float and stamped with the model fingerprint.
SteeringVector extract_vector(const LanguageModel& model, std::span<const ContrastivePair> pairs,
                              std::size_t layer, const ExtractionOptions& opts = {});

// Throws FingerprintMismatch unless the fingerprints agree or `force` is set.
InjectionHook make_hook(const SteeringVector& vector, double lambda, PositionPolicy policy,
                        std::string_view active_fingerprint, bool force = false);

inline constexpr std::string_view kVectorFormat = "densesteer-vector";
inline constexpr int kVectorVersion = 1;

std::string serialize_vector(const SteeringVector& v);
// Throws FormatError, VersionError.
SteeringVector deserialize_vector(std::string_view bytes);

void save_vector(const SteeringVector& v, const std::filesystem::path& path);
SteeringVector load_vector(const std::filesystem::path& path);

}  // namespace densesteer
