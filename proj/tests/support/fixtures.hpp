#pragma once

// Shared fixture loaders.

#include <string>
#include <vector>

#include "densesteer/dataset.hpp"
#include "densesteer/model.hpp"
#include "densesteer/prompts.hpp"
#include "densesteer/steering.hpp"
#include "support/gen.hpp"

namespace fixtures {

inline const std::vector<densesteer::EvalItem>& gsm8k_small() {
  static const auto items = densesteer::ingest_dataset(DS_FIXTURES "/gsm8k_small.jsonl",
                                                       densesteer::DatasetFormat::kGsm8kJsonl);
  return items;
}

inline const densesteer::MicroModel& golden_model() {
  static const densesteer::MicroModel m = densesteer::init_micro_model(densesteer::ModelConfig{});
  return m;
}

// BOS + chain-of-thought prompt for the first n fixture questions.
inline std::vector<std::vector<densesteer::TokenId>> cot_prompts(std::size_t n) {
  std::vector<std::vector<densesteer::TokenId>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(densesteer::encode_prompt(golden_model(),
                                            densesteer::prompts::format_cot(gsm8k_small()[i].question)));
  }
  return out;
}

// n generated math traces paired with a copy whose "\n\n" delimiters are
// replaced by single spaces.
inline std::vector<densesteer::ContrastivePair> dense_pairs(std::uint64_t seed, std::size_t n) {
  gen::Rng rng(seed);
  std::vector<densesteer::ContrastivePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const gen::MathTrace t = gen::math_trace(rng);
    std::string dense = t.solution;
    for (std::size_t at; (at = dense.find("\n\n")) != std::string::npos;) dense.replace(at, 2, " ");
    pairs.push_back({std::to_string(i + 1), t.question,
                     densesteer::ReasoningTrace::make(t.question, dense),
                     densesteer::ReasoningTrace::make(t.question, t.solution),
                     std::string(densesteer::kTagRuleBased)});
  }
  return pairs;
}

}  // namespace fixtures
