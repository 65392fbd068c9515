#pragma once

#include <span>
#include <string>
#include <vector>

#include "densesteer/model.hpp"

namespace densesteer {

struct NllResult {
  double mean_nll = 0.0;  // nats per scored token
  std::vector<double> per_token_nll;
  std::size_t t_count = 0;
};

// Mean negative log-likelihood of `trace_ids` conditioned on `prompt_ids`,
// from a single unhooked forward pass over prompt + trace. Only trace tokens
// are scored. Throws EmptyTrace, LengthError.
NllResult token_nll(const LanguageModel& model, std::span<const TokenId> prompt_ids,
                    std::span<const TokenId> trace_ids);

// -log softmax(logits)[token], evaluated in double.
double token_nll_from_logits(std::span<const float> logits, TokenId token);

// Greedy-generates under each prompt, scores the output under the same model
// and returns the mean over prompts.
double self_likelihood_baseline(const LanguageModel& model,
                                std::span<const std::vector<TokenId>> prompts,
                                std::size_t max_new_tokens);

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

struct NllHistogram {
  double bin_width = 0.0;
  std::vector<HistogramBin> bins;
};

// Bins mean_nll values into [k*w, (k+1)*w). The range spans floor(min/w)*w to
// the bin holding the max. With no values, a single empty bin [0, w) is
// reported. Throws DomainError for a nonpositive width.
NllHistogram nll_histogram(std::span<const NllResult> results, double bin_width);
NllHistogram histogram_of(std::span<const double> values, double bin_width);

std::string histogram_csv(const NllHistogram& h);

}  // namespace densesteer
