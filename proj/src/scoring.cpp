#include "densesteer/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "densesteer/errors.hpp"

namespace densesteer {

double token_nll_from_logits(std::span<const float> logits, TokenId token) {
  double mx = -INFINITY;
  for (float v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (float v : logits) sum += std::exp(static_cast<double>(v) - mx);
  const double log_z = mx + std::log(sum);
  const double nll = log_z - static_cast<double>(logits[static_cast<std::size_t>(token)]);
  // log_z >= every logit mathematically; clamp the rounding residue.
  return nll < 0.0 ? 0.0 : nll;
}

NllResult token_nll(const LanguageModel& model, std::span<const TokenId> prompt_ids,
                    std::span<const TokenId> trace_ids) {
  if (trace_ids.empty()) throw EmptyTrace("token_nll needs at least one trace token");
  if (prompt_ids.empty()) throw LengthError("token_nll needs a non-empty prompt to condition on");
  const auto limit = static_cast<std::size_t>(model.config().max_seq_len);
  if (prompt_ids.size() + trace_ids.size() > limit) {
    throw LengthError("prompt + trace (" + std::to_string(prompt_ids.size() + trace_ids.size()) +
                      " tokens) exceeds max_seq_len " + std::to_string(limit));
  }

  std::vector<TokenId> seq(prompt_ids.begin(), prompt_ids.end());
  seq.insert(seq.end(), trace_ids.begin(), trace_ids.end());
  const ForwardResult fwd = model.forward(seq);

  NllResult out;
  out.t_count = trace_ids.size();
  out.per_token_nll.reserve(trace_ids.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < trace_ids.size(); ++i) {
    // Token at position p is predicted by the logits at p - 1.
    const std::size_t pos = prompt_ids.size() + i;
    const double nll = token_nll_from_logits(fwd.logits_at(pos - 1), trace_ids[i]);
    out.per_token_nll.push_back(nll);
    sum += nll;
  }
  out.mean_nll = sum / static_cast<double>(out.t_count);
  return out;
}

double self_likelihood_baseline(const LanguageModel& model,
                                std::span<const std::vector<TokenId>> prompts,
                                std::size_t max_new_tokens) {
  if (prompts.empty()) throw EmptySet("self-likelihood baseline needs at least one prompt");
  double sum = 0.0;
  for (const auto& prompt : prompts) {
    const std::vector<TokenId> gen = model.greedy_generate(prompt, max_new_tokens);
    sum += token_nll(model, prompt, gen).mean_nll;
  }
  return sum / static_cast<double>(prompts.size());
}

NllHistogram histogram_of(std::span<const double> values, double bin_width) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw DomainError("histogram bin width must be positive");
  }
  NllHistogram h;
  h.bin_width = bin_width;
  if (values.empty()) {
    h.bins.push_back({0.0, bin_width, 0});
    return h;
  }
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const auto first = static_cast<long long>(std::floor(*mn_it / bin_width));
  const auto last = static_cast<long long>(std::floor(*mx_it / bin_width));
  for (long long k = first; k <= last; ++k) {
    h.bins.push_back({static_cast<double>(k) * bin_width, static_cast<double>(k + 1) * bin_width, 0});
  }
  for (double v : values) {
    const auto k = static_cast<long long>(std::floor(v / bin_width));
    ++h.bins[static_cast<std::size_t>(k - first)].count;
  }
  return h;
}

NllHistogram nll_histogram(std::span<const NllResult> results, double bin_width) {
  std::vector<double> values;
  values.reserve(results.size());
  for (const NllResult& r : results) values.push_back(r.mean_nll);
  return histogram_of(values, bin_width);
}

std::string histogram_csv(const NllHistogram& h) {
  std::string out = "bin_low,bin_high,count\n";
  char buf[96];
  for (const HistogramBin& b : h.bins) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu\n", b.low, b.high, b.count);
    out += buf;
  }
  return out;
}

}  // namespace densesteer
