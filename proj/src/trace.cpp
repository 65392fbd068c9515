#include "densesteer/trace.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "densesteer/errors.hpp"

namespace densesteer {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

}  // namespace

bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), is_space);
}

std::vector<StepSpan> segment_step_spans(std::string_view text) {
  std::vector<StepSpan> spans;
  std::size_t seg_begin = 0;
  const auto close_segment = [&](std::size_t seg_end) {
    std::size_t b = seg_begin;
    std::size_t e = seg_end;
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    if (b < e) spans.push_back({b, e});
  };

  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_space(text[i])) {
      ++i;
      continue;
    }
    // Maximal whitespace run [i, j); it is a boundary if it holds >= 2 newlines.
    std::size_t j = i;
    int newlines = 0;
    while (j < text.size() && is_space(text[j])) {
      if (text[j] == '\n') ++newlines;
      ++j;
    }
    if (newlines >= 2) {
      close_segment(i);
      seg_begin = j;
    }
    i = j;
  }
  close_segment(text.size());
  return spans;
}

std::vector<std::string> segment_steps(std::string_view text) {
  std::vector<std::string> steps;
  for (const StepSpan& s : segment_step_spans(text)) {
    steps.emplace_back(text.substr(s.begin, s.end - s.begin));
  }
  return steps;
}

std::string join_steps(std::span<const std::string> steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i > 0) out += kStepDelimiter;
    out += steps[i];
  }
  return out;
}

ReasoningTrace ReasoningTrace::make(std::string question, std::string solution,
                                    const TokenizeFn& tokenize) {
  ReasoningTrace t;
  t.steps = segment_steps(solution);
  t.token_ids = tokenize(solution);
  t.question = std::move(question);
  t.solution = std::move(solution);
  return t;
}

DensityMetrics density(std::size_t n_tokens, std::size_t n_steps) {
  if (n_steps == 0) throw EmptyTrace("density is undefined for a trace with no steps");
  return {static_cast<double>(n_tokens) / static_cast<double>(n_steps), n_tokens, n_steps};
}

DensityMetrics density(const ReasoningTrace& trace) {
  if (is_blank(trace.solution)) throw EmptyTrace("density is undefined for an empty trace");
  return density(trace.n_tokens(), trace.n_steps());
}

double das(double rho, double mean_nll) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw DomainError("DAS requires rho > 0");
  if (!std::isfinite(mean_nll)) throw DomainError("DAS requires a finite NLL");
  return std::log(rho) - mean_nll;
}

namespace {

struct MeanSem {
  double mean = 0.0;
  std::optional<double> sem;
};

// Sums in ascending value order so the result is independent of input order.
double ordered_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

MeanSem mean_sem(std::vector<double> values) {
  MeanSem out;
  out.mean = ordered_mean(values);
  const std::size_t n = values.size();
  if (n >= 2) {
    std::sort(values.begin(), values.end());
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    out.sem = sd / std::sqrt(static_cast<double>(n));
  }
  return out;
}

}  // namespace

CorpusStats corpus_stats(std::span<const TraceSample> samples) {
  if (samples.empty()) throw EmptySet("corpus_stats needs at least one trace");

  struct Group {
    std::vector<double> steps, rho, tokens;
  };
  std::map<std::string, Group> groups;
  for (const TraceSample& s : samples) {
    const DensityMetrics m = density(s.trace);
    Group& g = groups[s.question_id];
    g.steps.push_back(static_cast<double>(m.n_steps));
    g.rho.push_back(m.rho);
    g.tokens.push_back(static_cast<double>(m.n_tokens));
  }

  std::vector<double> q_steps, q_rho, q_tokens;
  for (auto& [id, g] : groups) {
    q_steps.push_back(ordered_mean(g.steps));
    q_rho.push_back(ordered_mean(g.rho));
    q_tokens.push_back(ordered_mean(g.tokens));
  }

  CorpusStats out;
  out.n_questions = groups.size();
  const MeanSem steps = mean_sem(std::move(q_steps));
  const MeanSem rho = mean_sem(std::move(q_rho));
  const MeanSem tokens = mean_sem(std::move(q_tokens));
  out.mean_steps = steps.mean, out.sem_steps = steps.sem;
  out.mean_rho = rho.mean, out.sem_rho = rho.sem;
  out.mean_tokens = tokens.mean, out.sem_tokens = tokens.sem;
  return out;
}

}  // namespace densesteer
