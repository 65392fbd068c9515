#include "densesteer/pairgen.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <map>
#include <random>

#include "densesteer/answer.hpp"
#include "densesteer/errors.hpp"

namespace densesteer {

RewriterMode parse_rewriter_mode(std::string_view s) {
  if (s == kTagRuleBased) return RewriterMode::kRuleBased;
  if (s == kTagExternal) return RewriterMode::kExternal;
  if (s == kTagRandomCompression) return RewriterMode::kRandomCompression;
  throw ConfigError("unknown rewriter mode: " + std::string(s));
}

std::string_view to_string(RewriterMode m) {
  switch (m) {
    case RewriterMode::kRuleBased:
      return kTagRuleBased;
    case RewriterMode::kExternal:
      return kTagExternal;
    case RewriterMode::kRandomCompression:
      return kTagRandomCompression;
  }
  return "unknown";
}

void RewriterConfig::validate() const {
  if (mode == RewriterMode::kExternal) external.validate();
  if (mode == RewriterMode::kRandomCompression && !merge_seed) {
    throw ConfigError("random-compression needs a merge seed");
  }
}

namespace {

bool starts_with_connective(std::string_view step) {
  for (std::string_view c : kContinuationConnectives) {
    if (step.substr(0, c.size()) != c) continue;
    if (step.size() == c.size()) return true;
    if (!std::isalpha(static_cast<unsigned char>(step[c.size()]))) return true;
  }
  return false;
}

// Rebuilds `solution` with the boundaries flagged in `merged` replaced by a
// single space. merged[i] refers to the gap between spans i and i+1.
std::string merge_boundaries(std::string_view solution, const std::vector<StepSpan>& spans,
                             const std::vector<bool>& merged) {
  std::string out(solution.substr(0, spans.front().begin));
  for (std::size_t k = 0; k < spans.size(); ++k) {
    out.append(solution.substr(spans[k].begin, spans[k].end - spans[k].begin));
    if (k + 1 < spans.size()) {
      if (merged[k]) {
        out.push_back(' ');
      } else {
        out.append(solution.substr(spans[k].end, spans[k + 1].begin - spans[k].end));
      }
    }
  }
  out.append(solution.substr(spans.back().end));
  return out;
}

}  // namespace

ReasoningTrace rule_rewrite(const ReasoningTrace& trace, const RewriterConfig& config,
                            const TokenizeFn& tokenize) {
  const std::vector<StepSpan> spans = segment_step_spans(trace.solution);
  if (spans.size() < 2 || config.max_merges_per_trace == 0) return trace;

  const auto step_text = [&](std::size_t k) {
    return std::string_view(trace.solution).substr(spans[k].begin, spans[k].end - spans[k].begin);
  };
  const auto is_short = [&](std::size_t k) {
    return tokenize(step_text(k)).size() < config.short_step_threshold;
  };

  std::vector<bool> merged(spans.size() - 1, false);
  std::size_t merges = 0;
  std::size_t i = 0;
  while (i + 1 < spans.size() && merges < config.max_merges_per_trace) {
    if ((is_short(i) && is_short(i + 1)) || starts_with_connective(step_text(i + 1))) {
      merged[i] = true;
      ++merges;
      i += 2;
    } else {
      i += 1;
    }
  }
  if (merges == 0) return trace;
  return ReasoningTrace::make(trace.question, merge_boundaries(trace.solution, spans, merged),
                              tokenize);
}

std::vector<std::size_t> sample_boundaries(std::size_t n_steps, std::uint64_t seed,
                                           std::size_t k_merges) {
  if (k_merges < 1 || k_merges >= n_steps) {
    throw DomainError("random compression needs 1 <= k_merges < n_steps (k=" +
                      std::to_string(k_merges) + ", n_steps=" + std::to_string(n_steps) + ")");
  }
  const std::size_t m = n_steps - 1;
  std::vector<std::size_t> idx(m);
  for (std::size_t j = 0; j < m; ++j) idx[j] = j;
  std::mt19937_64 gen(seed);
  for (std::size_t j = 0; j < k_merges; ++j) {
    const std::size_t r = j + static_cast<std::size_t>(gen() % (m - j));
    std::swap(idx[j], idx[r]);
  }
  idx.resize(k_merges);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ReasoningTrace random_compress(const ReasoningTrace& trace, std::uint64_t seed,
                               std::size_t k_merges, const TokenizeFn& tokenize) {
  const std::vector<StepSpan> spans = segment_step_spans(trace.solution);
  const std::vector<std::size_t> chosen = sample_boundaries(spans.size(), seed, k_merges);
  std::vector<bool> merged(spans.size() - 1, false);
  for (std::size_t b : chosen) merged[b] = true;
  return ReasoningTrace::make(trace.question, merge_boundaries(trace.solution, spans, merged),
                              tokenize);
}

std::string content_signature(std::string_view solution) {
  std::string joined;
  for (const std::string& step : segment_steps(solution)) {
    if (!joined.empty()) joined.push_back(' ');
    joined += step;
  }
  std::string out;
  bool in_space = false;
  for (char c : joined) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> special_markers(std::string_view text) {
  std::vector<std::string> out;
  std::size_t from = 0;
  while (true) {
    const std::size_t open = text.find("<<", from);
    if (open == std::string_view::npos) break;
    const std::size_t close = text.find(">>", open + 2);
    if (close == std::string_view::npos) break;
    out.emplace_back(text.substr(open, close + 2 - open));
    from = close + 2;
  }
  return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const std::vector<char32_t> x = decode_utf8(a);
  const std::vector<char32_t> y = decode_utf8(b);
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

AuditReport audit(const ContrastivePair& pair) {
  const ReasoningTrace& neg = pair.negative;
  const ReasoningTrace& pos = pair.positive;
  AuditReport r;
  r.steps_neg = static_cast<double>(neg.n_steps());
  r.steps_pos = static_cast<double>(pos.n_steps());
  r.density_neg = neg.n_steps() ? density(neg.n_tokens(), neg.n_steps()).rho : 0.0;
  r.density_pos = pos.n_steps() ? density(pos.n_tokens(), pos.n_steps()).rho : 0.0;

  const std::size_t len_neg = decode_utf8(neg.solution).size();
  const std::size_t len_pos = decode_utf8(pos.solution).size();
  const std::size_t longest = std::max(len_neg, len_pos);
  r.edit_similarity =
      longest == 0 ? 1.0
                   : 1.0 - static_cast<double>(levenshtein(neg.solution, pos.solution)) /
                               static_cast<double>(longest);

  const double ratio = (r.steps_neg - r.steps_pos) / std::max(r.steps_neg - 1.0, 1.0);
  r.adjacent_merge_ratio = std::clamp(ratio, 0.0, 1.0);

  const auto a_neg = extract_boxed_answer(neg.solution);
  const auto a_pos = extract_boxed_answer(pos.solution);
  r.answer_preserved = (!a_neg && !a_pos) || (a_neg && a_pos && answers_match(*a_pos, *a_neg));

  std::map<std::string, int> balance;
  for (const std::string& m : special_markers(neg.solution)) ++balance[m];
  for (const std::string& m : special_markers(pos.solution)) --balance[m];
  r.markers_preserved = std::all_of(balance.begin(), balance.end(),
                                    [](const auto& kv) { return kv.second <= 0; });
  return r;
}

AuditSummary summarize_audits(std::span<const AuditReport> reports) {
  AuditSummary s;
  s.n_pairs = reports.size();
  if (reports.empty()) return s;
  std::size_t answers = 0, markers = 0;
  AuditReport& m = s.mean;
  m = AuditReport{0, 0, 0, 0, 0, 0, true, true};
  for (const AuditReport& r : reports) {
    m.steps_neg += r.steps_neg;
    m.steps_pos += r.steps_pos;
    m.density_neg += r.density_neg;
    m.density_pos += r.density_pos;
    m.edit_similarity += r.edit_similarity;
    m.adjacent_merge_ratio += r.adjacent_merge_ratio;
    answers += r.answer_preserved;
    markers += r.markers_preserved;
  }
  const auto n = static_cast<double>(reports.size());
  m.steps_neg /= n, m.steps_pos /= n, m.density_neg /= n, m.density_pos /= n;
  m.edit_similarity /= n, m.adjacent_merge_ratio /= n;
  m.answer_preserved = answers == reports.size();
  m.markers_preserved = markers == reports.size();
  s.answer_preserved_rate = static_cast<double>(answers) / n;
  s.markers_preserved_rate = static_cast<double>(markers) / n;
  return s;
}

std::string generate_solution(const LanguageModel& model, std::string_view question,
                              std::size_t max_new_tokens, const InjectionHook* hook,
                              prompts::Style style) {
  const std::vector<TokenId> prompt = encode_prompt(model, prompts::format_cot(question, style));
  const std::vector<TokenId> gen = model.greedy_generate(prompt, max_new_tokens, hook);
  return sanitize_utf8(model.detokenize(gen));
}

NegativeSet generate_negatives(const LanguageModel& model, std::span<const EvalItem> questions,
                               const GenerationOptions& opts) {
  std::vector<EvalItem> sorted(questions.begin(), questions.end());
  sort_by_id(sorted);
  const auto n = static_cast<std::int64_t>(sorted.size());
  std::vector<std::string> solutions(sorted.size());
  std::vector<std::string> errors(sorted.size());
#pragma omp parallel for schedule(dynamic) num_threads(opts.workers > 0 ? opts.workers : 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      solutions[k] = generate_solution(model, sorted[k].question, opts.max_new_tokens, nullptr,
                                       opts.style);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }

  NegativeSet out;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (!errors[k].empty()) {
      out.failures.push_back({sorted[k].question_id, errors[k]});
      continue;
    }
    // Greedy decoding is deterministic, so every sample repeats the first.
    for (std::size_t s = 0; s < opts.samples_per_question; ++s) {
      out.traces.push_back({sorted[k].question_id, sorted[k].question, solutions[k], s});
    }
  }
  return out;
}

std::uint64_t question_seed(std::uint64_t merge_seed, std::string_view question_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : question_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return merge_seed ^ h;
}

namespace {

struct Candidate {
  std::optional<ContrastivePair> pair;
  AuditReport report;
  std::string exclusion;
};

Candidate make_candidate(const LanguageModel& model, const EvalItem& item,
                         const RewriterConfig& config, const BuildPairsOptions& opts) {
  const TokenizeFn tokenize = [&model](std::string_view t) { return model.tokenize(t); };
  Candidate c;
  std::string solution;
  try {
    solution = generate_solution(model, item.question, opts.generation.max_new_tokens, nullptr,
                                 opts.generation.style);
  } catch (const std::exception& e) {
    c.exclusion = std::string("generation failed: ") + e.what();
    return c;
  }
  if (is_blank(solution)) {
    c.exclusion = "empty negative";
    return c;
  }
  ReasoningTrace negative = ReasoningTrace::make(item.question, solution, tokenize);

  if (opts.drop_wrong_negatives) {
    const auto pred = extract_boxed_answer(negative.solution);
    if (!pred || !answers_match(*pred, item.gold_answer)) {
      c.exclusion = "negative does not reach the gold answer";
      return c;
    }
  }

  std::optional<ReasoningTrace> positive;
  try {
    switch (config.mode) {
      case RewriterMode::kRuleBased:
        positive = rule_rewrite(negative, config, tokenize);
        break;
      case RewriterMode::kRandomCompression: {
        const std::size_t k = std::min(config.max_merges_per_trace,
                                       negative.n_steps() > 0 ? negative.n_steps() - 1 : 0);
        positive = k == 0 ? negative
                          : random_compress(negative, question_seed(*config.merge_seed, item.question_id),
                                            k, tokenize);
        break;
      }
      case RewriterMode::kExternal:
        if (opts.client == nullptr) throw ConfigError("external rewriter mode needs a client");
        positive = external_rewrite(*opts.client, item.question, negative, tokenize);
        break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    c.exclusion = std::string("rewrite failed: ") + e.what();
    return c;
  }

  ContrastivePair pair{item.question_id, item.question, std::move(*positive), std::move(negative),
                       std::string(to_string(config.mode))};
  c.report = audit(pair);
  if (!c.report.answer_preserved) {
    c.exclusion = "rewrite changed the final answer";
  } else if (!c.report.markers_preserved) {
    c.exclusion = "rewrite dropped a <<...>> marker";
  } else {
    c.pair = std::move(pair);
  }
  return c;
}

}  // namespace

PairSet build_pairs(const LanguageModel& model, std::vector<EvalItem> questions,
                    const RewriterConfig& config, std::size_t n_pairs,
                    const BuildPairsOptions& opts) {
  config.validate();
  if (config.mode == RewriterMode::kExternal && opts.client == nullptr) {
    throw ConfigError("external rewriter mode needs a client");
  }
  sort_by_id(questions);

  PairSet out;
  const std::size_t batch = static_cast<std::size_t>(std::max(opts.generation.workers, 1));
  std::size_t next = 0;
  while (out.pairs.size() < n_pairs && next < questions.size()) {
    // Only as many candidates as could still be needed, so no rewrite is
    // requested that the result would discard.
    const std::size_t want = std::min(batch, n_pairs - out.pairs.size());
    const std::size_t count = std::min(want, questions.size() - next);
    std::vector<Candidate> cands(count);
    std::vector<std::exception_ptr> fatal(count);
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(count))
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(count); ++i) {
      const auto k = static_cast<std::size_t>(i);
      try {
        cands[k] = make_candidate(model, questions[next + k], config, opts);
      } catch (...) {
        fatal[k] = std::current_exception();
      }
    }
    for (const auto& e : fatal) {
      if (e) std::rethrow_exception(e);
    }
    for (std::size_t k = 0; k < count; ++k) {
      Candidate& c = cands[k];
      if (c.pair) {
        out.pairs.push_back(std::move(*c.pair));
        out.audits.push_back(c.report);
      } else {
        out.exclusions.push_back({questions[next + k].question_id, c.exclusion});
      }
    }
    next += count;
  }
  if (out.pairs.size() < n_pairs) {
    throw InsufficientPairs("only " + std::to_string(out.pairs.size()) + " of " +
                            std::to_string(n_pairs) + " pairs survived from " +
                            std::to_string(questions.size()) + " questions");
  }
  return out;
}

}  // namespace densesteer
