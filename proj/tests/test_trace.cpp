#include "densesteer/trace.hpp"

#include <algorithm>
#include <cmath>

#include "densesteer/errors.hpp"
#include "densesteer/io.hpp"
#include "doctest.h"
#include "support/gen.hpp"
#include "support/oracles.hpp"

using namespace densesteer;
using Steps = std::vector<std::string>;

TEST_CASE("segment_steps examples") {
  CHECK(segment_steps("a\n\nb\n\nc") == Steps{"a", "b", "c"});
  CHECK(segment_steps("a\n\n\n\nb") == Steps{"a", "b"});
  CHECK(segment_steps("single line") == Steps{"single line"});
  CHECK(segment_steps("").empty());
  CHECK(segment_steps(" \n\n\t ").empty());
}

TEST_CASE("blank lines with whitespace count as one boundary") {
  CHECK(segment_steps("a\n \n\t\nb") == Steps{"a", "b"});
  CHECK(segment_steps("a\r\n\r\nb") == Steps{"a", "b"});
  CHECK(segment_steps("  a\nstill a  \n\n b ") == Steps{"a\nstill a", "b"});
  CHECK(segment_steps("a\n b") == Steps{"a\n b"});
}

TEST_CASE("segment spans index into the source") {
  const std::string text = " x\n\n yz \n\n\nw";
  const auto spans = segment_step_spans(text);
  REQUIRE(spans.size() == 3);
  CHECK(text.substr(spans[1].begin, spans[1].end - spans[1].begin) == "yz");
}

TEST_CASE("segmentation matches the line-group oracle on noisy text") {
  gen::Rng rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const std::string s = gen::noisy_text(rng, 40);
    CHECK(segment_steps(s) == oracle::line_group_steps(s));
  }
}

TEST_CASE("segmentation is idempotent under join") {
  gen::Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const Steps once = segment_steps(gen::noisy_text(rng, 50));
    CHECK(segment_steps(join_steps(once)) == once);
    CHECK(std::none_of(once.begin(), once.end(), [](const std::string& s) { return s.empty(); }));
  }
}

TEST_CASE("non-blank solutions have at least one step") {
  gen::Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    const std::string s = gen::noisy_text(rng, 30);
    const ReasoningTrace t = ReasoningTrace::make("q", s);
    CHECK((t.n_steps() >= 1) == !is_blank(s));
    CHECK(t.n_tokens() == s.size());
  }
}

TEST_CASE("density examples") {
  CHECK(density(200, 5).rho == 40.0);
  CHECK(density(7, 1).rho == 7.0);
  CHECK_THROWS_AS(density(ReasoningTrace::make("q", "  \n\n ")), EmptyTrace);
  CHECK_THROWS_AS(density(ReasoningTrace::make("q", "")), EmptyTrace);
}

TEST_CASE("density of the trace_A fixture") {
  const std::string text = read_file(DS_FIXTURES "/trace_A.txt");
  const DensityMetrics m = density(ReasoningTrace::make("q", text));
  // Counted once by a standalone byte/line-group script.
  CHECK(m.n_tokens == 240);
  CHECK(m.n_steps == 5);
  CHECK(m.rho == 48.0);
  CHECK(oracle::line_group_steps(text).size() == m.n_steps);
  CHECK(text.size() == m.n_tokens);
}

TEST_CASE("das examples") {
  CHECK(das(std::exp(1.0), 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(das(1.0, 0.0) == 0.0);
  CHECK(std::fabs(das(40.0, 2.5) - 1.1888794541139363) < 1e-12);
  CHECK_THROWS_AS(das(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(das(-1.0, 1.0), DomainError);
  CHECK_THROWS_AS(das(2.0, NAN), DomainError);
}

TEST_CASE("das is increasing in rho and decreasing in nll") {
  gen::Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double rho = 0.01 + rng.unit() * 100.0, nll = rng.unit() * 10.0;
    const double bump = 1e-6 + rng.unit();
    CHECK(das(rho + bump, nll) > das(rho, nll));
    CHECK(das(rho, nll + bump) < das(rho, nll));
  }
}

TEST_CASE("merging adjacent steps raises density when tokens are fixed") {
  gen::Rng rng(4);
  for (int i = 0; i < 300; ++i) {
    const gen::MathTrace mt = gen::math_trace(rng);
    const ReasoningTrace t = ReasoningTrace::make(mt.question, mt.solution);
    if (t.n_steps() < 2) continue;
    Steps merged = t.steps;
    const std::size_t k = rng.below(merged.size() - 1);
    // Replace the two-byte canonical delimiter with two spaces: same token count.
    merged[k] += "  " + merged[k + 1];
    merged.erase(merged.begin() + static_cast<std::ptrdiff_t>(k) + 1);
    const std::string before = join_steps(t.steps), after = join_steps(merged);
    REQUIRE(before.size() == after.size());
    const auto a = density(ReasoningTrace::make("q", before));
    const auto b = density(ReasoningTrace::make("q", after));
    CHECK(b.n_steps == a.n_steps - 1);
    CHECK(b.rho > a.rho);
  }
}

namespace {

TraceSample sample(std::string qid, std::size_t steps, std::size_t tokens_per_step = 3) {
  Steps s;
  for (std::size_t i = 0; i < steps; ++i) s.push_back(std::string(tokens_per_step, 'x'));
  return {std::move(qid), ReasoningTrace::make("q", join_steps(s))};
}

}  // namespace

TEST_CASE("corpus_stats examples") {
  const std::vector<TraceSample> two = {sample("q1", 4), sample("q2", 6)};
  const CorpusStats s = corpus_stats(two);
  CHECK(s.n_questions == 2);
  CHECK(s.mean_steps == 5.0);
  REQUIRE(s.sem_steps.has_value());
  CHECK(*s.sem_steps == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<TraceSample> one = {sample("q1", 3), sample("q1", 5)};
  const CorpusStats o = corpus_stats(one);
  CHECK(o.n_questions == 1);
  CHECK(o.mean_steps == 4.0);
  CHECK_FALSE(o.sem_steps.has_value());
  CHECK_FALSE(o.sem_rho.has_value());

  CHECK_THROWS_AS(corpus_stats(std::vector<TraceSample>{}), EmptySet);
}

TEST_CASE("corpus_stats matches a spreadsheet-style oracle over 8 x 10 samples") {
  gen::Rng rng(99);
  std::vector<TraceSample> samples;
  std::vector<std::vector<double>> steps(10), rho(10), tokens(10);
  for (int q = 0; q < 10; ++q) {
    for (int k = 0; k < 8; ++k) {
      const gen::MathTrace mt = gen::math_trace(rng);
      const ReasoningTrace t = ReasoningTrace::make(mt.question, mt.solution);
      samples.push_back({"q" + std::to_string(q), t});
      // Oracle columns: counted directly from the raw text.
      const double n_steps = static_cast<double>(oracle::line_group_steps(mt.solution).size());
      const double n_tok = static_cast<double>(mt.solution.size());
      steps[q].push_back(n_steps);
      tokens[q].push_back(n_tok);
      rho[q].push_back(n_tok / n_steps);
    }
  }
  auto col_stats = [](const std::vector<std::vector<double>>& cols) {
    std::vector<double> means;
    for (const auto& c : cols) {
      double s = 0;
      for (double v : c) s += v;
      means.push_back(s / static_cast<double>(c.size()));
    }
    double m = 0;
    for (double v : means) m += v;
    m /= static_cast<double>(means.size());
    double ss = 0;
    for (double v : means) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(means.size() - 1));
    return std::pair{m, sd / std::sqrt(static_cast<double>(means.size()))};
  };
  const CorpusStats s = corpus_stats(samples);
  const auto [ms, ss] = col_stats(steps);
  const auto [mr, sr] = col_stats(rho);
  const auto [mt, st] = col_stats(tokens);
  CHECK(s.n_questions == 10);
  CHECK(std::fabs(s.mean_steps - ms) < 1e-9);
  CHECK(std::fabs(s.mean_rho - mr) < 1e-9);
  CHECK(std::fabs(s.mean_tokens - mt) < 1e-9);
  CHECK(std::fabs(*s.sem_steps - ss) < 1e-9);
  CHECK(std::fabs(*s.sem_rho - sr) < 1e-9);
  CHECK(std::fabs(*s.sem_tokens - st) < 1e-9);

  // Permutation invariance, bitwise.
  gen::Rng perm(1);
  for (int round = 0; round < 20; ++round) {
    std::vector<TraceSample> shuffled = samples;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[perm.below(i)]);
    const CorpusStats p = corpus_stats(shuffled);
    CHECK(p.mean_steps == s.mean_steps);
    CHECK(p.mean_rho == s.mean_rho);
    CHECK(p.mean_tokens == s.mean_tokens);
    CHECK(*p.sem_rho == *s.sem_rho);
  }
}
