#include <string>

#include "densesteer/answer.hpp"
#include "densesteer/errors.hpp"
#include "densesteer/prompts.hpp"
#include "doctest.h"
#include "support/gen.hpp"

using namespace densesteer;
namespace p = densesteer::prompts;

TEST_CASE("chain-of-thought prompt layout") {
  CHECK(p::format_cot("What is 2+2?") ==
        "Solve the following math problem. Present the final answer in the format: Final Answer: "
        "\\boxed{your_answer}.\nProblem: What is 2+2?\nAnswer:");
  const std::string dense = p::format_cot("Q", p::Style::kDenseInference);
  CHECK(dense.rfind(std::string(p::dense_inference_preamble()) + "\n\n", 0) == 0);
  CHECK(dense.size() == p::dense_inference_preamble().size() + 2 + p::format_cot("Q").size());
  CHECK(p::parse_style("cot") == p::Style::kCot);
  CHECK(p::parse_style("dense") == p::Style::kDenseInference);
  CHECK_THROWS_AS(p::parse_style("chat"), ConfigError);
}

TEST_CASE("rewrite prompt substitutes each placeholder once") {
  const std::string out = p::format_dense_rewrite("How many {original_resp}?", "A\n\nB {question}");
  CHECK(out.find("Question:\nHow many {original_resp}?\n\nOriginal solution (model output):\nA\n\nB {question}\n\n"
                 "Now output ONLY the rewritten solution") != std::string::npos);
  CHECK(out.rfind("You will lightly rewrite the solution by CONSERVATIVELY merging steps", 0) == 0);
  CHECK(out.find("{question}") == out.rfind("{question}"));
}

TEST_CASE("fill does not rescan substituted text") {
  CHECK(p::fill("{x}-{x}", "{x}", "{x}{x}") == "{x}{x}-{x}{x}");
  CHECK(p::fill("none here", "{x}", "y") == "none here");
  CHECK(p::fill("", "{x}", "y") == "");
}

TEST_CASE("templates carry their placeholders and markers") {
  CHECK(p::cot_template().find("{problem}") != std::string_view::npos);
  CHECK(p::dense_rewrite_template().find("{question}") != std::string_view::npos);
  CHECK(p::dense_rewrite_template().find("{original_resp}") != std::string_view::npos);
  CHECK(p::dense_rewrite_template().find("\xe2\x80\x9c" "feel" "\xe2\x80\x9d") != std::string_view::npos);
  CHECK(p::dense_inference_preamble().find("<<a=b>>") != std::string_view::npos);
}

TEST_CASE("boxed answer extraction") {
  CHECK(extract_boxed_answer("Final Answer: \\boxed{42}") == "42");
  CHECK(extract_boxed_answer("\\boxed{\\frac{1}{2}}") == "\\frac{1}{2}");
  CHECK(extract_boxed_answer("\\boxed{1} then \\boxed{2}") == "2");
  CHECK_FALSE(extract_boxed_answer("no answer here").has_value());
  CHECK_FALSE(extract_boxed_answer("\\boxed{unbalanced").has_value());
  CHECK(extract_boxed_answer("\\boxed{7} and \\boxed{broken") == "7");
  CHECK(extract_boxed_answer("\\boxed{}") == "");
}

TEST_CASE("boxed extraction recovers the final answer of generated traces") {
  gen::Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const gen::MathTrace t = gen::math_trace(rng);
    CHECK(extract_boxed_answer(t.solution) == t.answer);
  }
}

TEST_CASE("normalization and matching") {
  CHECK(normalize_answer("  $1,234$ ") == "1234");
  CHECK(normalize_answer("$ Yes $") == "yes");
  CHECK(answers_match("1,234", "1234"));
  CHECK_FALSE(answers_match("0.50", "1/2"));
  CHECK(answers_match("42.0", "42"));
  CHECK(answers_match("-3", "-3.0000001"));
  CHECK_FALSE(answers_match("-3", "-3.00001"));
  CHECK(answers_match("Blue", "blue"));
  CHECK_FALSE(answers_match("4 2", "42"));
  CHECK_FALSE(answers_match("", "0"));
}

TEST_CASE("matching is symmetric and reflexive on generated answers") {
  gen::Rng rng(22);
  for (int i = 0; i < 300; ++i) {
    std::string a = std::to_string(rng.range(-500, 5000));
    std::string b = rng.chance(50) ? a : std::to_string(rng.range(-500, 5000));
    if (rng.chance(30)) a += ".0";
    CHECK(answers_match(a, b) == answers_match(b, a));
    CHECK(answers_match(a, a));
  }
}
