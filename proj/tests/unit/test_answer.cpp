#include <doctest.h>

#include <random>

#include "livemath/answer.hpp"
#include "livemath/error.hpp"
#include "livemath/io.hpp"
#include "exprgen.hpp"

using namespace livemath;
using answer::AnswerType;
using Q = synth::Rational;
using synth::within_tolerance;

TEST_CASE("golden pairs agree with the frozen sympy oracle") {
  auto cases = read_jsonl(GOLDEN_PATH);
  REQUIRE(cases.size() >= 50);
  std::size_t reference = 0;
  for (const auto& c : cases) {
    auto a = c.at("a").get<std::string>();
    auto b = c.at("b").get<std::string>();
    INFO(a << " vs " << b);
    CHECK(answer::equivalent(a, b).equivalent == c.at("equivalent").get<bool>());
    CHECK(answer::equivalent(b, a).equivalent == c.at("equivalent").get<bool>());
    if (c.at("source") == "reference") ++reference;
  }
  CHECK(reference >= 4);
}

TEST_CASE("numeric trees: reflexive, symmetric and sound against exact rationals") {
  synth::ExprGen gen(20240521, false);
  int checked = 0;
  for (int i = 0; i < 4000; ++i) {
    auto t1 = gen.tree(3);
    auto t2 = gen.pick(2) == 0 ? t1 : gen.tree(3);
    auto v1 = synth::expr_value(t1, 0), v2 = synth::expr_value(t2, 0);
    auto s1 = synth::expr_latex(t1), s2 = synth::expr_latex(t2, true);
    INFO(s1 << " vs " << s2);
    CHECK(answer::equivalent(s1, s1).equivalent);
    auto ab = answer::equivalent(s1, s2);
    CHECK(ab.equivalent == answer::equivalent(s2, s1).equivalent);
    if (!v1 || !v2) continue;  // division by zero somewhere
    CHECK(ab.equivalent == within_tolerance(*v1, *v2));
    ++checked;
  }
  CHECK(checked > 2000);
}

TEST_CASE("symbolic trees: reflexive, symmetric, commutation-invariant and sound") {
  synth::ExprGen gen(77, true);
  const Q probes[] = {Q(3, 7), Q(-5, 2), Q(11, 3), Q(2), Q(-1, 9)};
  int sound = 0;
  for (int i = 0; i < 6000; ++i) {
    auto t = gen.tree(3);
    auto s = synth::expr_latex(t);
    auto swapped = synth::expr_latex(t, true);
    INFO(s << " vs " << swapped);
    CHECK(answer::equivalent(s, s).equivalent);
    auto fwd = answer::equivalent(s, swapped);
    CHECK(fwd.equivalent == answer::equivalent(swapped, s).equivalent);

    bool defined = true;
    for (const auto& x : probes) defined = defined && synth::expr_value(t, x).has_value();
    if (!defined) continue;
    CHECK(fwd.equivalent);

    bool shift_visible = false;
    for (const auto& x : probes) {
      auto v = *synth::expr_value(t, x);
      shift_visible = shift_visible || !within_tolerance(v, v + 1);
    }
    CHECK(answer::equivalent(s, "(" + s + ")+1").equivalent == !shift_visible);
    ++sound;
  }
  CHECK(sound > 2000);
}

TEST_CASE("boxed extraction") {
  auto b = answer::extract_boxed("first \\boxed{1} then \\boxed{\\frac{1}{2}} done");
  REQUIRE(b);
  CHECK(b->raw == "\\frac{1}{2}");
  CHECK(b->start == 21);
  CHECK(answer::extract_boxed("\\boxed{\\{1, 2\\}}")->raw == "\\{1, 2\\}");
  CHECK_FALSE(answer::extract_boxed("\\boxed{3} and \\boxed{ }"));
  CHECK_FALSE(answer::extract_boxed("no box"));
  CHECK_THROWS_AS(answer::extract_boxed("\\boxed{1} \\boxed{2"), ExtractError);
}

TEST_CASE("answer types") {
  using answer::classify_answer_type;
  CHECK(classify_answer_type("x = 1 - p") == AnswerType::Equation);
  CHECK(classify_answer_type("x^2+1") == AnswerType::Expression);
  CHECK(classify_answer_type("(2, 1)") == AnswerType::List);
  CHECK(classify_answer_type("1, 2, 3") == AnswerType::List);
  CHECK(classify_answer_type("0.75") == AnswerType::NumericDec);
  CHECK(classify_answer_type("\\frac{3}{4}") == AnswerType::NumericDec);
  CHECK(classify_answer_type("12") == AnswerType::NumericInt);
  CHECK(classify_answer_type("45^\\circ") == AnswerType::NumericInt);
  CHECK(classify_answer_type("35\\sqrt{5}") == AnswerType::NumericIrr);
  CHECK(classify_answer_type("\\pi") == AnswerType::NumericIrr);
  CHECK(classify_answer_type("\\text{no solution}") == AnswerType::Others);
  CHECK(classify_answer_type("[0, 1)") == AnswerType::Others);
  for (auto t : answer::kAllAnswerTypes) {
    CHECK(answer::answer_type_from_string(answer::to_string(t)) == t);
  }
}

TEST_CASE("normalization ignores spacing and delimiters") {
  CHECK(answer::normalize_answer("\\left( 2 , 1 \\right)") == answer::normalize_answer("(2,1)"));
  CHECK(answer::normalize_answer("\\dfrac{1}{2}") == answer::normalize_answer("\\frac{1}{2}"));
  CHECK(answer::equivalent("\\dfrac12", "\\frac{1}{2}").method == answer::MatchMethod::String);
}

TEST_CASE("garbage never throws") {
  std::mt19937_64 rng(5);
  const std::string alphabet = "0123456789xy+-*/^(){}[]\\fracsqrt ,.=<>|!";
  std::uniform_int_distribution<std::size_t> len(0, 30), ch(0, alphabet.size() - 1);
  for (int i = 0; i < 3000; ++i) {
    std::string a, b;
    for (auto n = len(rng); n > 0; --n) a += alphabet[ch(rng)];
    for (auto n = len(rng); n > 0; --n) b += alphabet[ch(rng)];
    CHECK_NOTHROW(answer::equivalent(a, b));
    CHECK_NOTHROW(answer::classify_answer_type(a));
  }
}
