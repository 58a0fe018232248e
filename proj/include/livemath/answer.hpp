#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "livemath/answer/expr.hpp"

namespace livemath::answer {

/// Contents of a \boxed{...} group and its byte span in the source
/// (start at the backslash, end one past the closing brace).
struct BoxedAnswer {
  std::string raw;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Last \boxed{...} in `text`, with nested braces honoured and escaped
/// braces (\{ \}) ignored; nullopt when there is none or it is blank.
/// Throws ExtractError when the braces after the last \boxed never close.
std::optional<BoxedAnswer> extract_boxed(std::string_view text);

/// A parsed answer in canonical form plus the raw string it came from.
struct AnswerExpr {
  ExprPtr node;
  std::string raw;
};

/// Fallback for anything outside the answer grammar.
struct TextAnswer {
  std::string normalized;
  std::string raw;
};

using ParsedAnswer = std::variant<AnswerExpr, TextAnswer>;

/// Never throws: anything the grammar rejects becomes a TextAnswer.
ParsedAnswer parse_answer(std::string_view raw);

/// Parses without canonicalizing; nullopt when outside the grammar.
std::optional<ExprPtr> parse_expression(std::string_view raw);

/// Spacing-, delimiter- and brace-insensitive spelling used for the string
/// rule of the equivalence ladder and for representative selection.
std::string normalize_answer(std::string_view raw);

enum class MatchMethod { String, NumericValue, SymbolicExact, NumericProbe };

std::string_view to_string(MatchMethod m);

struct EquivalenceVerdict {
  bool equivalent = false;
  MatchMethod method = MatchMethod::String;
  std::string detail;
};

struct EquivalenceOptions {
  double relative_tolerance = 1e-9;
  int probe_points = 8;
};

/// Decision ladder: normalized string equality; exact canonical or 50-digit
/// numeric equality for closed-form numbers; canonical equality or random
/// rational probing for expressions with free symbols; element-wise for
/// tuples (ordered) and lists/sets (unordered). Symmetric by construction.
EquivalenceVerdict equivalent(std::string_view a, std::string_view b,
                              const EquivalenceOptions& options = {});

enum class AnswerType { Equation, Expression, List, NumericDec, NumericInt, NumericIrr, Others };

inline constexpr AnswerType kAllAnswerTypes[] = {
    AnswerType::Equation,   AnswerType::Expression, AnswerType::List,  AnswerType::NumericDec,
    AnswerType::NumericInt, AnswerType::NumericIrr, AnswerType::Others};

/// "equation", "expression", "list", "numeric-dec", "numeric-int",
/// "numeric-irr", "others".
std::string_view to_string(AnswerType t);
std::optional<AnswerType> answer_type_from_string(std::string_view s);

AnswerType classify_answer_type(std::string_view raw);

}  // namespace livemath::answer
