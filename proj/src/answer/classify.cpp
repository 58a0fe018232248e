#include <algorithm>

#include "livemath/answer.hpp"

namespace livemath::answer {

namespace {

constexpr std::pair<AnswerType, std::string_view> kNames[] = {
    {AnswerType::Equation, "equation"},     {AnswerType::Expression, "expression"},
    {AnswerType::List, "list"},             {AnswerType::NumericDec, "numeric-dec"},
    {AnswerType::NumericInt, "numeric-int"}, {AnswerType::NumericIrr, "numeric-irr"},
    {AnswerType::Others, "others"},
};

bool contains_kind(const ExprPtr& e, NodeKind k) {
  if (e->kind == k) return true;
  return std::any_of(e->args.begin(), e->args.end(),
                     [k](const ExprPtr& a) { return contains_kind(a, k); });
}

// Drops a top-level degree unit so 45^\circ classifies like 45.
ExprPtr strip_degree(const ExprPtr& e) {
  if (e->kind == NodeKind::Degree) return number(1);
  if (e->kind != NodeKind::Mul) return e;
  std::vector<ExprPtr> rest;
  for (const auto& f : e->args) {
    if (f->kind != NodeKind::Degree) rest.push_back(f);
  }
  if (rest.size() == e->args.size()) return e;
  return canonicalize(mul(std::move(rest)));
}

}  // namespace

std::string_view to_string(AnswerType t) {
  for (const auto& [type, name] : kNames) {
    if (type == t) return name;
  }
  return "others";
}

std::optional<AnswerType> answer_type_from_string(std::string_view s) {
  for (const auto& [type, name] : kNames) {
    if (name == s) return type;
  }
  return std::nullopt;
}

AnswerType classify_answer_type(std::string_view raw) {
  auto parsed = parse_answer(raw);
  const auto* expr = std::get_if<AnswerExpr>(&parsed);
  if (!expr) return AnswerType::Others;
  ExprPtr node = expr->node;
  switch (node->kind) {
    case NodeKind::Relation: return AnswerType::Equation;
    case NodeKind::Tuple:
    case NodeKind::List:
    case NodeKind::Set:
      return AnswerType::List;
    case NodeKind::Interval: return AnswerType::Others;
    default: break;
  }
  node = strip_degree(node);
  if (contains_kind(node, NodeKind::Infinity)) return AnswerType::Others;
  auto symbols = free_symbols(node);
  symbols.erase("\\circ");
  if (!symbols.empty()) return AnswerType::Expression;
  if (node->kind == NodeKind::Number) {
    return is_integer(node->value) ? AnswerType::NumericInt : AnswerType::NumericDec;
  }
  if (!evaluate(node)) return AnswerType::Others;
  return AnswerType::NumericIrr;
}

}  // namespace livemath::answer
