#include "livemath/answer/expr.hpp"

#include <algorithm>

namespace livemath::answer {

namespace {

ExprPtr make(NodeKind kind, std::vector<ExprPtr> args = {}) {
  auto e = std::make_shared<Expr>();
  e->kind = kind;
  e->args = std::move(args);
  return e;
}

int cmp_rational(const Rational& a, const Rational& b) { return a < b ? -1 : (b < a ? 1 : 0); }

template <typename T>
int cmp_scalar(const T& a, const T& b) {
  return a < b ? -1 : (b < a ? 1 : 0);
}

}  // namespace

ExprPtr number(const Rational& v) {
  auto e = std::make_shared<Expr>();
  e->kind = NodeKind::Number;
  e->value = v;
  return e;
}

ExprPtr number(long long v) { return number(Rational(v)); }

ExprPtr symbol(std::string name) {
  auto e = std::make_shared<Expr>();
  e->kind = NodeKind::Symbol;
  e->name = std::move(name);
  return e;
}

ExprPtr pi() { return make(NodeKind::Pi); }
ExprPtr euler() { return make(NodeKind::Euler); }
ExprPtr degree() { return make(NodeKind::Degree); }
ExprPtr infinity() { return make(NodeKind::Infinity); }
ExprPtr add(std::vector<ExprPtr> terms) { return make(NodeKind::Add, std::move(terms)); }
ExprPtr mul(std::vector<ExprPtr> factors) { return make(NodeKind::Mul, std::move(factors)); }
ExprPtr pow(ExprPtr base, ExprPtr exponent) {
  return make(NodeKind::Pow, {std::move(base), std::move(exponent)});
}

ExprPtr func(std::string name, ExprPtr arg) {
  auto e = std::make_shared<Expr>();
  e->kind = NodeKind::Func;
  e->name = std::move(name);
  e->args = {std::move(arg)};
  return e;
}

ExprPtr tuple(std::vector<ExprPtr> items) { return make(NodeKind::Tuple, std::move(items)); }
ExprPtr list(std::vector<ExprPtr> items) { return make(NodeKind::List, std::move(items)); }
ExprPtr set(std::vector<ExprPtr> items) { return make(NodeKind::Set, std::move(items)); }

ExprPtr interval(ExprPtr lo, ExprPtr hi, bool left_closed, bool right_closed) {
  auto e = std::make_shared<Expr>();
  e->kind = NodeKind::Interval;
  e->args = {std::move(lo), std::move(hi)};
  e->left_closed = left_closed;
  e->right_closed = right_closed;
  return e;
}

ExprPtr relation(std::vector<ExprPtr> operands, std::vector<RelOp> ops) {
  auto e = std::make_shared<Expr>();
  e->kind = NodeKind::Relation;
  e->args = std::move(operands);
  e->ops = std::move(ops);
  return e;
}

ExprPtr plus_minus(ExprPtr a, ExprPtr b) { return make(NodeKind::PlusMinus, {std::move(a), std::move(b)}); }
ExprPtr neg(ExprPtr e) { return mul({number(-1), std::move(e)}); }
ExprPtr sub(ExprPtr a, ExprPtr b) { return add({std::move(a), neg(std::move(b))}); }
ExprPtr div(ExprPtr a, ExprPtr b) { return mul({std::move(a), pow(std::move(b), number(-1))}); }

int compare(const Expr& a, const Expr& b) {
  if (a.kind != b.kind) return cmp_scalar(static_cast<int>(a.kind), static_cast<int>(b.kind));
  switch (a.kind) {
    case NodeKind::Number: return cmp_rational(a.value, b.value);
    case NodeKind::Symbol: return a.name.compare(b.name) < 0 ? -1 : (a.name == b.name ? 0 : 1);
    case NodeKind::Func:
      if (a.name != b.name) return a.name < b.name ? -1 : 1;
      break;
    case NodeKind::Interval:
      if (a.left_closed != b.left_closed) return a.left_closed ? 1 : -1;
      if (a.right_closed != b.right_closed) return a.right_closed ? 1 : -1;
      break;
    case NodeKind::Relation:
      if (a.ops != b.ops) {
        std::size_t n = std::min(a.ops.size(), b.ops.size());
        for (std::size_t i = 0; i < n; ++i) {
          if (a.ops[i] != b.ops[i]) return cmp_scalar(static_cast<int>(a.ops[i]), static_cast<int>(b.ops[i]));
        }
        return cmp_scalar(a.ops.size(), b.ops.size());
      }
      break;
    default:
      break;
  }
  std::size_t n = std::min(a.args.size(), b.args.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (int c = compare(*a.args[i], *b.args[i]); c != 0) return c;
  }
  return cmp_scalar(a.args.size(), b.args.size());
}

bool same(const ExprPtr& a, const ExprPtr& b) { return compare(*a, *b) == 0; }

bool is_number(const ExprPtr& e) { return e->kind == NodeKind::Number; }

bool is_integer(const Rational& r) { return boost::multiprecision::denominator(r) == 1; }

bool is_scalar_kind(NodeKind k) {
  switch (k) {
    case NodeKind::Tuple:
    case NodeKind::List:
    case NodeKind::Set:
    case NodeKind::Interval:
    case NodeKind::Relation:
    case NodeKind::PlusMinus:
      return false;
    default:
      return true;
  }
}

namespace {

void collect_symbols(const ExprPtr& e, std::set<std::string>& out) {
  if (e->kind == NodeKind::Symbol) out.insert(e->name);
  if (e->kind == NodeKind::Degree) out.insert("\\circ");
  for (const auto& a : e->args) collect_symbols(a, out);
}

// Precedence contexts for printing.
constexpr int kTop = 0;
constexpr int kSum = 1;
constexpr int kProduct = 2;
constexpr int kPowerBase = 3;

std::string paren(const std::string& s) { return "(" + s + ")"; }

std::string print(const ExprPtr& e, int prec);

std::string print_rational(const Rational& r, int prec) {
  BigInt num = boost::multiprecision::numerator(r);
  BigInt den = boost::multiprecision::denominator(r);
  bool negative = num < 0;
  if (negative) num = -num;
  std::string body = den == 1 ? num.str() : "\\frac{" + num.str() + "}{" + den.str() + "}";
  if (negative) {
    body = "-" + body;
    if (prec >= kProduct) body = paren(body);
  } else if (den != 1 && prec >= kPowerBase) {
    body = paren(body);
  }
  return body;
}

bool atomic_base(const ExprPtr& e) {
  switch (e->kind) {
    case NodeKind::Symbol:
    case NodeKind::Pi:
    case NodeKind::Euler:
    case NodeKind::Infinity:
      return true;
    case NodeKind::Func:
      return e->name != "factorial";
    case NodeKind::Number:
      return is_integer(e->value) && e->value >= 0;
    default:
      return false;
  }
}

std::string func_head(const std::string& name) {
  static const std::set<std::string> known = {"sin", "cos", "tan", "cot", "sec", "csc", "ln",
                                              "log", "exp", "arcsin", "arccos", "arctan",
                                              "sinh", "cosh", "tanh"};
  if (known.count(name)) return "\\" + name;
  return "\\operatorname{" + name + "}";
}

std::string print_mul(const ExprPtr& e, int prec) {
  Rational coeff = 1;
  std::vector<std::string> parts;
  bool has_degree = false;
  for (const auto& f : e->args) {
    if (f->kind == NodeKind::Number) {
      coeff *= f->value;
    } else if (f->kind == NodeKind::Degree) {
      has_degree = true;
    } else {
      parts.push_back(print(f, kProduct));
    }
  }
  bool negative = coeff < 0;
  if (negative) coeff = -coeff;
  if (coeff != 1 || parts.empty()) parts.insert(parts.begin(), print_rational(coeff, kProduct));
  std::string body;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) body += " \\cdot ";
    body += parts[i];
  }
  if (has_degree) {
    bool simple = parts.size() == 1 && is_integer(coeff) && e->args.size() <= 2;
    body = (simple ? body : paren(body)) + "^\\circ";
  }
  if (negative) {
    body = "-" + body;
    if (prec >= kProduct) body = paren(body);
  }
  return body;
}

std::string print(const ExprPtr& e, int prec) {
  switch (e->kind) {
    case NodeKind::Number: return print_rational(e->value, prec);
    case NodeKind::Symbol: return e->name;
    case NodeKind::Pi: return "\\pi";
    case NodeKind::Euler: return "e";
    case NodeKind::Infinity: return "\\infty";
    case NodeKind::Degree: return prec >= kPowerBase ? "(1^\\circ)" : "1^\\circ";
    case NodeKind::Add: {
      std::string out;
      for (std::size_t i = 0; i < e->args.size(); ++i) {
        const auto& t = e->args[i];
        bool negative = (t->kind == NodeKind::Number && t->value < 0) ||
                        (t->kind == NodeKind::Mul && !t->args.empty() &&
                         t->args[0]->kind == NodeKind::Number && t->args[0]->value < 0);
        if (i == 0) {
          out += print(t, kSum);
        } else if (negative) {
          out += " - ";
          out += print(t, kSum).substr(1);  // drop the leading '-'
        } else {
          out += " + " + print(t, kSum);
        }
      }
      return prec >= kProduct ? paren(out) : out;
    }
    case NodeKind::Mul: return print_mul(e, prec);
    case NodeKind::Pow: {
      const auto& base = e->args[0];
      const auto& ex = e->args[1];
      if (ex->kind == NodeKind::Number && ex->value == Rational(1, 2)) {
        return "\\sqrt{" + print(base, kTop) + "}";
      }
      if (ex->kind == NodeKind::Number && base->kind == NodeKind::Number && base->value > 0 &&
          is_integer(base->value) && boost::multiprecision::numerator(ex->value) == 1) {
        return "\\sqrt[" + boost::multiprecision::denominator(ex->value).str() + "]{" +
               print(base, kTop) + "}";
      }
      std::string b = atomic_base(base) ? print(base, kPowerBase) : paren(print(base, kTop));
      return b + "^{" + print(ex, kTop) + "}";
    }
    case NodeKind::Func: {
      if (e->name == "abs") return "|" + print(e->args[0], kTop) + "|";
      if (e->name == "factorial") {
        const auto& a = e->args[0];
        return (atomic_base(a) ? print(a, kPowerBase) : paren(print(a, kTop))) + "!";
      }
      return func_head(e->name) + "(" + print(e->args[0], kTop) + ")";
    }
    case NodeKind::Tuple:
    case NodeKind::List:
    case NodeKind::Set: {
      std::string inner;
      for (std::size_t i = 0; i < e->args.size(); ++i) {
        if (i) inner += ", ";
        inner += print(e->args[i], kTop);
      }
      if (e->kind == NodeKind::Tuple) return "(" + inner + ")";
      if (e->kind == NodeKind::Set) return "\\{" + inner + "\\}";
      return inner;
    }
    case NodeKind::Interval:
      return std::string(e->left_closed ? "[" : "(") + print(e->args[0], kTop) + ", " +
             print(e->args[1], kTop) + (e->right_closed ? "]" : ")");
    case NodeKind::Relation: {
      static const char* names[] = {" = ", " \\neq ", " < ", " \\le ", " > ", " \\ge "};
      std::string out = print(e->args[0], kSum);
      for (std::size_t i = 0; i < e->ops.size(); ++i) {
        out += names[static_cast<int>(e->ops[i])];
        out += print(e->args[i + 1], kSum);
      }
      return out;
    }
    case NodeKind::PlusMinus:
      return print(e->args[0], kSum) + " \\pm " + print(e->args[1], kProduct);
  }
  return "?";
}

std::vector<ExprPtr> variants(const ExprPtr& e) {
  if (e->args.empty()) return {e};
  std::vector<std::vector<ExprPtr>> combos{{}};
  for (const auto& a : e->args) {
    auto vs = variants(a);
    std::vector<std::vector<ExprPtr>> next;
    for (const auto& c : combos) {
      for (const auto& v : vs) {
        auto copy = c;
        copy.push_back(v);
        next.push_back(std::move(copy));
      }
    }
    combos = std::move(next);
    if (combos.size() > 16) throw DomainError("too many +- alternatives");
  }
  std::vector<ExprPtr> out;
  for (auto& c : combos) {
    if (e->kind == NodeKind::PlusMinus) {
      out.push_back(add({c[0], c[1]}));
      out.push_back(sub(c[0], c[1]));
    } else {
      auto copy = std::make_shared<Expr>(*e);
      copy->args = std::move(c);
      out.push_back(copy);
    }
  }
  if (out.size() > 16) throw DomainError("too many +- alternatives");
  return out;
}

bool contains_plus_minus(const ExprPtr& e) {
  if (e->kind == NodeKind::PlusMinus) return true;
  return std::any_of(e->args.begin(), e->args.end(), contains_plus_minus);
}

}  // namespace

std::set<std::string> free_symbols(const ExprPtr& e) {
  std::set<std::string> out;
  collect_symbols(e, out);
  return out;
}

std::string to_string(const ExprPtr& e) { return print(e, kTop); }

ExprPtr expand_plus_minus(const ExprPtr& e) {
  if (!contains_plus_minus(e)) return e;
  auto vs = variants(e);
  if (vs.size() == 1) return vs.front();
  return list(std::move(vs));
}

}  // namespace livemath::answer
