#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

namespace livemath::answer {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
/// 50 significant decimal digits.
using Real = boost::multiprecision::number<boost::multiprecision::cpp_dec_float<50>,
                                          boost::multiprecision::et_off>;

enum class NodeKind {
  Number,     // exact rational
  Symbol,     // free variable, e.g. "x", "\alpha", "a_{1}"
  Pi,
  Euler,
  Degree,     // the degree unit marker
  Infinity,
  Add,
  Mul,
  Pow,        // args = {base, exponent}
  Func,       // name + one argument
  Tuple,      // ordered
  List,       // bare comma list; unordered
  Set,        // unordered, duplicates collapse
  Interval,   // args = {lo, hi}
  Relation,   // args = operands, ops.size() == args.size() - 1
  PlusMinus,  // args = {a, b} meaning a +- b; removed by expand_plus_minus
};

enum class RelOp { Eq, Ne, Lt, Le, Gt, Ge };

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Immutable expression node. Build through the factory functions below;
/// canonicalize() turns any tree into the normal form used for comparison.
class Expr {
 public:
  NodeKind kind = NodeKind::Number;
  Rational value;             // Number
  std::string name;           // Symbol, Func
  std::vector<ExprPtr> args;  // composite nodes
  std::vector<RelOp> ops;     // Relation
  bool left_closed = false;   // Interval
  bool right_closed = false;  // Interval
};

ExprPtr number(const Rational& v);
ExprPtr number(long long v);
ExprPtr symbol(std::string name);
ExprPtr pi();
ExprPtr euler();
ExprPtr degree();
ExprPtr infinity();
ExprPtr add(std::vector<ExprPtr> terms);
ExprPtr mul(std::vector<ExprPtr> factors);
ExprPtr pow(ExprPtr base, ExprPtr exponent);
ExprPtr func(std::string name, ExprPtr arg);
ExprPtr tuple(std::vector<ExprPtr> items);
ExprPtr list(std::vector<ExprPtr> items);
ExprPtr set(std::vector<ExprPtr> items);
ExprPtr interval(ExprPtr lo, ExprPtr hi, bool left_closed, bool right_closed);
ExprPtr relation(std::vector<ExprPtr> operands, std::vector<RelOp> ops);
ExprPtr plus_minus(ExprPtr a, ExprPtr b);
ExprPtr neg(ExprPtr e);
ExprPtr sub(ExprPtr a, ExprPtr b);
ExprPtr div(ExprPtr a, ExprPtr b);

/// Total structural order used to sort canonical sums and products.
int compare(const Expr& a, const Expr& b);
inline int compare(const ExprPtr& a, const ExprPtr& b) { return compare(*a, *b); }
bool same(const ExprPtr& a, const ExprPtr& b);

struct ExprLess {
  bool operator()(const ExprPtr& a, const ExprPtr& b) const { return compare(a, b) < 0; }
};

bool is_number(const ExprPtr& e);
bool is_integer(const Rational& r);
bool is_scalar_kind(NodeKind k);

/// Names of free variables; the degree marker counts as "\circ".
std::set<std::string> free_symbols(const ExprPtr& e);

/// LaTeX-flavoured rendering that parse_answer reads back to the same
/// canonical tree.
std::string to_string(const ExprPtr& e);

/// Thrown for arithmetic that has no value (division by zero and the like);
/// parse_answer turns it into a text fallback.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normal form: rationals reduced, sums/products flattened, like terms and
/// like powers merged, products distributed over sums (size-capped), numeric
/// radicals reduced to coefficient * prod(p^f) with 0 < f < 1, operands
/// sorted by compare(). Idempotent.
ExprPtr canonicalize(const ExprPtr& e);

/// Replaces every a +- b by the list of its sign choices. Throws
/// DomainError when more than 4 independent +- appear.
ExprPtr expand_plus_minus(const ExprPtr& e);

using Env = std::map<std::string, Real>;

/// Real value at 50-digit precision, or nullopt for non-scalars, unbound
/// symbols, complex or non-finite results.
std::optional<Real> evaluate(const ExprPtr& e, const Env& env = {});

Real to_real(const Rational& r);

}  // namespace livemath::answer
