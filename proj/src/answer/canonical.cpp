#include <algorithm>
#include <map>

#include "livemath/answer/expr.hpp"

namespace livemath::answer {

namespace {

namespace mp = boost::multiprecision;

constexpr std::size_t kMaxExpandedTerms = 256;
constexpr unsigned kMaxIntegerPowerBits = 4096;
constexpr long kMaxAddPower = 8;

ExprPtr canon(const ExprPtr& e);
ExprPtr canon_add(std::vector<ExprPtr> terms);
ExprPtr canon_mul(std::vector<ExprPtr> factors);
ExprPtr canon_pow(const ExprPtr& base, const ExprPtr& exponent);

const ExprPtr& one() {
  static const ExprPtr v = number(1);
  return v;
}

const ExprPtr& zero() {
  static const ExprPtr v = number(0);
  return v;
}

bool is_value(const ExprPtr& e, long v) { return e->kind == NodeKind::Number && e->value == v; }

std::size_t bit_length(const BigInt& v) {
  BigInt a = v < 0 ? BigInt(-v) : v;
  return a == 0 ? 0 : mp::msb(a) + 1;
}

std::optional<Rational> exact_power(const Rational& base, long exp) {
  BigInt num = mp::numerator(base);
  BigInt den = mp::denominator(base);
  std::size_t bits = std::max(bit_length(num), bit_length(den));
  if (bits * static_cast<std::size_t>(std::abs(exp)) > kMaxIntegerPowerBits) return std::nullopt;
  if (exp < 0) {
    if (num == 0) throw DomainError("division by zero");
    std::swap(num, den);
    if (den < 0) {
      num = -num;
      den = -den;
    }
    exp = -exp;
  }
  BigInt n = mp::pow(num, static_cast<unsigned>(exp));
  BigInt d = mp::pow(den, static_cast<unsigned>(exp));
  return Rational(n, d);
}

const std::vector<unsigned>& small_primes() {
  static const std::vector<unsigned> primes = [] {
    constexpr unsigned limit = 20000;
    std::vector<bool> sieve(limit + 1, true);
    std::vector<unsigned> out;
    for (unsigned i = 2; i <= limit; ++i) {
      if (!sieve[i]) continue;
      out.push_back(i);
      for (unsigned j = i * i; j <= limit; j += i) sieve[j] = false;
    }
    return out;
  }();
  return primes;
}

/// Trial division by small primes; an unfactored remainder is kept whole
/// (as its square root when it is a perfect square).
void factor_into(BigInt n, const Rational& weight, std::map<BigInt, Rational>& out) {
  for (unsigned p : small_primes()) {
    if (n == 1) return;
    BigInt bp = p;
    if (bp * bp > n) break;
    while (n % bp == 0) {
      out[bp] += weight;
      n /= bp;
    }
  }
  if (n == 1) return;
  BigInt r = mp::sqrt(n);
  if (r * r == n) {
    out[r] += weight * 2;
  } else {
    out[n] += weight;
  }
}

bool positive_constant(const ExprPtr& e) {
  switch (e->kind) {
    case NodeKind::Number: return e->value > 0;
    case NodeKind::Pi:
    case NodeKind::Euler:
    case NodeKind::Degree:
      return true;
    case NodeKind::Pow:
      return positive_constant(e->args[0]) && free_symbols(e->args[1]).empty();
    case NodeKind::Mul:
      return std::all_of(e->args.begin(), e->args.end(), positive_constant);
    default:
      return false;
  }
}

/// Splits a canonical term into rational coefficient and the rest.
std::pair<Rational, ExprPtr> split_coeff(const ExprPtr& t) {
  if (t->kind == NodeKind::Number) return {t->value, one()};
  if (t->kind == NodeKind::Mul && !t->args.empty() && t->args[0]->kind == NodeKind::Number) {
    std::vector<ExprPtr> rest(t->args.begin() + 1, t->args.end());
    if (rest.size() == 1) return {t->args[0]->value, rest[0]};
    return {t->args[0]->value, mul(std::move(rest))};
  }
  return {Rational(1), t};
}

ExprPtr make_term(const Rational& c, const ExprPtr& rest) {
  if (is_value(rest, 1)) return number(c);
  if (c == 1) return rest;
  std::vector<ExprPtr> fs{number(c)};
  if (rest->kind == NodeKind::Mul) {
    fs.insert(fs.end(), rest->args.begin(), rest->args.end());
  } else {
    fs.push_back(rest);
  }
  return mul(std::move(fs));
}

ExprPtr canon_add(std::vector<ExprPtr> terms) {
  std::vector<ExprPtr> flat;
  for (auto& t : terms) {
    if (t->kind == NodeKind::Add) {
      flat.insert(flat.end(), t->args.begin(), t->args.end());
    } else {
      flat.push_back(std::move(t));
    }
  }
  Rational constant = 0;
  std::map<ExprPtr, Rational, ExprLess> like;
  for (const auto& t : flat) {
    auto [c, rest] = split_coeff(t);
    if (is_value(rest, 1)) {
      constant += c;
    } else {
      like[rest] += c;
    }
  }
  std::vector<ExprPtr> out;
  if (constant != 0) out.push_back(number(constant));
  for (const auto& [rest, c] : like) {
    if (c != 0) out.push_back(make_term(c, rest));
  }
  if (out.empty()) return zero();
  if (out.size() == 1) return out.front();
  std::sort(out.begin(), out.end(), ExprLess{});
  return add(std::move(out));
}

/// coefficient * prod(base^exp) for numeric bases and rational exponents,
/// reduced so every remaining prime exponent lies strictly in (0, 1).
/// Primes sharing a fractional exponent are multiplied into one radicand.
void reduce_radicals(Rational& coeff, const std::vector<std::pair<Rational, Rational>>& radicals,
                     std::vector<ExprPtr>& factors) {
  std::map<BigInt, Rational> primes;
  for (const auto& [base, exp] : radicals) {
    BigInt num = mp::numerator(base);
    BigInt den = mp::denominator(base);
    if (num < 0) {
      // Odd-denominator exponents only reach here.
      BigInt p = mp::numerator(exp);
      if (p % 2 != 0) coeff = -coeff;
      num = -num;
    }
    factor_into(num, exp, primes);
    factor_into(den, -exp, primes);
  }
  std::map<Rational, BigInt> grouped;
  for (const auto& [p, e] : primes) {
    BigInt num = mp::numerator(e);
    BigInt den = mp::denominator(e);
    // floor division toward -infinity
    BigInt q = num / den;
    if (num % den != 0 && num < 0) q -= 1;
    Rational frac = e - Rational(q);
    if (q != 0) {
      auto scaled = exact_power(Rational(p), static_cast<long>(q));
      if (!scaled) throw DomainError("radical coefficient too large");
      coeff *= *scaled;
    }
    if (frac != 0) {
      auto& radicand = grouped[frac];
      if (radicand == 0) radicand = 1;
      radicand *= p;
    }
  }
  for (const auto& [frac, radicand] : grouped) {
    factors.push_back(pow(number(Rational(radicand)), number(frac)));
  }
}

ExprPtr build_product(const Rational& coeff, std::vector<ExprPtr> factors) {
  if (coeff == 0) return zero();
  std::sort(factors.begin(), factors.end(), ExprLess{});
  if (factors.empty()) return number(coeff);
  if (coeff == 1 && factors.size() == 1) return factors.front();
  if (coeff != 1) factors.insert(factors.begin(), number(coeff));
  return mul(std::move(factors));
}

ExprPtr canon_mul(std::vector<ExprPtr> input) {
  std::vector<ExprPtr> flat;
  for (auto& f : input) {
    if (f->kind == NodeKind::Mul) {
      flat.insert(flat.end(), f->args.begin(), f->args.end());
    } else {
      flat.push_back(std::move(f));
    }
  }
  for (const auto& f : flat) {
    if (is_value(f, 0)) return zero();
  }

  // Distribute over sums when the expansion stays small.
  std::size_t expanded = 1;
  bool has_sum = false;
  for (const auto& f : flat) {
    if (f->kind == NodeKind::Add) {
      has_sum = true;
      expanded *= f->args.size();
      if (expanded > kMaxExpandedTerms) break;
    }
  }
  if (has_sum && expanded <= kMaxExpandedTerms) {
    std::vector<std::vector<ExprPtr>> products{{}};
    for (const auto& f : flat) {
      std::vector<ExprPtr> choices = f->kind == NodeKind::Add ? f->args : std::vector<ExprPtr>{f};
      std::vector<std::vector<ExprPtr>> next;
      next.reserve(products.size() * choices.size());
      for (const auto& p : products) {
        for (const auto& c : choices) {
          auto copy = p;
          copy.push_back(c);
          next.push_back(std::move(copy));
        }
      }
      products = std::move(next);
    }
    std::vector<ExprPtr> terms;
    terms.reserve(products.size());
    for (auto& p : products) terms.push_back(canon_mul(std::move(p)));
    return canon_add(std::move(terms));
  }

  Rational coeff = 1;
  std::vector<std::pair<Rational, Rational>> radicals;
  std::map<ExprPtr, std::vector<ExprPtr>, ExprLess> powers;
  for (const auto& f : flat) {
    if (f->kind == NodeKind::Number) {
      coeff *= f->value;
    } else if (f->kind == NodeKind::Pow && f->args[0]->kind == NodeKind::Number &&
               f->args[1]->kind == NodeKind::Number &&
               (f->args[0]->value > 0 ||
                mp::denominator(f->args[1]->value) % 2 == 1)) {
      radicals.emplace_back(f->args[0]->value, f->args[1]->value);
    } else if (f->kind == NodeKind::Pow) {
      powers[f->args[0]].push_back(f->args[1]);
    } else {
      powers[f].push_back(one());
    }
  }

  std::vector<ExprPtr> factors;
  if (!radicals.empty()) reduce_radicals(coeff, radicals, factors);
  // Merging exponents can produce numbers, products, sums or numeric
  // radicals; those go through another pass. A factor that comes back
  // unchanged never does, which bounds the recursion.
  std::vector<ExprPtr> fresh;
  for (const auto& [base, exps] : powers) {
    ExprPtr original;
    ExprPtr f;
    if (exps.size() == 1) {
      original = is_value(exps[0], 1) ? base : pow(base, exps[0]);
      f = is_value(exps[0], 1) ? base : canon_pow(base, exps[0]);
    } else {
      f = canon_pow(base, canon_add(exps));
    }
    if (is_value(f, 1)) continue;
    bool unchanged = original && same(original, f);
    bool mergeable = f->kind == NodeKind::Number || f->kind == NodeKind::Mul ||
                     f->kind == NodeKind::Add ||
                     (f->kind == NodeKind::Pow && f->args[0]->kind == NodeKind::Number &&
                      f->args[1]->kind == NodeKind::Number);
    if (mergeable && !unchanged) {
      fresh.push_back(std::move(f));
    } else {
      factors.push_back(std::move(f));
    }
  }
  if (!fresh.empty()) {
    std::vector<ExprPtr> again{number(coeff)};
    again.insert(again.end(), factors.begin(), factors.end());
    again.insert(again.end(), fresh.begin(), fresh.end());
    return canon_mul(std::move(again));
  }
  return build_product(coeff, std::move(factors));
}

ExprPtr canon_pow(const ExprPtr& base, const ExprPtr& exponent) {
  if (exponent->kind == NodeKind::Number) {
    const Rational& q = exponent->value;
    if (q == 0) return one();
    if (q == 1) return base;
    if (base->kind == NodeKind::Number) {
      const Rational& b = base->value;
      if (b == 0) {
        if (q < 0) throw DomainError("division by zero");
        return zero();
      }
      if (b == 1) return one();
      if (is_integer(q)) {
        BigInt n = mp::numerator(q);
        if (n > -100000 && n < 100000) {
          if (auto v = exact_power(b, n.convert_to<long>())) return number(*v);
        }
        return pow(base, exponent);
      }
      if (b > 0 || mp::denominator(q) % 2 == 1) {
        Rational coeff = 1;
        std::vector<ExprPtr> factors;
        reduce_radicals(coeff, {{b, q}}, factors);
        return build_product(coeff, std::move(factors));
      }
      return pow(base, exponent);  // even root of a negative number
    }
    if (base->kind == NodeKind::Pow) {
      const auto& inner = base->args[0];
      if (is_integer(q) || positive_constant(inner)) {
        return canon_pow(inner, canon_mul({base->args[1], exponent}));
      }
      return pow(base, exponent);
    }
    if (base->kind == NodeKind::Mul) {
      if (is_integer(q)) {
        std::vector<ExprPtr> fs;
        for (const auto& f : base->args) fs.push_back(canon_pow(f, exponent));
        return canon_mul(std::move(fs));
      }
      std::vector<ExprPtr> positive, rest;
      for (const auto& f : base->args) (positive_constant(f) ? positive : rest).push_back(f);
      if (positive.empty()) return pow(base, exponent);
      std::vector<ExprPtr> fs;
      for (const auto& f : positive) fs.push_back(canon_pow(f, exponent));
      if (!rest.empty()) {
        ExprPtr r = rest.size() == 1 ? rest[0] : mul(rest);
        fs.push_back(pow(r, exponent));
      }
      return canon_mul(std::move(fs));
    }
    if (base->kind == NodeKind::Add && is_integer(q) && q > 1 && q <= kMaxAddPower) {
      std::size_t terms = base->args.size();
      std::size_t total = 1;
      long n = mp::numerator(q).convert_to<long>();
      for (long i = 0; i < n && total <= kMaxExpandedTerms; ++i) total *= terms;
      if (total <= kMaxExpandedTerms) {
        return canon_mul(std::vector<ExprPtr>(static_cast<std::size_t>(n), base));
      }
    }
    return pow(base, exponent);
  }
  if (is_value(base, 1)) return one();
  if (base->kind == NodeKind::Pow && positive_constant(base->args[0])) {
    return canon_pow(base->args[0], canon_mul({base->args[1], exponent}));
  }
  return pow(base, exponent);
}

std::optional<BigInt> factorial(const Rational& r) {
  if (!is_integer(r) || r < 0 || r > 300) return std::nullopt;
  BigInt out = 1;
  long n = mp::numerator(r).convert_to<long>();
  for (long i = 2; i <= n; ++i) out *= i;
  return out;
}

ExprPtr canon_func(const std::string& name, const ExprPtr& arg) {
  if (name == "exp") return canon_pow(euler(), arg);
  if (name == "abs") {
    if (arg->kind == NodeKind::Number) return number(arg->value < 0 ? Rational(-arg->value) : arg->value);
    if (positive_constant(arg)) return arg;
  }
  if (name == "factorial" && arg->kind == NodeKind::Number) {
    if (auto f = factorial(arg->value)) return number(Rational(*f));
  }
  if ((name == "ln" || name == "log") && is_value(arg, 1)) return zero();
  if (name == "ln" && arg->kind == NodeKind::Euler) return one();
  if ((name == "sin" || name == "tan" || name == "arcsin" || name == "arctan") && is_value(arg, 0)) {
    return zero();
  }
  if (name == "cos" && is_value(arg, 0)) return one();
  return func(name, arg);
}

std::vector<ExprPtr> canon_all(const std::vector<ExprPtr>& xs) {
  std::vector<ExprPtr> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(canon(x));
  return out;
}

RelOp flip(RelOp op) {
  switch (op) {
    case RelOp::Lt: return RelOp::Gt;
    case RelOp::Le: return RelOp::Ge;
    case RelOp::Gt: return RelOp::Lt;
    case RelOp::Ge: return RelOp::Le;
    default: return op;
  }
}

ExprPtr canon(const ExprPtr& e) {
  switch (e->kind) {
    case NodeKind::Number:
    case NodeKind::Symbol:
    case NodeKind::Pi:
    case NodeKind::Euler:
    case NodeKind::Degree:
    case NodeKind::Infinity:
      return e;
    case NodeKind::Add: return canon_add(canon_all(e->args));
    case NodeKind::Mul: return canon_mul(canon_all(e->args));
    case NodeKind::Pow: return canon_pow(canon(e->args[0]), canon(e->args[1]));
    case NodeKind::Func: return canon_func(e->name, canon(e->args[0]));
    case NodeKind::Tuple: return tuple(canon_all(e->args));
    case NodeKind::List: {
      auto items = canon_all(e->args);
      std::sort(items.begin(), items.end(), ExprLess{});
      return list(std::move(items));
    }
    case NodeKind::Set: {
      auto items = canon_all(e->args);
      std::sort(items.begin(), items.end(), ExprLess{});
      items.erase(std::unique(items.begin(), items.end(), same), items.end());
      return set(std::move(items));
    }
    case NodeKind::Interval:
      return interval(canon(e->args[0]), canon(e->args[1]), e->left_closed, e->right_closed);
    case NodeKind::Relation: {
      auto operands = canon_all(e->args);
      auto ops = e->ops;
      bool all_greater = std::all_of(ops.begin(), ops.end(),
                                     [](RelOp op) { return op == RelOp::Gt || op == RelOp::Ge; });
      if (all_greater) {
        std::reverse(operands.begin(), operands.end());
        std::reverse(ops.begin(), ops.end());
        for (auto& op : ops) op = flip(op);
      }
      return relation(std::move(operands), std::move(ops));
    }
    case NodeKind::PlusMinus:
      return plus_minus(canon(e->args[0]), canon(e->args[1]));
  }
  return e;
}

}  // namespace

ExprPtr canonicalize(const ExprPtr& e) { return canon(e); }

}  // namespace livemath::answer
