#include <boost/math/constants/constants.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "livemath/answer/expr.hpp"

namespace livemath::answer {

namespace {

namespace mp = boost::multiprecision;

bool finite(const Real& v) { return mp::isfinite(v); }

std::optional<Real> checked(Real v) {
  if (!finite(v)) return std::nullopt;
  return v;
}

std::optional<Real> integer_power(Real base, BigInt n) {
  bool invert = n < 0;
  if (invert) n = -n;
  if (n > 100000) {
    if (base < 0) {
      Real mag = mp::pow(-base, Real(n.str()));
      if (n % 2 != 0) mag = -mag;
      if (invert) {
        if (mag == 0) return std::nullopt;
        mag = 1 / mag;
      }
      return checked(mag);
    }
    Real v = mp::pow(base, Real(n.str()) * (invert ? -1 : 1));
    return checked(v);
  }
  Real result = 1;
  long e = n.convert_to<long>();
  while (e > 0) {
    if (e & 1) result *= base;
    base *= base;
    e >>= 1;
    if (!finite(result) || !finite(base)) return std::nullopt;
  }
  if (invert) {
    if (result == 0) return std::nullopt;
    result = 1 / result;
  }
  return checked(result);
}

std::optional<Real> power(const ExprPtr& base_expr, const ExprPtr& exp_expr, const Env& env) {
  auto base = evaluate(base_expr, env);
  if (!base) return std::nullopt;
  if (exp_expr->kind == NodeKind::Number) {
    const Rational& q = exp_expr->value;
    if (is_integer(q)) return integer_power(*base, mp::numerator(q));
    BigInt den = mp::denominator(q);
    BigInt num = mp::numerator(q);
    if (*base == 0) {
      if (q > 0) return Real(0);
      return std::nullopt;
    }
    if (*base < 0) {
      if (den % 2 == 0) return std::nullopt;  // complex
      Real mag = mp::pow(-*base, to_real(q));
      return checked(num % 2 == 0 ? mag : Real(-mag));
    }
    return checked(mp::pow(*base, to_real(q)));
  }
  auto ex = evaluate(exp_expr, env);
  if (!ex) return std::nullopt;
  if (*base == 0) {
    if (*ex > 0) return Real(0);
    return std::nullopt;
  }
  if (*base < 0) {
    // Only integer-valued exponents are real here.
    Real rounded = mp::round(*ex);
    if (rounded != *ex) return std::nullopt;
    return integer_power(*base, BigInt(rounded.str(0, std::ios_base::fixed)));
  }
  return checked(mp::pow(*base, *ex));
}

std::optional<Real> apply_function(const std::string& name, const Real& x) {
  using mp::abs;
  if (name == "sin") return checked(mp::sin(x));
  if (name == "cos") return checked(mp::cos(x));
  if (name == "tan") {
    Real c = mp::cos(x);
    if (abs(c) < Real("1e-45")) return std::nullopt;
    return checked(mp::sin(x) / c);
  }
  if (name == "cot" || name == "sec" || name == "csc") {
    Real d = name == "cot" ? mp::sin(x) : name == "sec" ? mp::cos(x) : mp::sin(x);
    if (abs(d) < Real("1e-45")) return std::nullopt;
    Real n = name == "cot" ? mp::cos(x) : Real(1);
    return checked(n / d);
  }
  if (name == "ln" || name == "log") {
    if (x <= 0) return std::nullopt;
    return checked(mp::log(x));
  }
  if (name == "exp") return checked(mp::exp(x));
  if (name == "abs") return abs(x);
  if (name == "arcsin" || name == "arccos") {
    if (x < -1 || x > 1) return std::nullopt;
    return checked(name == "arcsin" ? mp::asin(x) : mp::acos(x));
  }
  if (name == "arctan") return checked(mp::atan(x));
  if (name == "sinh") return checked(mp::sinh(x));
  if (name == "cosh") return checked(mp::cosh(x));
  if (name == "tanh") return checked(mp::tanh(x));
  if (name == "factorial") {
    if (x < 0) return std::nullopt;
    if (x > 1000) return std::nullopt;
    return checked(boost::math::tgamma(x + 1));
  }
  return std::nullopt;
}

}  // namespace

Real to_real(const Rational& r) {
  Real n(mp::numerator(r));
  Real d(mp::denominator(r));
  return n / d;
}

std::optional<Real> evaluate(const ExprPtr& e, const Env& env) {
  switch (e->kind) {
    case NodeKind::Number: return to_real(e->value);
    case NodeKind::Symbol: {
      auto it = env.find(e->name);
      if (it == env.end()) return std::nullopt;
      return it->second;
    }
    case NodeKind::Degree: {
      auto it = env.find("\\circ");
      if (it == env.end()) return std::nullopt;
      return it->second;
    }
    case NodeKind::Pi: return boost::math::constants::pi<Real>();
    case NodeKind::Euler: return boost::math::constants::e<Real>();
    case NodeKind::Infinity: return std::nullopt;
    case NodeKind::Add: {
      Real sum = 0;
      for (const auto& a : e->args) {
        auto v = evaluate(a, env);
        if (!v) return std::nullopt;
        sum += *v;
      }
      return checked(sum);
    }
    case NodeKind::Mul: {
      Real prod = 1;
      for (const auto& a : e->args) {
        auto v = evaluate(a, env);
        if (!v) return std::nullopt;
        prod *= *v;
      }
      return checked(prod);
    }
    case NodeKind::Pow: return power(e->args[0], e->args[1], env);
    case NodeKind::Func: {
      auto v = evaluate(e->args[0], env);
      if (!v) return std::nullopt;
      return apply_function(e->name, *v);
    }
    default:
      return std::nullopt;
  }
}

}  // namespace livemath::answer
