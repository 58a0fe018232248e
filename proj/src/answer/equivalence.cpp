#include <algorithm>
#include <cctype>
#include <random>

#include "livemath/answer.hpp"
#include "livemath/hash.hpp"

namespace livemath::answer {

namespace {

constexpr int kMaxProbeAttempts = 64;

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

MatchMethod weaker(MatchMethod a, MatchMethod b) {
  return static_cast<int>(a) >= static_cast<int>(b) ? a : b;
}

bool is_zero(const ExprPtr& e) { return e->kind == NodeKind::Number && e->value == 0; }

class Comparer {
 public:
  explicit Comparer(const EquivalenceOptions& options) : options_(options) {}

  std::optional<MatchMethod> compare(const ExprPtr& x, const ExprPtr& y) {
    if (is_scalar_kind(x->kind) && is_scalar_kind(y->kind)) return compare_scalar(x, y);
    if (x->kind == NodeKind::Tuple && y->kind == NodeKind::Tuple) return compare_ordered(x, y);
    bool xs = x->kind == NodeKind::List || x->kind == NodeKind::Set;
    bool ys = y->kind == NodeKind::List || y->kind == NodeKind::Set;
    if (xs && ys) return compare_unordered(x, y);
    if (x->kind == NodeKind::Interval && y->kind == NodeKind::Interval) {
      if (x->left_closed != y->left_closed || x->right_closed != y->right_closed) {
        return reject(MatchMethod::SymbolicExact, "interval endpoints differ in closedness");
      }
      return compare_ordered(x, y);
    }
    if (x->kind == NodeKind::Relation && y->kind == NodeKind::Relation) {
      return compare_relation(x, y);
    }
    return reject(MatchMethod::SymbolicExact, "answers have different shapes");
  }

  MatchMethod last_method() const { return last_method_; }
  const std::string& detail() const { return detail_; }

 private:
  const EquivalenceOptions& options_;
  MatchMethod last_method_ = MatchMethod::SymbolicExact;
  std::string detail_;

  std::optional<MatchMethod> reject(MatchMethod m, std::string why) {
    last_method_ = m;
    detail_ = std::move(why);
    return std::nullopt;
  }

  std::optional<MatchMethod> accept(MatchMethod m, std::string why) {
    last_method_ = m;
    detail_ = std::move(why);
    return m;
  }

  bool close(const Real& a, const Real& b) const {
    Real diff = boost::multiprecision::abs(a - b);
    Real scale = std::max(boost::multiprecision::abs(a), boost::multiprecision::abs(b));
    return diff <= Real(options_.relative_tolerance) * scale || diff < Real("1e-30");
  }

  std::optional<MatchMethod> compare_ordered(const ExprPtr& x, const ExprPtr& y) {
    if (x->args.size() != y->args.size()) {
      return reject(MatchMethod::SymbolicExact, "element counts differ");
    }
    MatchMethod method = MatchMethod::NumericValue;
    for (std::size_t i = 0; i < x->args.size(); ++i) {
      auto m = compare(x->args[i], y->args[i]);
      if (!m) return std::nullopt;
      method = weaker(method, *m);
    }
    return accept(method, "all elements match in order");
  }

  std::optional<MatchMethod> compare_unordered(const ExprPtr& x, const ExprPtr& y) {
    if (x->args.size() != y->args.size()) {
      return reject(MatchMethod::SymbolicExact, "element counts differ");
    }
    std::vector<bool> used(y->args.size(), false);
    MatchMethod method = MatchMethod::NumericValue;
    for (const auto& a : x->args) {
      bool found = false;
      for (std::size_t j = 0; j < y->args.size() && !found; ++j) {
        if (used[j]) continue;
        if (auto m = compare(a, y->args[j])) {
          used[j] = true;
          found = true;
          method = weaker(method, *m);
        }
      }
      if (!found) return reject(last_method_, "no counterpart for element " + to_string(a));
    }
    return accept(method, "all elements match as a multiset");
  }

  std::optional<MatchMethod> compare_scalar(const ExprPtr& x, const ExprPtr& y) {
    if (same(x, y)) {
      bool numbers = x->kind == NodeKind::Number && y->kind == NodeKind::Number;
      return accept(numbers ? MatchMethod::NumericValue : MatchMethod::SymbolicExact,
                    numbers ? "equal exact values" : "identical canonical forms");
    }
    auto sx = free_symbols(x);
    auto sy = free_symbols(y);
    if (sx.empty() && sy.empty()) {
      auto vx = evaluate(x);
      auto vy = evaluate(y);
      if (!vx || !vy) return reject(MatchMethod::NumericValue, "value is not a finite real");
      if (close(*vx, *vy)) return accept(MatchMethod::NumericValue, "values agree at 50 digits");
      return reject(MatchMethod::NumericValue, "values differ");
    }
    try {
      if (is_zero(canonicalize(sub(x, y)))) {
        return accept(MatchMethod::SymbolicExact, "difference simplifies to zero");
      }
    } catch (const DomainError&) {
    }
    // Probing over the union of symbols also catches a variable that cancels
    // on one side only, e.g. sin^2 x + cos^2 x against 1.
    sx.insert(sy.begin(), sy.end());
    return probe(x, y, sx, false, false);
  }

  std::optional<MatchMethod> compare_relation(const ExprPtr& x, const ExprPtr& y) {
    if (x->ops != y->ops) return reject(MatchMethod::SymbolicExact, "relation operators differ");
    if (x->ops.size() > 1) return compare_ordered(x, y);
    RelOp op = x->ops.front();
    bool symmetric = op == RelOp::Eq || op == RelOp::Ne;
    ExprPtr d1;
    ExprPtr d2;
    try {
      d1 = canonicalize(sub(x->args[0], x->args[1]));
      d2 = canonicalize(sub(y->args[0], y->args[1]));
      if (same(d1, d2)) return accept(MatchMethod::SymbolicExact, "identical normalized relations");
      if (symmetric && same(d1, canonicalize(neg(d2)))) {
        return accept(MatchMethod::SymbolicExact, "relations differ by sides swapped");
      }
    } catch (const DomainError&) {
      return reject(MatchMethod::SymbolicExact, "relation is undefined");
    }
    auto symbols = free_symbols(d1);
    auto s2 = free_symbols(d2);
    symbols.insert(s2.begin(), s2.end());
    return probe(d1, d2, symbols, true, !symmetric);
  }

  // Random rational points seeded from the unordered pair, so the verdict is
  // the same whichever side is passed first.
  std::uint64_t seed_for(const ExprPtr& x, const ExprPtr& y) const {
    bool swap = answer::compare(*y, *x) < 0;
    std::string key = to_string(swap ? y : x) + '\x1f' + to_string(swap ? x : y);
    return fingerprint128(key).lo;
  }

  // ratio=false: f(p) == g(p) at every point. ratio=true: f(p)/g(p) is one
  // nonzero constant (positive when `positive` is set).
  std::optional<MatchMethod> probe(const ExprPtr& f, const ExprPtr& g,
                                   const std::set<std::string>& symbols, bool ratio,
                                   bool positive) {
    std::mt19937_64 rng(seed_for(f, g));
    std::optional<Real> first_ratio;
    int informative = 0;
    for (int attempt = 0; attempt < kMaxProbeAttempts && informative < options_.probe_points;
         ++attempt) {
      Env env;
      for (const auto& s : symbols) {
        long long n = static_cast<long long>(rng() % 40) - 20;
        if (n >= 0) ++n;  // skip 0: n in [-20, -1] or [1, 20]
        long long d = static_cast<long long>(rng() % 7) + 1;
        env[s] = to_real(Rational(n, d));
      }
      auto vf = evaluate(f, env);
      auto vg = evaluate(g, env);
      if (!vf || !vg) continue;
      if (!ratio) {
        if (!close(*vf, *vg)) return reject(MatchMethod::NumericProbe, "values differ at a probe point");
        ++informative;
        continue;
      }
      bool zf = boost::multiprecision::abs(*vf) < Real("1e-30");
      bool zg = boost::multiprecision::abs(*vg) < Real("1e-30");
      if (zf && zg) continue;
      if (zf != zg) return reject(MatchMethod::NumericProbe, "relations disagree at a probe point");
      Real r = *vf / *vg;
      if (!first_ratio) {
        if (positive && r < 0) {
          return reject(MatchMethod::NumericProbe, "inequalities point in opposite directions");
        }
        first_ratio = r;
      } else if (!close(r, *first_ratio)) {
        return reject(MatchMethod::NumericProbe, "relations are not proportional");
      }
      ++informative;
    }
    if (informative < options_.probe_points) {
      return reject(MatchMethod::NumericProbe, "too few probe points in the domain");
    }
    return accept(MatchMethod::NumericProbe,
                  "agree at " + std::to_string(informative) + " random rational points");
  }
};

}  // namespace

std::string_view to_string(MatchMethod m) {
  switch (m) {
    case MatchMethod::String: return "string";
    case MatchMethod::NumericValue: return "numeric_value";
    case MatchMethod::SymbolicExact: return "symbolic_exact";
    case MatchMethod::NumericProbe: return "numeric_probe";
  }
  return "string";
}

EquivalenceVerdict equivalent(std::string_view a, std::string_view b,
                              const EquivalenceOptions& options) {
  std::string na = normalize_answer(a);
  std::string nb = normalize_answer(b);
  if (na == nb) return {true, MatchMethod::String, "normalized strings are identical"};
  // Fixed orientation keeps every later rule symmetric.
  if (nb < na) {
    std::swap(a, b);
    std::swap(na, nb);
  }
  auto pa = parse_answer(a);
  auto pb = parse_answer(b);
  const auto* ta = std::get_if<TextAnswer>(&pa);
  const auto* tb = std::get_if<TextAnswer>(&pb);
  if (ta || tb) {
    if (ta && tb && lowercase(na) == lowercase(nb)) {
      return {true, MatchMethod::String, "text answers match ignoring case"};
    }
    return {false, MatchMethod::String,
            ta && tb ? "text answers differ" : "text answer against a math expression"};
  }
  Comparer comparer(options);
  auto m = comparer.compare(std::get<AnswerExpr>(pa).node, std::get<AnswerExpr>(pb).node);
  if (m) return {true, *m, comparer.detail()};
  return {false, comparer.last_method(), comparer.detail()};
}

}  // namespace livemath::answer
