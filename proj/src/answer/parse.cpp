#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "livemath/answer.hpp"
#include "normalize.hpp"

namespace livemath::answer {

namespace {

struct ParseFailure {};

[[noreturn]] void fail() { throw ParseFailure{}; }

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

enum class Tok {
  End, Num, Word, Cmd, Sub, Degree,
  Plus, Minus, Star, Slash, Caret, Bang,
  LParen, RParen, LBrack, RBrack, LBrace, RBrace, LSet, RSet,
  Comma, Bar, Eq, Lt, Gt, Le, Ge, Ne,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  bool split = false;  // a letter run that already lost its first letter
};

std::size_t skip_spaces(std::string_view s, std::size_t i) {
  while (i < s.size() && is_space(s[i])) ++i;
  return i;
}

bool command_at(std::string_view s, std::size_t i, std::string_view name) {
  if (s.substr(i, name.size()) != name) return false;
  std::size_t j = i + name.size();
  return j >= s.size() || !is_letter(s[j]);
}

// Returns the index one past the brace group starting at `open`.
std::size_t match_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      continue;
    }
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i + 1;
  }
  fail();
}

std::string strip_spaces(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!is_space(c)) out += c;
  }
  return out;
}

std::vector<Token> lex(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto push = [&](Tok k, std::string text = {}) { out.push_back({k, std::move(text), false}); };
  while (i < s.size()) {
    char c = s[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < s.size() && is_digit(s[i + 1]))) {
      std::size_t j = i;
      while (j < s.size() && is_digit(s[j])) ++j;
      if (j < s.size() && s[j] == '.' && j + 1 < s.size() && is_digit(s[j + 1])) {
        ++j;
        while (j < s.size() && is_digit(s[j])) ++j;
      }
      push(Tok::Num, std::string(s.substr(i, j - i)));
      i = j;
      continue;
    }
    if (is_letter(c)) {
      std::size_t j = i;
      while (j < s.size() && is_letter(s[j])) ++j;
      push(Tok::Word, std::string(s.substr(i, j - i)));
      i = j;
      continue;
    }
    if (c == '\\') {
      if (i + 1 >= s.size()) fail();
      char d = s[i + 1];
      if (d == '{') {
        push(Tok::LSet);
        i += 2;
        continue;
      }
      if (d == '}') {
        push(Tok::RSet);
        i += 2;
        continue;
      }
      if (!is_letter(d)) fail();
      std::size_t j = i + 1;
      while (j < s.size() && is_letter(s[j])) ++j;
      push(Tok::Cmd, std::string(s.substr(i + 1, j - i - 1)));
      i = j;
      continue;
    }
    if (c == '^') {
      std::size_t j = skip_spaces(s, i + 1);
      if (command_at(s, j, "\\circ")) {
        push(Tok::Degree);
        i = j + 5;
        continue;
      }
      if (j < s.size() && s[j] == '{') {
        std::size_t k = skip_spaces(s, j + 1);
        if (command_at(s, k, "\\circ")) {
          k = skip_spaces(s, k + 5);
          if (k < s.size() && s[k] == '}') {
            push(Tok::Degree);
            i = k + 1;
            continue;
          }
        }
      }
      push(Tok::Caret);
      ++i;
      continue;
    }
    if (c == '_') {
      std::size_t j = skip_spaces(s, i + 1);
      if (j >= s.size()) fail();
      std::string content;
      if (s[j] == '{') {
        std::size_t end = match_brace(s, j);
        content = strip_spaces(s.substr(j + 1, end - j - 2));
        i = end;
      } else if (s[j] == '\\') {
        std::size_t k = j + 1;
        while (k < s.size() && is_letter(s[k])) ++k;
        content = std::string(s.substr(j, k - j));
        i = k;
      } else {
        content = std::string(1, s[j]);
        i = j + 1;
      }
      if (content.empty()) fail();
      push(Tok::Sub, content);
      continue;
    }
    auto two = s.substr(i, 2);
    if (two == "<=") { push(Tok::Le); i += 2; continue; }
    if (two == ">=") { push(Tok::Ge); i += 2; continue; }
    if (two == "!=") { push(Tok::Ne); i += 2; continue; }
    switch (c) {
      case '+': push(Tok::Plus); break;
      case '-': push(Tok::Minus); break;
      case '*': push(Tok::Star); break;
      case '/': push(Tok::Slash); break;
      case '!': push(Tok::Bang); break;
      case '(': push(Tok::LParen); break;
      case ')': push(Tok::RParen); break;
      case '[': push(Tok::LBrack); break;
      case ']': push(Tok::RBrack); break;
      case '{': push(Tok::LBrace); break;
      case '}': push(Tok::RBrace); break;
      case ',': push(Tok::Comma); break;
      case '|': push(Tok::Bar); break;
      case '=': push(Tok::Eq); break;
      case '<': push(Tok::Lt); break;
      case '>': push(Tok::Gt); break;
      default: fail();
    }
    ++i;
  }
  push(Tok::End);
  return out;
}

const std::set<std::string, std::less<>>& function_names() {
  static const std::set<std::string, std::less<>> names = {
      "sin", "cos", "tan", "cot", "sec", "csc", "ln", "log", "exp",
      "arcsin", "arccos", "arctan", "sinh", "cosh", "tanh"};
  return names;
}

const std::set<std::string, std::less<>>& greek_names() {
  static const std::set<std::string, std::less<>> names = {
      "alpha", "beta", "gamma", "delta", "epsilon", "varepsilon", "zeta", "eta",
      "theta", "vartheta", "iota", "kappa", "lambda", "mu", "nu", "xi",
      "rho", "sigma", "tau", "upsilon", "phi", "varphi", "chi", "psi",
      "omega", "Gamma", "Delta", "Theta", "Lambda", "Xi", "Sigma", "Phi",
      "Psi", "Omega"};
  return names;
}

// Two-letter runs that are English words rather than products of symbols.
const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "am", "an", "as", "at", "be", "by", "do", "go", "he", "if", "in", "is", "it",
      "me", "my", "no", "of", "ok", "on", "or", "so", "to", "up", "us", "we"};
  return words;
}

Rational parse_decimal(const std::string& text) {
  auto dot = text.find('.');
  std::string digits = dot == std::string::npos ? text : text.substr(0, dot) + text.substr(dot + 1);
  std::size_t scale = dot == std::string::npos ? 0 : text.size() - dot - 1;
  // cpp_int reads a leading 0 as an octal prefix.
  auto first = digits.find_first_not_of('0');
  digits = first == std::string::npos ? "0" : digits.substr(first);
  BigInt num(digits);
  BigInt den = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(scale));
  return Rational(num, den);
}

bool has_infinity(const ExprPtr& e) {
  if (e->kind == NodeKind::Infinity) return true;
  return std::any_of(e->args.begin(), e->args.end(), has_infinity);
}

ExprPtr scalar(ExprPtr e) {
  if (!is_scalar_kind(e->kind)) fail();
  return e;
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  ExprPtr parse_all() {
    auto e = parse_list();
    expect(Tok::End);
    return e;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int abs_depth_ = 0;

  const Token& peek() const { return toks_[pos_]; }
  bool at(Tok k) const { return peek().kind == k; }
  bool at_cmd(std::string_view name) const { return at(Tok::Cmd) && peek().text == name; }
  Token take() {
    Token t = toks_[pos_];
    if (t.kind != Tok::End) ++pos_;
    return t;
  }
  void expect(Tok k) {
    if (!at(k)) fail();
    take();
  }

  ExprPtr parse_list() {
    std::vector<ExprPtr> items{parse_relation()};
    while (at(Tok::Comma)) {
      take();
      items.push_back(parse_relation());
    }
    return items.size() == 1 ? items.front() : list(std::move(items));
  }

  std::optional<RelOp> relop() const {
    switch (peek().kind) {
      case Tok::Eq: return RelOp::Eq;
      case Tok::Lt: return RelOp::Lt;
      case Tok::Gt: return RelOp::Gt;
      case Tok::Le: return RelOp::Le;
      case Tok::Ge: return RelOp::Ge;
      case Tok::Ne: return RelOp::Ne;
      case Tok::Cmd: {
        const auto& t = peek().text;
        if (t == "le") return RelOp::Le;
        if (t == "ge") return RelOp::Ge;
        if (t == "ne") return RelOp::Ne;
        if (t == "lt") return RelOp::Lt;
        if (t == "gt") return RelOp::Gt;
        return std::nullopt;
      }
      default: return std::nullopt;
    }
  }

  ExprPtr parse_relation() {
    std::vector<ExprPtr> operands{parse_sum()};
    std::vector<RelOp> ops;
    while (auto op = relop()) {
      take();
      ops.push_back(*op);
      operands.push_back(parse_sum());
    }
    if (ops.empty()) return operands.front();
    for (const auto& o : operands) scalar(o);
    return relation(std::move(operands), std::move(ops));
  }

  bool at_pm() const { return at_cmd("pm") || at_cmd("mp"); }

  ExprPtr parse_sum() {
    std::vector<ExprPtr> terms;
    auto collapse = [&]() { return terms.size() == 1 ? terms.front() : add(terms); };
    if (at(Tok::Minus)) {
      take();
      terms.push_back(neg(scalar(parse_term())));
    } else if (at(Tok::Plus)) {
      take();
      terms.push_back(scalar(parse_term()));
    } else if (at_pm()) {
      take();
      terms.push_back(plus_minus(number(0), scalar(parse_term())));
    } else {
      terms.push_back(parse_term());
    }
    while (true) {
      if (at(Tok::Plus)) {
        take();
        terms.push_back(scalar(parse_term()));
      } else if (at(Tok::Minus)) {
        take();
        terms.push_back(neg(scalar(parse_term())));
      } else if (at_pm()) {
        take();
        auto t = scalar(parse_term());
        auto acc = collapse();
        terms = {plus_minus(acc, t)};
      } else {
        break;
      }
    }
    if (terms.size() > 1) {
      for (const auto& t : terms) scalar(t);
    }
    return collapse();
  }

  bool primary_command(std::string_view name) const {
    return name == "frac" || name == "sqrt" || name == "pi" || name == "infty" ||
           name == "operatorname" || function_names().count(name) || greek_names().count(name);
  }

  bool starts_implicit() const {
    switch (peek().kind) {
      case Tok::Num:
      case Tok::Word:
      case Tok::LParen:
      case Tok::LBrace:
        return true;
      case Tok::Bar: return abs_depth_ == 0;
      case Tok::Cmd: return primary_command(peek().text);
      default: return false;
    }
  }

  ExprPtr parse_term() {
    ExprPtr acc = parse_unary();
    while (true) {
      if (at(Tok::Star) || at_cmd("cdot") || at_cmd("times")) {
        take();
        acc = mul({scalar(acc), scalar(parse_unary())});
      } else if (at(Tok::Slash) || at_cmd("div")) {
        take();
        acc = div(scalar(acc), scalar(parse_unary()));
      } else if (starts_implicit()) {
        acc = mul({scalar(acc), scalar(parse_power())});
      } else {
        break;
      }
    }
    return acc;
  }

  ExprPtr parse_unary() {
    if (at(Tok::Minus)) {
      take();
      return neg(scalar(parse_unary()));
    }
    if (at(Tok::Plus)) {
      take();
      return parse_unary();
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_postfix(parse_primary());
    if (!at(Tok::Caret)) return base;
    take();
    ExprPtr ex = parse_exponent();
    if (at(Tok::Caret)) fail();  // double superscript
    return parse_postfix(pow(scalar(base), scalar(ex)));
  }

  ExprPtr parse_postfix(ExprPtr e) {
    while (true) {
      if (at(Tok::Bang)) {
        take();
        e = func("factorial", scalar(e));
      } else if (at(Tok::Degree)) {
        take();
        e = mul({scalar(e), degree()});
      } else {
        return e;
      }
    }
  }

  // Superscripts and \frac arguments take one character unless braced.
  ExprPtr single_digit() {
    Token& t = toks_[pos_];
    if (t.text.size() == 1 || t.text[1] == '.') {
      if (t.text.size() > 1) fail();
      take();
      return number(static_cast<long long>(t.text[0] - '0'));
    }
    long long d = t.text[0] - '0';
    t.text.erase(0, 1);
    return number(d);
  }

  ExprPtr single_letter() {
    Token& t = toks_[pos_];
    char c = t.text[0];
    if (t.text.size() > 1) {
      t.text.erase(0, 1);
      t.split = true;
      return c == 'e' ? euler() : symbol(std::string(1, c));
    }
    take();
    return letter_symbol(c);
  }

  ExprPtr letter_symbol(char c) {
    if (at(Tok::Sub)) {
      std::string sub = take().text;
      return symbol(std::string(1, c) + "_{" + sub + "}");
    }
    if (c == 'e') return euler();
    return symbol(std::string(1, c));
  }

  ExprPtr parse_exponent() {
    switch (peek().kind) {
      case Tok::LBrace: {
        take();
        auto e = parse_sum();
        expect(Tok::RBrace);
        return e;
      }
      case Tok::Minus: take(); return neg(scalar(parse_exponent()));
      case Tok::Plus: take(); return parse_exponent();
      case Tok::Num: return single_digit();
      case Tok::Word: return single_letter();
      case Tok::LParen:
      case Tok::Cmd:
        return parse_primary();
      default: fail();
    }
  }

  ExprPtr read_arg() {
    switch (peek().kind) {
      case Tok::LBrace: {
        take();
        auto e = parse_sum();
        expect(Tok::RBrace);
        return scalar(e);
      }
      case Tok::Num: return single_digit();
      case Tok::Word: return single_letter();
      case Tok::Cmd: return scalar(parse_primary());
      default: fail();
    }
  }

  ExprPtr parse_sqrt() {
    if (at(Tok::LBrack)) {
      take();
      auto index = scalar(parse_sum());
      expect(Tok::RBrack);
      if (index->kind == NodeKind::Number &&
          (!is_integer(index->value) || index->value < 2)) {
        fail();
      }
      auto arg = read_arg();
      return pow(arg, div(number(1), index));
    }
    return pow(read_arg(), number(Rational(1, 2)));
  }

  ExprPtr parse_function(const std::string& name) {
    std::optional<ExprPtr> log_base;
    if (name == "log" && at(Tok::Sub)) {
      Parser sub(lex(take().text));
      log_base = scalar(sub.parse_all());
    }
    std::optional<ExprPtr> power;
    if (at(Tok::Caret)) {
      take();
      power = scalar(parse_exponent());
    }
    ExprPtr arg;
    if (at(Tok::LParen) || at(Tok::LBrace)) {
      arg = scalar(parse_primary());
    } else {
      arg = scalar(parse_power());
      while (starts_implicit() && !(at(Tok::Cmd) && function_names().count(peek().text)) &&
             !(at(Tok::Word) && !peek().split && function_names().count(peek().text))) {
        arg = mul({arg, scalar(parse_power())});
      }
    }
    ExprPtr result = log_base ? div(func("ln", arg), func("ln", *log_base)) : func(name, arg);
    if (power) result = pow(result, *power);
    return result;
  }

  ExprPtr parse_word() {
    Token& t = toks_[pos_];
    if (!t.split) {
      if (function_names().count(t.text)) {
        std::string name = take().text;
        return parse_function(name);
      }
      if (t.text == "sqrt") {
        take();
        return parse_sqrt();
      }
      if (t.text == "pi") {
        take();
        return pi();
      }
      if (t.text.size() >= 3) fail();
      std::string lower = t.text;
      std::transform(lower.begin(), lower.end(), lower.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (stopwords().count(lower)) fail();
    }
    return single_letter();
  }

  // Items of a bracketed group up to (not including) the closing bracket.
  std::vector<ExprPtr> bracket_items() {
    std::vector<ExprPtr> items{parse_sum()};
    while (at(Tok::Comma)) {
      take();
      items.push_back(parse_sum());
    }
    return items;
  }

  ExprPtr bracketed(bool left_closed) {
    auto items = bracket_items();
    bool right_closed;
    if (at(Tok::RParen)) {
      right_closed = false;
    } else if (at(Tok::RBrack)) {
      right_closed = true;
    } else {
      fail();
    }
    take();
    if (items.size() == 1) {
      if (left_closed != right_closed) fail();
      return items.front();
    }
    if (items.size() == 2) {
      bool open_pair = !left_closed && !right_closed;
      if (!open_pair || has_infinity(items[0]) || has_infinity(items[1])) {
        return interval(scalar(items[0]), scalar(items[1]), left_closed, right_closed);
      }
      return tuple(std::move(items));
    }
    if (left_closed != right_closed) fail();
    return tuple(std::move(items));
  }

  ExprPtr parse_command() {
    std::string name = take().text;
    if (name == "frac") {
      auto a = read_arg();
      auto b = read_arg();
      return div(a, b);
    }
    if (name == "sqrt") return parse_sqrt();
    if (name == "pi") return pi();
    if (name == "infty") return infinity();
    if (name == "emptyset" || name == "varnothing") return set({});
    if (greek_names().count(name)) {
      std::string full = "\\" + name;
      if (at(Tok::Sub)) full += "_{" + take().text + "}";
      return symbol(full);
    }
    if (function_names().count(name)) return parse_function(name);
    if (name == "operatorname") {
      expect(Tok::LBrace);
      if (!at(Tok::Word)) fail();
      std::string fname = take().text;
      expect(Tok::RBrace);
      return parse_function(fname);
    }
    fail();
  }

  ExprPtr parse_primary() {
    switch (peek().kind) {
      case Tok::Num: return number(parse_decimal(take().text));
      case Tok::Word: return parse_word();
      case Tok::Cmd: return parse_command();
      case Tok::LParen: take(); return bracketed(false);
      case Tok::LBrack: take(); return bracketed(true);
      case Tok::LBrace: {
        take();
        auto e = parse_list();
        expect(Tok::RBrace);
        return e;
      }
      case Tok::LSet: {
        take();
        if (at(Tok::RSet)) {
          take();
          return set({});
        }
        auto items = bracket_items();
        expect(Tok::RSet);
        return set(std::move(items));
      }
      case Tok::Bar: {
        take();
        int saved = abs_depth_;
        ++abs_depth_;
        auto e = scalar(parse_sum());
        expect(Tok::Bar);
        abs_depth_ = saved;
        return func("abs", e);
      }
      default: fail();
    }
  }
};

}  // namespace

std::optional<ExprPtr> parse_expression(std::string_view raw) {
  try {
    std::string text = detail::preprocess(raw);
    if (detail::has_text_wrapper(text)) return std::nullopt;
    Parser parser(lex(text));
    return parser.parse_all();
  } catch (const ParseFailure&) {
    return std::nullopt;
  }
}

ParsedAnswer parse_answer(std::string_view raw) {
  try {
    if (auto e = parse_expression(raw)) {
      return AnswerExpr{canonicalize(expand_plus_minus(*e)), std::string(raw)};
    }
  } catch (const std::exception&) {
    // DomainError and arithmetic overflow both land in the text fallback.
  }
  return TextAnswer{detail::text_form(raw), std::string(raw)};
}

}  // namespace livemath::answer
