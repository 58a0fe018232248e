#include "normalize.hpp"

#include <array>
#include <cctype>
#include <utility>

#include "livemath/answer.hpp"

namespace livemath::answer {

namespace detail {

namespace {

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t i = 0;
  while ((i = s.find(from, i)) != std::string::npos) {
    s.replace(i, from.size(), to);
    i += to.size();
  }
}

// Replaces a letter command only where it is not the prefix of a longer one.
void replace_command(std::string& s, std::string_view from, std::string_view to) {
  std::size_t i = 0;
  while ((i = s.find(from, i)) != std::string::npos) {
    std::size_t end = i + from.size();
    if (end < s.size() && is_letter(s[end])) {
      i = end;
      continue;
    }
    s.replace(i, from.size(), to);
    i += to.size();
  }
}

constexpr std::array<std::pair<std::string_view, std::string_view>, 19> kUnicode = {{
    {"−", "-"},          {"–", "-"},          {"×", "\\cdot "},
    {"·", "\\cdot "},    {"⋅", "\\cdot "},    {"÷", "\\div "},
    {"≤", "\\le "},      {"≥", "\\ge "},      {"≠", "\\ne "},
    {"±", "\\pm "},      {"∓", "\\mp "},      {"π", "\\pi "},
    {"√", "\\sqrt "},    {"°", "^\\circ "},   {"∞", "\\infty "},
    {"∅", "\\emptyset "}, {"\xC2\xA0", " "},         {"\xE2\x80\x89", " "},
    {"\xE2\x80\x8B", ""},
}};

constexpr std::array<std::pair<std::string_view, std::string_view>, 27> kCommands = {{
    {"\\displaystyle", ""}, {"\\textstyle", ""},  {"\\bigl", ""},      {"\\bigr", ""},
    {"\\Bigl", ""},         {"\\Bigr", ""},       {"\\big", ""},       {"\\Big", ""},
    {"\\quad", " "},        {"\\qquad", " "},     {"\\lvert", "|"},    {"\\rvert", "|"},
    {"\\vert", "|"},        {"\\mid", "|"},       {"\\lbrace", "\\{"}, {"\\rbrace", "\\}"},
    {"\\leqslant", "\\le"}, {"\\leq", "\\le"},    {"\\geqslant", "\\ge"}, {"\\geq", "\\ge"},
    {"\\neq", "\\ne"},      {"\\times", "\\cdot"}, {"\\ast", "\\cdot"}, {"\\dfrac", "\\frac"},
    {"\\tfrac", "\\frac"},  {"\\degree", "^\\circ"}, {"\\infin", "\\infty"},
}};

constexpr std::array<std::string_view, 7> kTextWrappers = {
    "\\text", "\\textrm", "\\textbf", "\\textit", "\\mathrm", "\\mathbf", "\\mbox"};

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

// Index one past the brace group opened at `open`, or npos when unbalanced.
std::size_t group_end(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      continue;
    }
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i + 1;
  }
  return std::string::npos;
}

std::string unwrap_text(std::string s) {
  for (auto cmd : kTextWrappers) {
    std::size_t i = 0;
    while ((i = s.find(cmd, i)) != std::string::npos) {
      std::size_t j = i + cmd.size();
      if (j < s.size() && is_letter(s[j])) {
        i = j;
        continue;
      }
      while (j < s.size() && is_space(s[j])) ++j;
      if (j >= s.size() || s[j] != '{') {
        i = j;
        continue;
      }
      std::size_t end = group_end(s, j);
      if (end == std::string::npos) break;
      std::string inner = s.substr(j + 1, end - j - 2);
      s.replace(i, end - i, inner);
    }
  }
  return s;
}

}  // namespace

std::string preprocess(std::string_view raw) {
  std::string s(raw);
  for (const auto& [from, to] : kUnicode) replace_all(s, from, to);
  replace_all(s, "$", "");
  replace_all(s, "\\left.", "");
  replace_all(s, "\\right.", "");
  replace_command(s, "\\left", "");
  replace_command(s, "\\right", "");
  for (const auto& [from, to] : kCommands) replace_command(s, from, to);
  replace_all(s, "\\!", "");
  for (std::string_view sp : {"\\,", "\\;", "\\:", "\\ ", "~"}) replace_all(s, sp, " ");
  replace_all(s, "{,}", "");
  s = trim(s);
  while (!s.empty() && s.back() == '.' && (s.size() < 2 || s[s.size() - 2] != '\\')) {
    s.pop_back();
    s = trim(s);
  }
  return s;
}

bool has_text_wrapper(std::string_view text) {
  for (auto cmd : kTextWrappers) {
    std::size_t i = 0;
    while ((i = text.find(cmd, i)) != std::string_view::npos) {
      std::size_t j = i + cmd.size();
      if (j >= text.size() || !is_letter(text[j])) return true;
      i = j;
    }
  }
  return false;
}

std::string text_form(std::string_view raw) {
  std::string s = unwrap_text(preprocess(raw));
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

}  // namespace detail

std::string normalize_answer(std::string_view raw) {
  std::string pre = detail::unwrap_text(detail::preprocess(raw));
  std::string s;
  for (char c : pre) {
    if (!detail::is_space(c)) s += c;
  }
  detail::replace_all(s, "^{\\circ}", "^\\circ");
  // Unwrap single-character groups such as the arguments of \frac12.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i + 2 < s.size(); ++i) {
      if (s[i] != '{' || s[i + 2] != '}') continue;
      if (i > 0 && s[i - 1] == '\\') continue;
      char c = s[i + 1];
      if (c == '{' || c == '}' || c == '\\') continue;
      s = s.substr(0, i) + c + s.substr(i + 3);
      changed = true;
    }
  }
  while (s.size() >= 2 && s.front() == '{' && detail::group_end(s, 0) == s.size()) {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace livemath::answer
