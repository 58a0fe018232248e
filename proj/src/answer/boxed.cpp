#include <cctype>

#include "livemath/answer.hpp"
#include "livemath/error.hpp"

namespace livemath::answer {

std::optional<BoxedAnswer> extract_boxed(std::string_view text) {
  constexpr std::string_view kBoxed = "\\boxed";
  std::size_t start = std::string_view::npos;
  std::size_t open = 0;
  for (std::size_t i = text.find(kBoxed); i != std::string_view::npos;
       i = text.find(kBoxed, i + 1)) {
    std::size_t j = i + kBoxed.size();
    while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j < text.size() && text[j] == '{') {
      start = i;
      open = j;
    }
  }
  if (start == std::string_view::npos) return std::nullopt;

  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\\' && i + 1 < text.size()) {
      ++i;
      continue;
    }
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) {
      std::string raw(text.substr(open + 1, i - open - 1));
      bool blank = raw.find_first_not_of(" \t\r\n") == std::string::npos;
      if (blank) return std::nullopt;
      return BoxedAnswer{std::move(raw), start, i + 1};
    }
  }
  throw ExtractError("unbalanced braces after \\boxed at offset " + std::to_string(start));
}

}  // namespace livemath::answer
