#pragma once

#include <string>
#include <string_view>

namespace livemath::answer::detail {

/// Maps unicode math symbols to LaTeX, drops math delimiters, sizing and
/// spacing commands, folds command synonyms (\dfrac, \leq, \times, ...) and
/// trailing periods.
std::string preprocess(std::string_view raw);

/// True when the string uses \text-like wrappers, which the grammar rejects.
bool has_text_wrapper(std::string_view text);

/// Preprocessed text with wrappers unwrapped and whitespace collapsed.
std::string text_form(std::string_view raw);

}  // namespace livemath::answer::detail
