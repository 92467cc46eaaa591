#pragma once

#include "esapiens/common.hpp"

#include <string_view>
#include <vector>

namespace esapiens::text {

/// Sentence boundaries: a run of terminal punctuation ('.', '!', '?'),
/// optionally followed by closing quotes or brackets, then whitespace and an
/// upper-case letter or digit. A period after a guarded abbreviation
/// ("Fig.", "e.g.", "Dr.") never ends a sentence. Spans are trimmed and
/// together cover all non-whitespace text.
std::vector<Span> sentence_spans(std::string_view text);

bool is_guarded_abbreviation(std::string_view word);

}  // namespace esapiens::text
