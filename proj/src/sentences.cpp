#include "esapiens/sentences.hpp"

#include <algorithm>
#include <cctype>
#include <iterator>
#include <string>

namespace esapiens::text {

namespace {

constexpr std::string_view kAbbreviations[] = {
    "al",   "approx", "ca",  "cf",  "co",   "corp", "dept", "dr",  "e.g", "eq",
    "est",  "etc",    "fig", "figs", "i.e", "inc",  "jr",   "ltd", "mr",  "mrs",
    "ms",   "no",     "nos", "p",   "pp",   "prof", "sec",  "sr",  "st",  "tab",
    "vol",  "vs",
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

bool is_guarded_abbreviation(std::string_view word) {
    const auto lowered = to_lower_ascii(word);
    return std::find(std::begin(kAbbreviations), std::end(kAbbreviations), lowered) !=
           std::end(kAbbreviations);
}

std::vector<Span> sentence_spans(std::string_view text) {
    std::vector<Span> spans;
    const std::size_t n = text.size();
    std::size_t start = 0;

    const auto emit = [&](std::size_t b, std::size_t e) {
        while (b < e && is_space(text[b])) ++b;
        while (e > b && is_space(text[e - 1])) --e;
        if (b < e) spans.push_back({b, e});
    };

    std::size_t i = 0;
    while (i < n) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') {
            ++i;
            continue;
        }
        if (c == '.') {
            std::size_t w = i;
            while (w > start && (std::isalpha(static_cast<unsigned char>(text[w - 1])) ||
                                 text[w - 1] == '.')) {
                --w;
            }
            if (w < i && is_guarded_abbreviation(text.substr(w, i - w))) {
                ++i;
                continue;
            }
        }
        std::size_t j = i + 1;
        while (j < n && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
        while (j < n && (text[j] == ')' || text[j] == '"' || text[j] == '\'')) ++j;
        if (j >= n) break;
        if (!is_space(text[j])) {
            i = j;
            continue;
        }
        std::size_t k = j;
        while (k < n && is_space(text[k])) ++k;
        if (k < n && (std::isupper(static_cast<unsigned char>(text[k])) ||
                      std::isdigit(static_cast<unsigned char>(text[k])))) {
            emit(start, j);
            start = k;
            i = k;
            continue;
        }
        i = j;
    }
    emit(start, n);
    return spans;
}

}  // namespace esapiens::text
