#include "esapiens/sentences.hpp"
#include "esapiens/text.hpp"

#include <gtest/gtest.h>

#include <string>

using namespace esapiens;

TEST(CountTokens, EmptyIsZero) { EXPECT_EQ(text::count_tokens(""), 0u); }

TEST(CountTokens, HyphenIsItsOwnToken) {
    const std::string s = "hip-hop music";
    const auto toks = text::tokenize(s);
    ASSERT_EQ(toks.size(), 4u);
    EXPECT_EQ(s.substr(toks[0].span.begin, toks[0].span.length()), "hip");
    EXPECT_EQ(s.substr(toks[1].span.begin, toks[1].span.length()), "-");
    EXPECT_FALSE(toks[1].is_word);
    EXPECT_EQ(s.substr(toks[2].span.begin, toks[2].span.length()), "hop");
    EXPECT_EQ(s.substr(toks[3].span.begin, toks[3].span.length()), "music");
}

TEST(CountTokens, ThousandWords) {
    std::string s;
    for (int i = 0; i < 1000; ++i) s += (i ? " w" : "w") + std::to_string(i);
    EXPECT_EQ(text::count_tokens(s), 1000u);
}

TEST(CountTokens, UnknownTokenizerIsConfigError) {
    EXPECT_THROW(text::count_tokens("abc", "bpe-32k"), ConfigError);
    EXPECT_EQ(text::count_tokens("a b", "whitespace"), 2u);
}

TEST(CountTokens, NonAsciiLettersStayInWords) {
    // "café déjà-vu" -> café, déjà, -, vu
    EXPECT_EQ(text::count_tokens("caf\xC3\xA9 d\xC3\xA9j\xC3\xA0-vu"), 4u);
    // em dash is punctuation, no-break space is whitespace
    EXPECT_EQ(text::count_tokens("a\xE2\x80\x94" "b\xC2\xA0" "c"), 4u);
}

TEST(IndexTerms, LowercasesAndDropsPunctuation) {
    EXPECT_EQ(text::index_terms("Hip-Hop, MUSIC!"),
              (std::vector<std::string>{"hip", "hop", "music"}));
}

TEST(ContentTerms, RemovesStopwords) {
    EXPECT_EQ(text::content_terms("The cat and the hat"), (std::set<std::string>{"cat", "hat"}));
}

namespace {
std::vector<std::string> sentences_of(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& sp : text::sentence_spans(s)) out.push_back(s.substr(sp.begin, sp.length()));
    return out;
}
}  // namespace

TEST(SentenceSpans, TwoTerminals) {
    EXPECT_EQ(sentences_of("A. B."), (std::vector<std::string>{"A.", "B."}));
}

TEST(SentenceSpans, AbbreviationGuard) {
    EXPECT_EQ(sentences_of("See Fig. 2 for details."),
              (std::vector<std::string>{"See Fig. 2 for details."}));
    EXPECT_EQ(sentences_of("Use e.g. Apples here. Then stop."),
              (std::vector<std::string>{"Use e.g. Apples here.", "Then stop."}));
}

TEST(SentenceSpans, EmptyAndWhitespace) {
    EXPECT_TRUE(text::sentence_spans("").empty());
    EXPECT_TRUE(text::sentence_spans("   \n ").empty());
}

TEST(SentenceSpans, RequiresUppercaseOrDigitAfterBreak) {
    EXPECT_EQ(sentences_of("pi is 3.14 roughly. but lower case continues. 42 is new!"),
              (std::vector<std::string>{"pi is 3.14 roughly. but lower case continues.", "42 is new!"}));
    EXPECT_EQ(sentences_of("He said \"stop.\" Then left? Yes"),
              (std::vector<std::string>{"He said \"stop.\"", "Then left?", "Yes"}));
}

TEST(SentenceSpans, CoverAllNonWhitespace) {
    const std::string s = "  First one [1]. Second one! Third? trailing words  ";
    std::string joined;
    for (const auto& sp : text::sentence_spans(s)) joined += s.substr(sp.begin, sp.length());
    std::string expected;
    for (char c : s) {
        if (!std::isspace(static_cast<unsigned char>(c))) expected.push_back(c);
    }
    joined.erase(std::remove_if(joined.begin(), joined.end(), [](char c) { return c == ' '; }), joined.end());
    EXPECT_EQ(joined, expected);
}
