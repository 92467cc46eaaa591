#include "esapiens/grounding.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace esapiens;
using namespace esapiens::grounding;
using retrieval::Snippet;

namespace {

std::vector<Snippet> snippets_of(const std::vector<std::string>& texts) {
    std::vector<Snippet> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Snippet s;
        s.chunk_id = "c" + std::to_string(i);
        s.doc_id = "d" + std::to_string(i);
        s.text = texts[i];
        s.rank = i + 1;
        out.push_back(s);
    }
    return out;
}

Sentence claim(std::string text, std::vector<std::string> citations = {}) {
    Sentence s;
    s.text = std::move(text);
    s.citations = std::move(citations);
    return s;
}

class ThrowingVerifier final : public providers::Verifier {
public:
    std::vector<double> verify(const std::string&, std::span<const std::string>) const override {
        throw ProviderError("verifier offline");
    }
};

const std::vector<std::string> kFacts = {
    "The warehouse ships orders every Monday. Returns are accepted within thirty days.",
    "Customer support operates from nine to five."};

}  // namespace

TEST(DraftPrompt, ContainsQuestionSnippetsAndInstruction) {
    const auto sn = snippets_of(kFacts);
    const auto p1 = build_draft_prompt("When are orders shipped?", sn, 1, {});
    EXPECT_NE(p1.find("When are orders shipped?"), std::string::npos);
    EXPECT_NE(p1.find("[1] The warehouse ships orders"), std::string::npos);
    EXPECT_NE(p1.find("[2] Customer support"), std::string::npos);
    EXPECT_NE(p1.find("[1]"), std::string::npos);
    EXPECT_EQ(p1.find("Revise unsupported claims"), std::string::npos);
    const auto p2 = build_draft_prompt("q", sn, 2, {"Quantum giraffes negotiated the merger in 1850."});
    const auto at = p2.find("Revise unsupported claims");
    ASSERT_NE(at, std::string::npos);
    EXPECT_GT(p2.find("Quantum giraffes negotiated the merger in 1850."), at);
}

TEST(ParseDraft, ResolvesMarkersAndStripsThem) {
    const auto sn = snippets_of(kFacts);
    const auto d = parse_draft("Orders ship Monday [1]. Support works days [1, 2]. Cats fly [99].", sn, 1);
    ASSERT_EQ(d.sentences.size(), 3u);
    EXPECT_EQ(d.sentences[0].text, "Orders ship Monday.");
    EXPECT_EQ(d.sentences[0].citations, (std::vector<std::string>{"c0"}));
    EXPECT_EQ(d.sentences[1].citations, (std::vector<std::string>{"c0", "c1"}));
    EXPECT_TRUE(d.sentences[2].citations.empty());  // dangling marker
    EXPECT_EQ(d.sentences[2].text, "Cats fly.");
    for (const auto& s : d.sentences) EXPECT_LE(s.span.end, d.text.size());
}

TEST(DraftAnswer, ExtractiveMockGivesOneCitedDraft) {
    providers::ExtractiveLanguageModel llm;
    const auto d = draft_answer("q", snippets_of({"Only one sentence here."}), llm, 1, {});
    ASSERT_EQ(d.sentences.size(), 1u);
    EXPECT_EQ(d.sentences[0].citations, (std::vector<std::string>{"c0"}));
    EXPECT_EQ(d.generation_round, 1);
}

TEST(VerifySentence, Examples) {
    const auto sn = snippets_of({"alpha beta gamma delta epsilon zeta", "unrelated words entirely"});
    const providers::LexicalVerifier v;
    const auto copied = verify_sentence(claim("alpha beta gamma delta epsilon zeta", {"c0"}), sn, v, 0.5);
    EXPECT_EQ(copied.verdict, Verdict::supported);
    EXPECT_DOUBLE_EQ(copied.score, 1.0);
    EXPECT_EQ(verify_sentence(claim("lorem ipsum", {"c0"}), sn, v, 0.5).verdict, Verdict::unsupported);
    const auto half = verify_sentence(claim("alpha beta gamma one two three", {"c0"}), sn, v, 0.5);
    EXPECT_DOUBLE_EQ(half.score, 0.5);
    EXPECT_EQ(half.verdict, Verdict::supported);
}

TEST(VerifySentence, UncitedSentencesDependOnMode) {
    const auto sn = snippets_of({"nothing here", "alpha beta gamma"});
    const providers::LexicalVerifier v;
    const auto std_v = verify_sentence(claim("alpha beta gamma"), sn, v, 0.5, GroundingMode::standard);
    EXPECT_EQ(std_v.verdict, Verdict::supported);
    EXPECT_TRUE(std_v.inferred);
    EXPECT_EQ(std_v.citations, (std::vector<std::string>{"c1"}));
    EXPECT_EQ(verify_sentence(claim("alpha beta gamma"), sn, v, 0.5, GroundingMode::strict).verdict,
              Verdict::unsupported);
}

TEST(VerifySentence, KeepsOnlyPassingCitations) {
    const auto sn = snippets_of({"alpha beta", "gamma"});
    const auto r = verify_sentence(claim("alpha beta", {"c0", "c1"}), sn, providers::LexicalVerifier(), 0.5);
    EXPECT_EQ(r.verdict, Verdict::supported);
    EXPECT_EQ(r.citations, (std::vector<std::string>{"c0"}));
}

TEST(VerifySentence, ProviderFailureFailsClosed) {
    const auto sn = snippets_of({"alpha"});
    const auto r = verify_sentence(claim("alpha", {"c0"}), sn, ThrowingVerifier(), 0.5);
    EXPECT_EQ(r.verdict, Verdict::unsupported);
    ASSERT_TRUE(r.error.has_value());
    EXPECT_THROW(verify_sentence(claim("alpha"), sn, providers::LexicalVerifier(), 0.0), ConfigError);
}

TEST(VerifySentence, VerdictMonotoneInThreshold) {
    std::mt19937_64 rng(12);
    const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"};
    const auto pick = [&](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + words[rng() % words.size()];
        return s;
    };
    const providers::LexicalVerifier v;
    for (int trial = 0; trial < 300; ++trial) {
        const auto sn = snippets_of({pick(4), pick(4)});
        const auto c = claim(pick(1 + rng() % 5), rng() % 2 ? std::vector<std::string>{"c0"} : std::vector<std::string>{});
        bool was_supported = true;
        for (double t = 0.05; t <= 1.0; t += 0.05) {
            const bool supported = verify_sentence(c, sn, v, t).verdict == Verdict::supported;
            ASSERT_FALSE(supported && !was_supported) << "threshold " << t;
            was_supported = supported;
        }
    }
}

TEST(GroundedGenerate, ExtractiveMockConvergesInOneRound) {
    providers::ExtractiveLanguageModel llm;
    const auto a = grounded_generate("q", snippets_of(kFacts), {}, llm, providers::LexicalVerifier());
    EXPECT_EQ(a.rounds_used, 1);
    EXPECT_DOUBLE_EQ(a.support_rate, 1.0);
    EXPECT_EQ(llm.calls(), 1u);
    EXPECT_EQ(a.text(), "The warehouse ships orders every Monday. Returns are accepted within thirty days.");
    for (const auto& t : a.citation_traces()) EXPECT_EQ(t.chunk_id, "c0");
}

TEST(GroundedGenerate, AdversarialStrictAbstainsAfterMaxRounds) {
    providers::AdversarialLanguageModel llm;
    GroundingConfig cfg;
    cfg.mode = GroundingMode::strict;
    const auto a = grounded_generate("q", snippets_of(kFacts), cfg, llm, providers::LexicalVerifier());
    EXPECT_EQ(llm.calls(), 3u);
    EXPECT_EQ(a.rounds_used, 3);
    ASSERT_EQ(a.sentences.size(), 3u);
    EXPECT_EQ(a.sentences[2].text, "N/A");
    EXPECT_EQ(a.sentences[2].verdict, Verdict::abstained);
    EXPECT_EQ(a.abstentions(), 1u);
    for (const auto& s : a.sentences) {
        EXPECT_TRUE(s.verdict == Verdict::supported || s.text == "N/A");
    }
    const auto m = evalkit::trace_metrics(trace_annotation(a));
    ASSERT_TRUE(m.hallucination.has_value());
    EXPECT_EQ(*m.hallucination, 0.0);
}

TEST(GroundedGenerate, AdversarialStandardKeepsUnsupportedSentence) {
    providers::AdversarialLanguageModel llm;
    const auto a = grounded_generate("q", snippets_of(kFacts), {}, llm, providers::LexicalVerifier());
    EXPECT_EQ(llm.calls(), 3u);
    ASSERT_EQ(a.sentences.size(), 3u);
    EXPECT_EQ(a.sentences[2].verdict, Verdict::unsupported);
    EXPECT_EQ(a.sentences[2].text, "Quantum giraffes negotiated the merger in 1850.");
    EXPECT_DOUBLE_EQ(a.support_rate, 2.0 / 3.0);
    const auto m = evalkit::trace_metrics(trace_annotation(a));
    EXPECT_GT(*m.hallucination, 0.0);
}

TEST(GroundedGenerate, RevisionPromptCarriesFailures) {
    auto llm = providers::ScriptedLanguageModel::with_rules(
        {{"Revise unsupported claims", "The warehouse ships orders every Monday [1]."},
         {"", "The warehouse ships orders every Monday [1]. Pigs can fly [1]."}});
    const auto a = grounded_generate("q", snippets_of(kFacts), {}, llm, providers::LexicalVerifier());
    EXPECT_EQ(a.rounds_used, 2);
    EXPECT_DOUBLE_EQ(a.support_rate, 1.0);
    ASSERT_EQ(llm.prompts().size(), 2u);
    EXPECT_NE(llm.prompts()[1].find("- Pigs can fly."), std::string::npos);
}

TEST(GroundedGenerate, BestDraftPrefersEarliestOnTie) {
    providers::ScriptedLanguageModel llm({"Orders ship every Monday [1]. Pigs fly [1].",
                                          "Pigs fly [1].",
                                          "Returns accepted within thirty days [1]. Cows sing [1]."});
    const auto a = grounded_generate("q", snippets_of(kFacts), {}, llm, providers::LexicalVerifier());
    EXPECT_EQ(a.rounds_used, 3);
    EXPECT_DOUBLE_EQ(a.support_rate, 0.5);
    EXPECT_EQ(a.sentences[0].text, "Orders ship every Monday.");
}

TEST(GroundedGenerate, EmptySnippetsAbstainWithoutCalls) {
    providers::ExtractiveLanguageModel llm;
    const auto a = grounded_generate("q", {}, {}, llm, providers::LexicalVerifier());
    EXPECT_EQ(llm.calls(), 0u);
    EXPECT_EQ(a.rounds_used, 0);
    ASSERT_EQ(a.sentences.size(), 1u);
    EXPECT_EQ(a.sentences[0].verdict, Verdict::abstained);
}

TEST(GroundedGenerate, CitationsResolveToProvidedSnippets) {
    std::mt19937_64 rng(4);
    const std::vector<std::string> pool{"Orders ship Monday", "Returns within thirty days", "Pigs fly",
                                        "Support works nine to five", "Moons are cheese"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> script;
        for (int r = 0; r < 3; ++r) {
            std::string t;
            for (int s = 0; s < 3; ++s) {
                t += pool[rng() % pool.size()] + " [" + std::to_string(rng() % 4) + "]. ";
            }
            script.push_back(t);
        }
        providers::ScriptedLanguageModel llm(script);
        const auto sn = snippets_of(kFacts);
        GroundingConfig cfg;
        cfg.mode = trial % 2 ? GroundingMode::strict : GroundingMode::standard;
        const auto a = grounded_generate("q", sn, cfg, llm, providers::LexicalVerifier());
        EXPECT_LE(llm.calls(), 3u);
        for (const auto& s : a.sentences) {
            for (const auto& c : s.citations) EXPECT_TRUE(c == "c0" || c == "c1");
            if (s.verdict == Verdict::supported) EXPECT_FALSE(s.citations.empty());
        }
    }
}

TEST(GroundedGenerate, JsonRoundTrip) {
    providers::AdversarialLanguageModel llm;
    const auto a = grounded_generate("q", snippets_of(kFacts), {}, llm, providers::LexicalVerifier());
    const auto b = grounded_answer_from_json(to_json(a));
    EXPECT_EQ(to_json(a), to_json(b));
}

TEST(GroundingConfigTest, Validation) {
    GroundingConfig c;
    c.max_rounds = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.max_rounds = 1;
    c.support_threshold = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(parse_mode("lenient"), ConfigError);
}
