#pragma once

#include "esapiens/common.hpp"
#include "esapiens/evalkit.hpp"
#include "esapiens/providers.hpp"
#include "esapiens/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace esapiens::grounding {

enum class Verdict { supported, unsupported, abstained };
enum class GroundingMode { standard, strict };

std::string_view to_string(Verdict v);
std::string_view to_string(GroundingMode m);
GroundingMode parse_mode(std::string_view s);

inline constexpr std::string_view kAbstention = "N/A";

struct Sentence {
    std::string text;  // claim text, citation markers removed
    Span span;         // in the raw draft text
    std::vector<std::string> citations;
    Verdict verdict = Verdict::unsupported;
    double score = 0.0;
    bool inferred_citation = false;  // attached by verification, not by the model
};

struct Draft {
    std::string text;
    std::vector<Sentence> sentences;
    int generation_round = 1;
};

struct CitationTrace {
    Span sentence_span;  // in GroundedAnswer::text()
    std::string chunk_id;
    double score = 0.0;
};

struct GroundedAnswer {
    std::vector<Sentence> sentences;
    GroundingMode mode = GroundingMode::standard;
    int rounds_used = 0;
    double support_rate = 0.0;
    std::vector<std::string> warnings;

    /// Sentences joined by single spaces.
    [[nodiscard]] std::string text() const;
    /// Byte span of each sentence within text().
    [[nodiscard]] std::vector<Span> sentence_spans() const;
    [[nodiscard]] std::vector<CitationTrace> citation_traces() const;
    [[nodiscard]] std::size_t abstentions() const;
};

nlohmann::json to_json(const Sentence& s);
nlohmann::json to_json(const GroundedAnswer& a);
GroundedAnswer grounded_answer_from_json(const nlohmann::json& j);

struct GroundingConfig {
    int max_rounds = 3;
    double support_threshold = 0.5;
    GroundingMode mode = GroundingMode::standard;

    void validate() const;
};

std::vector<Span> segment_sentences(std::string_view text);

/// Prompt with the question, numbered snippets, the citation instruction and,
/// from round 2 on, the sentences that failed verification.
std::string build_draft_prompt(const std::string& query, const std::vector<retrieval::Snippet>& snippets,
                               int round, const std::vector<std::string>& prior_failures);

/// Split model output into sentences and resolve "[n]" markers against the
/// snippets of this round. Markers outside 1..snippets.size() are dropped.
Draft parse_draft(const std::string& text, const std::vector<retrieval::Snippet>& snippets, int round);

/// Throws ProviderError when the model fails.
Draft draft_answer(const std::string& query, const std::vector<retrieval::Snippet>& snippets,
                   providers::LanguageModel& llm, int round, const std::vector<std::string>& prior_failures);

struct Verification {
    Verdict verdict = Verdict::unsupported;
    double score = 0.0;
    std::vector<std::string> citations;  // cited chunks that pass, or the inferred one
    bool inferred = false;
    std::optional<std::string> error;
};

/// Supported iff the best verifier score over the cited snippets reaches the
/// threshold. Uncited sentences are scored against every snippet in standard
/// mode and fail outright in strict mode. Provider failures fail closed.
Verification verify_sentence(const Sentence& sentence, const std::vector<retrieval::Snippet>& snippets,
                             const providers::Verifier& verifier, double threshold,
                             GroundingMode mode = GroundingMode::standard);

GroundedAnswer grounded_generate(const std::string& query, const std::vector<retrieval::Snippet>& snippets,
                                 const GroundingConfig& config, providers::LanguageModel& llm,
                                 const providers::Verifier& verifier);

/// Span annotation of the answer for hallucination measurement. Abstained
/// sentences are left out of the annotated text.
evalkit::TraceAnnotation trace_annotation(const GroundedAnswer& answer, std::string query_id = {});

}  // namespace esapiens::grounding
