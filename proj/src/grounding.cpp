#include "esapiens/grounding.hpp"

#include "esapiens/sentences.hpp"

#include <algorithm>
#include <regex>

namespace esapiens::grounding {

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::supported: return "supported";
        case Verdict::unsupported: return "unsupported";
        case Verdict::abstained: return "abstained";
    }
    return "unsupported";
}

std::string_view to_string(GroundingMode m) { return m == GroundingMode::strict ? "strict" : "standard"; }

GroundingMode parse_mode(std::string_view s) {
    if (s == "standard") return GroundingMode::standard;
    if (s == "strict") return GroundingMode::strict;
    throw ConfigError("unknown grounding mode '" + std::string(s) + "' (expected standard or strict)");
}

namespace {

Verdict parse_verdict(const std::string& s) {
    if (s == "supported") return Verdict::supported;
    if (s == "abstained") return Verdict::abstained;
    return Verdict::unsupported;
}

const std::regex& marker_re() {
    static const std::regex re(R"(\s*\[\s*(\d+(?:\s*,\s*\d+)*)\s*\])");
    return re;
}

Sentence abstained_sentence() {
    Sentence s;
    s.text = std::string(kAbstention);
    s.verdict = Verdict::abstained;
    return s;
}

}  // namespace

std::string GroundedAnswer::text() const {
    std::vector<std::string> parts;
    for (const auto& s : sentences) parts.push_back(s.text);
    return join(parts, " ");
}

std::vector<Span> GroundedAnswer::sentence_spans() const {
    std::vector<Span> out;
    std::size_t pos = 0;
    for (const auto& s : sentences) {
        out.push_back({pos, pos + s.text.size()});
        pos += s.text.size() + 1;
    }
    return out;
}

std::vector<CitationTrace> GroundedAnswer::citation_traces() const {
    std::vector<CitationTrace> out;
    const auto spans = sentence_spans();
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (sentences[i].verdict != Verdict::supported) continue;
        for (const auto& c : sentences[i].citations) out.push_back({spans[i], c, sentences[i].score});
    }
    return out;
}

std::size_t GroundedAnswer::abstentions() const {
    return static_cast<std::size_t>(std::count_if(sentences.begin(), sentences.end(),
                                                  [](const Sentence& s) { return s.verdict == Verdict::abstained; }));
}

nlohmann::json to_json(const Sentence& s) {
    return {{"text", s.text},
            {"span", {s.span.begin, s.span.end}},
            {"citations", s.citations},
            {"verdict", std::string(to_string(s.verdict))},
            {"score", s.score},
            {"inferred_citation", s.inferred_citation}};
}

nlohmann::json to_json(const GroundedAnswer& a) {
    nlohmann::json sentences = nlohmann::json::array();
    for (const auto& s : a.sentences) sentences.push_back(to_json(s));
    return {{"mode", std::string(to_string(a.mode))},
            {"rounds_used", a.rounds_used},
            {"support_rate", a.support_rate},
            {"abstentions", a.abstentions()},
            {"sentences", sentences},
            {"warnings", a.warnings}};
}

GroundedAnswer grounded_answer_from_json(const nlohmann::json& j) {
    GroundedAnswer a;
    a.mode = parse_mode(j.at("mode").get<std::string>());
    a.rounds_used = j.at("rounds_used").get<int>();
    a.support_rate = j.at("support_rate").get<double>();
    a.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& sj : j.at("sentences")) {
        Sentence s;
        s.text = sj.at("text").get<std::string>();
        s.span = {sj.at("span").at(0).get<std::size_t>(), sj.at("span").at(1).get<std::size_t>()};
        s.citations = sj.at("citations").get<std::vector<std::string>>();
        s.verdict = parse_verdict(sj.at("verdict").get<std::string>());
        s.score = sj.at("score").get<double>();
        s.inferred_citation = sj.value("inferred_citation", false);
        a.sentences.push_back(std::move(s));
    }
    return a;
}

void GroundingConfig::validate() const {
    if (max_rounds < 1) throw ConfigError("grounding max_rounds must be >= 1");
    if (!(support_threshold > 0.0 && support_threshold <= 1.0)) {
        throw ConfigError("grounding support_threshold must lie in (0, 1]");
    }
}

std::vector<Span> segment_sentences(std::string_view text) { return text::sentence_spans(text); }

std::string build_draft_prompt(const std::string& query, const std::vector<retrieval::Snippet>& snippets,
                               int round, const std::vector<std::string>& prior_failures) {
    std::string p =
        "Answer the question using only the numbered snippets below. Cite the supporting snippet "
        "at the end of every sentence with its marker, for example [1]. Do not state anything the "
        "snippets do not support.\n\n";
    p += "Question: " + collapse_whitespace(query) + "\n\nSnippets:\n";
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        p += "[" + std::to_string(i + 1) + "] " + collapse_whitespace(snippets[i].text) + "\n";
    }
    if (round > 1 && !prior_failures.empty()) {
        p += "\nRevise unsupported claims (round " + std::to_string(round) +
             "). These sentences were not supported by their cited snippets:\n";
        for (const auto& f : prior_failures) p += "- " + f + "\n";
    }
    return p;
}

Draft parse_draft(const std::string& text, const std::vector<retrieval::Snippet>& snippets, int round) {
    Draft d;
    d.text = text;
    d.generation_round = round;
    for (const auto& span : segment_sentences(text)) {
        const std::string raw = text.substr(span.begin, span.length());
        Sentence s;
        s.span = span;
        for (auto it = std::sregex_iterator(raw.begin(), raw.end(), marker_re()); it != std::sregex_iterator(); ++it) {
            for (const auto& num : split((*it)[1].str(), ',')) {
                const auto t = trim(num);
                if (t.empty() || t.size() > 6) continue;
                const auto n = std::stoul(t);
                if (n < 1 || n > snippets.size()) continue;
                const auto& id = snippets[n - 1].chunk_id;
                if (std::find(s.citations.begin(), s.citations.end(), id) == s.citations.end()) {
                    s.citations.push_back(id);
                }
            }
        }
        s.text = collapse_whitespace(std::regex_replace(raw, marker_re(), ""));
        if (s.text.empty()) continue;
        d.sentences.push_back(std::move(s));
    }
    return d;
}

Draft draft_answer(const std::string& query, const std::vector<retrieval::Snippet>& snippets,
                   providers::LanguageModel& llm, int round, const std::vector<std::string>& prior_failures) {
    if (snippets.empty()) throw Error("draft_answer requires at least one snippet");
    const auto prompt = build_draft_prompt(query, snippets, round, prior_failures);
    return parse_draft(llm.complete(prompt), snippets, round);
}

Verification verify_sentence(const Sentence& sentence, const std::vector<retrieval::Snippet>& snippets,
                             const providers::Verifier& verifier, double threshold, GroundingMode mode) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("support threshold must lie in (0, 1]");
    Verification v;
    const bool cited = !sentence.citations.empty();
    if (!cited && mode == GroundingMode::strict) return v;

    std::vector<std::string> ids;
    std::vector<std::string> passages;
    for (const auto& sn : snippets) {
        if (!cited || std::find(sentence.citations.begin(), sentence.citations.end(), sn.chunk_id) !=
                          sentence.citations.end()) {
            ids.push_back(sn.chunk_id);
            passages.push_back(sn.text);
        }
    }
    if (passages.empty()) return v;

    std::vector<double> scores;
    try {
        scores = verifier.verify(sentence.text, passages);
        if (scores.size() != passages.size()) throw ProviderError("verifier returned wrong number of scores");
    } catch (const std::exception& e) {
        v.error = e.what();
        return v;
    }
    const auto best = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    v.score = scores[best];
    if (v.score < threshold) {
        v.citations = sentence.citations;
        return v;
    }
    v.verdict = Verdict::supported;
    if (cited) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (scores[i] >= threshold) v.citations.push_back(ids[i]);
        }
    } else {
        v.citations = {ids[best]};
        v.inferred = true;
    }
    return v;
}

GroundedAnswer grounded_generate(const std::string& query, const std::vector<retrieval::Snippet>& snippets,
                                 const GroundingConfig& config, providers::LanguageModel& llm,
                                 const providers::Verifier& verifier) {
    config.validate();
    GroundedAnswer best;
    best.mode = config.mode;
    if (snippets.empty()) {
        best.sentences = {abstained_sentence()};
        best.warnings.push_back("no snippets to ground an answer on");
        return best;
    }

    double best_rate = -1.0;
    std::vector<std::string> failures;
    for (int round = 1; round <= config.max_rounds; ++round) {
        auto draft = draft_answer(query, snippets, llm, round, failures);
        GroundedAnswer candidate;
        candidate.mode = config.mode;
        candidate.rounds_used = round;
        std::size_t supported = 0;
        failures.clear();
        for (auto& s : draft.sentences) {
            const auto v = verify_sentence(s, snippets, verifier, config.support_threshold, config.mode);
            s.verdict = v.verdict;
            s.score = v.score;
            s.citations = v.citations;
            s.inferred_citation = v.inferred;
            if (v.error) candidate.warnings.push_back("verifier failed: " + *v.error);
            if (v.verdict == Verdict::supported) {
                ++supported;
            } else {
                failures.push_back(s.text);
            }
        }
        candidate.sentences = std::move(draft.sentences);
        candidate.support_rate = candidate.sentences.empty()
                                     ? 0.0
                                     : static_cast<double>(supported) / static_cast<double>(candidate.sentences.size());
        const bool done = !candidate.sentences.empty() && supported == candidate.sentences.size();
        if (candidate.sentences.empty()) failures.push_back("(the previous draft contained no sentences)");
        if (candidate.support_rate > best_rate) {
            best_rate = candidate.support_rate;
            best = std::move(candidate);
        }
        if (done) return best;
    }

    best.rounds_used = config.max_rounds;
    if (config.mode == GroundingMode::strict) {
        for (auto& s : best.sentences) {
            if (s.verdict != Verdict::supported) {
                const auto span = s.span;
                s = abstained_sentence();
                s.span = span;
            }
        }
    }
    if (best.sentences.empty()) best.sentences = {abstained_sentence()};
    std::size_t supported = 0;
    for (const auto& s : best.sentences) supported += s.verdict == Verdict::supported;
    best.support_rate = static_cast<double>(supported) / static_cast<double>(best.sentences.size());
    return best;
}

evalkit::TraceAnnotation trace_annotation(const GroundedAnswer& answer, std::string query_id) {
    evalkit::TraceAnnotation t;
    t.query_id = std::move(query_id);
    for (const auto& s : answer.sentences) {
        if (s.verdict == Verdict::abstained) continue;
        if (!t.answer.empty()) t.answer += ' ';
        const Span span{t.answer.size(), t.answer.size() + s.text.size()};
        t.answer += s.text;
        (s.verdict == Verdict::supported ? t.supported_spans : t.unsupported_spans).push_back(span);
    }
    return t;
}

}  // namespace esapiens::grounding
