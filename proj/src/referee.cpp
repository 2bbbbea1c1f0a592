#include "duet/referee.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>

#include "duet/retriever.hpp"

namespace duet {

std::string to_string(Arm a) { return a == Arm::internal ? "internal" : "external"; }

std::string to_string(ChosenArm a) {
    switch (a) {
        case ChosenArm::internal: return "internal";
        case ChosenArm::external: return "external";
        case ChosenArm::synthesized: return "synthesized";
    }
    throw Error("unreachable chosen_arm value");
}

std::string to_string(RefereeStrategy s) {
    switch (s) {
        case RefereeStrategy::alignment: return "alignment";
        case RefereeStrategy::text_feature: return "text_feature";
        case RefereeStrategy::summarize: return "summarize";
    }
    throw Error("unreachable strategy value");
}

RefereeStrategy strategy_from_string(const std::string& s) {
    if (s == "alignment") return RefereeStrategy::alignment;
    if (s == "text_feature") return RefereeStrategy::text_feature;
    if (s == "summarize") return RefereeStrategy::summarize;
    throw ConfigError("unknown referee strategy: " + s);
}

void RefereeConfig::validate() const {
    if (delta < 0) throw ConfigError("delta must be >= 0");
    if (strategy == RefereeStrategy::alignment && !embedder)
        throw ConfigError("alignment strategy requires an embedder");
    if (strategy == RefereeStrategy::summarize && !judge_backend)
        throw ConfigError("summarize strategy requires a judge backend");
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dim() != v.dim())
        throw Error("cosine: dim mismatch (" + std::to_string(u.dim()) + " vs " +
                    std::to_string(v.dim()) + ")");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        dot += u.values[i] * v.values[i];
        nu += u.values[i] * u.values[i];
        nv += v.values[i] * v.values[i];
    }
    if (nu == 0.0 || nv == 0.0) throw Error("cosine: zero vector");
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

ChosenArm choose_arm(double score_internal, double score_external, double delta) {
    return score_internal - score_external > delta ? ChosenArm::internal
                                                   : ChosenArm::external;
}

namespace {

void require_candidates(const CandidateAnswer& a_internal, const CandidateAnswer& a_external) {
    if (a_internal.arm != Arm::internal || a_external.arm != Arm::external)
        throw Error("candidate answers passed in the wrong arm order");
    if (a_internal.text.empty() || a_external.text.empty())
        throw Error("referee requires two non-empty candidate answers");
}

RefereeVerdict select_by_scores(double s_internal, double s_external,
                                const CandidateAnswer& a_internal,
                                const CandidateAnswer& a_external,
                                const RefereeConfig& cfg, RefereeStrategy strategy) {
    RefereeVerdict verdict;
    verdict.strategy = strategy;
    verdict.score_internal = s_internal;
    verdict.score_external = s_external;
    verdict.chosen_arm = choose_arm(s_internal, s_external, cfg.delta);
    verdict.final_answer =
        verdict.chosen_arm == ChosenArm::internal ? a_internal.text : a_external.text;
    return verdict;
}

}  // namespace

RefereeVerdict alignment_select(const std::string& question, const CandidateAnswer& a_internal,
                                const CandidateAnswer& a_external, const RefereeConfig& cfg) {
    if (cfg.strategy != RefereeStrategy::alignment || !cfg.embedder)
        throw ConfigError("alignment_select requires strategy=alignment with an embedder");
    require_candidates(a_internal, a_external);

    EmbeddingVector q_vec = cfg.embedder->embed(question);
    // The two answer embeddings are independent; overlap them.
    auto fut_internal = std::async(std::launch::async,
                                   [&] { return cfg.embedder->embed(a_internal.text); });
    EmbeddingVector e_external = cfg.embedder->embed(a_external.text);
    EmbeddingVector e_internal = fut_internal.get();

    double s_internal = cosine(q_vec, e_internal);
    double s_external = cosine(q_vec, e_external);
    return select_by_scores(s_internal, s_external, a_internal, a_external, cfg,
                            RefereeStrategy::alignment);
}

double text_feature_score(const std::string& question, const std::string& answer) {
    if (question.empty() || answer.empty())
        throw Error("text_feature_score requires non-empty inputs");
    auto q_tokens = tokenize(question);
    auto a_tokens = tokenize(answer);
    if (a_tokens.empty()) return 0.5;  // no lexical content, length prior alone

    std::set<std::string> q_set(q_tokens.begin(), q_tokens.end());
    std::set<std::string> a_set(a_tokens.begin(), a_tokens.end());
    std::size_t shared = 0;
    for (const auto& t : a_set) shared += q_set.count(t);
    double overlap = static_cast<double>(shared) / static_cast<double>(a_set.size());

    double len = static_cast<double>(a_tokens.size());
    double length_prior = std::exp(-std::max(0.0, len - 16.0) / 16.0);
    return 0.5 * overlap + 0.5 * length_prior;
}

RefereeVerdict text_feature_select(const std::string& question,
                                   const CandidateAnswer& a_internal,
                                   const CandidateAnswer& a_external,
                                   const RefereeConfig& cfg) {
    require_candidates(a_internal, a_external);
    double s_internal = text_feature_score(question, a_internal.text);
    double s_external = text_feature_score(question, a_external.text);
    return select_by_scores(s_internal, s_external, a_internal, a_external, cfg,
                            RefereeStrategy::text_feature);
}

RefereeVerdict summarize_select(const std::string& question, const CandidateAnswer& a_internal,
                                const CandidateAnswer& a_external, const RefereeConfig& cfg) {
    if (cfg.strategy != RefereeStrategy::summarize || !cfg.judge_backend)
        throw ConfigError("summarize_select requires strategy=summarize with a judge backend");
    require_candidates(a_internal, a_external);

    GenerationRequest req = build_judge_prompt(question, a_internal, a_external,
                                               cfg.judge_template);
    GenerationResult result = cfg.judge_backend->generate(req);

    std::string answer = result.text;
    if (auto nl = answer.find('\n'); nl != std::string::npos) answer.resize(nl);
    // Trim surrounding whitespace of the kept line.
    auto begin = answer.find_first_not_of(" \t\r");
    auto end = answer.find_last_not_of(" \t\r");
    answer = begin == std::string::npos ? "" : answer.substr(begin, end - begin + 1);
    if (answer.empty()) throw BackendError("judge returned an empty completion");

    RefereeVerdict verdict;
    verdict.strategy = RefereeStrategy::summarize;
    verdict.chosen_arm = ChosenArm::synthesized;
    verdict.final_answer = answer;
    return verdict;
}

RefereeVerdict referee_select(const std::string& question, const CandidateAnswer& a_internal,
                              const CandidateAnswer& a_external, const RefereeConfig& cfg) {
    cfg.validate();
    switch (cfg.strategy) {
        case RefereeStrategy::alignment:
            return alignment_select(question, a_internal, a_external, cfg);
        case RefereeStrategy::text_feature:
            return text_feature_select(question, a_internal, a_external, cfg);
        case RefereeStrategy::summarize:
            return summarize_select(question, a_internal, a_external, cfg);
    }
    throw Error("unreachable strategy value");
}

}  // namespace duet
