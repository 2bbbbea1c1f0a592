#pragma once

#include <memory>
#include <optional>
#include <string>

#include "duet/backends.hpp"
#include "duet/prompting.hpp"

namespace duet {

enum class Arm { internal, external };
enum class ChosenArm { internal, external, synthesized };
enum class RefereeStrategy { alignment, text_feature, summarize };

std::string to_string(Arm a);
std::string to_string(ChosenArm a);
std::string to_string(RefereeStrategy s);
RefereeStrategy strategy_from_string(const std::string& s);

struct CandidateAnswer {
    std::string text;
    Arm arm = Arm::internal;
    std::optional<GenerationResult> gen_meta;
};

struct RefereeConfig {
    RefereeStrategy strategy = RefereeStrategy::alignment;
    double delta = 0.05;  // external-preference margin, >= 0
    std::shared_ptr<Generator> judge_backend;  // required for summarize
    std::shared_ptr<Embedder> embedder;        // required for alignment
    PromptTemplate judge_template;

    void validate() const;
};

struct RefereeVerdict {
    std::string final_answer;
    ChosenArm chosen_arm = ChosenArm::internal;
    std::optional<double> score_internal;
    std::optional<double> score_external;
    RefereeStrategy strategy = RefereeStrategy::alignment;
};

double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

/// Margin-biased arm choice: internal iff score_internal - score_external >
/// delta, external otherwise (including exact ties).
ChosenArm choose_arm(double score_internal, double score_external, double delta);

/// Scores each candidate by cosine(embed(question), embed(answer)) and applies
/// the margin rule.
RefereeVerdict alignment_select(const std::string& question, const CandidateAnswer& a_internal,
                                const CandidateAnswer& a_external, const RefereeConfig& cfg);

/// Lexical stand-in scorer: 0.5 * |tokens(q) ∩ tokens(a)| / |distinct tokens(a)|
/// + 0.5 * exp(-max(0, len(a) - 16) / 16), where len(a) counts tokens.
double text_feature_score(const std::string& question, const std::string& answer);

RefereeVerdict text_feature_select(const std::string& question,
                                   const CandidateAnswer& a_internal,
                                   const CandidateAnswer& a_external,
                                   const RefereeConfig& cfg);

/// Asks the judge backend to synthesize a final answer; keeps the first line
/// of the completion.
RefereeVerdict summarize_select(const std::string& question, const CandidateAnswer& a_internal,
                                const CandidateAnswer& a_external, const RefereeConfig& cfg);

/// Dispatches on cfg.strategy.
RefereeVerdict referee_select(const std::string& question, const CandidateAnswer& a_internal,
                              const CandidateAnswer& a_external, const RefereeConfig& cfg);

}  // namespace duet
