#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "duet/backends.hpp"
#include "duet/corpus.hpp"
#include "duet/prompting.hpp"
#include "duet/referee.hpp"
#include "duet/retriever.hpp"

#include <json.hpp>

namespace duet {

struct PipelineConfig {
    std::shared_ptr<Generator> internal_backend;
    std::shared_ptr<Generator> external_backend;
    RefereeConfig referee;
    std::size_t retrieval_k = 5;
    TemplateSet templates = default_templates();
    PromptBudget budget;
    std::chrono::milliseconds per_arm_timeout{60000};

    void validate() const;
};

struct StageTimings {
    std::chrono::milliseconds internal_arm{0};
    std::chrono::milliseconds retrieval{0};
    std::chrono::milliseconds external_arm{0};
    std::chrono::milliseconds referee{0};
};

/// Full audit record for one question: both arms, the retrieved set, and the
/// verdict. `degraded` is set when one arm was skipped or failed and the
/// verdict fell back to the surviving arm.
struct DuetAnswer {
    std::string qid;
    std::string question;
    std::optional<CandidateAnswer> answer_internal;
    std::optional<CandidateAnswer> answer_external;
    std::vector<RetrievalHit> retrieved;
    RefereeVerdict verdict;
    bool degraded = false;
    StageTimings timings;

    /// Stable run-file form. Timings are excluded so identical runs serialize
    /// byte-identically.
    nlohmann::json to_json() const;
    static DuetAnswer from_json(const nlohmann::json& j);
};

inline constexpr int kRunFormatVersion = 1;

DuetAnswer answer(const std::string& question, const std::string& qid,
                  const InvertedIndex& index, const Corpus& corpus,
                  const PipelineConfig& cfg);

struct BatchResult {
    std::size_t total = 0;
    std::size_t failed = 0;
};

/// Processes questions with at most `workers` concurrent pipelines. Output
/// rows are written in input order; a failed question becomes an error row
/// {"qid": ..., "error": ...} rather than being dropped.
BatchResult answer_batch(const std::vector<std::pair<std::string, std::string>>& questions,
                         const InvertedIndex& index, const Corpus& corpus,
                         const PipelineConfig& cfg, std::size_t workers,
                         const std::string& out_path);

}  // namespace duet
