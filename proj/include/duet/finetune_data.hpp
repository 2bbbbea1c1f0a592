#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "duet/corpus.hpp"
#include "duet/prompting.hpp"

namespace duet {

enum class RecordKind { internal_sft, external_sft, judge_pair };
enum class PairLabel { positive, negative };

std::string to_string(RecordKind k);
std::string to_string(PairLabel l);

struct FinetuneRecord {
    RecordKind kind = RecordKind::internal_sft;
    std::string prompt;
    std::string completion;
    std::optional<PairLabel> label;  // judge_pair only
    std::string qid;
    std::vector<std::string> doc_ids;
};

/// One record per example: internal-answerer prompt over q, completion = gold
/// answer, no documents.
std::vector<FinetuneRecord> build_internal_sft(const std::vector<QAExample>& examples,
                                               const PromptTemplate& internal_template);

/// Per example: all gold documents plus `noise_per_example` distractors drawn
/// (seeded, without replacement) from the example's own noise documents first
/// and the rest of the corpus after; document order shuffled so the gold
/// position is not constant.
std::vector<FinetuneRecord> build_external_sft(const std::vector<QAExample>& examples,
                                               const Corpus& corpus,
                                               std::size_t noise_per_example,
                                               std::uint64_t seed,
                                               const PromptTemplate& external_template,
                                               const PromptBudget& budget = {});

/// Per example: one positive (q, gold answer) pair plus `negatives_per_example`
/// negatives sampled from other examples' gold answers; a negative is never
/// normalization-equal to the gold answer.
std::vector<FinetuneRecord> build_judge_pairs(const std::vector<QAExample>& examples,
                                              std::size_t negatives_per_example,
                                              std::uint64_t seed);

/// Strict JSONL, no header line: {kind, prompt, completion, label?, qid, doc_ids}.
void save_finetune_records(const std::vector<FinetuneRecord>& records,
                           const std::string& path);

}  // namespace duet
