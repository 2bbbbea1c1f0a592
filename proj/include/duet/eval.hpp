#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "duet/corpus.hpp"

namespace duet {

/// HotpotQA-convention answer normalization: lowercase, drop articles
/// {a, an, the}, strip punctuation, collapse whitespace.
std::string normalize_answer(const std::string& text);

bool exact_match(const std::string& pred, const std::string& gold);

/// Harmonic mean of token precision/recall over normalized-token multisets.
/// Both empty -> 1.0; exactly one empty -> 0.0.
double token_f1(const std::string& pred, const std::string& gold);

struct ArmMetrics {
    std::size_t n = 0;
    double em = 0.0;
    double f1 = 0.0;
};

struct MetricReport {
    std::size_t n = 0;          // rows evaluated, including error rows
    std::size_t error_rows = 0; // counted as incorrect for the duet metrics
    double em = 0.0;            // final (duet) answer
    double f1 = 0.0;
    std::map<std::string, ArmMetrics> per_arm;  // keys: internal, external, duet
    double referee_gain_vs_external = 0.0;      // em(duet) - em(external arm)

    std::string render_table() const;
    std::string to_json_string() const;
};

MetricReport evaluate_run(const std::string& run_path, const std::vector<QAExample>& gold);

// ---------------------------------------------------------------------------
// Referee-gain Monte-Carlo simulator: a desk-scale surrogate for grading the
// two-arm ensemble with fine-tuned models.

struct SimParams {
    double p_internal = 0.5;   // marginal accuracy of the internal arm
    double p_external = 0.5;
    double correlation = 0.0;  // Pearson correlation of the correctness Bernoullis
    double judge_quality = 1.0;
    std::vector<double> delta_sweep = {0.0, 0.05, 0.1, 0.2};
    std::size_t trials = 100000;
    std::uint64_t seed = 0;

    void validate() const;
};

/// 2x2 joint correctness distribution induced by (p_i, p_e, correlation).
/// Throws if any cell probability leaves [0, 1].
struct JointCorrectness {
    double both = 0.0;           // P(internal correct, external correct)
    double internal_only = 0.0;
    double external_only = 0.0;
    double neither = 0.0;

    static JointCorrectness from(double p_internal, double p_external, double correlation);
};

struct SimRow {
    double delta = 0.0;
    double accuracy = 0.0;
    double gain_vs_external = 0.0;
    double union_bound = 0.0;  // 1 - (1 - p_i)(1 - p_e), independent-arm ceiling
    double std_error = 0.0;    // Monte-Carlo standard error of `accuracy`
};

struct SimReport {
    std::vector<SimRow> rows;

    std::string render_csv() const;  // header: delta,accuracy,gain,union_bound
};

/// Per trial: joint correctness sampled from the 2x2 table; with probability
/// judge_quality the referee identifies the correct arm when exactly one is
/// correct, otherwise it falls back to the margin rule over uninformative
/// uniform scores (external unless s_i - s_e > delta).
SimReport simulate_referee(const SimParams& params);

/// Closed-form accuracy of the same process, for oracle checks.
double simulated_accuracy_closed_form(const SimParams& params, double delta);

}  // namespace duet
