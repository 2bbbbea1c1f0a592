#include "duet/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "duet/pipeline.hpp"

namespace duet {

using nlohmann::json;

std::string normalize_answer(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (unsigned char c : text) {
        if (std::ispunct(c)) continue;
        lowered.push_back(static_cast<char>(std::tolower(c)));
    }
    std::istringstream words(lowered);
    std::string word;
    std::string out;
    while (words >> word) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

bool exact_match(const std::string& pred, const std::string& gold) {
    return normalize_answer(pred) == normalize_answer(gold);
}

double token_f1(const std::string& pred, const std::string& gold) {
    std::istringstream ps(normalize_answer(pred)), gs(normalize_answer(gold));
    std::vector<std::string> p_tokens, g_tokens;
    std::string tok;
    while (ps >> tok) p_tokens.push_back(tok);
    while (gs >> tok) g_tokens.push_back(tok);

    if (p_tokens.empty() && g_tokens.empty()) return 1.0;
    if (p_tokens.empty() || g_tokens.empty()) return 0.0;

    std::unordered_map<std::string, std::size_t> gold_counts;
    for (const auto& t : g_tokens) ++gold_counts[t];
    std::size_t common = 0;
    for (const auto& t : p_tokens) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++common;
            --it->second;
        }
    }
    if (common == 0) return 0.0;
    double precision = static_cast<double>(common) / static_cast<double>(p_tokens.size());
    double recall = static_cast<double>(common) / static_cast<double>(g_tokens.size());
    return 2.0 * precision * recall / (precision + recall);
}

namespace {

struct ArmAccumulator {
    std::size_t n = 0;
    double em_sum = 0.0;
    double f1_sum = 0.0;

    void add(const std::string& pred, const std::string& gold) {
        ++n;
        em_sum += exact_match(pred, gold) ? 1.0 : 0.0;
        f1_sum += token_f1(pred, gold);
    }

    ArmMetrics finish() const {
        ArmMetrics m;
        m.n = n;
        m.em = n == 0 ? 0.0 : em_sum / static_cast<double>(n);
        m.f1 = n == 0 ? 0.0 : f1_sum / static_cast<double>(n);
        return m;
    }
};

}  // namespace

std::string MetricReport::render_table() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "rows evaluated: " << n;
    if (error_rows > 0) out << " (" << error_rows << " error rows, scored 0)";
    out << "\n";
    out << "arm            n      EM      F1\n";
    auto line = [&](const std::string& label, const char* key) {
        auto it = per_arm.find(key);
        if (it == per_arm.end()) return;
        out << std::left << std::setw(12) << label << std::right << std::setw(6)
            << it->second.n << "  " << std::setw(6) << it->second.em << "  " << std::setw(6)
            << it->second.f1 << "\n";
    };
    line("internal", "internal");
    line("external", "external");
    line("duet", "duet");
    out << "referee gain vs external (EM): " << std::showpos << referee_gain_vs_external
        << std::noshowpos << "\n";
    return out.str();
}

std::string MetricReport::to_json_string() const {
    json per;
    for (const auto& [arm, m] : per_arm) {
        per[arm] = {{"n", m.n}, {"em", m.em}, {"f1", m.f1}};
    }
    json j = {
        {"n", n},
        {"error_rows", error_rows},
        {"em", em},
        {"f1", f1},
        {"per_arm", per},
        {"referee_gain_vs_external", referee_gain_vs_external},
    };
    return j.dump(2);
}

MetricReport evaluate_run(const std::string& run_path, const std::vector<QAExample>& gold) {
    std::unordered_map<std::string, const QAExample*> by_qid;
    for (const auto& ex : gold) by_qid[ex.qid] = &ex;

    std::ifstream in(run_path, std::ios::binary);
    if (!in) throw IoError("cannot open run file " + run_path);

    ArmAccumulator acc_internal, acc_external, acc_duet;
    std::size_t rows = 0, error_rows = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(run_path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string qid = j.at("qid").get<std::string>();
        auto it = by_qid.find(qid);
        if (it == by_qid.end())
            throw Error(run_path + ": line " + std::to_string(line_no) + ": qid " + qid +
                        " not present in the gold set");
        const QAExample& ex = *it->second;
        if (!ex.answer)
            throw Error("gold example " + qid + " carries no answer");
        ++rows;

        if (j.contains("error")) {
            // Failed question: counts against the duet metrics, no per-arm data.
            ++error_rows;
            ++acc_duet.n;
            continue;
        }
        DuetAnswer a = DuetAnswer::from_json(j);
        if (a.answer_internal) acc_internal.add(a.answer_internal->text, *ex.answer);
        if (a.answer_external) acc_external.add(a.answer_external->text, *ex.answer);
        acc_duet.add(a.verdict.final_answer, *ex.answer);
    }

    MetricReport report;
    report.n = rows;
    report.error_rows = error_rows;
    report.per_arm["internal"] = acc_internal.finish();
    report.per_arm["external"] = acc_external.finish();
    report.per_arm["duet"] = acc_duet.finish();
    report.em = report.per_arm["duet"].em;
    report.f1 = report.per_arm["duet"].f1;
    report.referee_gain_vs_external = report.em - report.per_arm["external"].em;
    return report;
}

// ---------------------------------------------------------------------------
// Simulator

void SimParams::validate() const {
    auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in01(p_internal) || !in01(p_external))
        throw ConfigError("arm accuracies must be in [0, 1]");
    if (correlation < -1.0 || correlation > 1.0)
        throw ConfigError("correlation must be in [-1, 1]");
    if (!in01(judge_quality)) throw ConfigError("judge_quality must be in [0, 1]");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (delta_sweep.empty()) throw ConfigError("delta_sweep must be non-empty");
    JointCorrectness::from(p_internal, p_external, correlation);  // feasibility check
}

JointCorrectness JointCorrectness::from(double p_internal, double p_external,
                                        double correlation) {
    const double cov = correlation * std::sqrt(p_internal * (1.0 - p_internal) *
                                               p_external * (1.0 - p_external));
    JointCorrectness joint;
    joint.both = p_internal * p_external + cov;
    joint.internal_only = p_internal - joint.both;
    joint.external_only = p_external - joint.both;
    joint.neither = 1.0 - joint.both - joint.internal_only - joint.external_only;

    const double eps = 1e-12;
    for (double cell : {joint.both, joint.internal_only, joint.external_only, joint.neither}) {
        if (cell < -eps || cell > 1.0 + eps)
            throw ConfigError("infeasible joint correctness distribution for the given "
                              "(p_internal, p_external, correlation)");
    }
    joint.both = std::clamp(joint.both, 0.0, 1.0);
    joint.internal_only = std::clamp(joint.internal_only, 0.0, 1.0);
    joint.external_only = std::clamp(joint.external_only, 0.0, 1.0);
    joint.neither = std::clamp(joint.neither, 0.0, 1.0);
    return joint;
}

namespace {

// P(s_i - s_e <= delta) for s_i, s_e iid Uniform(0,1): the blind margin rule's
// probability of picking the external arm.
double blind_external_probability(double delta) {
    if (delta >= 1.0) return 1.0;
    if (delta <= -1.0) return 0.0;
    if (delta >= 0.0) return 1.0 - 0.5 * (1.0 - delta) * (1.0 - delta);
    return 0.5 * (1.0 + delta) * (1.0 + delta);
}

}  // namespace

double simulated_accuracy_closed_form(const SimParams& params, double delta) {
    auto joint = JointCorrectness::from(params.p_internal, params.p_external,
                                        params.correlation);
    const double p_ext_blind = blind_external_probability(delta);
    const double p_int_blind = 1.0 - p_ext_blind;
    return joint.both +
           joint.internal_only * (params.judge_quality +
                                  (1.0 - params.judge_quality) * p_int_blind) +
           joint.external_only * (params.judge_quality +
                                  (1.0 - params.judge_quality) * p_ext_blind);
}

SimReport simulate_referee(const SimParams& params) {
    params.validate();
    auto joint = JointCorrectness::from(params.p_internal, params.p_external,
                                        params.correlation);
    const double union_bound =
        1.0 - (1.0 - params.p_internal) * (1.0 - params.p_external);

    SimReport report;
    for (double delta : params.delta_sweep) {
        // Fresh seeded stream per delta keeps rows independent of sweep order.
        std::mt19937_64 rng(params.seed ^ std::hash<double>{}(delta));
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        std::size_t correct = 0;
        for (std::size_t t = 0; t < params.trials; ++t) {
            const double u = unif(rng);
            bool internal_correct, external_correct;
            if (u < joint.both) {
                internal_correct = external_correct = true;
            } else if (u < joint.both + joint.internal_only) {
                internal_correct = true;
                external_correct = false;
            } else if (u < joint.both + joint.internal_only + joint.external_only) {
                internal_correct = false;
                external_correct = true;
            } else {
                internal_correct = external_correct = false;
            }

            bool final_correct;
            if (internal_correct == external_correct) {
                final_correct = internal_correct;  // either pick gives the same outcome
            } else if (unif(rng) < params.judge_quality) {
                final_correct = true;  // referee identifies the correct arm
            } else {
                // Blind fallback: margin rule over uninformative scores.
                const double s_internal = unif(rng);
                const double s_external = unif(rng);
                const bool pick_internal = s_internal - s_external > delta;
                final_correct = pick_internal ? internal_correct : external_correct;
            }
            if (final_correct) ++correct;
        }

        SimRow row;
        row.delta = delta;
        row.accuracy = static_cast<double>(correct) / static_cast<double>(params.trials);
        row.gain_vs_external = row.accuracy - params.p_external;
        row.union_bound = union_bound;
        row.std_error = std::sqrt(row.accuracy * (1.0 - row.accuracy) /
                                  static_cast<double>(params.trials));
        report.rows.push_back(row);
    }
    return report;
}

std::string SimReport::render_csv() const {
    std::ostringstream out;
    out << "delta,accuracy,gain,union_bound\n";
    out << std::setprecision(6) << std::fixed;
    for (const auto& row : rows) {
        out << row.delta << ',' << row.accuracy << ',' << row.gain_vs_external << ','
            << row.union_bound << '\n';
    }
    return out.str();
}

}  // namespace duet
