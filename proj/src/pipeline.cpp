#include "duet/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

namespace duet {

using nlohmann::json;

void PipelineConfig::validate() const {
    if (!internal_backend) throw ConfigError("pipeline requires an internal backend");
    if (!external_backend) throw ConfigError("pipeline requires an external backend");
    if (retrieval_k < 1) throw ConfigError("retrieval_k must be >= 1");
    referee.validate();
}

namespace {

json candidate_to_json(const CandidateAnswer& c) {
    return {{"text", c.text}, {"arm", to_string(c.arm)}};
}

CandidateAnswer candidate_from_json(const json& j) {
    CandidateAnswer c;
    c.text = j.at("text").get<std::string>();
    c.arm = j.at("arm").get<std::string>() == "internal" ? Arm::internal : Arm::external;
    return c;
}

template <typename F>
auto run_with_timeout(F&& fn, std::chrono::milliseconds timeout) {
    auto fut = std::async(std::launch::async, std::forward<F>(fn));
    if (fut.wait_for(timeout) == std::future_status::timeout) {
        // The worker thread cannot be cancelled; it is abandoned to finish on
        // its own via a detached shared_future.
        std::thread([f = fut.share()]() mutable {
            try {
                f.get();
            } catch (...) {
            }
        }).detach();
        throw TimeoutError("arm timed out after " + std::to_string(timeout.count()) + " ms");
    }
    return fut.get();
}

}  // namespace

json DuetAnswer::to_json() const {
    json j;
    j["format_version"] = kRunFormatVersion;
    j["qid"] = qid;
    j["question"] = question;
    if (answer_internal) j["answer_internal"] = candidate_to_json(*answer_internal);
    if (answer_external) j["answer_external"] = candidate_to_json(*answer_external);
    json hits = json::array();
    for (const auto& h : retrieved)
        hits.push_back({{"doc_id", h.doc_id}, {"score", h.score}, {"rank", h.rank}});
    j["retrieved"] = std::move(hits);
    json v;
    v["final_answer"] = verdict.final_answer;
    v["chosen_arm"] = to_string(verdict.chosen_arm);
    v["strategy"] = to_string(verdict.strategy);
    if (verdict.score_internal) v["score_internal"] = *verdict.score_internal;
    if (verdict.score_external) v["score_external"] = *verdict.score_external;
    j["verdict"] = std::move(v);
    j["degraded"] = degraded;
    return j;
}

DuetAnswer DuetAnswer::from_json(const json& j) {
    if (j.value("format_version", -1) != kRunFormatVersion)
        throw ParseError("incompatible run-row format_version");
    DuetAnswer a;
    a.qid = j.at("qid").get<std::string>();
    a.question = j.at("question").get<std::string>();
    if (j.contains("answer_internal"))
        a.answer_internal = candidate_from_json(j["answer_internal"]);
    if (j.contains("answer_external"))
        a.answer_external = candidate_from_json(j["answer_external"]);
    for (const auto& h : j.at("retrieved")) {
        a.retrieved.push_back({h.at("doc_id").get<std::string>(),
                               h.at("score").get<double>(),
                               h.at("rank").get<std::size_t>()});
    }
    const json& v = j.at("verdict");
    a.verdict.final_answer = v.at("final_answer").get<std::string>();
    const std::string arm = v.at("chosen_arm").get<std::string>();
    a.verdict.chosen_arm = arm == "internal"    ? ChosenArm::internal
                           : arm == "external" ? ChosenArm::external
                                               : ChosenArm::synthesized;
    a.verdict.strategy = strategy_from_string(v.at("strategy").get<std::string>());
    if (v.contains("score_internal")) a.verdict.score_internal = v["score_internal"].get<double>();
    if (v.contains("score_external")) a.verdict.score_external = v["score_external"].get<double>();
    a.degraded = j.value("degraded", false);
    return a;
}

DuetAnswer answer(const std::string& question, const std::string& qid,
                  const InvertedIndex& index, const Corpus& corpus,
                  const PipelineConfig& cfg) {
    cfg.validate();
    DuetAnswer out;
    out.qid = qid;
    out.question = question;

    using Clock = std::chrono::steady_clock;

    // Internal arm and (retrieve -> external arm) run concurrently.
    auto internal_task = std::async(std::launch::async, [&]() -> CandidateAnswer {
        GenerationRequest req =
            build_internal_prompt(question, cfg.templates.internal_answerer);
        GenerationResult res = cfg.internal_backend->generate(req);
        std::string text = res.text;
        auto begin = text.find_first_not_of(" \t\r\n");
        auto end = text.find_last_not_of(" \t\r\n");
        text = begin == std::string::npos ? "" : text.substr(begin, end - begin + 1);
        if (text.empty()) throw BackendError("internal arm returned an empty answer");
        return CandidateAnswer{text, Arm::internal, res};
    });

    auto retrieval_start = Clock::now();
    out.retrieved = index.search(question, cfg.retrieval_k);
    out.timings.retrieval = std::chrono::duration_cast<std::chrono::milliseconds>(
        Clock::now() - retrieval_start);

    std::exception_ptr external_error;
    if (!out.retrieved.empty()) {
        try {
            auto external_start = Clock::now();
            out.answer_external = run_with_timeout(
                [&]() -> CandidateAnswer {
                    std::vector<Document> docs;
                    docs.reserve(out.retrieved.size());
                    for (const auto& hit : out.retrieved) docs.push_back(corpus.at(hit.doc_id));
                    GenerationRequest req = build_external_prompt(
                        question, docs, cfg.templates.external_answerer, cfg.budget);
                    GenerationResult res = cfg.external_backend->generate(req);
                    std::string text = res.text;
                    auto begin = text.find_first_not_of(" \t\r\n");
                    auto end = text.find_last_not_of(" \t\r\n");
                    text = begin == std::string::npos ? ""
                                                      : text.substr(begin, end - begin + 1);
                    if (text.empty())
                        throw BackendError("external arm returned an empty answer");
                    return CandidateAnswer{text, Arm::external, res};
                },
                cfg.per_arm_timeout);
            out.timings.external_arm = std::chrono::duration_cast<std::chrono::milliseconds>(
                Clock::now() - external_start);
        } catch (...) {
            external_error = std::current_exception();
        }
    }

    std::exception_ptr internal_error;
    auto internal_start = Clock::now();
    try {
        if (internal_task.wait_for(cfg.per_arm_timeout) == std::future_status::timeout)
            throw TimeoutError("internal arm timed out");
        out.answer_internal = internal_task.get();
    } catch (...) {
        internal_error = std::current_exception();
    }
    out.timings.internal_arm =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - internal_start);

    auto describe = [](std::exception_ptr ep) -> std::string {
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            return e.what();
        } catch (...) {
            return "unknown error";
        }
    };

    // Degradation ladder: both arms -> referee; one arm -> that arm, flagged
    // degraded; no arm -> error carrying both causes.
    if (!out.answer_internal && !out.answer_external) {
        std::string external_cause = external_error
                                         ? "external (" + describe(external_error) + ")"
                                         : "external skipped (no retrieval hits)";
        throw Error("both arms unavailable: internal (" + describe(internal_error) + "), " +
                    external_cause);
    }

    auto referee_start = Clock::now();
    if (out.answer_internal && out.answer_external) {
        out.verdict = referee_select(question, *out.answer_internal, *out.answer_external,
                                     cfg.referee);
    } else if (out.answer_internal) {
        out.verdict.final_answer = out.answer_internal->text;
        out.verdict.chosen_arm = ChosenArm::internal;
        out.verdict.strategy = cfg.referee.strategy;
        out.degraded = true;
    } else {
        out.verdict.final_answer = out.answer_external->text;
        out.verdict.chosen_arm = ChosenArm::external;
        out.verdict.strategy = cfg.referee.strategy;
        out.degraded = true;
    }
    out.timings.referee =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - referee_start);
    return out;
}

BatchResult answer_batch(const std::vector<std::pair<std::string, std::string>>& questions,
                         const InvertedIndex& index, const Corpus& corpus,
                         const PipelineConfig& cfg, std::size_t workers,
                         const std::string& out_path) {
    cfg.validate();
    if (workers < 1) throw ConfigError("workers must be >= 1");

    // Fail on an unwritable destination before any backend call.
    const std::string tmp_path = out_path + ".tmp";
    std::ofstream out(tmp_path, std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp_path + " for writing");

    std::vector<std::string> rows(questions.size());
    std::vector<bool> failed(questions.size(), false);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= questions.size()) return;
            const auto& [qid, question] = questions[i];
            try {
                DuetAnswer a = answer(question, qid, index, corpus, cfg);
                rows[i] = a.to_json().dump();
            } catch (const std::exception& e) {
                rows[i] = json{{"qid", qid}, {"error", e.what()}}.dump();
                failed[i] = true;
            }
        }
    };

    std::vector<std::thread> pool;
    std::size_t n = std::min(workers, questions.size() == 0 ? std::size_t{1} : questions.size());
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    BatchResult result;
    result.total = questions.size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << rows[i] << '\n';
        if (failed[i]) ++result.failed;
    }
    out.flush();
    if (!out) throw IoError("write failed for " + tmp_path);
    out.close();
    std::error_code ec;
    std::filesystem::rename(tmp_path, out_path, ec);
    if (ec) throw IoError("rename " + tmp_path + " -> " + out_path + ": " + ec.message());
    return result;
}

}  // namespace duet
