// duet: operator entry point. One subcommand per pipeline stage; stages
// compose via files so any stage can be rerun in isolation.
//
// Exit codes: 0 success, 1 row-level failures (work completed where
// possible), 2 config/usage errors. Diagnostics go to stderr, data to
// stdout/files.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "duet/backends.hpp"
#include "duet/corpus.hpp"
#include "duet/eval.hpp"
#include "duet/finetune_data.hpp"
#include "duet/pipeline.hpp"
#include "duet/prompting.hpp"
#include "duet/referee.hpp"
#include "duet/retriever.hpp"

namespace {

using nlohmann::json;
using namespace duet;

constexpr int kExitOk = 0;
constexpr int kExitRowFailures = 1;
constexpr int kExitConfig = 2;

struct AppConfig {
    std::string corpus_path;
    std::string index_path;
    std::string templates_dir;

    std::string internal_base_url, internal_model = "internal";
    std::string external_base_url, external_model = "external";
    std::string judge_base_url, judge_model = "judge";
    std::string embedder_base_url, embedder_model;

    // Mock scripts; when set they win over the http endpoints.
    std::string internal_script, external_script, judge_script;
    std::string mock_fallback = "UNKNOWN";

    std::string strategy = "alignment";
    double delta = 0.05;
    std::size_t retrieval_k = 5;
    std::size_t workers = 1;
    std::uint64_t seed = 0;
};

AppConfig load_app_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    AppConfig cfg;
    cfg.corpus_path = j.value("corpus", "");
    cfg.index_path = j.value("index", "");
    cfg.templates_dir = j.value("templates", "");
    if (j.contains("backends")) {
        const json& b = j["backends"];
        auto endpoint = [&](const char* key, std::string& url, std::string& model,
                            std::string& script) {
            if (!b.contains(key)) return;
            url = b[key].value("base_url", "");
            model = b[key].value("model", model);
            script = b[key].value("script", "");
        };
        endpoint("internal", cfg.internal_base_url, cfg.internal_model, cfg.internal_script);
        endpoint("external", cfg.external_base_url, cfg.external_model, cfg.external_script);
        endpoint("judge", cfg.judge_base_url, cfg.judge_model, cfg.judge_script);
        std::string unused;
        endpoint("embedder", cfg.embedder_base_url, cfg.embedder_model, unused);
    }
    if (j.contains("referee")) {
        cfg.strategy = j["referee"].value("strategy", cfg.strategy);
        cfg.delta = j["referee"].value("delta", cfg.delta);
    }
    cfg.retrieval_k = j.value("retrieval_k", cfg.retrieval_k);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.mock_fallback = j.value("mock_fallback", cfg.mock_fallback);
    return cfg;
}

std::shared_ptr<Generator> make_generator(const std::string& script,
                                          const std::string& base_url,
                                          const std::string& model,
                                          const std::string& fallback) {
    if (!script.empty()) {
        return std::make_shared<MockGenerator>(MockGenerator::load_script(script),
                                               fallback.empty()
                                                   ? std::nullopt
                                                   : std::optional<std::string>(fallback),
                                               model);
    }
    HttpBackendConfig http;
    http.base_url = base_url;
    http.model = model;
    http.apply_env();
    return std::make_shared<HttpGenerator>(http);
}

PipelineConfig make_pipeline_config(const AppConfig& app) {
    PipelineConfig cfg;
    cfg.internal_backend = make_generator(app.internal_script, app.internal_base_url,
                                          app.internal_model, app.mock_fallback);
    cfg.external_backend = make_generator(app.external_script, app.external_base_url,
                                          app.external_model, app.mock_fallback);
    cfg.retrieval_k = app.retrieval_k;
    if (!app.templates_dir.empty()) cfg.templates = load_templates_dir(app.templates_dir);

    cfg.referee.strategy = strategy_from_string(app.strategy);
    cfg.referee.delta = app.delta;
    cfg.referee.judge_template = cfg.templates.judge;
    if (cfg.referee.strategy == RefereeStrategy::alignment) {
        if (!app.embedder_base_url.empty()) {
            HttpBackendConfig http;
            http.base_url = app.embedder_base_url;
            http.model = app.embedder_model;
            http.apply_env();
            cfg.referee.embedder = std::make_shared<HttpEmbedder>(http);
        } else {
            cfg.referee.embedder = std::make_shared<MockEmbedder>();
        }
    }
    if (cfg.referee.strategy == RefereeStrategy::summarize) {
        cfg.referee.judge_backend = make_generator(app.judge_script, app.judge_base_url,
                                                   app.judge_model, app.mock_fallback);
    }
    return cfg;
}

std::vector<QAExample> load_examples_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<QAExample> examples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        QAExample ex;
        ex.qid = j.at("qid").get<std::string>();
        ex.question = j.at("question").get<std::string>();
        if (j.contains("answer") && !j["answer"].is_null())
            ex.answer = j["answer"].get<std::string>();
        if (j.contains("gold_doc_ids"))
            for (const auto& id : j["gold_doc_ids"]) ex.gold_doc_ids.insert(id.get<std::string>());
        if (j.contains("noise_doc_ids"))
            for (const auto& id : j["noise_doc_ids"])
                ex.noise_doc_ids.insert(id.get<std::string>());
        ex.split = split_from_string(j.value("split", "train"));
        examples.push_back(std::move(ex));
    }
    return examples;
}

void save_examples_jsonl(const std::vector<QAExample>& examples, const std::string& path) {
    std::ofstream out(path + ".tmp", std::ios::binary);
    if (!out) throw IoError("cannot open " + path + ".tmp for writing");
    for (const auto& ex : examples) {
        json j = {
            {"qid", ex.qid},
            {"question", ex.question},
            {"gold_doc_ids", ex.gold_doc_ids},
            {"noise_doc_ids", ex.noise_doc_ids},
            {"split", to_string(ex.split)},
        };
        if (ex.answer) j["answer"] = *ex.answer;
        out << j.dump() << '\n';
    }
    out.flush();
    if (!out) throw IoError("write failed for " + path + ".tmp");
    out.close();
    std::error_code ec;
    std::filesystem::rename(path + ".tmp", path, ec);
    if (ec) throw IoError("rename failed for " + path + ": " + ec.message());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DuetRAG collaborative question answering pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags override its values");

    // --- ingest ---
    auto* ingest = app.add_subcommand("ingest", "Ingest a HotpotQA JSON file into a corpus");
    std::string ingest_input, ingest_split = "train", ingest_out, ingest_examples_out,
                ingest_format = "hotpotqa";
    std::optional<std::size_t> ingest_limit;
    ingest->add_option("--input", ingest_input, "HotpotQA JSON file")->required();
    ingest->add_option("--split", ingest_split, "train|validation|test");
    ingest->add_option("--limit", ingest_limit, "Keep at most this many rows, in file order");
    ingest->add_option("--out", ingest_out, "Corpus JSONL output path")->required();
    ingest->add_option("--examples-out", ingest_examples_out, "QA examples JSONL output path");
    ingest->add_option("--format", ingest_format, "hotpotqa|jsonl (plain {title,text} rows)");

    // --- index ---
    auto* index_cmd = app.add_subcommand("index", "Build a BM25 index over a corpus");
    std::string index_corpus, index_out;
    double index_k1 = 1.2, index_b = 0.75;
    index_cmd->add_option("--corpus", index_corpus, "Corpus JSONL path")->required();
    index_cmd->add_option("--out", index_out, "Index output path")->required();
    index_cmd->add_option("--k1", index_k1, "BM25 term-frequency saturation");
    index_cmd->add_option("--b", index_b, "BM25 length normalization, in [0,1]");

    // --- answer ---
    auto* answer_cmd = app.add_subcommand("answer", "Answer one question end-to-end");
    std::string answer_question, answer_qid = "q0";
    answer_cmd->add_option("--question", answer_question, "Question text")->required();
    answer_cmd->add_option("--qid", answer_qid, "Question id for the output row");

    // --- run ---
    auto* run_cmd = app.add_subcommand("run", "Answer a batch of questions to a run file");
    std::string run_questions, run_out;
    std::optional<std::size_t> run_workers;
    run_cmd->add_option("--questions", run_questions, "QA examples JSONL")->required();
    run_cmd->add_option("--out", run_out, "Run file output path")->required();
    run_cmd->add_option("--workers", run_workers, "Concurrent pipelines");

    // --- build-sft ---
    auto* sft_cmd = app.add_subcommand("build-sft", "Emit fine-tuning corpora");
    std::string sft_kind = "all", sft_examples, sft_corpus, sft_outdir = ".";
    std::size_t sft_noise = 3, sft_negatives = 3;
    std::optional<std::uint64_t> sft_seed;
    sft_cmd->add_option("--kind", sft_kind, "internal|external|judge|all");
    sft_cmd->add_option("--examples", sft_examples, "QA examples JSONL")->required();
    sft_cmd->add_option("--corpus", sft_corpus, "Corpus JSONL (needed for external)");
    sft_cmd->add_option("--out-dir", sft_outdir, "Output directory");
    sft_cmd->add_option("--noise", sft_noise, "Noise documents per example");
    sft_cmd->add_option("--negatives", sft_negatives, "Negative pairs per example");
    sft_cmd->add_option("--seed", sft_seed, "Sampling seed");

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "Score a run file against gold answers");
    std::string eval_run, eval_gold;
    bool eval_json = false;
    eval_cmd->add_option("--run", eval_run, "Run file (JSONL)")->required();
    eval_cmd->add_option("--gold", eval_gold, "Gold QA examples JSONL")->required();
    eval_cmd->add_flag("--json", eval_json, "Emit machine-readable JSON instead of a table");

    // --- simulate ---
    auto* sim_cmd = app.add_subcommand("simulate", "Referee-gain Monte-Carlo simulator");
    SimParams sim;
    std::vector<double> sim_deltas;
    sim_cmd->add_option("--pi", sim.p_internal, "Internal arm accuracy")->required();
    sim_cmd->add_option("--pe", sim.p_external, "External arm accuracy")->required();
    sim_cmd->add_option("--rho", sim.correlation, "Correctness correlation of the arms");
    sim_cmd->add_option("--judge-quality", sim.judge_quality,
                        "P(referee identifies the correct arm | exactly one correct)");
    sim_cmd->add_option("--delta-sweep", sim_deltas, "Margin values to sweep");
    sim_cmd->add_option("--trials", sim.trials, "Monte-Carlo trials per delta");
    sim_cmd->add_option("--seed", sim.seed, "RNG seed");

    CLI11_PARSE(app, argc, argv);

    try {
        AppConfig cfg;
        if (!config_path.empty()) cfg = load_app_config(config_path);

        if (*ingest) {
            if (ingest_format == "jsonl") {
                Corpus corpus = load_external_jsonl(ingest_input);
                save_corpus(corpus, ingest_out);
                std::cerr << "wrote " << corpus.size() << " documents to " << ingest_out
                          << "\n";
                return kExitOk;
            }
            auto result = ingest_hotpotqa(ingest_input, split_from_string(ingest_split),
                                          ingest_limit);
            save_corpus(result.corpus, ingest_out);
            if (!ingest_examples_out.empty())
                save_examples_jsonl(result.examples, ingest_examples_out);
            std::cerr << "ingested " << result.examples.size() << " examples, "
                      << result.corpus.size() << " documents\n";
            return kExitOk;
        }

        if (*index_cmd) {
            Corpus corpus = load_corpus(index_corpus);
            IndexParams params;
            params.k1 = index_k1;
            params.b = index_b;
            InvertedIndex index = InvertedIndex::build(corpus, params);
            index.save(index_out);
            std::cerr << "indexed " << index.doc_count() << " documents, "
                      << index.postings().size() << " terms\n";
            return kExitOk;
        }

        if (*answer_cmd || *run_cmd) {
            if (cfg.corpus_path.empty() || cfg.index_path.empty())
                throw ConfigError("answer/run need corpus and index paths in --config");
            Corpus corpus = load_corpus(cfg.corpus_path);
            InvertedIndex index = InvertedIndex::load(cfg.index_path);
            PipelineConfig pipeline_cfg = make_pipeline_config(cfg);

            if (*answer_cmd) {
                DuetAnswer result =
                    answer(answer_question, answer_qid, index, corpus, pipeline_cfg);
                std::cout << result.to_json().dump(2) << "\n";
                return kExitOk;
            }

            auto examples = load_examples_jsonl(run_questions);
            std::vector<std::pair<std::string, std::string>> questions;
            questions.reserve(examples.size());
            for (const auto& ex : examples) questions.emplace_back(ex.qid, ex.question);
            BatchResult result = answer_batch(questions, index, corpus, pipeline_cfg,
                                              run_workers.value_or(cfg.workers), run_out);
            std::cerr << "answered " << result.total - result.failed << "/" << result.total
                      << " questions -> " << run_out << "\n";
            return result.failed == 0 ? kExitOk : kExitRowFailures;
        }

        if (*sft_cmd) {
            auto examples = load_examples_jsonl(sft_examples);
            TemplateSet templates = cfg.templates_dir.empty()
                                        ? default_templates()
                                        : load_templates_dir(cfg.templates_dir);
            std::uint64_t seed = sft_seed.value_or(cfg.seed);
            namespace fs = std::filesystem;
            fs::create_directories(sft_outdir);

            if (sft_kind == "internal" || sft_kind == "all") {
                auto records = build_internal_sft(examples, templates.internal_answerer);
                save_finetune_records(records,
                                      (fs::path(sft_outdir) / "internal_sft.jsonl").string());
                std::cerr << "internal_sft: " << records.size() << " records\n";
            }
            if (sft_kind == "external" || sft_kind == "all") {
                if (sft_corpus.empty())
                    throw ConfigError("external SFT needs --corpus");
                Corpus corpus = load_corpus(sft_corpus);
                auto records = build_external_sft(examples, corpus, sft_noise, seed,
                                                  templates.external_answerer);
                save_finetune_records(records,
                                      (fs::path(sft_outdir) / "external_sft.jsonl").string());
                std::cerr << "external_sft: " << records.size() << " records\n";
            }
            if (sft_kind == "judge" || sft_kind == "all") {
                auto records = build_judge_pairs(examples, sft_negatives, seed);
                save_finetune_records(records,
                                      (fs::path(sft_outdir) / "judge_pairs.jsonl").string());
                std::cerr << "judge_pairs: " << records.size() << " records\n";
            }
            return kExitOk;
        }

        if (*eval_cmd) {
            auto gold = load_examples_jsonl(eval_gold);
            MetricReport report = evaluate_run(eval_run, gold);
            std::cout << (eval_json ? report.to_json_string() : report.render_table());
            if (!eval_json) std::cout.flush();
            return report.error_rows == 0 ? kExitOk : kExitRowFailures;
        }

        if (*sim_cmd) {
            if (!sim_deltas.empty()) sim.delta_sweep = sim_deltas;
            SimReport report = simulate_referee(sim);
            std::cout << report.render_csv();
            return kExitOk;
        }
    } catch (const RowError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRowFailures;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
