#include "duet/finetune_data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "duet/eval.hpp"

namespace duet {

using nlohmann::json;

std::string to_string(RecordKind k) {
    switch (k) {
        case RecordKind::internal_sft: return "internal_sft";
        case RecordKind::external_sft: return "external_sft";
        case RecordKind::judge_pair: return "judge_pair";
    }
    throw Error("unreachable record kind");
}

std::string to_string(PairLabel l) {
    return l == PairLabel::positive ? "positive" : "negative";
}

std::vector<FinetuneRecord> build_internal_sft(const std::vector<QAExample>& examples,
                                               const PromptTemplate& internal_template) {
    std::vector<FinetuneRecord> records;
    records.reserve(examples.size());
    for (const auto& ex : examples) {
        if (!ex.answer)
            throw RowError("example " + ex.qid + " has no answer; cannot build SFT record");
        GenerationRequest req = build_internal_prompt(ex.question, internal_template);
        FinetuneRecord rec;
        rec.kind = RecordKind::internal_sft;
        rec.prompt = req.user_prompt;
        rec.completion = *ex.answer;
        rec.qid = ex.qid;
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<FinetuneRecord> build_external_sft(const std::vector<QAExample>& examples,
                                               const Corpus& corpus,
                                               std::size_t noise_per_example,
                                               std::uint64_t seed,
                                               const PromptTemplate& external_template,
                                               const PromptBudget& budget) {
    std::mt19937_64 rng(seed);
    std::vector<FinetuneRecord> records;
    records.reserve(examples.size());

    // Global noise pool: every corpus doc_id in stable order.
    std::vector<std::string> all_doc_ids;
    all_doc_ids.reserve(corpus.size());
    for (const auto& [id, doc] : corpus.documents()) all_doc_ids.push_back(id);

    for (const auto& ex : examples) {
        if (!ex.answer)
            throw RowError("example " + ex.qid + " has no answer; cannot build SFT record");

        std::vector<std::string> doc_ids(ex.gold_doc_ids.begin(), ex.gold_doc_ids.end());
        std::unordered_set<std::string> used(doc_ids.begin(), doc_ids.end());

        // Own noise documents first, then the rest of the corpus.
        std::vector<std::string> own_noise(ex.noise_doc_ids.begin(), ex.noise_doc_ids.end());
        std::shuffle(own_noise.begin(), own_noise.end(), rng);
        std::size_t wanted = noise_per_example;
        for (const auto& id : own_noise) {
            if (wanted == 0) break;
            if (used.insert(id).second) {
                doc_ids.push_back(id);
                --wanted;
            }
        }
        if (wanted > 0) {
            std::vector<std::string> global_pool;
            for (const auto& id : all_doc_ids) {
                if (used.count(id) == 0) global_pool.push_back(id);
            }
            std::shuffle(global_pool.begin(), global_pool.end(), rng);
            for (const auto& id : global_pool) {
                if (wanted == 0) break;
                doc_ids.push_back(id);
                used.insert(id);
                --wanted;
            }
        }
        if (wanted > 0) {
            throw RowError("example " + ex.qid + ": corpus is short " +
                           std::to_string(wanted) + " noise document(s) of the requested " +
                           std::to_string(noise_per_example));
        }

        std::shuffle(doc_ids.begin(), doc_ids.end(), rng);

        std::vector<Document> docs;
        docs.reserve(doc_ids.size());
        for (const auto& id : doc_ids) docs.push_back(corpus.at(id));
        GenerationRequest req =
            build_external_prompt(ex.question, docs, external_template, budget);

        FinetuneRecord rec;
        rec.kind = RecordKind::external_sft;
        rec.prompt = req.user_prompt;
        rec.completion = *ex.answer;
        rec.qid = ex.qid;
        rec.doc_ids = std::move(doc_ids);
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<FinetuneRecord> build_judge_pairs(const std::vector<QAExample>& examples,
                                              std::size_t negatives_per_example,
                                              std::uint64_t seed) {
    if (negatives_per_example < 1)
        throw ConfigError("negatives_per_example must be >= 1");

    std::set<std::string> distinct;
    for (const auto& ex : examples) {
        if (!ex.answer)
            throw RowError("example " + ex.qid + " has no answer; cannot build judge pairs");
        distinct.insert(normalize_answer(*ex.answer));
    }
    if (distinct.size() < 2)
        throw Error("judge pairs need >= 2 distinct answers in the dataset, found " +
                    std::to_string(distinct.size()));

    std::mt19937_64 rng(seed);
    std::vector<FinetuneRecord> records;
    records.reserve(examples.size() * (1 + negatives_per_example));

    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        const std::string gold_norm = normalize_answer(*ex.answer);

        FinetuneRecord pos;
        pos.kind = RecordKind::judge_pair;
        pos.prompt = ex.question;
        pos.completion = *ex.answer;
        pos.label = PairLabel::positive;
        pos.qid = ex.qid;
        records.push_back(std::move(pos));

        // Candidate negatives: other examples' gold answers not matching gold
        // after normalization.
        std::vector<const std::string*> pool;
        for (std::size_t j = 0; j < examples.size(); ++j) {
            if (j == i) continue;
            if (normalize_answer(*examples[j].answer) != gold_norm)
                pool.push_back(&*examples[j].answer);
        }
        if (pool.empty())
            throw RowError("example " + ex.qid +
                           ": no valid negative answers exist in the dataset");

        for (std::size_t n = 0; n < negatives_per_example; ++n) {
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            FinetuneRecord neg;
            neg.kind = RecordKind::judge_pair;
            neg.prompt = ex.question;
            neg.completion = *pool[pick(rng)];
            neg.label = PairLabel::negative;
            neg.qid = ex.qid;
            records.push_back(std::move(neg));
        }
    }
    return records;
}

void save_finetune_records(const std::vector<FinetuneRecord>& records,
                           const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        for (const auto& rec : records) {
            json j = {
                {"kind", to_string(rec.kind)},
                {"prompt", rec.prompt},
                {"completion", rec.completion},
                {"qid", rec.qid},
                {"doc_ids", rec.doc_ids},
            };
            if (rec.label) j["label"] = to_string(*rec.label);
            out << j.dump() << '\n';
        }
        if (!out) throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

}  // namespace duet
