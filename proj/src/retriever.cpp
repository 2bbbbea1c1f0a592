#include "duet/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace duet {

using nlohmann::json;

void IndexParams::validate() const {
    if (!(k1 > 0)) throw ConfigError("k1 must be > 0");
    if (b < 0 || b > 1) throw ConfigError("b must be in [0, 1]");
}

std::vector<std::string> tokenize(const std::string& text, const IndexParams& params) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (unsigned char c : text) {
        bool word_char = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                         (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (!word_char) {
            flush();
            continue;
        }
        if (params.lowercase && c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c + 32);
        current.push_back(static_cast<char>(c));
    }
    flush();
    return tokens;
}

InvertedIndex InvertedIndex::build(const Corpus& corpus, const IndexParams& params) {
    params.validate();
    if (corpus.empty()) throw Error("cannot build an index over an empty corpus");

    InvertedIndex index;
    index.params_ = params;
    std::uint64_t total_len = 0;
    for (const auto& [doc_id, doc] : corpus.documents()) {
        auto terms = tokenize(doc.title + " " + doc.text, params);
        std::unordered_map<std::string, std::uint32_t> tf;
        for (const auto& t : terms) ++tf[t];
        for (const auto& [term, freq] : tf) {
            index.postings_[term].push_back({doc_id, freq});
        }
        index.doc_lengths_[doc_id] = static_cast<std::uint32_t>(terms.size());
        total_len += terms.size();
    }
    // Corpus iteration is already doc_id-ordered, so postings come out sorted;
    // keep the explicit sort as the invariant's enforcement point.
    for (auto& [term, list] : index.postings_) {
        std::sort(list.begin(), list.end(),
                  [](const Posting& a, const Posting& b) { return a.doc_id < b.doc_id; });
    }
    index.avg_doc_length_ =
        static_cast<double>(total_len) / static_cast<double>(index.doc_lengths_.size());
    return index;
}

double InvertedIndex::score(const std::vector<std::string>& query_terms,
                            const std::string& doc_id) const {
    auto len_it = doc_lengths_.find(doc_id);
    if (len_it == doc_lengths_.end()) throw Error("unknown doc_id: " + doc_id);
    const double doc_len = len_it->second;
    const double n = static_cast<double>(doc_count());

    double total = 0.0;
    for (const auto& term : query_terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const auto& list = it->second;
        auto pit = std::lower_bound(
            list.begin(), list.end(), doc_id,
            [](const Posting& p, const std::string& id) { return p.doc_id < id; });
        if (pit == list.end() || pit->doc_id != doc_id) continue;
        const double tf = pit->term_frequency;
        const double df = static_cast<double>(list.size());
        const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        const double norm = params_.k1 * (1.0 - params_.b + params_.b * doc_len / avg_doc_length_);
        total += idf * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return total;
}

std::vector<RetrievalHit> InvertedIndex::search(const std::string& question,
                                                std::size_t k) const {
    if (k == 0) throw Error("search requires k >= 1");
    auto query_terms = tokenize(question, params_);

    std::unordered_map<std::string, double> scores;
    const double n = static_cast<double>(doc_count());
    for (const auto& term : query_terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const auto& list = it->second;
        const double df = static_cast<double>(list.size());
        const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        for (const auto& posting : list) {
            const double tf = posting.term_frequency;
            const double doc_len = doc_lengths_.at(posting.doc_id);
            const double norm =
                params_.k1 * (1.0 - params_.b + params_.b * doc_len / avg_doc_length_);
            scores[posting.doc_id] += idf * tf * (params_.k1 + 1.0) / (tf + norm);
        }
    }

    std::vector<RetrievalHit> hits;
    hits.reserve(scores.size());
    for (const auto& [doc_id, score] : scores) {
        if (score > 0.0) hits.push_back({doc_id, score, 0});
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (hits.size() > k) hits.resize(k);
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
    return hits;
}

void InvertedIndex::save(const std::string& path) const {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        json header = {
            {"format_version", kIndexFormatVersion},
            {"doc_count", doc_count()},
            {"avg_doc_length", avg_doc_length_},
            {"params", {{"k1", params_.k1}, {"b", params_.b}, {"lowercase", params_.lowercase}}},
            {"doc_lengths", doc_lengths_},
        };
        out << header.dump() << '\n';
        for (const auto& [term, list] : postings_) {
            json row = json::array();
            for (const auto& p : list) row.push_back({p.doc_id, p.term_frequency});
            out << json{{"term", term}, {"postings", row}}.dump() << '\n';
        }
        if (!out) throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp + " -> " + path + ": " + ec.message());
}

InvertedIndex InvertedIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": missing index header");
    json header = json::parse(line, nullptr, false);
    if (header.is_discarded()) throw ParseError(path + ": bad index header");
    if (header.value("format_version", -1) != kIndexFormatVersion)
        throw ParseError(path + ": incompatible index format_version");

    InvertedIndex index;
    index.params_.k1 = header["params"]["k1"].get<double>();
    index.params_.b = header["params"]["b"].get<double>();
    index.params_.lowercase = header["params"]["lowercase"].get<bool>();
    index.avg_doc_length_ = header["avg_doc_length"].get<double>();
    index.doc_lengths_ =
        header["doc_lengths"].get<std::map<std::string, std::uint32_t>>();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json row = json::parse(line);
        auto& list = index.postings_[row["term"].get<std::string>()];
        for (const auto& p : row["postings"]) {
            list.push_back({p[0].get<std::string>(), p[1].get<std::uint32_t>()});
        }
    }
    return index;
}

}  // namespace duet
