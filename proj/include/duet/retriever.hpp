#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "duet/corpus.hpp"

namespace duet {

struct IndexParams {
    double k1 = 1.2;   // term-frequency saturation, > 0
    double b = 0.75;   // length normalization, in [0, 1]
    bool lowercase = true;

    void validate() const;
    bool operator==(const IndexParams&) const = default;
};

struct Posting {
    std::string doc_id;
    std::uint32_t term_frequency = 0;

    bool operator==(const Posting&) const = default;
};

struct RetrievalHit {
    std::string doc_id;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based

    bool operator==(const RetrievalHit&) const = default;
};

/// Splits on non-alphanumeric boundaries. ASCII letters are lowercased when
/// params.lowercase; UTF-8 multibyte sequences count as word characters.
std::vector<std::string> tokenize(const std::string& text, const IndexParams& params = {});

/// Okapi BM25 inverted index. Immutable after build; search is pure.
class InvertedIndex {
public:
    static InvertedIndex build(const Corpus& corpus, const IndexParams& params = {});

    /// Standard Okapi BM25 with IDF(t) = ln((N - df + 0.5)/(df + 0.5) + 1).
    double score(const std::vector<std::string>& query_terms, const std::string& doc_id) const;

    std::vector<RetrievalHit> search(const std::string& question, std::size_t k) const;

    const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }
    const std::map<std::string, std::uint32_t>& doc_lengths() const { return doc_lengths_; }
    double avg_doc_length() const { return avg_doc_length_; }
    std::size_t doc_count() const { return doc_lengths_.size(); }
    const IndexParams& params() const { return params_; }

    void save(const std::string& path) const;
    static InvertedIndex load(const std::string& path);

    bool operator==(const InvertedIndex&) const = default;

private:
    std::map<std::string, std::vector<Posting>> postings_;
    std::map<std::string, std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    IndexParams params_;
};

inline constexpr int kIndexFormatVersion = 1;

}  // namespace duet
