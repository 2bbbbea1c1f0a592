#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "duet/retriever.hpp"

using namespace duet;

namespace {

Corpus make_corpus(const std::vector<std::pair<std::string, std::string>>& docs) {
    Corpus corpus("test");
    for (const auto& [id, text] : docs) {
        Document d;
        d.doc_id = id;
        d.title = "";
        d.text = text;
        d.sentences = {text};
        corpus.add(std::move(d));
    }
    return corpus;
}

// Naive re-implementation of the scoring formula with plain loops, used as
// the oracle for the fast index path.
double brute_force_score(const Corpus& corpus, const IndexParams& params,
                         const std::vector<std::string>& query_terms,
                         const std::string& doc_id) {
    std::size_t n = corpus.size();
    double total_len = 0;
    for (const auto& [id, doc] : corpus.documents())
        total_len += tokenize(doc.title + " " + doc.text, params).size();
    double avgdl = total_len / static_cast<double>(n);

    auto doc_terms = tokenize(corpus.at(doc_id).title + " " + corpus.at(doc_id).text, params);
    double score = 0;
    for (const auto& term : query_terms) {
        std::size_t tf = std::count(doc_terms.begin(), doc_terms.end(), term);
        if (tf == 0) continue;
        std::size_t df = 0;
        for (const auto& [id, doc] : corpus.documents()) {
            auto terms = tokenize(doc.title + " " + doc.text, params);
            if (std::find(terms.begin(), terms.end(), term) != terms.end()) ++df;
        }
        double idf = std::log((static_cast<double>(n) - df + 0.5) / (df + 0.5) + 1.0);
        double dl = doc_terms.size();
        score += idf * tf * (params.k1 + 1.0) /
                 (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl));
    }
    return score;
}

std::vector<RetrievalHit> brute_force_search(const Corpus& corpus, const IndexParams& params,
                                             const std::string& question, std::size_t k) {
    auto query_terms = tokenize(question, params);
    std::vector<RetrievalHit> hits;
    for (const auto& [id, doc] : corpus.documents()) {
        double s = brute_force_score(corpus, params, query_terms, id);
        if (s > 0) hits.push_back({id, s, 0});
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (hits.size() > k) hits.resize(k);
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
    return hits;
}

const std::vector<std::string> kVocab = {
    "scott", "derrickson", "film",  "director", "paris",  "france", "city",
    "river", "mountain",   "blue",  "green",    "run",    "jump",   "music",
    "album", "band",       "novel", "author",   "planet", "star"};

Corpus random_corpus(std::mt19937_64& rng, std::size_t max_docs, std::size_t max_tokens) {
    std::uniform_int_distribution<std::size_t> n_docs(1, max_docs);
    std::uniform_int_distribution<std::size_t> n_toks(1, max_tokens);
    std::uniform_int_distribution<std::size_t> pick(0, kVocab.size() - 1);
    std::vector<std::pair<std::string, std::string>> docs;
    std::size_t count = n_docs(rng);
    for (std::size_t i = 0; i < count; ++i) {
        std::string text;
        std::size_t len = n_toks(rng);
        for (std::size_t t = 0; t < len; ++t) {
            if (t) text += ' ';
            text += kVocab[pick(rng)];
        }
        char buf[16];
        std::snprintf(buf, sizeof buf, "d%03zu", i);
        docs.emplace_back(buf, text);
    }
    return make_corpus(docs);
}

}  // namespace

TEST_CASE("tokenize splits on non-alphanumeric boundaries") {
    CHECK(tokenize("Scott Derrickson's film") ==
          std::vector<std::string>{"scott", "derrickson", "s", "film"});
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("A-B a b") == std::vector<std::string>{"a", "b", "a", "b"});

    IndexParams keep_case;
    keep_case.lowercase = false;
    CHECK(tokenize("A-B a b", keep_case) == std::vector<std::string>{"A", "B", "a", "b"});
}

TEST_CASE("tokenize keeps UTF-8 multibyte runs intact") {
    CHECK(tokenize("caf\xC3\xA9 au lait") ==
          std::vector<std::string>{"caf\xC3\xA9", "au", "lait"});
}

TEST_CASE("single-doc index matches hand counts") {
    Corpus corpus = make_corpus({{"d", "a b a"}});
    InvertedIndex index = InvertedIndex::build(corpus);
    CHECK(index.avg_doc_length() == doctest::Approx(3.0));
    REQUIRE(index.postings().count("a") == 1);
    CHECK(index.postings().at("a") == std::vector<Posting>{{"d", 2}});
    CHECK(index.postings().at("b") == std::vector<Posting>{{"d", 1}});
}

TEST_CASE("empty corpus cannot be indexed") {
    CHECK_THROWS_AS(InvertedIndex::build(Corpus("t")), Error);
}

TEST_CASE("bad params are rejected") {
    IndexParams p;
    p.k1 = 0;
    CHECK_THROWS_AS(InvertedIndex::build(make_corpus({{"d", "x"}}), p), ConfigError);
    p = {};
    p.b = 1.5;
    CHECK_THROWS_AS(InvertedIndex::build(make_corpus({{"d", "x"}}), p), ConfigError);
}

TEST_CASE("indexing is deterministic") {
    Corpus corpus = make_corpus({{"d1", "a b"}, {"d2", "b c"}, {"d3", "c d"}});
    CHECK(InvertedIndex::build(corpus) == InvertedIndex::build(corpus));
}

TEST_CASE("3-doc fixture postings match a brute-force term-count oracle") {
    Corpus corpus = make_corpus({{"d1", "scott derrickson is a director"},
                                 {"d2", "paris is the capital of france"},
                                 {"d3", "scott lives in paris"}});
    IndexParams params;
    InvertedIndex index = InvertedIndex::build(corpus, params);
    for (const auto& [term, postings] : index.postings()) {
        for (const auto& posting : postings) {
            auto terms = tokenize(corpus.at(posting.doc_id).text, params);
            CHECK(posting.term_frequency ==
                  static_cast<std::uint32_t>(std::count(terms.begin(), terms.end(), term)));
        }
        CHECK(std::is_sorted(postings.begin(), postings.end(),
                             [](const Posting& a, const Posting& b) {
                                 return a.doc_id < b.doc_id;
                             }));
    }
    // Every indexed doc appears in doc_lengths and avg matches the mean.
    double total = 0;
    for (const auto& [id, len] : index.doc_lengths()) total += len;
    CHECK(index.avg_doc_length() ==
          doctest::Approx(total / static_cast<double>(index.doc_count())));
}

TEST_CASE("score is 0 for terms absent everywhere and errors on unknown docs") {
    Corpus corpus = make_corpus({{"d", "alpha beta"}});
    InvertedIndex index = InvertedIndex::build(corpus);
    CHECK(index.score({"zeta"}, "d") == 0.0);
    CHECK_THROWS_AS(index.score({"alpha"}, "nope"), Error);
}

TEST_CASE("single-doc score matches the hand-evaluated formula") {
    // One doc "a b a": query "a", tf=2, df=1, N=1, |d|=avgdl=3.
    Corpus corpus = make_corpus({{"d", "a b a"}});
    InvertedIndex index = InvertedIndex::build(corpus);
    const double k1 = 1.2, b = 0.75;
    double idf = std::log((1.0 - 1.0 + 0.5) / 1.5 + 1.0);
    double expected = idf * 2.0 * (k1 + 1.0) / (2.0 + k1 * (1.0 - b + b * 1.0));
    CHECK(index.score({"a"}, "d") == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("3-doc scores match the brute-force oracle") {
    Corpus corpus = make_corpus({{"d1", "scott derrickson is a director"},
                                 {"d2", "paris is the capital of france"},
                                 {"d3", "scott lives in paris"}});
    IndexParams params;
    InvertedIndex index = InvertedIndex::build(corpus, params);
    auto query = tokenize("scott derrickson", params);
    for (const auto& [id, doc] : corpus.documents()) {
        CHECK(index.score(query, id) ==
              doctest::Approx(brute_force_score(corpus, params, query, id)).epsilon(1e-12));
    }
}

TEST_CASE("score is monotonically non-decreasing in tf") {
    // Same doc with increasing counts of the query term, all else equal via b=0.
    IndexParams params;
    params.b = 0;
    double prev = -1;
    for (int tf = 1; tf <= 6; ++tf) {
        std::string text;
        for (int i = 0; i < tf; ++i) text += "target ";
        text += "filler";
        Corpus corpus = make_corpus({{"d", text}, {"e", "other words here"}});
        InvertedIndex index = InvertedIndex::build(corpus, params);
        double s = index.score({"target"}, "d");
        CHECK(s >= prev);
        prev = s;
    }
}

TEST_CASE("b=0 removes length dependence") {
    IndexParams params;
    params.b = 0;
    Corpus corpus = make_corpus(
        {{"short", "needle"}, {"long", "needle pad pad pad pad pad pad pad pad"}});
    InvertedIndex index = InvertedIndex::build(corpus, params);
    CHECK(index.score({"needle"}, "short") ==
          doctest::Approx(index.score({"needle"}, "long")).epsilon(1e-12));
}

TEST_CASE("search basics") {
    Corpus corpus = make_corpus({{"d1", "scott derrickson directed the film"},
                                 {"d2", "paris france capital"},
                                 {"d3", "the film was long"}});
    InvertedIndex index = InvertedIndex::build(corpus);

    SUBCASE("query equal to one document's text ranks it first") {
        auto hits = index.search("scott derrickson directed the film", 3);
        REQUIRE(!hits.empty());
        CHECK(hits[0].doc_id == "d1");
        CHECK(hits[0].rank == 1);
    }
    SUBCASE("query with no overlapping terms returns nothing") {
        CHECK(index.search("zebra quokka", 5).empty());
    }
    SUBCASE("k larger than the corpus returns all positive-score docs") {
        auto hits = index.search("film", 50);
        CHECK(hits.size() == 2);
        for (std::size_t i = 0; i < hits.size(); ++i) CHECK(hits[i].rank == i + 1);
    }
    SUBCASE("k=0 is an error") { CHECK_THROWS_AS(index.search("film", 0), Error); }
}

TEST_CASE("property: search equals brute-force ranking on random corpora") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<std::size_t> q_len(1, 4);
    std::uniform_int_distribution<std::size_t> pick(0, kVocab.size() - 1);
    for (int round = 0; round < 25; ++round) {
        Corpus corpus = random_corpus(rng, 60, 20);
        IndexParams params;
        InvertedIndex index = InvertedIndex::build(corpus, params);
        std::string query;
        std::size_t len = q_len(rng);
        for (std::size_t i = 0; i < len; ++i) {
            if (i) query += ' ';
            query += kVocab[pick(rng)];
        }
        for (std::size_t k : {1u, 5u, 20u}) {
            auto fast = index.search(query, k);
            auto slow = brute_force_search(corpus, params, query, k);
            REQUIRE(fast.size() == slow.size());
            for (std::size_t i = 0; i < fast.size(); ++i) {
                CHECK(fast[i].doc_id == slow[i].doc_id);
                CHECK(fast[i].rank == slow[i].rank);
                CHECK(fast[i].score == doctest::Approx(slow[i].score).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("index persistence round-trips") {
    Corpus corpus = make_corpus({{"d1", "a b"}, {"d2", "b c c"}});
    InvertedIndex index = InvertedIndex::build(corpus);
    auto path = (std::filesystem::temp_directory_path() / "duet_index.jsonl").string();
    index.save(path);
    CHECK(InvertedIndex::load(path) == index);
}
