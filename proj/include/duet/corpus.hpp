#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "duet/errors.hpp"

namespace duet {

enum class DocSource { dataset_context, external_corpus };
enum class Split { train, validation, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// One retrievable text unit. `text` is always the single-space join of
/// `sentences`.
struct Document {
    std::string doc_id;
    std::string title;
    std::string text;
    std::vector<std::string> sentences;
    DocSource source = DocSource::dataset_context;

    bool operator==(const Document&) const = default;
};

struct QAExample {
    std::string qid;
    std::string question;
    std::optional<std::string> answer;
    std::set<std::string> gold_doc_ids;
    std::set<std::string> noise_doc_ids;
    Split split = Split::train;

    bool operator==(const QAExample&) const = default;
};

struct CorpusStats {
    std::size_t document_count = 0;
    std::size_t total_token_count = 0;

    bool operator==(const CorpusStats&) const = default;
};

/// Immutable after construction; safe to share read-only across workers.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::string task_label) : task_label_(std::move(task_label)) {}

    // Inserts a document; throws RowError on duplicate doc_id.
    void add(Document doc);

    const Document& at(const std::string& doc_id) const;
    const Document* find(const std::string& doc_id) const;
    bool contains(const std::string& doc_id) const { return docs_.count(doc_id) > 0; }

    const std::map<std::string, Document>& documents() const { return docs_; }
    const std::string& task_label() const { return task_label_; }
    CorpusStats stats() const;
    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }

    bool operator==(const Corpus&) const = default;

private:
    std::map<std::string, Document> docs_;
    std::string task_label_;
};

struct IngestResult {
    std::vector<QAExample> examples;
    Corpus corpus;
};

/// Reads a HotpotQA-format JSON array. Each context entry becomes a Document
/// with doc_id "<qid>:<title>"; documents repeated across rows (same title and
/// text) are deduplicated onto the first-seen doc_id. A context document is
/// gold iff its title appears in the row's supporting_facts.
IngestResult ingest_hotpotqa(const std::string& path, Split split,
                             std::optional<std::size_t> limit = std::nullopt);

/// Reads a plain JSONL corpus of {"title": ..., "text": ...} rows for
/// arbitrary external collections. doc_id is "ext:<line-number>".
Corpus load_external_jsonl(const std::string& path, std::string task_label = "external");

/// Line-delimited JSON: one header line, then one Document per line.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

inline constexpr int kCorpusFormatVersion = 1;

}  // namespace duet
