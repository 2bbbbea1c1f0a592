#include "duet/corpus.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace duet {

using nlohmann::json;

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    throw Error("unreachable split value");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw ParseError("unknown split: " + s);
}

namespace {

std::string to_string(DocSource s) {
    return s == DocSource::dataset_context ? "dataset_context" : "external_corpus";
}

DocSource source_from_string(const std::string& s) {
    if (s == "dataset_context") return DocSource::dataset_context;
    if (s == "external_corpus") return DocSource::external_corpus;
    throw ParseError("unknown document source: " + s);
}

std::string join_sentences(const std::vector<std::string>& sentences) {
    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i > 0) out += ' ';
        out += sentences[i];
    }
    return out;
}

std::size_t whitespace_token_count(const std::string& text) {
    std::size_t n = 0;
    bool in_tok = false;
    for (char c : text) {
        bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!ws && !in_tok) ++n;
        in_tok = !ws;
    }
    return n;
}

json parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": malformed JSON at byte " + std::to_string(e.byte) +
                         ": " + e.what());
    }
}

// Atomic replace: write to a sibling temp file, then rename over the target.
class AtomicWriter {
public:
    explicit AtomicWriter(std::string path)
        : path_(std::move(path)), tmp_(path_ + ".tmp"), out_(tmp_, std::ios::binary) {
        if (!out_) throw IoError("cannot open " + tmp_ + " for writing");
    }

    std::ofstream& stream() { return out_; }

    void commit() {
        out_.flush();
        if (!out_) throw IoError("write failed for " + tmp_);
        out_.close();
        std::error_code ec;
        std::filesystem::rename(tmp_, path_, ec);
        if (ec) throw IoError("rename " + tmp_ + " -> " + path_ + ": " + ec.message());
        committed_ = true;
    }

    ~AtomicWriter() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

private:
    std::string path_;
    std::string tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

}  // namespace

void Corpus::add(Document doc) {
    auto [it, inserted] = docs_.emplace(doc.doc_id, std::move(doc));
    if (!inserted) throw RowError("duplicate doc_id: " + it->first);
}

const Document& Corpus::at(const std::string& doc_id) const {
    auto it = docs_.find(doc_id);
    if (it == docs_.end()) throw Error("unknown doc_id: " + doc_id);
    return it->second;
}

const Document* Corpus::find(const std::string& doc_id) const {
    auto it = docs_.find(doc_id);
    return it == docs_.end() ? nullptr : &it->second;
}

CorpusStats Corpus::stats() const {
    CorpusStats s;
    s.document_count = docs_.size();
    for (const auto& [id, doc] : docs_) s.total_token_count += whitespace_token_count(doc.text);
    return s;
}

IngestResult ingest_hotpotqa(const std::string& path, Split split,
                             std::optional<std::size_t> limit) {
    json rows = parse_file(path);
    if (!rows.is_array()) throw ParseError(path + ": expected a top-level JSON array");

    IngestResult result;
    result.corpus = Corpus("hotpotqa");
    std::unordered_set<std::string> seen_qids;
    // (title \x1f text) -> canonical doc_id for dedup across rows.
    std::unordered_map<std::string, std::string> canonical;

    std::size_t max_rows = limit.value_or(rows.size());
    for (std::size_t row_idx = 0; row_idx < rows.size() && result.examples.size() < max_rows;
         ++row_idx) {
        const json& row = rows[row_idx];
        auto row_err = [&](const std::string& msg) {
            std::string qid = row.is_object() && row.contains("_id") && row["_id"].is_string()
                                  ? row["_id"].get<std::string>()
                                  : "<unknown>";
            return RowError(path + ": row " + std::to_string(row_idx) + " (qid " + qid +
                            "): " + msg);
        };

        if (!row.is_object()) throw row_err("not an object");
        for (const char* field : {"_id", "question", "answer", "context", "supporting_facts"}) {
            if (!row.contains(field)) throw row_err(std::string("missing field ") + field);
        }

        QAExample ex;
        ex.split = split;
        try {
            ex.qid = row["_id"].get<std::string>();
            ex.question = row["question"].get<std::string>();
            ex.answer = row["answer"].get<std::string>();
        } catch (const json::exception& e) {
            throw row_err(std::string("bad field type: ") + e.what());
        }
        if (!seen_qids.insert(ex.qid).second) throw row_err("duplicate _id");

        std::unordered_set<std::string> gold_titles;
        if (!row["supporting_facts"].is_array()) throw row_err("supporting_facts not an array");
        for (const json& sf : row["supporting_facts"]) {
            if (!sf.is_array() || sf.size() < 2 || !sf[0].is_string())
                throw row_err("malformed supporting_facts entry");
            gold_titles.insert(sf[0].get<std::string>());
        }
        if (gold_titles.empty()) throw row_err("no supporting facts");

        if (!row["context"].is_array()) throw row_err("context not an array");
        for (const json& ctx : row["context"]) {
            if (!ctx.is_array() || ctx.size() < 2 || !ctx[0].is_string() || !ctx[1].is_array())
                throw row_err("malformed context entry");
            Document doc;
            doc.title = ctx[0].get<std::string>();
            for (const json& sent : ctx[1]) {
                if (!sent.is_string()) throw row_err("non-string sentence under " + doc.title);
                doc.sentences.push_back(sent.get<std::string>());
            }
            doc.text = join_sentences(doc.sentences);
            doc.source = DocSource::dataset_context;

            std::string key = doc.title + '\x1f' + doc.text;
            auto it = canonical.find(key);
            std::string doc_id;
            if (it != canonical.end()) {
                doc_id = it->second;
            } else {
                doc_id = ex.qid + ":" + doc.title;
                doc.doc_id = doc_id;
                canonical.emplace(std::move(key), doc_id);
                result.corpus.add(std::move(doc));
            }
            if (gold_titles.count(ctx[0].get<std::string>()) > 0) {
                ex.gold_doc_ids.insert(doc_id);
            } else {
                ex.noise_doc_ids.insert(doc_id);
            }
        }
        if (ex.gold_doc_ids.empty())
            throw row_err("supporting facts reference no context document");
        result.examples.push_back(std::move(ex));
    }
    return result;
}

Corpus load_external_jsonl(const std::string& path, std::string task_label) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    Corpus corpus(std::move(task_label));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!row.contains("title") || !row.contains("text"))
            throw RowError(path + ": line " + std::to_string(line_no) +
                           ": expected {\"title\",\"text\"}");
        Document doc;
        doc.doc_id = "ext:" + std::to_string(line_no);
        doc.title = row["title"].get<std::string>();
        doc.text = row["text"].get<std::string>();
        doc.sentences = {doc.text};
        doc.source = DocSource::external_corpus;
        corpus.add(std::move(doc));
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    AtomicWriter writer(path);
    std::ofstream& out = writer.stream();
    CorpusStats stats = corpus.stats();
    json header = {
        {"format_version", kCorpusFormatVersion},
        {"task_label", corpus.task_label()},
        {"document_count", stats.document_count},
        {"total_token_count", stats.total_token_count},
    };
    out << header.dump() << '\n';
    for (const auto& [id, doc] : corpus.documents()) {
        json j = {
            {"doc_id", doc.doc_id},
            {"title", doc.title},
            {"text", doc.text},
            {"sentences", doc.sentences},
            {"source", to_string(doc.source)},
        };
        out << j.dump() << '\n';
    }
    writer.commit();
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": missing corpus header line");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": bad header: " + e.what());
    }
    if (!header.contains("format_version") ||
        header["format_version"] != kCorpusFormatVersion) {
        throw ParseError(path + ": incompatible corpus format_version (expected " +
                         std::to_string(kCorpusFormatVersion) + ", got " +
                         header.value("format_version", json()).dump() + ")");
    }
    Corpus corpus(header.value("task_label", std::string()));
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        Document doc;
        doc.doc_id = j.at("doc_id").get<std::string>();
        doc.title = j.at("title").get<std::string>();
        doc.text = j.at("text").get<std::string>();
        doc.sentences = j.at("sentences").get<std::vector<std::string>>();
        doc.source = source_from_string(j.at("source").get<std::string>());
        corpus.add(std::move(doc));
    }
    std::size_t expected = header.value("document_count", corpus.size());
    if (corpus.size() != expected) {
        throw ParseError(path + ": header claims " + std::to_string(expected) +
                         " documents, file has " + std::to_string(corpus.size()));
    }
    return corpus;
}

}  // namespace duet
