#include "duet/prompting.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "duet/referee.hpp"

namespace duet {

namespace {

std::string escape_single_line(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back(c == '\n' || c == '\r' ? ' ' : c);
    }
    return out;
}

}  // namespace

std::string PromptTemplate::render(const std::map<std::string, std::string>& slots) const {
    std::string out;
    out.reserve(user_template.size());
    for (std::size_t i = 0; i < user_template.size(); ++i) {
        char c = user_template[i];
        if (c == '{') {
            if (i + 1 < user_template.size() && user_template[i + 1] == '{') {
                out.push_back('{');
                ++i;
                continue;
            }
            auto close = user_template.find('}', i + 1);
            if (close == std::string::npos)
                throw ConfigError("template " + name + ": unterminated slot");
            std::string slot = user_template.substr(i + 1, close - i - 1);
            auto it = slots.find(slot);
            if (it == slots.end())
                throw ConfigError("template " + name + ": unknown slot {" + slot + "}");
            out += it->second;
            i = close;
        } else if (c == '}' && i + 1 < user_template.size() && user_template[i + 1] == '}') {
            out.push_back('}');
            ++i;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::vector<std::string> PromptTemplate::referenced_slots() const {
    std::vector<std::string> slots;
    for (std::size_t i = 0; i < user_template.size(); ++i) {
        if (user_template[i] != '{') continue;
        if (i + 1 < user_template.size() && user_template[i + 1] == '{') {
            ++i;
            continue;
        }
        auto close = user_template.find('}', i + 1);
        if (close == std::string::npos) break;
        std::string slot = user_template.substr(i + 1, close - i - 1);
        if (std::find(slots.begin(), slots.end(), slot) == slots.end()) slots.push_back(slot);
        i = close;
    }
    return slots;
}

TemplateSet default_templates() {
    TemplateSet t;
    t.internal_answerer = {
        "internal",
        "You are a question answering assistant. Answer from your own knowledge "
        "with a short factoid answer and no explanation.",
        "Question: {question}\nAnswer:"};
    t.external_answerer = {
        "external",
        "You are a question answering assistant. Answer using only the provided "
        "documents with a short factoid answer and no explanation.",
        "Documents:\n{documents}\nQuestion: {question}\nAnswer:"};
    t.judge = {
        "judge",
        "You are a referee deciding the final answer to a question given two "
        "candidate answers.",
        "Question: {question}\n"
        "Answer A (model memory): {answer_internal}\n"
        "Answer B (document-supported): {answer_external}\n"
        "When both seem plausible, prefer the document-supported answer. "
        "Output exactly one final answer string and nothing else.\n"
        "Final answer:"};
    return t;
}

PromptTemplate load_template_file(const std::string& path, const std::string& name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open template " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string body = buf.str();

    PromptTemplate tmpl;
    tmpl.name = name;
    constexpr const char* kSystemPrefix = "SYSTEM: ";
    if (body.rfind(kSystemPrefix, 0) == 0) {
        auto eol = body.find('\n');
        tmpl.system_text = body.substr(8, eol == std::string::npos ? std::string::npos : eol - 8);
        tmpl.user_template = eol == std::string::npos ? "" : body.substr(eol + 1);
    } else {
        tmpl.user_template = body;
    }
    // Trailing newline from the editor is not part of the prompt.
    while (!tmpl.user_template.empty() && tmpl.user_template.back() == '\n')
        tmpl.user_template.pop_back();
    return tmpl;
}

TemplateSet load_templates_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    TemplateSet t = default_templates();
    if (fs::exists(fs::path(dir) / "internal.txt"))
        t.internal_answerer = load_template_file((fs::path(dir) / "internal.txt").string(), "internal");
    if (fs::exists(fs::path(dir) / "external.txt"))
        t.external_answerer = load_template_file((fs::path(dir) / "external.txt").string(), "external");
    if (fs::exists(fs::path(dir) / "judge.txt"))
        t.judge = load_template_file((fs::path(dir) / "judge.txt").string(), "judge");
    return t;
}

GenerationRequest build_internal_prompt(const std::string& question,
                                        const PromptTemplate& tmpl) {
    if (question.empty()) throw ConfigError("internal prompt requires a non-empty question");
    for (const auto& slot : tmpl.referenced_slots()) {
        if (slot == "documents")
            throw ConfigError("internal template must not reference {documents}");
    }
    GenerationRequest req;
    req.system_prompt = tmpl.system_text;
    req.user_prompt = tmpl.render({{"question", question}});
    return req;
}

GenerationRequest build_external_prompt(const std::string& question,
                                        const std::vector<Document>& docs,
                                        const PromptTemplate& tmpl,
                                        const PromptBudget& budget) {
    if (question.empty()) throw ConfigError("external prompt requires a non-empty question");
    if (docs.empty())
        throw ConfigError("external prompt requires at least one document; "
                          "fall back to the internal arm explicitly");

    auto render_blocks = [&](const std::vector<std::string>& blocks) {
        std::string joined;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (i > 0) joined += '\n';
            joined += blocks[i];
        }
        return tmpl.render({{"documents", joined}, {"question", question}});
    };

    std::vector<std::string> blocks;
    blocks.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        blocks.push_back("[(" + std::to_string(i + 1) + ")] " + docs[i].title + "\n" +
                         docs[i].text);
    }

    // Shrink from the lowest-ranked block until the budget holds. The final
    // truncation step trims the last surviving block rather than dropping it.
    std::string rendered = render_blocks(blocks);
    while (rendered.size() > budget.max_user_chars && !blocks.empty()) {
        std::size_t excess = rendered.size() - budget.max_user_chars;
        std::string& last = blocks.back();
        if (last.size() > excess) {
            last.resize(last.size() - excess);
        } else {
            blocks.pop_back();
        }
        rendered = render_blocks(blocks);
    }

    GenerationRequest req;
    req.system_prompt = tmpl.system_text;
    req.user_prompt = rendered;
    return req;
}

GenerationRequest build_judge_prompt(const std::string& question,
                                     const CandidateAnswer& answer_internal,
                                     const CandidateAnswer& answer_external,
                                     const PromptTemplate& tmpl) {
    if (question.empty()) throw ConfigError("judge prompt requires a non-empty question");
    if (answer_internal.text.empty() || answer_external.text.empty())
        throw ConfigError("judge prompt requires two non-empty candidate answers");

    GenerationRequest req;
    req.system_prompt = tmpl.system_text;
    req.user_prompt = tmpl.render({
        {"question", question},
        {"answer_internal", escape_single_line(answer_internal.text)},
        {"answer_external", escape_single_line(answer_external.text)},
    });
    return req;
}

}  // namespace duet
