#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "duet/prompting.hpp"
#include "duet/referee.hpp"

using namespace duet;

namespace {

Document make_doc(const std::string& id, const std::string& title, const std::string& text) {
    Document d;
    d.doc_id = id;
    d.title = title;
    d.text = text;
    d.sentences = {text};
    return d;
}

CandidateAnswer internal_answer(const std::string& text) {
    return {text, Arm::internal, std::nullopt};
}

CandidateAnswer external_answer(const std::string& text) {
    return {text, Arm::external, std::nullopt};
}

}  // namespace

TEST_CASE("template rendering fills slots and escapes braces") {
    PromptTemplate t{"t", "", "Q: {question} {{literal}}"};
    CHECK(t.render({{"question", "why?"}}) == "Q: why? {literal}");
    CHECK_THROWS_AS(t.render({}), ConfigError);  // unknown slot {question}
    CHECK(t.referenced_slots() == std::vector<std::string>{"question"});
}

TEST_CASE("internal prompt uses the default template") {
    auto req = build_internal_prompt("Who wrote Hamlet?", default_templates().internal_answerer);
    CHECK(req.user_prompt == "Question: Who wrote Hamlet?\nAnswer:");
    CHECK(req.user_prompt.find("document") == std::string::npos);
}

TEST_CASE("internal prompt rejects empty questions and document templates") {
    auto templates = default_templates();
    CHECK_THROWS_AS(build_internal_prompt("", templates.internal_answerer), ConfigError);
    PromptTemplate bad{"bad", "", "{documents}\n{question}"};
    CHECK_THROWS_AS(build_internal_prompt("q?", bad), ConfigError);
}

TEST_CASE("custom template text is rendered verbatim") {
    PromptTemplate custom{"c", "sys", "Be terse.\nQ: {question}\nA:"};
    auto req = build_internal_prompt("Who?", custom);
    CHECK(req.user_prompt == "Be terse.\nQ: Who?\nA:");
    CHECK(req.system_prompt == "sys");
}

TEST_CASE("external prompt renders documents in rank order before the question") {
    auto templates = default_templates();
    std::vector<Document> docs = {make_doc("d1", "First", "first text"),
                                  make_doc("d2", "Second", "second text")};
    auto req = build_external_prompt("the question?", docs, templates.external_answerer);
    auto p1 = req.user_prompt.find("[(1)] First\nfirst text");
    auto p2 = req.user_prompt.find("[(2)] Second\nsecond text");
    auto pq = req.user_prompt.find("the question?");
    REQUIRE(p1 != std::string::npos);
    REQUIRE(p2 != std::string::npos);
    REQUIRE(pq != std::string::npos);
    CHECK(p1 < p2);
    CHECK(p2 < pq);
}

TEST_CASE("external prompt requires documents") {
    CHECK_THROWS_AS(
        build_external_prompt("q?", {}, default_templates().external_answerer),
        ConfigError);
}

TEST_CASE("budget truncation drops lowest-ranked blocks, never the question") {
    auto templates = default_templates();
    std::vector<Document> docs = {make_doc("d1", "Keep", std::string(100, 'k')),
                                  make_doc("d2", "Cut", std::string(4000, 'c'))};
    PromptBudget budget{300};
    auto req = build_external_prompt("important question?", docs, templates.external_answerer,
                                     budget);
    CHECK(req.user_prompt.size() <= 300);
    CHECK(req.user_prompt.find("important question?") != std::string::npos);
    CHECK(req.user_prompt.find("[(1)] Keep") != std::string::npos);
}

TEST_CASE("surviving blocks keep their relative order under truncation") {
    auto templates = default_templates();
    std::vector<Document> docs;
    for (int i = 0; i < 5; ++i)
        docs.push_back(make_doc("d" + std::to_string(i), "T" + std::to_string(i),
                                std::string(120, 'a' + i)));
    PromptBudget budget{420};
    auto req =
        build_external_prompt("q?", docs, templates.external_answerer, budget);
    std::size_t prev = 0;
    for (int i = 0; i < 5; ++i) {
        auto pos = req.user_prompt.find("[(" + std::to_string(i + 1) + ")] T");
        if (pos == std::string::npos) continue;
        CHECK(pos >= prev);
        prev = pos;
    }
}

TEST_CASE("judge prompt labels candidates and states the preference") {
    auto req = build_judge_prompt("capital of France?", internal_answer("Lyon"),
                                  external_answer("Paris"), default_templates().judge);
    CHECK(req.user_prompt.find("Answer A (model memory): Lyon") != std::string::npos);
    CHECK(req.user_prompt.find("Answer B (document-supported): Paris") != std::string::npos);
    CHECK(req.user_prompt.find("prefer the document-supported answer") != std::string::npos);
}

TEST_CASE("judge prompt rejects empty candidates") {
    auto judge = default_templates().judge;
    CHECK_THROWS_AS(
        build_judge_prompt("q?", internal_answer(""), external_answer("x"), judge),
        ConfigError);
    CHECK_THROWS_AS(
        build_judge_prompt("q?", internal_answer("x"), external_answer(""), judge),
        ConfigError);
}

TEST_CASE("identical candidates still render a well-formed prompt") {
    auto req = build_judge_prompt("q?", internal_answer("same"), external_answer("same"),
                                  default_templates().judge);
    CHECK(req.user_prompt.find("Answer A (model memory): same") != std::string::npos);
    CHECK(req.user_prompt.find("Answer B (document-supported): same") != std::string::npos);
}

TEST_CASE("candidate newlines are escaped into single lines") {
    auto req = build_judge_prompt("q?", internal_answer("two\nlines"),
                                  external_answer("a\r\nb"), default_templates().judge);
    CHECK(req.user_prompt.find("two lines") != std::string::npos);
    CHECK(req.user_prompt.find("a  b") != std::string::npos);
}

TEST_CASE("rendering is pure") {
    auto templates = default_templates();
    auto r1 = build_internal_prompt("q?", templates.internal_answerer);
    auto r2 = build_internal_prompt("q?", templates.internal_answerer);
    CHECK(r1 == r2);
}

TEST_CASE("template files load with optional SYSTEM line") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "duet_templates";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "internal.txt");
        out << "SYSTEM: be short\nQ {question}\nA:\n";
    }
    auto t = load_template_file((dir / "internal.txt").string(), "internal");
    CHECK(t.system_text == "be short");
    CHECK(t.user_template == "Q {question}\nA:");

    auto set = load_templates_dir(dir.string());
    CHECK(set.internal_answerer.system_text == "be short");
    // Missing files fall back to built-ins.
    CHECK(set.judge.user_template == default_templates().judge.user_template);
}
