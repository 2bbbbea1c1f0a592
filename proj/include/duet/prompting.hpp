#pragma once

#include <map>
#include <string>
#include <vector>

#include "duet/backends.hpp"
#include "duet/corpus.hpp"

namespace duet {

struct CandidateAnswer;  // referee.hpp

/// A named prompt with `{slot}` placeholders in user_template. Rendering a
/// slot that no caller supplied is an error; `{{`/`}}` escape literal braces.
struct PromptTemplate {
    std::string name;
    std::string system_text;
    std::string user_template;

    std::string render(const std::map<std::string, std::string>& slots) const;
    /// Slot names referenced by user_template, in order of first appearance.
    std::vector<std::string> referenced_slots() const;
};

struct TemplateSet {
    PromptTemplate internal_answerer;
    PromptTemplate external_answerer;
    PromptTemplate judge;
};

/// Built-in templates; file overrides live under a templates/ directory as
/// internal.txt / external.txt / judge.txt (first line "SYSTEM: ..." optional,
/// rest is the user template).
TemplateSet default_templates();
PromptTemplate load_template_file(const std::string& path, const std::string& name);
TemplateSet load_templates_dir(const std::string& dir);

struct PromptBudget {
    std::size_t max_user_chars = 12000;
};

GenerationRequest build_internal_prompt(const std::string& question,
                                        const PromptTemplate& tmpl);

/// Documents are rendered in the given (retrieval-rank) order as
/// "[(i)] <title>\n<text>" blocks before the question. When the rendered
/// prompt exceeds the character budget, the lowest-ranked blocks are
/// truncated or dropped last-block-first; the question is never touched.
GenerationRequest build_external_prompt(const std::string& question,
                                        const std::vector<Document>& docs,
                                        const PromptTemplate& tmpl,
                                        const PromptBudget& budget = {});

GenerationRequest build_judge_prompt(const std::string& question,
                                     const CandidateAnswer& answer_internal,
                                     const CandidateAnswer& answer_external,
                                     const PromptTemplate& tmpl);

}  // namespace duet
