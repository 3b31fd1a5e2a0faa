#pragma once

#include <map>
#include <string>
#include <vector>

#include "taskforge/errors.hpp"
#include "taskforge/taxonomy.hpp"

namespace taskforge {

using SlotMap = std::map<std::string, std::string>;

// Plain-text prompt templates with named {slot} placeholders. Built-in
// defaults can be overridden by files named <key>.txt in a template
// directory (keys: p1, p2_w, p2_wo, p3_w, p3_wo, p_filter, p_qa,
// p_filter_referee, p_cot).
class PromptLibrary {
public:
    PromptLibrary();  // built-in defaults

    static PromptLibrary with_overrides(const std::string& dir);

    const std::string& raw(const std::string& key) const;

    // Substitutes every {slot} occurrence; throws MissingSlotValueError if
    // the template references a slot absent from the map. Text outside slots
    // is passed through byte-for-byte.
    std::string render(const std::string& key, const SlotMap& slots) const;

    std::string build_expansion_prompt(const ExpansionRequest& req) const;
    std::string build_filter_prompt(const std::vector<TaskTypePath>& candidates) const;
    std::string build_qa_prompt(const std::vector<TaskTypePath>& filtered_tasks) const;
    std::string build_referee_prompt(const TaskTypePath& task, const std::string& question) const;
    std::string build_cot_prompt(const std::string& question) const;

private:
    std::map<std::string, std::string> templates_;
};

}  // namespace taskforge
