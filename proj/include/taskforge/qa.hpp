#pragma once

#include <string>
#include <vector>

#include "taskforge/taxonomy.hpp"

namespace taskforge {

struct QACandidate {
    std::string image_id;
    TaskTypePath task_path;
    std::string question;
    std::string answer;
    std::string generator_backend;
    bool cot = false;
    std::string parser;  // "strict" | "lenient"

    bool operator==(const QACandidate&) const = default;
};

struct QaParseReport {
    size_t total_lines = 0;
    size_t foreign_task = 0;    // task_type not in the filtered list
    size_t malformed = 0;       // not a parseable 3-key JSON object
    size_t surplus = 0;         // second-or-later pair for a task
    size_t lenient_lines = 0;   // parsed only by the lenient fallback
};

// One QACandidate per filtered task at most; lines inside code fences are
// unwrapped first; a strict JSON parse is attempted before the lenient
// fallback (single quotes, trailing commas). Throws UnparseableError when
// zero valid lines are found.
std::vector<QACandidate> parse_qa_response(const std::string& text,
                                           const std::string& image_id,
                                           const std::vector<TaskTypePath>& filtered_tasks,
                                           QaParseReport* report = nullptr);

// Rewrites a candidate's answer with a chain-of-thought reply, preserving
// (image_id, task_path, question).
QACandidate with_cot_answer(const QACandidate& original, const std::string& cot_answer);

}  // namespace taskforge
