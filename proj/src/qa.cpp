#include "taskforge/qa.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "taskforge/strings.hpp"

namespace taskforge {

using json = nlohmann::json;

namespace {

bool extract_fields(const json& obj, std::string& task, std::string& question,
                    std::string& answer) {
    if (!obj.is_object() || obj.size() != 3) return false;
    if (!obj.contains("task_type") || !obj.contains("question") || !obj.contains("answer"))
        return false;
    if (!obj["task_type"].is_string() || !obj["question"].is_string() ||
        !obj["answer"].is_string())
        return false;
    task = obj["task_type"].get<std::string>();
    question = obj["question"].get<std::string>();
    answer = obj["answer"].get<std::string>();
    return true;
}

// Single quotes to double quotes plus trailing-comma removal. Deliberately
// naive: it only runs after the strict parse has failed.
std::string leniency_rewrite(const std::string& line) {
    std::string out;
    out.reserve(line.size());
    for (char c : line) out += (c == '\'') ? '"' : c;
    std::string squeezed;
    squeezed.reserve(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
        if (out[i] == ',') {
            size_t j = i + 1;
            while (j < out.size() && std::isspace(static_cast<unsigned char>(out[j]))) ++j;
            if (j < out.size() && (out[j] == '}' || out[j] == ']')) continue;
        }
        squeezed += out[i];
    }
    return squeezed;
}

}  // namespace

std::vector<QACandidate> parse_qa_response(const std::string& text,
                                           const std::string& image_id,
                                           const std::vector<TaskTypePath>& filtered_tasks,
                                           QaParseReport* report) {
    QaParseReport local;
    QaParseReport& rep = report ? *report : local;

    std::set<std::string> allowed;
    for (const auto& t : filtered_tasks) allowed.insert(t.render());

    std::vector<QACandidate> out;
    std::set<std::string> taken;
    for (const auto& raw : strings::split_lines(text)) {
        std::string line = strings::trim(raw);
        if (line.empty()) continue;
        if (strings::starts_with(line, "```")) continue;  // fence marker
        ++rep.total_lines;

        std::string task_text, question, answer;
        std::string parser = "strict";
        bool ok = false;
        try {
            ok = extract_fields(json::parse(line), task_text, question, answer);
        } catch (const json::exception&) {
        }
        if (!ok) {
            try {
                ok = extract_fields(json::parse(leniency_rewrite(line)), task_text, question,
                                    answer);
                if (ok) {
                    parser = "lenient";
                    ++rep.lenient_lines;
                }
            } catch (const json::exception&) {
            }
        }
        if (!ok) {
            ++rep.malformed;
            continue;
        }

        TaskTypePath task;
        try {
            task = TaskTypePath::parse(task_text);
        } catch (const Error&) {
            ++rep.malformed;
            continue;
        }
        std::string key = task.render();
        if (!allowed.count(key)) {
            ++rep.foreign_task;
            continue;
        }
        if (taken.count(key)) {
            ++rep.surplus;  // one pair per task, first wins
            continue;
        }
        question = strings::trim(question);
        answer = strings::trim(answer);
        if (question.empty() || answer.empty() || question == answer) {
            ++rep.malformed;
            continue;
        }
        taken.insert(key);
        out.push_back({image_id, task, question, answer, "", false, parser});
    }
    if (out.empty()) throw UnparseableError("no valid qa lines in reply");
    return out;
}

QACandidate with_cot_answer(const QACandidate& original, const std::string& cot_answer) {
    QACandidate out = original;
    out.answer = cot_answer;
    out.cot = true;
    return out;
}

}  // namespace taskforge
