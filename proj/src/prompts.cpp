#include "taskforge/prompts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "taskforge/strings.hpp"

namespace taskforge {

namespace {

const char* kP1 =
    "You are an expert in multimodal content understanding with extensive experience in "
    "this field. I want to construct a comprehensive task label system related to "
    "multimodal content understanding, which only includes image and text modalities. In "
    "this system, the input is an image and the corresponding text, and the output is in "
    "the form of text. The primary-level task categories that have already been "
    "established manually are: {known_categories}. Please expand and supplement with new "
    "primary-level categories that do not belong to the aforementioned categories to "
    "cover all task scenarios of multimodal content understanding. Output format: Each "
    "line corresponds to one task category, without any other characters.";

const char* kP2W =
    "You are an expert in multimodal content understanding with extensive experience in "
    "this field. I want to construct a comprehensive task label system related to "
    "multimodal content understanding, which only includes image and text modalities. In "
    "this system, the input is an image and the corresponding text, and the output is in "
    "the form of text. The primary and secondary categories are connected by '~'. The "
    "task name of the primary category that needs to be detailed currently is "
    "{parent_task}, and multiple secondary categories have already been established "
    "manually for this primary category, which are: {known_subcategories}. Please "
    "supplement other categories that do not belong to the aforementioned secondary "
    "categories to cover all task scenarios under the primary category of multi-modal "
    "content understanding. Output format: Each line corresponds to one task category, "
    "without any other characters, and different levels of task categories are connected "
    "by '~'.";

const char* kP2Wo =
    "You are an expert in multimodal content understanding with extensive experience in "
    "this field. I want to construct a comprehensive task label system related to "
    "multimodal content understanding, which only includes image and text modalities. In "
    "this system, the input is an image and the corresponding text, and the output is in "
    "the form of text. The primary and secondary categories are connected by '~'. The "
    "task name of the primary category that needs to be detailed currently is "
    "{parent_task}. Please expand the secondary task categories under this primary task "
    "category to cover all tasks included in this primary task category in the context "
    "of multimodal content understanding. Output format: Each line corresponds to one "
    "task category, without any other characters, and different levels of task "
    "categories are connected by '~'.";

const char* kP3W =
    "You are an expert in multimodal content understanding with extensive experience in "
    "this field. I want to construct a comprehensive task taxonomy for multimodal "
    "content understanding that includes only two modalities: images and text. The input "
    "to this taxonomy will be images and their corresponding text, and the output will "
    "be in text form. The primary, secondary, and tertiary categories in this taxonomy "
    "are connected by '~'. Currently, the task name for the secondary category that "
    "needs to be detailed is {parent_task}, and several tertiary categories have already "
    "been established manually for this secondary category, which are: "
    "{known_subcategories}. Please supplement additional categories that do not belong "
    "to the aforementioned tertiary categories to cover all tasks under the secondary "
    "category in the context of multimodal content understanding. Output format: Each "
    "line should correspond to one task category, without any other characters. "
    "Different levels of task categories should be connected by '~'.";

const char* kP3Wo =
    "You are an expert in multimodal content understanding with extensive experience in "
    "this field. I want to construct a comprehensive task taxonomy for multimodal "
    "content understanding that includes only two modalities: images and text. The input "
    "to this taxonomy will be images and their corresponding text, and the output will "
    "be in text form. The primary, secondary, and tertiary categories in this taxonomy "
    "are connected by '~'. Currently, the task name for the secondary category that "
    "needs to be detailed is {parent_task}. Please expand the tertiary task categories "
    "under this secondary task category to cover all tasks included in this secondary "
    "task category in the context of multimodal content understanding. Output format: "
    "Each line should correspond to one task category, without any other characters. "
    "Different levels of task categories should be connected by '~'.";

const char* kPFilter =
    "You are a multimodal content understanding expert. Given an image and multiple task "
    "labels related to multimodal content understanding, with task labels as: "
    "{init_task_type}. I would like to generate some question-answer pairs related to "
    "these task labels based on the image content. However, some task labels might not "
    "be relevant to the image content and thus cannot generate relevant questions. "
    "Please fully understand the image content and the meanings of the task labels, and "
    "select all the task labels that are appropriate for this task. Ensure the task "
    "labels are the same as the original. The output format should be: [task labels], "
    "without any other characters. If there are no matches, output [None].";

const char* kPQa =
    "You are a multi-modal content understanding expert, very skilled in handling visual "
    "question answering tasks. Your task is: Given an image and task labels that are "
    "highly relevant to the content of this image, the task labels are: {task_labels}. "
    "Please fully understand the content of the image and, for each task label, propose "
    "a question and answer pair related to the image content. Please try to propose some "
    "complex questions and provide answers to these questions. Please strictly follow "
    "the JSON format for the output. Each line should represent a question and answer "
    "pair corresponding to a task label in the following JSON format: {\"task_type\": "
    "\"question\": \"answer\":}.";

const char* kPFilterReferee =
    "You are an expert in multimodal content understanding, particularly skilled in "
    "handling visual question answering tasks. Your task is: Given an image and a "
    "multimodal content understanding-related task label, along with a question related "
    "to that task label, the task label is \"{task_type}\", the question is "
    "\"{question}\", please fully understand the image content, the task label, and the "
    "question, and determine whether the task label and question are suitable for the "
    "image. If suitable, score it as 1; otherwise, score it as 0. Please only output "
    "your final score without any other characters.";

const char* kPCot =
    "You are a multimodal content understanding expert and you are very good at solving "
    "visual question answering tasks, I will give you an image and a question related to "
    "this image, the question is: {question}, your task is to fully understand the "
    "content of the image along with the question, please fully think about how the "
    "question should be answered, please give a step by step thought process of how you "
    "solved the question and finally output the answer to the question.";

std::string template_key(TemplateId id) {
    switch (id) {
        case TemplateId::p1: return "p1";
        case TemplateId::p2_w: return "p2_w";
        case TemplateId::p2_wo: return "p2_wo";
        case TemplateId::p3_w: return "p3_w";
        case TemplateId::p3_wo: return "p3_wo";
    }
    throw Error("unknown template id");
}

std::string join_paths(const std::vector<TaskTypePath>& paths) {
    std::vector<std::string> rendered;
    rendered.reserve(paths.size());
    for (const auto& p : paths) rendered.push_back(p.render());
    return strings::join(rendered, ", ");
}

}  // namespace

PromptLibrary::PromptLibrary() {
    templates_ = {
        {"p1", kP1},
        {"p2_w", kP2W},
        {"p2_wo", kP2Wo},
        {"p3_w", kP3W},
        {"p3_wo", kP3Wo},
        {"p_filter", kPFilter},
        {"p_qa", kPQa},
        {"p_filter_referee", kPFilterReferee},
        {"p_cot", kPCot},
    };
}

PromptLibrary PromptLibrary::with_overrides(const std::string& dir) {
    PromptLibrary lib;
    for (auto& [key, text] : lib.templates_) {
        std::filesystem::path p = std::filesystem::path(dir) / (key + ".txt");
        if (!std::filesystem::exists(p)) continue;
        std::ifstream f(p, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        std::string content = ss.str();
        while (!content.empty() && (content.back() == '\n' || content.back() == '\r'))
            content.pop_back();
        text = content;
    }
    return lib;
}

const std::string& PromptLibrary::raw(const std::string& key) const {
    auto it = templates_.find(key);
    if (it == templates_.end()) throw Error("unknown prompt template: " + key);
    return it->second;
}

std::string PromptLibrary::render(const std::string& key, const SlotMap& slots) const {
    const std::string& tmpl = raw(key);
    std::string out;
    out.reserve(tmpl.size());
    size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] != '{') {
            out += tmpl[i++];
            continue;
        }
        size_t close = tmpl.find('}', i);
        if (close == std::string::npos) {
            out += tmpl.substr(i);
            break;
        }
        std::string name = tmpl.substr(i + 1, close - i - 1);
        // Literal braces in template text (e.g. the JSON example in p_qa)
        // are not slot names.
        bool is_slot = !name.empty() &&
                       name.find_first_not_of(
                           "abcdefghijklmnopqrstuvwxyz0123456789_") == std::string::npos;
        if (!is_slot) {
            out += tmpl.substr(i, close - i + 1);
            i = close + 1;
            continue;
        }
        auto it = slots.find(name);
        if (it == slots.end())
            throw MissingSlotValueError("template " + key + " needs slot: " + name);
        out += it->second;
        i = close + 1;
    }
    return out;
}

std::string PromptLibrary::build_expansion_prompt(const ExpansionRequest& req) const {
    req.validate();
    SlotMap slots;
    if (req.target_level == 1) {
        slots["known_categories"] = strings::join(req.known_siblings, ", ");
    } else {
        slots["parent_task"] = req.parent_path->render();
        if (!req.known_siblings.empty())
            slots["known_subcategories"] = strings::join(req.known_siblings, ", ");
    }
    return render(template_key(req.template_id), slots);
}

std::string PromptLibrary::build_filter_prompt(const std::vector<TaskTypePath>& candidates) const {
    if (candidates.empty()) throw Error("filter prompt needs at least one candidate");
    return render("p_filter", {{"init_task_type", join_paths(candidates)}});
}

std::string PromptLibrary::build_qa_prompt(const std::vector<TaskTypePath>& filtered_tasks) const {
    if (filtered_tasks.empty()) throw Error("qa prompt needs at least one task");
    return render("p_qa", {{"task_labels", join_paths(filtered_tasks)}});
}

std::string PromptLibrary::build_referee_prompt(const TaskTypePath& task,
                                                const std::string& question) const {
    if (question.empty()) throw Error("referee prompt needs a question");
    return render("p_filter_referee",
                  {{"task_type", task.render()}, {"question", question}});
}

std::string PromptLibrary::build_cot_prompt(const std::string& question) const {
    if (strings::trim(question).empty()) throw Error("cot prompt needs a question");
    return render("p_cot", {{"question", question}});
}

}  // namespace taskforge
