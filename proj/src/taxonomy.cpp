#include "taskforge/taxonomy.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "taskforge/strings.hpp"

namespace taskforge {

namespace {

constexpr int kMaxDepth = 3;

std::string normalize_level(const std::string& raw) {
    return strings::lower(strings::trim(raw));
}

}  // namespace

TaskTypePath::TaskTypePath(std::vector<std::string> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw EmptyLevelError("path has no levels");
    if (levels_.size() > kMaxDepth)
        throw TooDeepError("path has " + std::to_string(levels_.size()) + " levels, max 3");
    for (auto& lv : levels_) {
        lv = normalize_level(lv);
        if (lv.empty()) throw EmptyLevelError("blank path level");
        if (lv.find('~') != std::string::npos)
            throw EmptyLevelError("path level contains '~': " + lv);
    }
}

TaskTypePath TaskTypePath::parse(const std::string& text) {
    std::string trimmed = strings::trim(text);
    if (trimmed.empty()) throw EmptyLevelError("empty path text");
    auto segments = strings::split(trimmed, '~');
    if (segments.size() > kMaxDepth)
        throw TooDeepError("more than 3 segments in: " + trimmed);
    return TaskTypePath(std::move(segments));
}

std::string TaskTypePath::render() const { return strings::join(levels_, "~"); }

std::optional<TaskTypePath> TaskTypePath::parent() const {
    if (levels_.size() <= 1) return std::nullopt;
    return TaskTypePath(std::vector<std::string>(levels_.begin(), levels_.end() - 1));
}

TaskTypePath TaskTypePath::child(const std::string& label) const {
    auto next = levels_;
    next.push_back(label);
    return TaskTypePath(std::move(next));
}

bool TaskTypePath::is_prefix_of(const TaskTypePath& other) const {
    if (levels_.size() > other.levels_.size()) return false;
    for (size_t i = 0; i < levels_.size(); ++i)
        if (levels_[i] != other.levels_[i]) return false;
    return true;
}

TaskTypePath parse_path(const std::string& text) { return TaskTypePath::parse(text); }

std::string PathOrigin::to_string() const {
    return kind == PathOriginKind::Seed ? "seed" : "expanded:" + run_id;
}

PathOrigin PathOrigin::from_string(const std::string& s) {
    if (s == "seed") return {PathOriginKind::Seed, ""};
    if (strings::starts_with(s, "expanded:"))
        return {PathOriginKind::Expanded, s.substr(9)};
    throw Error("bad origin string: " + s);
}

bool Taxonomy::insert(const TaskTypePath& path, const PathOrigin& origin) {
    if (auto p = path.parent()) insert(*p, origin);
    return paths_.emplace(path.render(), origin).second;
}

bool Taxonomy::contains(const TaskTypePath& path) const {
    return paths_.count(path.render()) > 0;
}

std::map<int, size_t> Taxonomy::level_counts() const {
    std::map<int, size_t> counts{{1, 0}, {2, 0}, {3, 0}};
    for (const auto& [key, _] : paths_) {
        int depth = 1 + static_cast<int>(std::count(key.begin(), key.end(), '~'));
        ++counts[depth];
    }
    return counts;
}

std::vector<std::string> Taxonomy::children(const std::optional<TaskTypePath>& prefix) const {
    std::set<std::string> out;
    size_t want_depth = prefix ? prefix->depth() + 1 : 1;
    for (const auto& [key, _] : paths_) {
        TaskTypePath p = TaskTypePath::parse(key);
        if (p.depth() != want_depth) continue;
        if (prefix && !prefix->is_prefix_of(p)) continue;
        out.insert(p.levels().back());
    }
    return {out.begin(), out.end()};
}

std::vector<TaskTypePath> Taxonomy::all_paths() const {
    std::vector<TaskTypePath> out;
    out.reserve(paths_.size());
    for (const auto& [key, _] : paths_) out.push_back(TaskTypePath::parse(key));
    return out;
}

std::vector<TaskTypePath> Taxonomy::paths_at_level(int level) const {
    std::vector<TaskTypePath> out;
    for (const auto& [key, _] : paths_) {
        TaskTypePath p = TaskTypePath::parse(key);
        if (static_cast<int>(p.depth()) == level) out.push_back(std::move(p));
    }
    return out;
}

const PathOrigin& Taxonomy::origin(const TaskTypePath& path) const {
    auto it = paths_.find(path.render());
    if (it == paths_.end()) throw Error("path not in taxonomy: " + path.render());
    return it->second;
}

std::string Taxonomy::serialize() const {
    std::string out;
    for (const auto& [key, _] : paths_) {  // std::map iterates sorted
        out += key;
        out += '\n';
    }
    return out;
}

void Taxonomy::save(const std::string& file_path) const {
    std::ofstream f(file_path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write taxonomy file: " + file_path);
    f << serialize();
}

Taxonomy Taxonomy::load(const std::string& file_path) {
    std::ifstream f(file_path, std::ios::binary);
    if (!f) throw Error("cannot read taxonomy file: " + file_path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_lines(ss.str(), {PathOriginKind::Seed, ""});
}

Taxonomy Taxonomy::from_lines(const std::string& text, const PathOrigin& origin) {
    Taxonomy tax;
    for (const auto& line : strings::split_lines(text)) {
        std::string t = strings::trim(line);
        if (t.empty() || t[0] == '#') continue;
        tax.insert(TaskTypePath::parse(t), origin);
    }
    return tax;
}

std::string template_id_name(TemplateId id) {
    switch (id) {
        case TemplateId::p1: return "p1";
        case TemplateId::p2_w: return "p2_w";
        case TemplateId::p2_wo: return "p2_w/o";
        case TemplateId::p3_w: return "p3_w";
        case TemplateId::p3_wo: return "p3_w/o";
    }
    throw Error("unknown template id");
}

void ExpansionRequest::validate() const {
    if (target_level < 1 || target_level > kMaxDepth)
        throw Error("target_level out of range");
    bool is_p1 = template_id == TemplateId::p1;
    if (is_p1 != (target_level == 1))
        throw Error("template p1 is for level 1 only");
    bool has_siblings = !known_siblings.empty();
    bool is_w = template_id == TemplateId::p2_w || template_id == TemplateId::p3_w;
    if (target_level > 1 && is_w != has_siblings)
        throw Error("\"_w\" template requires known siblings and vice versa");
    if ((target_level >= 2) != parent_path.has_value())
        throw Error("parent_path required iff target_level >= 2");
    if (parent_path && static_cast<int>(parent_path->depth()) != target_level - 1)
        throw Error("parent depth must be target_level - 1");
}

ExpansionRequest ExpansionRequest::make(int target_level,
                                        std::optional<TaskTypePath> parent,
                                        std::vector<std::string> known_siblings) {
    ExpansionRequest req;
    req.target_level = target_level;
    req.parent_path = std::move(parent);
    req.known_siblings = std::move(known_siblings);
    if (target_level == 1) {
        req.template_id = TemplateId::p1;
    } else if (target_level == 2) {
        req.template_id = req.known_siblings.empty() ? TemplateId::p2_wo : TemplateId::p2_w;
    } else {
        req.template_id = req.known_siblings.empty() ? TemplateId::p3_wo : TemplateId::p3_w;
    }
    req.validate();
    return req;
}

std::vector<TaskTypePath> parse_expansion_response(const std::string& text,
                                                   const ExpansionRequest& req,
                                                   ExpansionParseReport* report) {
    ExpansionParseReport local;
    ExpansionParseReport& rep = report ? *report : local;

    std::vector<TaskTypePath> out;
    std::set<std::string> seen;
    for (const auto& raw_line : strings::split_lines(text)) {
        std::string line = strings::trim(raw_line);
        if (line.empty()) continue;
        ++rep.total_lines;

        TaskTypePath path;
        try {
            path = TaskTypePath::parse(line);
        } catch (const Error&) {
            ++rep.skipped_malformed;
            continue;
        }

        if (req.target_level >= 2 && path.depth() == 1 && req.parent_path) {
            // Bare label from a deeper-level expansion: treat as a child of
            // the requested parent.
            path = req.parent_path->child(path.levels().front());
            ++rep.rerooted;
        }

        if (static_cast<int>(path.depth()) != req.target_level) {
            ++rep.skipped_depth;
            continue;
        }
        if (req.parent_path && !req.parent_path->is_prefix_of(path)) {
            ++rep.skipped_foreign_parent;
            continue;
        }
        if (!seen.insert(path.render()).second) {
            ++rep.duplicates;
            continue;
        }
        out.push_back(std::move(path));
    }
    return out;
}

}  // namespace taskforge
