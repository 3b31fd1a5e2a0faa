#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taskforge/errors.hpp"

namespace taskforge {

// A 1-3 level hierarchical task label. Levels are lowercase, trimmed, and
// never contain the '~' separator.
class TaskTypePath {
public:
    TaskTypePath() = default;
    explicit TaskTypePath(std::vector<std::string> levels);

    static TaskTypePath parse(const std::string& text);

    const std::vector<std::string>& levels() const { return levels_; }
    size_t depth() const { return levels_.size(); }
    std::string render() const;

    // Parent path, or nullopt for a level-1 path.
    std::optional<TaskTypePath> parent() const;
    TaskTypePath child(const std::string& label) const;
    bool is_prefix_of(const TaskTypePath& other) const;

    auto operator<=>(const TaskTypePath&) const = default;

private:
    std::vector<std::string> levels_;
};

TaskTypePath parse_path(const std::string& text);

enum class PathOriginKind { Seed, Expanded };

struct PathOrigin {
    PathOriginKind kind = PathOriginKind::Seed;
    std::string run_id;  // set for expanded paths

    std::string to_string() const;
    static PathOrigin from_string(const std::string& s);
};

// The hierarchical task-type tree. Set semantics: duplicate insertion is a
// no-op; every stored non-root path's parent prefix exists.
class Taxonomy {
public:
    // Returns true iff the path was new. Missing ancestors are created with
    // the same origin.
    bool insert(const TaskTypePath& path, const PathOrigin& origin);

    bool contains(const TaskTypePath& path) const;
    size_t size() const { return paths_.size(); }

    std::map<int, size_t> level_counts() const;

    // Direct child labels of the given prefix (level-1 roots for nullopt),
    // in sorted order.
    std::vector<std::string> children(const std::optional<TaskTypePath>& prefix) const;

    // All paths in sorted order.
    std::vector<TaskTypePath> all_paths() const;
    std::vector<TaskTypePath> paths_at_level(int level) const;

    const PathOrigin& origin(const TaskTypePath& path) const;

    // One '~'-joined path per line, sorted lexicographically.
    std::string serialize() const;
    void save(const std::string& file_path) const;
    static Taxonomy load(const std::string& file_path);
    static Taxonomy from_lines(const std::string& text, const PathOrigin& origin);

private:
    std::map<std::string, PathOrigin> paths_;  // keyed by rendered path
};

enum class TemplateId { p1, p2_w, p2_wo, p3_w, p3_wo };

std::string template_id_name(TemplateId id);

struct ExpansionRequest {
    int target_level = 1;  // 1..3
    std::optional<TaskTypePath> parent_path;
    std::vector<std::string> known_siblings;
    TemplateId template_id = TemplateId::p1;

    // Checks the cross-field invariants (template matches level, "_w"
    // variants iff siblings present, parent present iff level >= 2).
    void validate() const;

    static ExpansionRequest make(int target_level,
                                 std::optional<TaskTypePath> parent,
                                 std::vector<std::string> known_siblings);
};

struct ExpansionParseReport {
    size_t total_lines = 0;
    size_t skipped_depth = 0;
    size_t skipped_malformed = 0;
    size_t skipped_foreign_parent = 0;
    size_t rerooted = 0;
    size_t duplicates = 0;

    size_t skipped() const {
        return skipped_depth + skipped_malformed + skipped_foreign_parent;
    }
};

// One candidate per non-blank line; wrong-depth and foreign-parent lines are
// dropped (bare labels are re-rooted under the requested parent); duplicates
// removed preserving first occurrence.
std::vector<TaskTypePath> parse_expansion_response(const std::string& text,
                                                   const ExpansionRequest& req,
                                                   ExpansionParseReport* report = nullptr);

}  // namespace taskforge
