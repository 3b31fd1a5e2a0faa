#include "taskforge/matching.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "taskforge/strings.hpp"

namespace taskforge {

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dimension() != v.dimension())
        throw DimensionMismatchError("cosine on dims " + std::to_string(u.dimension()) +
                                     " vs " + std::to_string(v.dimension()));
    double dot = 0, nu = 0, nv = 0;
    for (size_t i = 0; i < u.values.size(); ++i) {
        dot += u.values[i] * v.values[i];
        nu += u.values[i] * u.values[i];
        nv += v.values[i] * v.values[i];
    }
    if (nu == 0.0 || nv == 0.0) throw ZeroNormError("cosine with zero-norm vector");
    double s = dot / (std::sqrt(nu) * std::sqrt(nv));
    return std::clamp(s, -1.0, 1.0);
}

std::vector<CandidateMatch> top_k_tasks(const std::string& image_id,
                                        const EmbeddingVector& image_embedding,
                                        const std::vector<ScoredTask>& tasks,
                                        const MatchConfig& cfg) {
    if (cfg.k < 1) throw Error("k must be >= 1");
    std::vector<CandidateMatch> scored;
    scored.reserve(tasks.size());
    for (const auto& t : tasks) {
        double s = cosine(image_embedding, t.embedding);
        if (s < cfg.min_score) continue;
        scored.push_back({image_id, t.path, s, 0});
    }
    auto cmp = [](const CandidateMatch& a, const CandidateMatch& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.task_path < b.task_path;
    };
    size_t keep = std::min<size_t>(cfg.k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(), cmp);
    scored.resize(keep);
    for (size_t i = 0; i < scored.size(); ++i) scored[i].rank = static_cast<int>(i) + 1;
    return scored;
}

std::vector<TaskTypePath> parse_filter_response(const std::string& text,
                                                const std::vector<TaskTypePath>& candidates,
                                                FilterParseReport* report) {
    FilterParseReport local;
    FilterParseReport& rep = report ? *report : local;

    size_t open = text.find('[');
    size_t close = text.find(']', open == std::string::npos ? 0 : open);
    if (open == std::string::npos || close == std::string::npos)
        throw UnparseableError("no bracketed list in filter reply");
    std::string inner = text.substr(open + 1, close - open - 1);

    std::string inner_trimmed = strings::lower(strings::trim(inner));
    if (inner_trimmed.empty() || inner_trimmed == "none") return {};

    std::set<std::string> candidate_set;
    for (const auto& c : candidates) candidate_set.insert(c.render());

    std::vector<TaskTypePath> kept;
    std::set<std::string> seen;
    for (const auto& part : strings::split(inner, ',')) {
        std::string label = strings::trim(part);
        if (label.empty()) continue;
        TaskTypePath path;
        try {
            path = TaskTypePath::parse(label);
        } catch (const Error&) {
            ++rep.dropped_count;
            continue;
        }
        std::string key = path.render();
        if (!candidate_set.count(key)) {
            ++rep.dropped_count;
            continue;
        }
        if (seen.insert(key).second) kept.push_back(std::move(path));
    }
    return kept;
}

}  // namespace taskforge
