#pragma once

#include <string>
#include <vector>

#include "taskforge/gateway.hpp"
#include "taskforge/taxonomy.hpp"

namespace taskforge {

struct CandidateMatch {
    std::string image_id;
    TaskTypePath task_path;
    double score = 0.0;  // in [-1, 1]
    int rank = 0;        // 1..k

    bool operator==(const CandidateMatch&) const = default;
};

struct MatchConfig {
    int k = 10;
    // Optional pre-filter floor on similarity; off by default.
    double min_score = -2.0;
};

// dot(u,v) / (|u||v|), clamped to [-1,1] against rounding.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

struct ScoredTask {
    TaskTypePath path;
    EmbeddingVector embedding;
};

// Exactly min(k, |tasks|) matches, sorted by (score desc, path asc).
std::vector<CandidateMatch> top_k_tasks(const std::string& image_id,
                                        const EmbeddingVector& image_embedding,
                                        const std::vector<ScoredTask>& tasks,
                                        const MatchConfig& cfg);

struct FilterParseReport {
    size_t dropped_count = 0;  // labels that matched no candidate
};

// Parses the bracketed label list from a filter reply. "[None]" yields an
// empty list; kept labels must normalize to a member of the candidate set.
// Throws UnparseableError if no bracketed list is present.
std::vector<TaskTypePath> parse_filter_response(const std::string& text,
                                                const std::vector<TaskTypePath>& candidates,
                                                FilterParseReport* report = nullptr);

}  // namespace taskforge
