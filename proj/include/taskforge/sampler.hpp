#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "taskforge/referee.hpp"

namespace taskforge {

struct BalanceConfig {
    int min_per_task = 1;
    int max_per_task = 55;
    uint64_t rng_seed = 0;
    // The default cap ceiling of 55 can only be raised with this flag.
    bool allow_cap_override = false;
    // Alternative reading of the balancing rule: draw a per-task cap
    // uniformly in [min_per_task, max_per_task] instead of a fixed cap.
    bool random_cap_per_task = false;

    void validate() const;
};

// Per task type with n accepted samples, keeps min(n, max_per_task) chosen by
// seeded sampling without replacement. Selections for a smaller cap are a
// prefix of those for a larger cap at the same seed (per-task permutation,
// then truncation).
std::vector<QACandidate> balance(const std::vector<ScreeningResult>& accepted,
                                 const BalanceConfig& cfg);

struct Bucket {
    size_t lo = 0;
    size_t hi = 0;  // inclusive
};

struct DistributionStats {
    std::vector<Bucket> bucket_edges;
    std::vector<size_t> bucket_counts;  // task types per bucket
    size_t total_tasks = 0;             // task types with >= 1 sample
    size_t total_samples = 0;

    std::vector<double> proportions() const;
};

std::vector<Bucket> default_buckets();

DistributionStats distribution(const std::map<std::string, size_t>& per_task_counts,
                               std::vector<Bucket> edges = default_buckets());

// Minimal sample handle for subset construction.
struct SampleRef {
    std::string id;
    std::string task;  // rendered task path
};

// Selects n_tasks task types uniformly at random (seeded), then draws
// total_samples items from them as evenly as supply allows (round-robin).
// Returned ids are sorted. Throws AblateInfeasibleError when the request
// cannot be met.
std::vector<std::string> ablate_by_task_count(const std::vector<SampleRef>& dataset,
                                              size_t n_tasks, size_t total_samples,
                                              uint64_t seed);

// Re-applies the per-task cap over all task types; sorted ids.
std::vector<std::string> ablate_by_cap(const std::vector<SampleRef>& dataset,
                                       size_t max_per_task, uint64_t seed);

}  // namespace taskforge
