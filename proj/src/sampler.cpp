#include "taskforge/sampler.hpp"

#include <algorithm>

#include "taskforge/hash.hpp"

namespace taskforge {

namespace {

uint64_t task_stream_seed(uint64_t seed, const std::string& task) {
    return hash::splitmix64(seed ^ hash::fnv1a64(task));
}

// Seeded Fisher-Yates; own RNG so selections reproduce across hosts.
template <typename T>
void seeded_shuffle(std::vector<T>& items, uint64_t seed) {
    hash::SplitMixRng rng(seed);
    for (size_t i = items.size(); i > 1; --i) {
        size_t j = rng.next_below(i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace

void BalanceConfig::validate() const {
    if (min_per_task < 1) throw Error("min_per_task must be >= 1");
    if (max_per_task < min_per_task) throw Error("max_per_task < min_per_task");
    if (max_per_task > 55 && !allow_cap_override)
        throw Error("max_per_task above 55 requires the override flag");
}

std::vector<QACandidate> balance(const std::vector<ScreeningResult>& accepted,
                                 const BalanceConfig& cfg) {
    cfg.validate();
    for (const auto& r : accepted)
        if (!r.accepted) throw Error("balance input contains a rejected result");

    std::map<std::string, std::vector<const QACandidate*>> by_task;
    for (const auto& r : accepted)
        by_task[r.candidate.task_path.render()].push_back(&r.candidate);

    std::vector<QACandidate> out;
    for (auto& [task, items] : by_task) {
        // stable per-task order before the seeded permutation
        std::sort(items.begin(), items.end(), [](const QACandidate* a, const QACandidate* b) {
            if (a->image_id != b->image_id) return a->image_id < b->image_id;
            return a->question < b->question;
        });
        uint64_t stream = task_stream_seed(cfg.rng_seed, task);
        seeded_shuffle(items, stream);
        size_t cap = static_cast<size_t>(cfg.max_per_task);
        if (cfg.random_cap_per_task) {
            hash::SplitMixRng rng(hash::splitmix64(stream ^ 0xca9));
            cap = cfg.min_per_task +
                  rng.next_below(static_cast<uint64_t>(cfg.max_per_task - cfg.min_per_task + 1));
        }
        size_t keep = std::min(items.size(), cap);
        for (size_t i = 0; i < keep; ++i) out.push_back(*items[i]);
    }
    std::sort(out.begin(), out.end(), [](const QACandidate& a, const QACandidate& b) {
        auto ka = std::tie(a.image_id, a.question);
        auto kb = std::tie(b.image_id, b.question);
        if (a.task_path != b.task_path) return a.task_path < b.task_path;
        return ka < kb;
    });
    return out;
}

std::vector<Bucket> default_buckets() {
    return {{1, 10}, {11, 20}, {21, 40}, {41, 55}};
}

std::vector<double> DistributionStats::proportions() const {
    std::vector<double> out(bucket_counts.size(), 0.0);
    if (total_tasks == 0) return out;
    for (size_t i = 0; i < bucket_counts.size(); ++i)
        out[i] = static_cast<double>(bucket_counts[i]) / static_cast<double>(total_tasks);
    return out;
}

DistributionStats distribution(const std::map<std::string, size_t>& per_task_counts,
                               std::vector<Bucket> edges) {
    DistributionStats stats;
    size_t max_count = 0;
    for (const auto& [_, n] : per_task_counts)
        if (n > 0) max_count = std::max(max_count, n);
    if (!edges.empty() && max_count > edges.back().hi)
        edges.push_back({edges.back().hi + 1, max_count});  // overflow bucket keeps cover
    stats.bucket_edges = edges;
    stats.bucket_counts.assign(edges.size(), 0);
    for (const auto& [_, n] : per_task_counts) {
        if (n == 0) continue;
        ++stats.total_tasks;
        stats.total_samples += n;
        for (size_t i = 0; i < edges.size(); ++i) {
            if (n >= edges[i].lo && n <= edges[i].hi) {
                ++stats.bucket_counts[i];
                break;
            }
        }
    }
    return stats;
}

namespace {

std::map<std::string, std::vector<std::string>> permuted_ids_by_task(
    const std::vector<SampleRef>& dataset, uint64_t seed) {
    std::map<std::string, std::vector<std::string>> by_task;
    for (const auto& s : dataset) by_task[s.task].push_back(s.id);
    for (auto& [task, ids] : by_task) {
        std::sort(ids.begin(), ids.end());
        seeded_shuffle(ids, task_stream_seed(seed, task));
    }
    return by_task;
}

}  // namespace

std::vector<std::string> ablate_by_task_count(const std::vector<SampleRef>& dataset,
                                              size_t n_tasks, size_t total_samples,
                                              uint64_t seed) {
    if (total_samples > dataset.size())
        throw AblateInfeasibleError("requested more samples than the dataset holds");
    auto by_task = permuted_ids_by_task(dataset, seed);
    if (n_tasks > by_task.size())
        throw AblateInfeasibleError("requested more task types than present");

    std::vector<std::string> tasks;
    tasks.reserve(by_task.size());
    for (const auto& [task, _] : by_task) tasks.push_back(task);
    seeded_shuffle(tasks, hash::splitmix64(seed ^ 0x7ab1e));
    tasks.resize(n_tasks);
    std::sort(tasks.begin(), tasks.end());

    size_t supply = 0;
    for (const auto& t : tasks) supply += by_task[t].size();
    if (supply < total_samples)
        throw AblateInfeasibleError("selected task types hold only " + std::to_string(supply) +
                                    " samples");

    // round-robin across the chosen tasks for an even spread
    std::vector<std::string> out;
    out.reserve(total_samples);
    std::vector<size_t> next(tasks.size(), 0);
    while (out.size() < total_samples) {
        bool progressed = false;
        for (size_t i = 0; i < tasks.size() && out.size() < total_samples; ++i) {
            auto& ids = by_task[tasks[i]];
            if (next[i] >= ids.size()) continue;
            out.push_back(ids[next[i]++]);
            progressed = true;
        }
        if (!progressed) break;
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> ablate_by_cap(const std::vector<SampleRef>& dataset,
                                       size_t max_per_task, uint64_t seed) {
    if (max_per_task < 1) throw Error("max_per_task must be >= 1");
    auto by_task = permuted_ids_by_task(dataset, seed);
    std::vector<std::string> out;
    for (auto& [task, ids] : by_task) {
        size_t keep = std::min(ids.size(), max_per_task);
        out.insert(out.end(), ids.begin(), ids.begin() + keep);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace taskforge
