#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "taskforge/sampler.hpp"

using namespace taskforge;

namespace {

ScreeningResult accepted_sample(const std::string& task, const std::string& image_id,
                                const std::string& question) {
    ScreeningResult r;
    r.candidate = {image_id, TaskTypePath::parse(task), question, "answer", "gen", false,
                   "strict"};
    r.verdicts = {{"a", 1, "", false}, {"b", 1, "", false}, {"c", 0, "", false}};
    r.total = 2;
    r.accepted = true;
    return r;
}

std::vector<ScreeningResult> corpus(const std::map<std::string, int>& supply) {
    std::vector<ScreeningResult> out;
    for (const auto& [task, n] : supply)
        for (int i = 0; i < n; ++i)
            out.push_back(accepted_sample(task, "img" + std::to_string(i),
                                          "q" + std::to_string(i) + " about " + task));
    return out;
}

std::map<std::string, std::set<std::string>> keys_by_task(
    const std::vector<QACandidate>& kept) {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& c : kept)
        out[c.task_path.render()].insert(c.image_id + "\x1f" + c.question);
    return out;
}

}  // namespace

TEST_CASE("balance caps every task and keeps small tasks whole") {
    auto input = corpus({{"a", 100}, {"b", 55}, {"c", 3}, {"d", 1}});
    BalanceConfig cfg;
    cfg.max_per_task = 55;
    cfg.rng_seed = 9;
    auto kept = balance(input, cfg);
    auto by_task = keys_by_task(kept);
    CHECK(by_task["a"].size() == 55);
    CHECK(by_task["b"].size() == 55);
    CHECK(by_task["c"].size() == 3);
    CHECK(by_task["d"].size() == 1);
}

TEST_CASE("balance is deterministic in the seed") {
    auto input = corpus({{"a", 40}, {"b", 80}});
    BalanceConfig cfg;
    cfg.max_per_task = 20;
    cfg.rng_seed = 1;
    auto k1 = balance(input, cfg);
    auto k2 = balance(input, cfg);
    CHECK(k1 == k2);
    cfg.rng_seed = 2;
    CHECK(balance(input, cfg) != k1);
}

TEST_CASE("smaller caps select a prefix of larger caps") {
    auto input = corpus({{"a", 120}, {"b", 60}, {"c", 7}});
    for (uint64_t seed : {0ull, 5ull, 77ull}) {
        std::map<std::string, std::set<std::string>> prev;
        for (int cap : {5, 15, 25, 35, 45, 55}) {
            BalanceConfig cfg;
            cfg.max_per_task = cap;
            cfg.rng_seed = seed;
            auto cur = keys_by_task(balance(input, cfg));
            for (const auto& [task, keys] : prev)
                for (const auto& k : keys) CHECK(cur[task].count(k) == 1);
            prev = std::move(cur);
        }
    }
}

TEST_CASE("balance rejects bad configs and rejected inputs") {
    BalanceConfig cfg;
    cfg.max_per_task = 56;
    CHECK_THROWS_AS(balance({}, cfg), Error);
    cfg.allow_cap_override = true;
    CHECK_NOTHROW(balance({}, cfg));

    auto bad = accepted_sample("a", "img", "q");
    bad.accepted = false;
    BalanceConfig ok;
    CHECK_THROWS_AS(balance({bad}, ok), Error);
}

TEST_CASE("random per-task caps stay within bounds") {
    auto input = corpus({{"a", 200}, {"b", 200}, {"c", 200}});
    BalanceConfig cfg;
    cfg.min_per_task = 1;
    cfg.max_per_task = 55;
    cfg.random_cap_per_task = true;
    cfg.rng_seed = 3;
    auto by_task = keys_by_task(balance(input, cfg));
    for (const auto& [task, keys] : by_task) {
        CHECK(keys.size() >= 1);
        CHECK(keys.size() <= 55);
    }
    CHECK(keys_by_task(balance(input, cfg)) == by_task);  // still deterministic
}

TEST_CASE("distribution buckets cover all non-empty tasks") {
    std::map<std::string, size_t> counts = {
        {"a", 3}, {"b", 15}, {"c", 25}, {"d", 50}, {"e", 0}, {"f", 60}};
    auto stats = distribution(counts);
    CHECK(stats.total_tasks == 5);
    CHECK(stats.total_samples == 153);
    REQUIRE(stats.bucket_edges.size() == 5);  // overflow bucket appended
    CHECK(stats.bucket_edges[4].lo == 56);
    CHECK(stats.bucket_edges[4].hi == 60);
    CHECK(stats.bucket_counts == std::vector<size_t>{1, 1, 1, 1, 1});
    size_t covered = 0;
    for (auto n : stats.bucket_counts) covered += n;
    CHECK(covered == stats.total_tasks);
    auto props = stats.proportions();
    double sum = 0;
    for (double p : props) sum += p;
    CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("task-count ablation draws the exact shape requested") {
    std::vector<SampleRef> dataset;
    for (int t = 0; t < 40; ++t)
        for (int i = 0; i < 10; ++i)
            dataset.push_back({"id-" + std::to_string(t) + "-" + std::to_string(i),
                               "task" + std::to_string(t)});

    auto kept = ablate_by_task_count(dataset, 20, 150, 7);
    CHECK(kept.size() == 150);
    CHECK(std::is_sorted(kept.begin(), kept.end()));
    std::set<std::string> unique(kept.begin(), kept.end());
    CHECK(unique.size() == 150);

    std::map<std::string, std::string> task_of;
    for (const auto& s : dataset) task_of[s.id] = s.task;
    std::map<std::string, size_t> per_task;
    for (const auto& id : kept) ++per_task[task_of.at(id)];
    CHECK(per_task.size() == 20);
    size_t lo = 1000, hi = 0;
    for (const auto& [_, n] : per_task) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);  // even round-robin spread

    CHECK(ablate_by_task_count(dataset, 20, 150, 7) == kept);  // deterministic
}

TEST_CASE("infeasible ablations throw") {
    std::vector<SampleRef> dataset = {{"x", "a"}, {"y", "a"}, {"z", "b"}};
    CHECK_THROWS_AS(ablate_by_task_count(dataset, 5, 2, 0), AblateInfeasibleError);
    CHECK_THROWS_AS(ablate_by_task_count(dataset, 1, 99, 0), AblateInfeasibleError);
    CHECK_THROWS_AS(ablate_by_task_count(dataset, 1, 3, 0), AblateInfeasibleError);
}

TEST_CASE("cap ablation nests across cap values") {
    std::vector<SampleRef> dataset;
    for (int t = 0; t < 10; ++t)
        for (int i = 0; i < 30; ++i)
            dataset.push_back({"id-" + std::to_string(t) + "-" + std::to_string(i),
                               "task" + std::to_string(t)});
    auto small = ablate_by_cap(dataset, 5, 42);
    auto large = ablate_by_cap(dataset, 20, 42);
    CHECK(small.size() == 50);
    CHECK(large.size() == 200);
    std::set<std::string> large_set(large.begin(), large.end());
    for (const auto& id : small) CHECK(large_set.count(id) == 1);
}
