#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "taskforge/hash.hpp"
#include "taskforge/matching.hpp"

using namespace taskforge;

namespace {

EmbeddingVector vec(std::vector<double> v) {
    EmbeddingVector out;
    out.values = std::move(v);
    return out;
}

EmbeddingVector random_vec(hash::SplitMixRng& rng, size_t dim) {
    EmbeddingVector out;
    out.values.resize(dim);
    for (auto& x : out.values) x = rng.next_unit() * 2.0 - 1.0;
    return out;
}

// Full-sort reference implementation for top-k.
std::vector<CandidateMatch> brute_force_top_k(const std::string& image_id,
                                              const EmbeddingVector& img,
                                              const std::vector<ScoredTask>& tasks,
                                              const MatchConfig& cfg) {
    std::vector<CandidateMatch> all;
    for (const auto& t : tasks) {
        double s = cosine(img, t.embedding);
        if (s < cfg.min_score) continue;
        all.push_back({image_id, t.path, s, 0});
    }
    std::sort(all.begin(), all.end(), [](const CandidateMatch& a, const CandidateMatch& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.task_path < b.task_path;
    });
    all.resize(std::min<size_t>(cfg.k, all.size()));
    for (size_t i = 0; i < all.size(); ++i) all[i].rank = static_cast<int>(i) + 1;
    return all;
}

}  // namespace

TEST_CASE("cosine matches a hand-computed value") {
    // dot = 2+2+4 = 8, |u| = |v| = 3  ->  8/9
    double s = cosine(vec({1, 2, 2}), vec({2, 1, 2}));
    CHECK(s == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
    CHECK(cosine(vec({1, 0}), vec({0, 1})) == doctest::Approx(0.0));
    CHECK(cosine(vec({1, 1}), vec({-1, -1})) == doctest::Approx(-1.0));
}

TEST_CASE("cosine rejects bad inputs") {
    CHECK_THROWS_AS(cosine(vec({1, 2}), vec({1, 2, 3})), DimensionMismatchError);
    CHECK_THROWS_AS(cosine(vec({0, 0}), vec({1, 2})), ZeroNormError);
}

TEST_CASE("cosine properties over random pairs") {
    hash::SplitMixRng rng(11);
    for (int i = 0; i < 5000; ++i) {
        auto u = random_vec(rng, 8);
        auto v = random_vec(rng, 8);
        double s = cosine(u, v);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
        CHECK(cosine(v, u) == s);  // symmetry
        auto scaled = u;
        for (auto& x : scaled.values) x *= 3.5;
        CHECK(std::abs(cosine(scaled, v) - s) < 1e-12);  // positive scale invariance
        CHECK(std::abs(cosine(u, u) - 1.0) < 1e-12);
    }
}

TEST_CASE("top-k equals brute force on random instances") {
    hash::SplitMixRng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        size_t n = 1 + rng.next_below(60);
        std::vector<ScoredTask> tasks;
        for (size_t i = 0; i < n; ++i)
            tasks.push_back({TaskTypePath::parse("task" + std::to_string(i)),
                             random_vec(rng, 16)});
        auto img = random_vec(rng, 16);
        MatchConfig cfg;
        cfg.k = 1 + static_cast<int>(rng.next_below(15));
        auto fast = top_k_tasks("img", img, tasks, cfg);
        auto slow = brute_force_top_k("img", img, tasks, cfg);
        CHECK(fast == slow);
        CHECK(fast.size() == std::min<size_t>(cfg.k, n));
        for (size_t i = 0; i < fast.size(); ++i) CHECK(fast[i].rank == static_cast<int>(i) + 1);
    }
}

TEST_CASE("equal scores break ties by path ascending") {
    auto e = vec({1, 0});
    std::vector<ScoredTask> tasks = {
        {TaskTypePath::parse("zebra"), e},
        {TaskTypePath::parse("apple"), e},
        {TaskTypePath::parse("mango"), e},
    };
    MatchConfig cfg;
    cfg.k = 2;
    auto out = top_k_tasks("img", vec({1, 0}), tasks, cfg);
    REQUIRE(out.size() == 2);
    CHECK(out[0].task_path.render() == "apple");
    CHECK(out[1].task_path.render() == "mango");
    CHECK(out[0].score == doctest::Approx(1.0));
}

TEST_CASE("min score floor drops weak matches when enabled") {
    std::vector<ScoredTask> tasks = {
        {TaskTypePath::parse("close"), vec({1, 0.1})},
        {TaskTypePath::parse("far"), vec({-1, 0})},
    };
    MatchConfig cfg;
    cfg.k = 10;
    cfg.min_score = 0.5;
    auto out = top_k_tasks("img", vec({1, 0}), tasks, cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0].task_path.render() == "close");
}

TEST_CASE("filter reply parsing keeps only candidate labels") {
    std::vector<TaskTypePath> cands = {
        TaskTypePath::parse("ocr"),
        TaskTypePath::parse("detection~anomaly detection"),
        TaskTypePath::parse("image description"),
    };
    FilterParseReport rep;
    auto out = parse_filter_response(
        "[ocr, detection~anomaly detection, made-up task]", cands, &rep);
    REQUIRE(out.size() == 2);
    CHECK(out[0].render() == "ocr");
    CHECK(out[1].render() == "detection~anomaly detection");
    CHECK(rep.dropped_count == 1);
}

TEST_CASE("filter reply None and error cases") {
    std::vector<TaskTypePath> cands = {TaskTypePath::parse("ocr")};
    CHECK(parse_filter_response("[None]", cands).empty());
    CHECK(parse_filter_response("  [ none ]  ", cands).empty());
    CHECK(parse_filter_response("[]", cands).empty());
    CHECK_THROWS_AS(parse_filter_response("no brackets here", cands), UnparseableError);
    // surrounding chatter is tolerated as long as the list is present
    auto out = parse_filter_response("Sure! The labels are: [ocr]. Enjoy.", cands);
    REQUIRE(out.size() == 1);
    CHECK(out[0].render() == "ocr");
}

TEST_CASE("filter parsing never emits a non-candidate under fuzzing") {
    std::vector<TaskTypePath> cands = {
        TaskTypePath::parse("ocr"), TaskTypePath::parse("detection"),
        TaskTypePath::parse("chart understanding")};
    std::set<std::string> allowed;
    for (const auto& c : cands) allowed.insert(c.render());

    hash::SplitMixRng rng(1234);
    const std::string alphabet = "abc,[]~ None10{}\"'";
    for (int i = 0; i < 2000; ++i) {
        std::string text;
        size_t len = rng.next_below(60);
        for (size_t j = 0; j < len; ++j) text += alphabet[rng.next_below(alphabet.size())];
        if (rng.next_below(2) == 0) text += "[ocr, junk]";
        try {
            for (const auto& p : parse_filter_response(text, cands))
                CHECK(allowed.count(p.render()) == 1);
        } catch (const UnparseableError&) {
        }
    }
}
