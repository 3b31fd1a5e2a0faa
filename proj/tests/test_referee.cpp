#include <doctest.h>

#include <algorithm>

#include "taskforge/hash.hpp"
#include "taskforge/referee.hpp"

using namespace taskforge;

namespace {

QACandidate candidate() {
    return {"img", TaskTypePath::parse("ocr"), "Q?", "A", "gen", false, "strict"};
}

std::vector<RefereeVerdict> panel(int a, int b, int c) {
    return {{"ref-a", a, "", false}, {"ref-b", b, "", false}, {"ref-c", c, "", false}};
}

}  // namespace

TEST_CASE("vote parsing accepts bare and embedded tokens") {
    CHECK(parse_vote("0") == 0);
    CHECK(parse_vote("1") == 1);
    CHECK(parse_vote("  1\n") == 1);
    CHECK(parse_vote("Score: 1") == 1);
    CHECK(parse_vote("1.") == 1);
    CHECK(parse_vote("the answer is 0, final") == 0);
}

TEST_CASE("vote parsing rejects ambiguous or empty replies") {
    CHECK_THROWS_AS(parse_vote(""), UnparseableVoteError);
    CHECK_THROWS_AS(parse_vote("yes"), UnparseableVoteError);
    CHECK_THROWS_AS(parse_vote("10"), UnparseableVoteError);   // no standalone digit
    CHECK_THROWS_AS(parse_vote("a1b"), UnparseableVoteError);
    CHECK_THROWS_AS(parse_vote("score9"), UnparseableVoteError);
}

TEST_CASE("majority rule over the exhaustive 3-vote table") {
    for (int a = 0; a <= 1; ++a)
        for (int b = 0; b <= 1; ++b)
            for (int c = 0; c <= 1; ++c) {
                auto res = aggregate(candidate(), panel(a, b, c));
                CHECK(res.total == a + b + c);
                CHECK(res.accepted == (a + b + c >= 2));
            }
}

TEST_CASE("panel size must be exactly three") {
    CHECK_THROWS_AS(aggregate(candidate(), {}), WrongPanelSizeError);
    CHECK_THROWS_AS(aggregate(candidate(), {{"r", 1, "", false}}), WrongPanelSizeError);
    auto four = panel(1, 1, 1);
    four.push_back({"ref-d", 1, "", false});
    CHECK_THROWS_AS(aggregate(candidate(), four), WrongPanelSizeError);
}

TEST_CASE("aggregation is permutation invariant and monotone") {
    hash::SplitMixRng rng(77);
    for (int i = 0; i < 2000; ++i) {
        auto votes = panel(static_cast<int>(rng.next_below(2)),
                           static_cast<int>(rng.next_below(2)),
                           static_cast<int>(rng.next_below(2)));
        auto base = aggregate(candidate(), votes);

        auto shuffled = votes;
        std::rotate(shuffled.begin(), shuffled.begin() + 1 + rng.next_below(2),
                    shuffled.end());
        CHECK(aggregate(candidate(), shuffled).accepted == base.accepted);

        // flipping any 0 to 1 never revokes acceptance
        for (size_t j = 0; j < 3; ++j) {
            if (votes[j].vote == 1) continue;
            auto raised = votes;
            raised[j].vote = 1;
            auto res = aggregate(candidate(), raised);
            CHECK(res.total == base.total + 1);
            if (base.accepted) CHECK(res.accepted);
        }
    }
}

TEST_CASE("parse failure forced to zero still aggregates") {
    auto votes = panel(1, 1, 0);
    votes[2].parse_failed = true;
    auto res = aggregate(candidate(), votes);
    CHECK(res.accepted);
    CHECK(res.verdicts[2].parse_failed);
}
