#pragma once

#include <string>
#include <vector>

#include "taskforge/qa.hpp"

namespace taskforge {

struct RefereeVerdict {
    std::string referee_id;
    int vote = 0;  // 0 | 1
    std::string raw_text;
    bool parse_failed = false;  // vote forced to 0 after a failed retry
};

struct ScreeningResult {
    QACandidate candidate;
    std::vector<RefereeVerdict> verdicts;  // exactly 3
    int total = 0;
    bool accepted = false;
};

// Strips whitespace; accepts exactly "0" or "1", else the first standalone
// 0/1 token. Throws UnparseableVoteError otherwise.
int parse_vote(const std::string& raw_text);

// Majority rule over a panel of exactly 3: accepted iff total >= 2.
ScreeningResult aggregate(const QACandidate& candidate,
                          const std::vector<RefereeVerdict>& verdicts);

}  // namespace taskforge
