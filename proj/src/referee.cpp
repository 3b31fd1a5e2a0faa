#include "taskforge/referee.hpp"

#include <cctype>

#include "taskforge/strings.hpp"

namespace taskforge {

int parse_vote(const std::string& raw_text) {
    std::string t = strings::trim(raw_text);
    if (t == "0") return 0;
    if (t == "1") return 1;
    // extra text: take the first standalone 0/1 token
    for (size_t i = 0; i < t.size(); ++i) {
        if (t[i] != '0' && t[i] != '1') continue;
        bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(t[i - 1]));
        bool right_ok =
            i + 1 == t.size() || !std::isalnum(static_cast<unsigned char>(t[i + 1]));
        if (left_ok && right_ok) return t[i] - '0';
    }
    throw UnparseableVoteError("no 0/1 token in referee reply");
}

ScreeningResult aggregate(const QACandidate& candidate,
                          const std::vector<RefereeVerdict>& verdicts) {
    if (verdicts.size() != 3)
        throw WrongPanelSizeError("panel must have exactly 3 verdicts, got " +
                                  std::to_string(verdicts.size()));
    ScreeningResult out;
    out.candidate = candidate;
    out.verdicts = verdicts;
    for (const auto& v : verdicts) {
        if (v.vote != 0 && v.vote != 1) throw Error("vote out of range");
        out.total += v.vote;
    }
    out.accepted = out.total >= 2;
    return out;
}

}  // namespace taskforge
