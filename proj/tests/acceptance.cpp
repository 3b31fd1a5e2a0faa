// Acceptance gate: each numbered criterion prints exactly one PASS/FAIL line.
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "taskforge/config.hpp"
#include "taskforge/dataset_io.hpp"
#include "taskforge/hash.hpp"
#include "taskforge/jsonl.hpp"
#include "taskforge/matching.hpp"
#include "taskforge/pipeline.hpp"
#include "taskforge/referee.hpp"
#include "taskforge/sampler.hpp"
#include "taskforge/taxonomy.hpp"

using namespace taskforge;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << ": " << name;
    if (!ok && !detail.empty()) std::cout << " (" << detail << ")";
    std::cout << std::endl;
    if (!ok) ++g_failures;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << content;
}

EmbeddingVector random_vec(hash::SplitMixRng& rng, size_t dim) {
    EmbeddingVector out;
    out.values.resize(dim);
    for (auto& x : out.values) x = rng.next_unit() * 2.0 - 1.0;
    return out;
}

// ------------------------------------------------------------------ 1

void criterion_top_k() {
    auto start = std::chrono::steady_clock::now();
    hash::SplitMixRng rng(2024);
    bool ok = true;
    std::string detail;
    for (int trial = 0; trial < 200 && ok; ++trial) {
        size_t n = 1 + rng.next_below(500);
        std::vector<ScoredTask> tasks;
        tasks.reserve(n);
        for (size_t i = 0; i < n; ++i)
            tasks.push_back({TaskTypePath::parse("t" + std::to_string(i)),
                             random_vec(rng, 64)});
        auto img = random_vec(rng, 64);
        MatchConfig cfg;
        cfg.k = 10;

        auto fast = top_k_tasks("img", img, tasks, cfg);

        std::vector<CandidateMatch> slow;
        for (const auto& t : tasks)
            slow.push_back({"img", t.path, cosine(img, t.embedding), 0});
        std::sort(slow.begin(), slow.end(),
                  [](const CandidateMatch& a, const CandidateMatch& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.task_path < b.task_path;
                  });
        slow.resize(std::min<size_t>(cfg.k, slow.size()));
        for (size_t i = 0; i < slow.size(); ++i) slow[i].rank = static_cast<int>(i) + 1;

        if (fast != slow) {
            ok = false;
            detail = "mismatch at trial " + std::to_string(trial);
        }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && secs >= 10.0) {
        ok = false;
        detail = "took " + std::to_string(secs) + " s";
    }
    report(1, "top-k matches brute-force full sort on 200 random instances", ok, detail);
}

// ------------------------------------------------------------------ 2

void criterion_cosine() {
    hash::SplitMixRng rng(7);
    bool ok = true;
    std::string detail;
    for (int i = 0; i < 100000 && ok; ++i) {
        auto u = random_vec(rng, 16);
        auto v = random_vec(rng, 16);
        double s = cosine(u, v);
        auto scaled = u;
        double c = 0.5 + rng.next_unit() * 4.0;
        for (auto& x : scaled.values) x *= c;
        if (s < -1.0 || s > 1.0 || cosine(v, u) != s ||
            std::abs(cosine(scaled, v) - s) >= 1e-12 ||
            std::abs(cosine(u, u) - 1.0) >= 1e-12) {
            ok = false;
            detail = "violated at pair " + std::to_string(i);
        }
    }
    report(2, "cosine symmetry, scale invariance, range, and self-similarity", ok, detail);
}

// ------------------------------------------------------------------ 3

void criterion_referee() {
    QACandidate cand{"img", TaskTypePath::parse("ocr"), "Q?", "A", "gen", false, "strict"};
    auto panel = [&](int a, int b, int c) {
        return std::vector<RefereeVerdict>{
            {"ra", a, "", false}, {"rb", b, "", false}, {"rc", c, "", false}};
    };
    bool ok = true;
    std::string detail;
    for (int a = 0; a <= 1 && ok; ++a)
        for (int b = 0; b <= 1 && ok; ++b)
            for (int c = 0; c <= 1 && ok; ++c) {
                auto res = aggregate(cand, panel(a, b, c));
                if (res.accepted != (a + b + c >= 2) || res.total != a + b + c) {
                    ok = false;
                    detail = "truth table broken";
                }
            }
    hash::SplitMixRng rng(31);
    for (int i = 0; i < 10000 && ok; ++i) {
        int a = static_cast<int>(rng.next_below(2));
        int b = static_cast<int>(rng.next_below(2));
        int c = static_cast<int>(rng.next_below(2));
        auto base = aggregate(cand, panel(a, b, c));
        if (aggregate(cand, panel(c, a, b)).accepted != base.accepted ||
            aggregate(cand, panel(b, c, a)).accepted != base.accepted) {
            ok = false;
            detail = "not permutation invariant";
        }
        auto raised = aggregate(cand, panel(1, b, c));
        if (base.accepted && !raised.accepted) {
            ok = false;
            detail = "not monotone";
        }
    }
    report(3, "three-referee majority truth table, permutation and monotonicity", ok, detail);
}

// ------------------------------------------------------------------ 4

void criterion_balance() {
    std::vector<int> supplies = {0, 1, 2, 3, 10, 54, 55, 56, 100, 200, 500};
    std::vector<ScreeningResult> input;
    for (size_t t = 0; t < supplies.size(); ++t)
        for (int i = 0; i < supplies[t]; ++i) {
            ScreeningResult r;
            r.candidate = {"img" + std::to_string(i),
                           TaskTypePath::parse("task" + std::to_string(t)),
                           "q" + std::to_string(i), "a", "gen", false, "strict"};
            r.verdicts = {{"a", 1, "", false}, {"b", 1, "", false}, {"c", 1, "", false}};
            r.total = 3;
            r.accepted = true;
            input.push_back(std::move(r));
        }

    bool ok = true;
    std::string detail;
    auto selection = [&](int cap, uint64_t seed) {
        BalanceConfig cfg;
        cfg.max_per_task = cap;
        cfg.rng_seed = seed;
        std::map<std::string, std::set<std::string>> out;
        for (const auto& c : balance(input, cfg))
            out[c.task_path.render()].insert(c.image_id + "\x1f" + c.question);
        return out;
    };

    for (uint64_t seed = 0; seed < 100 && ok; ++seed) {
        std::map<std::string, std::set<std::string>> prev;
        for (int cap : {5, 15, 25, 35, 45, 55}) {
            auto cur = selection(cap, seed);
            for (const auto& [task, keys] : cur) {
                size_t supply = 0;
                for (size_t t = 0; t < supplies.size(); ++t)
                    if (task == "task" + std::to_string(t))
                        supply = static_cast<size_t>(supplies[t]);
                if (keys.size() > static_cast<size_t>(cap) ||
                    keys.size() != std::min<size_t>(supply, cap)) {
                    ok = false;
                    detail = "cap violated for " + task;
                }
            }
            for (const auto& [task, keys] : prev)
                for (const auto& k : keys)
                    if (!cur[task].count(k)) {
                        ok = false;
                        detail = "selection at a smaller cap is not nested";
                    }
            prev = std::move(cur);
            if (!ok) break;
        }
    }
    report(4, "cap 55 enforcement and nested selections across the cap grid", ok, detail);
}

// ------------------------------------------------------------------ 5

void criterion_ablation() {
    const size_t n_total_tasks = 19227;
    std::vector<SampleRef> dataset;
    dataset.reserve(n_total_tasks * 55);
    for (size_t t = 0; t < n_total_tasks; ++t) {
        std::string task = "t" + std::to_string(t);
        size_t supply = 50 + t % 10;
        for (size_t i = 0; i < supply; ++i)
            dataset.push_back({task + "-" + std::to_string(i), task});
    }

    bool ok = true;
    std::string detail;
    for (size_t n_tasks : {2000ul, 3000ul, 5000ul, 10000ul, 15000ul, 18000ul, 19227ul}) {
        auto kept = ablate_by_task_count(dataset, n_tasks, 100000, 99);
        std::set<std::string> unique(kept.begin(), kept.end());
        std::set<std::string> kept_tasks;
        for (const auto& id : kept) kept_tasks.insert(id.substr(0, id.rfind('-')));
        if (kept.size() != 100000 || unique.size() != 100000 ||
            kept_tasks.size() != n_tasks) {
            ok = false;
            detail = "wrong shape at n_tasks=" + std::to_string(n_tasks);
            break;
        }
    }
    if (ok) {
        try {
            ablate_by_task_count(dataset, 100, 2000000, 0);
            ok = false;
            detail = "oversized request did not throw";
        } catch (const AblateInfeasibleError&) {
        }
    }
    report(5, "ablation grid yields exact task counts and totals on 19227 labels", ok, detail);
}

// ------------------------------------------------------------------ 6

void criterion_parsers() {
    std::vector<TaskTypePath> cands = {
        TaskTypePath::parse("ocr"), TaskTypePath::parse("detection~anomaly detection"),
        TaskTypePath::parse("chart understanding")};
    std::set<std::string> allowed;
    for (const auto& c : cands) allowed.insert(c.render());

    bool ok = true;
    std::string detail;
    if (!parse_filter_response("[None]", cands).empty()) {
        ok = false;
        detail = "[None] not empty";
    }
    {
        auto out = parse_filter_response("[ocr, chart understanding]", cands);
        if (out.size() != 2 || out[0].render() != "ocr" ||
            out[1].render() != "chart understanding") {
            ok = false;
            detail = "candidate strings not preserved";
        }
    }

    hash::SplitMixRng rng(555);
    const std::string alphabet = "abcdet ,[]~None01{}'\"x";
    for (int i = 0; i < 10000 && ok; ++i) {
        std::string text;
        size_t len = rng.next_below(80);
        for (size_t j = 0; j < len; ++j) text += alphabet[rng.next_below(alphabet.size())];
        try {
            for (const auto& p : parse_filter_response(text, cands))
                if (!allowed.count(p.render())) {
                    ok = false;
                    detail = "non-candidate emitted: " + p.render();
                }
        } catch (const UnparseableError&) {
        }
        try {
            int v = parse_vote(text);
            if (v != 0 && v != 1) {
                ok = false;
                detail = "vote out of range";
            }
        } catch (const UnparseableVoteError&) {
        }
    }
    if (ok && (parse_vote("0") != 0 || parse_vote("1") != 1)) {
        ok = false;
        detail = "exact vote mapping broken";
    }
    report(6, "filter and vote parsers hold their contracts under fuzzing", ok, detail);
}

// ------------------------------------------------------------------ 7-9 (shared fixture)

struct Fixture {
    fs::path base;
    std::string manifest_path;
    std::string seed_taxonomy_path;

    explicit Fixture(const std::string& tag) {
        base = fs::temp_directory_path() /
               ("taskforge-accept-" + std::to_string(::getpid()) + "-" + tag);
        fs::remove_all(base);
        fs::create_directories(base / "imgs");

        std::string manifest = "source,uri,width,height\n";
        for (int i = 0; i < 50; ++i) {
            std::string name = "img" + std::to_string(i) + ".jpg";
            std::string path = (base / "imgs" / name).string();
            write_file(path, "synthetic-image-bytes-" + std::to_string(i) +
                                 "-" + std::string(64, 'x'));
            manifest += (i % 2 ? "web," : "coco,") + path + ",64,64\n";
        }
        manifest_path = (base / "manifest.csv").string();
        write_file(manifest_path, manifest);

        // exactly 100 task paths: 10 roots, 70 children, 20 grandchildren
        std::string tax;
        for (int r = 0; r < 10; ++r) {
            tax += "domain " + std::to_string(r) + "\n";
            for (int c = 0; c < 7; ++c)
                tax += "domain " + std::to_string(r) + "~area " + std::to_string(c) + "\n";
            for (int g = 0; g < 2; ++g)
                tax += "domain " + std::to_string(r) + "~area 0~focus " +
                       std::to_string(g) + "\n";
        }
        seed_taxonomy_path = (base / "seeds.txt").string();
        write_file(seed_taxonomy_path, tax);
    }

    std::string config_text(const std::string& run_name) const {
        fs::path workdir = base / run_name / "work";
        fs::path out_dir = base / run_name / "out";
        fs::create_directories(workdir);
        return "workdir = " + workdir.string() +
               "\nout_dir = " + out_dir.string() +
               "\nimage_manifest = " + manifest_path +
               "\nseed_taxonomy = " + seed_taxonomy_path +
               "\nexpansion_rounds = 0\nseed = 123\nk = 10\nmax_in_flight = 8\n" +
               "mock_call_log = " + (workdir / "calls.log").string() + "\n";
    }
};

void criterion_end_to_end(Fixture& fx, bool& e2e_ok, std::string& out_dir,
                          std::string& workdir) {
    bool ok = true;
    std::string detail;
    auto start = std::chrono::steady_clock::now();
    try {
        auto cfg = RunConfig::parse_text(fx.config_text("full"));
        out_dir = cfg.out_dir;
        workdir = cfg.workdir;
        Pipeline pipeline(cfg);
        pipeline.run();
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (ok) {
        auto verify = Pipeline::verify(out_dir, workdir);
        if (!verify.ok()) {
            ok = false;
            detail = "verify: " + verify.violations.front() + " (+" +
                     std::to_string(verify.violations.size() - 1) + " more)";
        }
    }
    if (ok) {
        auto samples = load_dataset(out_dir + "/dataset.jsonl");
        if (samples.empty()) {
            ok = false;
            detail = "empty dataset";
        }
        std::map<std::string, std::set<std::string>> filtered;
        for (const auto& row : jsonl::read_plain(workdir + "/filter.jsonl"))
            for (const auto& t : row.at("filtered"))
                filtered[row.at("image_id").get<std::string>()].insert(t.get<std::string>());
        for (const auto& s : samples) {
            std::string image_id = fs::path(s.image).stem().string();
            if (!filtered[image_id].count(s.task_path.render())) {
                ok = false;
                detail = "sample task outside the image's filtered list";
            }
            if (!fs::exists(fs::path(out_dir) / s.image)) {
                ok = false;
                detail = "image missing for sample " + s.id;
            }
        }
    }
    if (ok && secs >= 60.0) {
        ok = false;
        detail = "took " + std::to_string(secs) + " s";
    }
    e2e_ok = ok;
    report(7, "offline end-to-end run verifies cleanly in under 60 s", ok, detail);
}

void criterion_crash_resume(Fixture& fx, const std::string& ref_out) {
    bool ok = true;
    std::string detail;
    std::string ref_dataset = read_file(ref_out + "/dataset.jsonl");
    std::string ref_card = read_file(ref_out + "/datacard.json");
    if (ref_dataset.empty()) {
        ok = false;
        detail = "reference export missing";
    }

    std::vector<StageId> boundaries = {StageId::Expand, StageId::Embed,  StageId::Match,
                                       StageId::Filter, StageId::QaGen,  StageId::Referee,
                                       StageId::Balance, StageId::Export};
    for (size_t bi = 0; bi < boundaries.size() && ok; ++bi) {
        std::string run_name = "resume" + std::to_string(bi);
        auto cfg = RunConfig::parse_text(fx.config_text(run_name));
        try {
            {
                // partial run: stops at the boundary, like a crash between stages
                Pipeline partial(cfg);
                partial.run(std::nullopt, boundaries[bi]);
            }
            {
                Pipeline resumed(cfg);
                resumed.run();
            }
        } catch (const std::exception& e) {
            ok = false;
            detail = std::string("boundary ") + stage_name(boundaries[bi]) + ": " + e.what();
            break;
        }
        if (read_file(cfg.out_dir + "/dataset.jsonl") != ref_dataset ||
            read_file(cfg.out_dir + "/datacard.json") != ref_card) {
            ok = false;
            detail = "outputs differ after resume at " + stage_name(boundaries[bi]);
            break;
        }
        // exactly-once: no model call is repeated across the partial + resumed pair
        std::map<std::string, int> calls;
        std::ifstream log(cfg.mock_call_log);
        std::string line;
        while (std::getline(log, line))
            if (++calls[line] > 1) {
                ok = false;
                detail = "duplicate model call after resume at " + stage_name(boundaries[bi]);
            }
        if (!ok) break;
    }
    report(8, "resumed runs reproduce the export byte-for-byte with no repeated calls", ok,
           detail);
}

void criterion_datacard(const std::string& out_dir) {
    bool ok = true;
    std::string detail;
    try {
        json card = json::parse(read_file(out_dir + "/datacard.json"));
        auto samples = load_dataset(out_dir + "/dataset.jsonl");

        std::map<std::string, size_t> per_task;
        std::set<std::string> image_ids;
        for (const auto& s : samples) {
            ++per_task[s.task_path.render()];
            image_ids.insert(fs::path(s.image).stem().string());
        }
        if (card.at("totals").at("samples").get<size_t>() != samples.size() ||
            card.at("totals").at("task_types").get<size_t>() != per_task.size() ||
            card.at("totals").at("images").get<size_t>() != image_ids.size()) {
            ok = false;
            detail = "totals differ from recount";
        }

        Taxonomy tax = Taxonomy::load(out_dir + "/taxonomy.txt");
        for (const auto& [level, count] : tax.level_counts())
            if (card.at("per_level_task_counts").at(std::to_string(level)).get<size_t>() !=
                count) {
                ok = false;
                detail = "per-level counts differ from taxonomy";
            }

        size_t bucket_sum = 0;
        for (const auto& b : card.at("distribution").at("buckets"))
            bucket_sum += b.at("task_types").get<size_t>();
        if (bucket_sum != per_task.size() ||
            card.at("distribution").at("total_tasks").get<size_t>() != per_task.size()) {
            ok = false;
            detail = "buckets do not cover the non-empty task types";
        }
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    report(9, "datacard equals an independent recount of the export", ok, detail);
}

// ------------------------------------------------------------------ 10

void criterion_codec() {
    hash::SplitMixRng rng(10);
    Taxonomy tax;
    PathOrigin origin{PathOriginKind::Seed, ""};
    bool ok = true;
    std::string detail;
    const char* fragments[] = {"ocr", "Scene Text", " chart ", "REGION", "fine grained",
                               "x1", "Q&A", "counting"};
    for (int i = 0; i < 100000 && ok; ++i) {
        int depth = 1 + static_cast<int>(rng.next_below(3));
        std::vector<std::string> levels;
        for (int d = 0; d < depth; ++d) levels.push_back(fragments[rng.next_below(8)]);
        TaskTypePath p(levels);
        if (TaskTypePath::parse(p.render()) != p) {
            ok = false;
            detail = "round trip broke for " + p.render();
        }
        size_t before = tax.size();
        bool was_new = tax.insert(p, origin);
        if (!was_new && tax.size() != before) {
            ok = false;
            detail = "duplicate insert changed size";
        }
        for (auto cur = p.parent(); cur; cur = cur->parent())
            if (!tax.contains(*cur)) {
                ok = false;
                detail = "parent closure broke for " + p.render();
            }
    }
    report(10, "codec round-trip, parent closure, and dedup over random operations", ok,
           detail);
}

}  // namespace

int main() {
    criterion_top_k();
    criterion_cosine();
    criterion_referee();
    criterion_balance();
    criterion_ablation();
    criterion_parsers();

    Fixture fx("main");
    bool e2e_ok = false;
    std::string out_dir, workdir;
    criterion_end_to_end(fx, e2e_ok, out_dir, workdir);
    if (e2e_ok) {
        criterion_crash_resume(fx, out_dir);
        criterion_datacard(out_dir);
    } else {
        report(8, "resumed runs reproduce the export byte-for-byte with no repeated calls",
               false, "end-to-end fixture failed");
        report(9, "datacard equals an independent recount of the export", false,
               "end-to-end fixture failed");
    }
    criterion_codec();

    fs::remove_all(fx.base);
    if (g_failures) {
        std::cout << g_failures << " criteria failed" << std::endl;
        return 1;
    }
    std::cout << "all 10 criteria passed" << std::endl;
    return 0;
}
