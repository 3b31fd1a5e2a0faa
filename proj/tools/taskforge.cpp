#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI/CLI.hpp>
#include <nlohmann/json.hpp>

#include "taskforge/config.hpp"
#include "taskforge/dataset_io.hpp"
#include "taskforge/errors.hpp"
#include "taskforge/jsonl.hpp"
#include "taskforge/pipeline.hpp"
#include "taskforge/sampler.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace taskforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitStageFailed = 3;
constexpr int kExitVerify = 4;

struct GlobalOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<int> max_in_flight;
    std::optional<std::string> workdir;
    std::optional<std::string> out_dir;
    bool force = false;    // accept a ledger written under a different config
    bool dry_run = false;
};

RunConfig load_config(const GlobalOpts& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = RunConfig::parse_file(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.max_in_flight) cfg.max_in_flight = *g.max_in_flight;
    if (g.workdir) cfg.workdir = *g.workdir;
    if (g.out_dir) cfg.out_dir = *g.out_dir;
    cfg.validate();
    return cfg;
}

void print_report(const RunReport& report) {
    for (const auto& [stage, s] : report.stages) {
        std::cout << stage << ": items=" << s.items << " executed=" << s.executed
                  << " prior=" << s.prior << " skipped=" << s.skipped
                  << " failed=" << s.failed << "\n";
    }
}

int run_stages(const GlobalOpts& g, std::optional<StageId> from, std::optional<StageId> to) {
    RunConfig cfg = load_config(g);
    if (g.dry_run) {
        std::cout << "config_hash: " << cfg.config_hash() << "\n";
        for (StageId s : stage_order()) {
            if (from && static_cast<int>(s) < static_cast<int>(*from)) continue;
            if (to && static_cast<int>(s) > static_cast<int>(*to)) break;
            if (s == StageId::Cot && !cfg.cot_enabled) continue;
            std::cout << "would run: " << stage_name(s) << "\n";
        }
        return kExitOk;
    }
    Pipeline pipeline(cfg);
    RunReport report = pipeline.run(from, to, g.force);
    print_report(report);
    return kExitOk;
}

std::vector<SampleRef> load_refs(const std::string& dataset_path) {
    std::vector<SampleRef> refs;
    for (const auto& s : load_dataset(dataset_path))
        refs.push_back({s.id, s.task_path.render()});
    return refs;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"taskforge: taxonomy-driven visual instruction dataset builder"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "run configuration file");
    uint64_t seed_opt = 0;
    auto* seed_flag = app.add_option("--seed", seed_opt, "override the run seed");
    int mif_opt = 0;
    auto* mif_flag = app.add_option("--max-in-flight", mif_opt, "override request concurrency");
    std::string workdir_opt, out_opt;
    auto* wd_flag = app.add_option("--workdir", workdir_opt, "override the work directory");
    auto* out_flag = app.add_option("--out", out_opt, "override the export directory");
    app.add_flag("--force", g.force, "proceed despite a ledger config-hash mismatch");
    app.add_flag("--dry-run", g.dry_run, "print the plan without executing");

    std::string from_name, to_name;
    auto* cmd_run = app.add_subcommand("run", "run the pipeline end to end (resumable)");
    cmd_run->add_option("--from", from_name, "first stage to run");
    cmd_run->add_option("--to", to_name, "last stage to run");

    auto* cmd_status = app.add_subcommand("status", "per-stage ledger progress");
    auto* cmd_verify = app.add_subcommand("verify", "re-check invariants on an export");
    int verify_cap = 55;
    cmd_verify->add_option("--max-per-task", verify_cap, "per-task cap to enforce");

    auto* cmd_expand = app.add_subcommand("expand", "taxonomy expansion only");
    auto* cmd_match = app.add_subcommand("match", "embed + top-k matching + filter");
    auto* cmd_qagen = app.add_subcommand("qagen", "question/answer generation");
    auto* cmd_referee = app.add_subcommand("referee", "three-referee screening");
    auto* cmd_balance = app.add_subcommand("balance", "per-task balanced sampling");
    auto* cmd_export = app.add_subcommand("export", "write the dataset export");

    auto* cmd_ablate = app.add_subcommand("ablate", "deterministic dataset subsets");
    std::string ablate_dataset, ablate_out;
    size_t ablate_tasks = 0, ablate_samples = 0, ablate_cap = 0;
    uint64_t ablate_seed = 0;
    cmd_ablate->add_option("--dataset", ablate_dataset, "dataset.jsonl to subset")->required();
    cmd_ablate->add_option("--tasks", ablate_tasks, "number of task types to keep");
    cmd_ablate->add_option("--samples", ablate_samples, "total samples to draw");
    cmd_ablate->add_option("--cap", ablate_cap, "re-apply a per-task cap");
    cmd_ablate->add_option("--subset-seed", ablate_seed, "subset selection seed");
    cmd_ablate->add_option("--output", ablate_out, "write kept ids here (default stdout)");

    auto* cmd_stats = app.add_subcommand("stats", "distribution summary for a dataset");
    std::string stats_dataset;
    cmd_stats->add_option("--dataset", stats_dataset, "dataset.jsonl to summarize")->required();

    CLI11_PARSE(app, argc, argv);

    if (*seed_flag) g.seed = seed_opt;
    if (*mif_flag) g.max_in_flight = mif_opt;
    if (*wd_flag) g.workdir = workdir_opt;
    if (*out_flag) g.out_dir = out_opt;

    try {
        if (*cmd_run) {
            std::optional<StageId> from, to;
            if (!from_name.empty()) from = stage_from_name(from_name);
            if (!to_name.empty()) to = stage_from_name(to_name);
            return run_stages(g, from, to);
        }
        if (*cmd_expand) return run_stages(g, StageId::Expand, StageId::Expand);
        if (*cmd_match) return run_stages(g, StageId::Embed, StageId::Filter);
        if (*cmd_qagen) return run_stages(g, StageId::QaGen, StageId::QaGen);
        if (*cmd_referee) return run_stages(g, StageId::Referee, StageId::Referee);
        if (*cmd_balance) return run_stages(g, StageId::Balance, StageId::Balance);
        if (*cmd_export) return run_stages(g, StageId::Export, StageId::Export);

        if (*cmd_status) {
            RunConfig cfg = load_config(g);
            auto progress =
                Pipeline::status((fs::path(cfg.workdir) / "ledger.jsonl").string());
            if (progress.empty()) {
                std::cout << "no progress recorded\n";
            } else {
                for (const auto& [stage, p] : progress)
                    std::cout << stage << ": done=" << p.done << " skipped=" << p.skipped
                              << " failed=" << p.failed << "\n";
            }
            return kExitOk;
        }

        if (*cmd_verify) {
            RunConfig cfg = load_config(g);
            auto report = Pipeline::verify(cfg.out_dir, cfg.workdir, verify_cap);
            for (const auto& v : report.violations) std::cout << "violation: " << v << "\n";
            std::cout << (report.ok() ? "verify: ok" : "verify: failed") << "\n";
            return report.ok() ? kExitOk : kExitVerify;
        }

        if (*cmd_ablate) {
            auto refs = load_refs(ablate_dataset);
            std::vector<std::string> kept;
            if (ablate_tasks > 0) {
                if (ablate_samples == 0)
                    throw ConfigError("--tasks requires --samples");
                kept = ablate_by_task_count(refs, ablate_tasks, ablate_samples, ablate_seed);
            } else if (ablate_cap > 0) {
                kept = ablate_by_cap(refs, ablate_cap, ablate_seed);
            } else {
                throw ConfigError("ablate needs --tasks/--samples or --cap");
            }
            if (ablate_out.empty()) {
                for (const auto& id : kept) std::cout << id << "\n";
            } else {
                std::ofstream f(ablate_out, std::ios::binary | std::ios::trunc);
                for (const auto& id : kept) f << id << "\n";
                std::cout << "kept " << kept.size() << " of " << refs.size() << " samples\n";
            }
            return kExitOk;
        }

        if (*cmd_stats) {
            auto samples = load_dataset(stats_dataset);
            std::map<std::string, size_t> per_task;
            for (const auto& s : samples) ++per_task[s.task_path.render()];
            auto dist = distribution(per_task);
            std::cout << "samples: " << dist.total_samples << "\n"
                      << "task types: " << dist.total_tasks << "\n";
            auto props = dist.proportions();
            for (size_t i = 0; i < dist.bucket_edges.size(); ++i)
                std::cout << "  " << dist.bucket_edges[i].lo << "-" << dist.bucket_edges[i].hi
                          << " samples/task: " << dist.bucket_counts[i] << " task types ("
                          << props[i] * 100.0 << "%)\n";
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ConfigHashMismatchError& e) {
        std::cerr << "config error: " << e.what() << " (use --force to override)\n";
        return kExitConfig;
    } catch (const StageFailedThresholdError& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStageFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitOk;
}
