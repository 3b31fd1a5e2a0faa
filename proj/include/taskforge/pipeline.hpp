#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "taskforge/config.hpp"
#include "taskforge/dataset_io.hpp"
#include "taskforge/gateway.hpp"
#include "taskforge/ledger.hpp"
#include "taskforge/prompts.hpp"
#include "taskforge/taxonomy.hpp"

namespace taskforge {

enum class StageId { Expand, Embed, Match, Filter, QaGen, Cot, Referee, Balance, Export };

std::string stage_name(StageId id);
StageId stage_from_name(const std::string& name);
std::vector<StageId> stage_order();

struct StageRunStats {
    size_t items = 0;
    size_t executed = 0;
    size_t prior = 0;  // already done in the ledger, skipped this run
    size_t failed = 0;
    size_t skipped = 0;  // empty-input items marked skipped
};

struct RunReport {
    std::map<std::string, StageRunStats> stages;
};

struct VerifyReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Orchestrates the stage DAG over per-item work units with the checkpoint
// ledger and a bounded worker pool. One coordinator per ledger.
class Pipeline {
public:
    explicit Pipeline(RunConfig cfg);
    ~Pipeline();

    RunReport run(std::optional<StageId> from = std::nullopt,
                  std::optional<StageId> to = std::nullopt,
                  bool override_config = false);

    static std::map<std::string, StageProgress> status(const std::string& ledger_path);

    // Re-checks cross-module invariants on an exported dataset. workdir, when
    // given, enables the filtered-list cross-check.
    static VerifyReport verify(const std::string& out_dir, const std::string& workdir = "",
                               int max_per_task = 55);

    // Test access to the shared mock backend (offline configurations).
    MockBackend* mock_backend();
    const CostMeter& meter(const std::string& backend_id);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace taskforge
