#pragma once

#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include "taskforge/errors.hpp"

namespace taskforge {

enum class ItemStatus { Done, Failed, Skipped };

std::string item_status_name(ItemStatus s);

struct StageProgress {
    size_t done = 0;
    size_t failed = 0;
    size_t skipped = 0;
};

// Append-only JSONL completion record. Each line carries a trailing checksum
// so a torn final line is detected and dropped on recovery. At most one done
// record per (stage, item); replaying the file reconstructs exact progress.
class CheckpointLedger {
public:
    CheckpointLedger(const CheckpointLedger&) = delete;
    CheckpointLedger& operator=(const CheckpointLedger&) = delete;
    CheckpointLedger(CheckpointLedger&&) = delete;
    ~CheckpointLedger();

    // Creates the file with a config-hash header, or replays an existing one.
    // Throws ConfigHashMismatchError when the stored hash differs, unless
    // override_config is set.
    static std::unique_ptr<CheckpointLedger> open(const std::string& path,
                                                  const std::string& config_hash,
                                                  bool override_config = false);

    bool is_done(const std::string& stage, const std::string& item) const;
    void record(const std::string& stage, const std::string& item, ItemStatus status,
                const std::string& payload_hash);

    std::map<std::string, StageProgress> progress() const;
    const std::string& config_hash() const { return config_hash_; }

    // Read-only replay for `status` reporting.
    static std::map<std::string, StageProgress> scan(const std::string& path);

private:
    CheckpointLedger() = default;
    void append_line(const std::string& payload);

    mutable std::mutex mu_;
    std::FILE* file_ = nullptr;
    std::string config_hash_;
    std::set<std::string> done_;  // "stage\x1fitem"
    std::map<std::string, StageProgress> progress_;
};

}  // namespace taskforge
