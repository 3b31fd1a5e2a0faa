#include "taskforge/ledger.hpp"

#include <unistd.h>

#include <chrono>
#include <fstream>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "taskforge/hash.hpp"
#include "taskforge/strings.hpp"

namespace taskforge {

using json = nlohmann::json;

namespace {

constexpr char kChecksumSep = '\t';

std::string checksum(const std::string& payload) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash::fnv1a64(payload)));
    return buf;
}

// Returns the JSON payload if the line's checksum verifies, else nullopt.
std::optional<std::string> verified_payload(const std::string& line) {
    size_t sep = line.rfind(kChecksumSep);
    if (sep == std::string::npos) return std::nullopt;
    std::string payload = line.substr(0, sep);
    if (line.substr(sep + 1) != checksum(payload)) return std::nullopt;
    return payload;
}

ItemStatus status_from_name(const std::string& s) {
    if (s == "done") return ItemStatus::Done;
    if (s == "failed") return ItemStatus::Failed;
    if (s == "skipped") return ItemStatus::Skipped;
    throw Error("bad ledger status: " + s);
}

}  // namespace

std::string item_status_name(ItemStatus s) {
    switch (s) {
        case ItemStatus::Done: return "done";
        case ItemStatus::Failed: return "failed";
        case ItemStatus::Skipped: return "skipped";
    }
    throw Error("bad status");
}

CheckpointLedger::~CheckpointLedger() {
    if (file_) std::fclose(file_);
}

std::unique_ptr<CheckpointLedger> CheckpointLedger::open(const std::string& path,
                                                         const std::string& config_hash,
                                                         bool override_config) {
    auto ledger = std::unique_ptr<CheckpointLedger>(new CheckpointLedger());
    ledger->config_hash_ = config_hash;

    std::ifstream existing(path, std::ios::binary);
    bool fresh = !existing.good();
    if (!fresh) {
        std::string line;
        bool first = true;
        while (std::getline(existing, line)) {
            if (line.empty()) continue;
            auto payload = verified_payload(line);
            if (!payload) continue;  // torn line: dropped
            json obj = json::parse(*payload);
            if (first) {
                first = false;
                if (obj.value("type", "") != "header")
                    throw Error("ledger missing header: " + path);
                std::string stored = obj.value("config_hash", "");
                if (stored != config_hash && !override_config)
                    throw ConfigHashMismatchError("ledger config hash " + stored +
                                                  " != current " + config_hash);
                continue;
            }
            std::string stage = obj.at("stage").get<std::string>();
            std::string item = obj.at("item").get<std::string>();
            ItemStatus st = status_from_name(obj.at("status").get<std::string>());
            auto& prog = ledger->progress_[stage];
            switch (st) {
                case ItemStatus::Done:
                    if (ledger->done_.insert(stage + "\x1f" + item).second) ++prog.done;
                    break;
                case ItemStatus::Failed: ++prog.failed; break;
                case ItemStatus::Skipped:
                    if (ledger->done_.insert(stage + "\x1f" + item).second) ++prog.skipped;
                    break;
            }
        }
        existing.close();
    }

    ledger->file_ = std::fopen(path.c_str(), "ab");
    if (!ledger->file_) throw Error("cannot open ledger for append: " + path);
    if (fresh) {
        json header = {{"type", "header"}, {"version", 1}, {"config_hash", config_hash}};
        ledger->append_line(header.dump());
    }
    return ledger;
}

void CheckpointLedger::append_line(const std::string& payload) {
    std::string line = payload + kChecksumSep + checksum(payload) + "\n";
    std::fwrite(line.data(), 1, line.size(), file_);
    std::fflush(file_);
    ::fsync(fileno(file_));
}

bool CheckpointLedger::is_done(const std::string& stage, const std::string& item) const {
    std::lock_guard lock(mu_);
    return done_.count(stage + "\x1f" + item) > 0;
}

void CheckpointLedger::record(const std::string& stage, const std::string& item,
                              ItemStatus status, const std::string& payload_hash) {
    std::lock_guard lock(mu_);
    if (status != ItemStatus::Failed && done_.count(stage + "\x1f" + item))
        return;  // at most one done record per (stage, item)
    json obj = {{"stage", stage},
                {"item", item},
                {"status", item_status_name(status)},
                {"payload_hash", payload_hash},
                {"ts", std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count()}};
    append_line(obj.dump());
    auto& prog = progress_[stage];
    switch (status) {
        case ItemStatus::Done:
            done_.insert(stage + "\x1f" + item);
            ++prog.done;
            break;
        case ItemStatus::Failed: ++prog.failed; break;
        case ItemStatus::Skipped:
            done_.insert(stage + "\x1f" + item);
            ++prog.skipped;
            break;
    }
}

std::map<std::string, StageProgress> CheckpointLedger::progress() const {
    std::lock_guard lock(mu_);
    return progress_;
}

std::map<std::string, StageProgress> CheckpointLedger::scan(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::map<std::string, StageProgress> out;
    if (!f) return out;
    std::string line;
    std::set<std::string> done;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto payload = verified_payload(line);
        if (!payload) continue;
        json obj = json::parse(*payload);
        if (obj.value("type", "") == "header") continue;
        std::string stage = obj.at("stage").get<std::string>();
        std::string item = obj.at("item").get<std::string>();
        ItemStatus st = status_from_name(obj.at("status").get<std::string>());
        auto& prog = out[stage];
        switch (st) {
            case ItemStatus::Done:
                if (done.insert(stage + "\x1f" + item).second) ++prog.done;
                break;
            case ItemStatus::Failed: ++prog.failed; break;
            case ItemStatus::Skipped:
                if (done.insert(stage + "\x1f" + item).second) ++prog.skipped;
                break;
        }
    }
    return out;
}

}  // namespace taskforge
