#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace taskforge::jsonl {

// Checksummed JSONL used for crash-safe stage outputs: each line is
// `<json>\t<fnv64 hex>`. Lines that fail verification (torn tails) are
// dropped on read.
void append_checked(const std::string& path, const nlohmann::json& obj);
std::vector<nlohmann::json> read_checked(const std::string& path);

// Plain JSONL views (regenerated whole, no checksums).
void write_plain(const std::string& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_plain(const std::string& path);

}  // namespace taskforge::jsonl
