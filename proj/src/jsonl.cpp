#include "taskforge/jsonl.hpp"

#include <unistd.h>

#include <cstdio>
#include <fstream>

#include "taskforge/errors.hpp"
#include "taskforge/hash.hpp"

namespace taskforge::jsonl {

using nlohmann::json;

namespace {

std::string checksum(const std::string& payload) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(hash::fnv1a64(payload)));
    return buf;
}

}  // namespace

void append_checked(const std::string& path, const json& obj) {
    std::FILE* f = std::fopen(path.c_str(), "ab");
    if (!f) throw Error("cannot append to " + path);
    std::string payload = obj.dump();
    std::string line = payload + "\t" + checksum(payload) + "\n";
    std::fwrite(line.data(), 1, line.size(), f);
    std::fflush(f);
    ::fsync(fileno(f));
    std::fclose(f);
}

std::vector<json> read_checked(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::vector<json> out;
    if (!f) return out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        size_t sep = line.rfind('\t');
        if (sep == std::string::npos) continue;
        std::string payload = line.substr(0, sep);
        if (line.substr(sep + 1) != checksum(payload)) continue;
        out.push_back(json::parse(payload));
    }
    return out;
}

void write_plain(const std::string& path, const std::vector<json>& rows) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path);
    for (const auto& row : rows) f << row.dump() << "\n";
}

std::vector<json> read_plain(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::vector<json> out;
    if (!f) return out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(json::parse(line));
    }
    return out;
}

}  // namespace taskforge::jsonl
