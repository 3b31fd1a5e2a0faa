#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "taskforge/errors.hpp"

namespace taskforge {

struct BackendSpec {
    std::string id;
    std::string type = "mock";  // mock | http
    std::string base_url;
    std::string api_key;
    std::string model;
    size_t embedding_dim = 64;
};

// Structured key-value run configuration. `${VAR}` values are interpolated
// from the environment at parse time (secrets stay out of the file); the
// config hash is computed over the interpolated, canonicalized entries.
struct RunConfig {
    // paths
    std::string workdir = "work";
    std::string out_dir = "out";
    std::string image_manifest;
    std::string seed_taxonomy;     // file of '~'-joined paths
    std::string prompt_dir;        // optional template overrides

    // stage backends
    std::string chat_backend = "mock";       // expand/filter/qagen/cot
    std::string embedding_backend = "mock";
    std::vector<std::string> referee_backends = {"mock-ref-a", "mock-ref-b", "mock-ref-c"};
    std::map<std::string, BackendSpec> backends;

    // knobs
    int k = 10;
    int max_per_task = 55;
    bool allow_cap_override = false;
    bool random_cap_per_task = false;
    uint64_t seed = 0;
    int max_in_flight = 8;
    int max_retries = 3;
    double requests_per_minute = 0;
    double failure_ceiling = 0.10;
    bool cot_enabled = false;
    int expansion_rounds = 1;
    int expansion_max_level = 3;
    double min_similarity = -2.0;  // pre-filter floor, off by default
    int mock_referee_yes_percent = 80;
    std::string mock_call_log;  // optional mock call audit file

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_text(const std::string& text);

    // Hash binding a ledger to its configuration.
    std::string config_hash() const;

    void validate() const;

private:
    std::map<std::string, std::string> raw_entries_;
};

}  // namespace taskforge
