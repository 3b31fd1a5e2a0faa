#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taskforge/qa.hpp"
#include "taskforge/referee.hpp"
#include "taskforge/sampler.hpp"
#include "taskforge/taxonomy.hpp"

namespace taskforge {

struct ImageRecord {
    std::string image_id;  // 128-bit content hash prefix (32 hex chars)
    std::string source_dataset;
    std::string uri;
    std::optional<int> width;
    std::optional<int> height;
};

struct IngestReport {
    size_t rows = 0;
    size_t duplicates = 0;
    size_t quarantined = 0;
    std::map<std::string, size_t> per_source;
    std::vector<std::string> quarantined_uris;
};

// Manifest is CSV (header required, columns source,uri[,width,height]) or
// JSONL. Deduplicates by content hash; unreadable entries are quarantined,
// not fatal.
std::vector<ImageRecord> ingest_manifest(const std::string& path, IngestReport* report = nullptr);

struct ProvenanceInfo {
    std::string generator;
    std::vector<std::string> referees;
    std::vector<int> votes;
};

struct DatasetSample {
    std::string id;
    std::string image;  // path relative to the export dir
    std::string question;
    std::string answer;
    TaskTypePath task_path;
    ProvenanceInfo provenance;
};

struct DataCard {
    size_t total_samples = 0;
    size_t total_task_types = 0;
    size_t total_images = 0;
    std::map<int, size_t> per_level_task_counts;
    std::map<std::string, size_t> per_source_image_counts;
    DistributionStats distribution;
    std::string config_hash;

    std::string to_json() const;
};

struct ExportManifest {
    std::map<std::string, std::string> artifact_sha256;  // file -> hash
};

// The conversation-format token that prefixes every human turn.
inline constexpr const char* kImagePlaceholder = "<image>";

// Writes dataset.jsonl (sorted by id, fixed key order), an images/ tree of
// symlinks, datacard.json, and manifest.json with SHA-256 per artifact.
// Throws OutputExistsError unless force is set.
ExportManifest export_dataset(const std::vector<DatasetSample>& samples,
                              const std::map<std::string, ImageRecord>& images_by_id,
                              const Taxonomy& taxonomy, const std::string& out_dir,
                              const std::string& config_hash, bool force = false);

DataCard emit_data_card(const std::vector<DatasetSample>& samples,
                        const std::map<std::string, ImageRecord>& images_by_id,
                        const Taxonomy& taxonomy, const std::string& config_hash);

// Re-reads an exported dataset.jsonl.
std::vector<DatasetSample> load_dataset(const std::string& dataset_jsonl_path);

// Builds a stable sample id from its identifying content.
std::string sample_id(const std::string& image_id, const TaskTypePath& task,
                      const std::string& question);

}  // namespace taskforge
