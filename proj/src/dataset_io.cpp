#include "taskforge/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "taskforge/hash.hpp"
#include "taskforge/strings.hpp"

namespace taskforge {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// Minimal CSV field split; quoted fields with embedded commas supported.
std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

struct ManifestRow {
    std::string source;
    std::string uri;
    std::optional<int> width;
    std::optional<int> height;
};

std::vector<ManifestRow> read_manifest_rows(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MalformedManifestError("cannot open manifest: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    auto lines = strings::split_lines(ss.str());
    if (lines.empty()) throw MalformedManifestError("empty manifest: " + path);

    std::vector<ManifestRow> rows;
    std::string first = strings::trim(lines.front());
    if (!first.empty() && first.front() == '{') {
        // JSONL
        for (const auto& line : lines) {
            std::string t = strings::trim(line);
            if (t.empty()) continue;
            json obj;
            try {
                obj = json::parse(t);
            } catch (const json::exception& e) {
                throw MalformedManifestError(std::string("bad jsonl row: ") + e.what());
            }
            if (!obj.contains("source") || !obj.contains("uri"))
                throw MalformedManifestError("jsonl row missing source/uri");
            ManifestRow row;
            row.source = obj["source"].get<std::string>();
            row.uri = obj["uri"].get<std::string>();
            if (obj.contains("width")) row.width = obj["width"].get<int>();
            if (obj.contains("height")) row.height = obj["height"].get<int>();
            rows.push_back(std::move(row));
        }
        return rows;
    }

    // CSV with required header
    auto header = csv_fields(first);
    std::map<std::string, size_t> col;
    for (size_t i = 0; i < header.size(); ++i) col[strings::lower(strings::trim(header[i]))] = i;
    if (!col.count("source") || !col.count("uri"))
        throw MalformedManifestError("csv header must name source and uri columns");
    for (size_t li = 1; li < lines.size(); ++li) {
        std::string t = strings::trim(lines[li]);
        if (t.empty()) continue;
        auto fields = csv_fields(lines[li]);
        if (fields.size() < header.size())
            throw MalformedManifestError("short csv row at line " + std::to_string(li + 1));
        ManifestRow row;
        row.source = strings::trim(fields[col["source"]]);
        row.uri = strings::trim(fields[col["uri"]]);
        if (col.count("width") && !strings::trim(fields[col["width"]]).empty())
            row.width = std::stoi(fields[col["width"]]);
        if (col.count("height") && !strings::trim(fields[col["height"]]).empty())
            row.height = std::stoi(fields[col["height"]]);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::vector<ImageRecord> ingest_manifest(const std::string& path, IngestReport* report) {
    IngestReport local;
    IngestReport& rep = report ? *report : local;

    std::vector<ImageRecord> out;
    std::set<std::string> seen_hashes;
    for (const auto& row : read_manifest_rows(path)) {
        ++rep.rows;
        std::string content_hash;
        try {
            content_hash = hash::sha256_file_hex(row.uri);
        } catch (const std::exception&) {
            ++rep.quarantined;
            rep.quarantined_uris.push_back(row.uri);
            continue;
        }
        std::string image_id = content_hash.substr(0, 32);  // 128-bit prefix
        if (!seen_hashes.insert(image_id).second) {
            ++rep.duplicates;
            continue;
        }
        ++rep.per_source[row.source];
        out.push_back({image_id, row.source, row.uri, row.width, row.height});
    }
    return out;
}

std::string sample_id(const std::string& image_id, const TaskTypePath& task,
                      const std::string& question) {
    return hash::sha256_hex(image_id + "\x1f" + task.render() + "\x1f" + question).substr(0, 32);
}

namespace {

ojson sample_to_json(const DatasetSample& s) {
    ojson conversations = ojson::array();
    conversations.push_back(
        {{"from", "human"}, {"value", std::string(kImagePlaceholder) + "\n" + s.question}});
    conversations.push_back({{"from", "gpt"}, {"value", s.answer}});
    ojson obj;
    obj["id"] = s.id;
    obj["image"] = s.image;
    obj["conversations"] = conversations;
    obj["task_path"] = s.task_path.render();
    obj["provenance"] = {{"generator", s.provenance.generator},
                         {"referees", s.provenance.referees},
                         {"votes", s.provenance.votes}};
    return obj;
}

std::string image_id_from_rel_path(const std::string& rel) {
    fs::path p(rel);
    return p.stem().string();
}

}  // namespace

DataCard emit_data_card(const std::vector<DatasetSample>& samples,
                        const std::map<std::string, ImageRecord>& images_by_id,
                        const Taxonomy& taxonomy, const std::string& config_hash) {
    DataCard card;
    card.total_samples = samples.size();
    card.config_hash = config_hash;

    std::map<std::string, size_t> per_task;
    std::set<std::string> image_ids;
    for (const auto& s : samples) {
        ++per_task[s.task_path.render()];
        image_ids.insert(image_id_from_rel_path(s.image));
    }
    card.total_task_types = per_task.size();
    card.total_images = image_ids.size();
    card.per_level_task_counts = taxonomy.level_counts();
    for (const auto& id : image_ids) {
        auto it = images_by_id.find(id);
        if (it != images_by_id.end()) ++card.per_source_image_counts[it->second.source_dataset];
    }
    card.distribution = distribution(per_task);
    return card;
}

std::string DataCard::to_json() const {
    ojson buckets = ojson::array();
    auto props = distribution.proportions();
    for (size_t i = 0; i < distribution.bucket_edges.size(); ++i) {
        buckets.push_back({{"lo", distribution.bucket_edges[i].lo},
                           {"hi", distribution.bucket_edges[i].hi},
                           {"task_types", distribution.bucket_counts[i]},
                           {"proportion", props[i]}});
    }
    ojson obj;
    obj["totals"] = {{"samples", total_samples},
                     {"task_types", total_task_types},
                     {"images", total_images}};
    ojson levels;
    for (const auto& [level, count] : per_level_task_counts)
        levels[std::to_string(level)] = count;
    obj["per_level_task_counts"] = levels;
    obj["per_source_image_counts"] = per_source_image_counts;
    obj["distribution"] = {{"buckets", buckets},
                           {"total_tasks", distribution.total_tasks},
                           {"total_samples", distribution.total_samples}};
    obj["config_hash"] = config_hash;
    return obj.dump(2) + "\n";
}

ExportManifest export_dataset(const std::vector<DatasetSample>& samples,
                              const std::map<std::string, ImageRecord>& images_by_id,
                              const Taxonomy& taxonomy, const std::string& out_dir,
                              const std::string& config_hash, bool force) {
    fs::path dir(out_dir);
    fs::path dataset_path = dir / "dataset.jsonl";
    if (fs::exists(dataset_path) && !force)
        throw OutputExistsError("output exists, pass force: " + dataset_path.string());
    fs::create_directories(dir / "images");

    std::vector<DatasetSample> sorted = samples;
    std::sort(sorted.begin(), sorted.end(),
              [](const DatasetSample& a, const DatasetSample& b) { return a.id < b.id; });

    std::set<std::string> linked;
    for (auto& s : sorted) {
        std::string image_id = image_id_from_rel_path(s.image);
        auto it = images_by_id.find(image_id);
        if (it == images_by_id.end())
            throw UnresolvedImageError("sample " + s.id + " references unknown image " + image_id);
        if (!fs::exists(it->second.uri))
            throw UnresolvedImageError("image file missing: " + it->second.uri);
        if (linked.insert(image_id).second) {
            fs::path link = dir / s.image;
            std::error_code ec;
            fs::remove(link, ec);
            fs::create_symlink(fs::absolute(it->second.uri), link, ec);
            if (ec) fs::copy_file(it->second.uri, link, fs::copy_options::overwrite_existing);
        }
    }

    {
        std::ofstream f(dataset_path, std::ios::binary | std::ios::trunc);
        for (const auto& s : sorted) f << sample_to_json(s).dump() << "\n";
    }

    DataCard card = emit_data_card(sorted, images_by_id, taxonomy, config_hash);
    {
        std::ofstream f(dir / "datacard.json", std::ios::binary | std::ios::trunc);
        f << card.to_json();
    }
    taxonomy.save((dir / "taxonomy.txt").string());

    // manifest last: it is the commit point
    ExportManifest manifest;
    manifest.artifact_sha256["dataset.jsonl"] = hash::sha256_file_hex(dataset_path.string());
    manifest.artifact_sha256["datacard.json"] =
        hash::sha256_file_hex((dir / "datacard.json").string());
    manifest.artifact_sha256["taxonomy.txt"] =
        hash::sha256_file_hex((dir / "taxonomy.txt").string());
    {
        ojson obj;
        obj["artifacts"] = manifest.artifact_sha256;
        std::ofstream f(dir / "manifest.json", std::ios::binary | std::ios::trunc);
        f << obj.dump(2) << "\n";
    }
    return manifest;
}

std::vector<DatasetSample> load_dataset(const std::string& dataset_jsonl_path) {
    std::ifstream f(dataset_jsonl_path, std::ios::binary);
    if (!f) throw Error("cannot open dataset: " + dataset_jsonl_path);
    std::vector<DatasetSample> out;
    std::string line;
    while (std::getline(f, line)) {
        if (strings::trim(line).empty()) continue;
        json obj = json::parse(line);
        DatasetSample s;
        s.id = obj.at("id").get<std::string>();
        s.image = obj.at("image").get<std::string>();
        const auto& conv = obj.at("conversations");
        if (conv.size() != 2) throw Error("sample " + s.id + " has wrong turn count");
        std::string human = conv.at(0).at("value").get<std::string>();
        std::string placeholder = std::string(kImagePlaceholder) + "\n";
        if (strings::starts_with(human, placeholder)) human = human.substr(placeholder.size());
        s.question = human;
        s.answer = conv.at(1).at("value").get<std::string>();
        s.task_path = TaskTypePath::parse(obj.at("task_path").get<std::string>());
        if (obj.contains("provenance")) {
            const auto& p = obj["provenance"];
            s.provenance.generator = p.value("generator", "");
            if (p.contains("referees"))
                s.provenance.referees = p["referees"].get<std::vector<std::string>>();
            if (p.contains("votes")) s.provenance.votes = p["votes"].get<std::vector<int>>();
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace taskforge
