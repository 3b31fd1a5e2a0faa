#include <doctest.h>

#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "taskforge/dataset_io.hpp"
#include "taskforge/hash.hpp"
#include "util.hpp"

using namespace taskforge;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Three distinct images plus one byte-identical duplicate under another name.
void make_images(const testutil::TempDir& dir) {
    testutil::write_file(dir.str("a.jpg"), "bytes-of-image-a");
    testutil::write_file(dir.str("b.jpg"), "bytes-of-image-b");
    testutil::write_file(dir.str("c.jpg"), "bytes-of-image-c");
    testutil::write_file(dir.str("a-copy.jpg"), "bytes-of-image-a");
}

}  // namespace

TEST_CASE("csv manifest ingest dedups by content and quarantines bad rows") {
    testutil::TempDir dir;
    make_images(dir);
    std::string manifest = "source,uri,width,height\n";
    manifest += "coco," + dir.str("a.jpg") + ",640,480\n";
    manifest += "coco," + dir.str("b.jpg") + ",,\n";
    manifest += "web," + dir.str("a-copy.jpg") + ",,\n";     // duplicate bytes
    manifest += "web," + dir.str("missing.jpg") + ",,\n";    // unreadable
    testutil::write_file(dir.str("manifest.csv"), manifest);

    IngestReport rep;
    auto records = ingest_manifest(dir.str("manifest.csv"), &rep);
    CHECK(rep.rows == 4);
    CHECK(rep.duplicates == 1);
    CHECK(rep.quarantined == 1);
    REQUIRE(records.size() == 2);
    CHECK(records[0].image_id.size() == 32);
    CHECK(records[0].source_dataset == "coco");
    REQUIRE(records[0].width.has_value());
    CHECK(*records[0].width == 640);
    CHECK_FALSE(records[1].width.has_value());
    CHECK(rep.per_source.at("coco") == 2);
}

TEST_CASE("jsonl manifest ingest works and image ids are content hashes") {
    testutil::TempDir dir;
    make_images(dir);
    std::string manifest;
    manifest += json{{"source", "vqa"}, {"uri", dir.str("a.jpg")}}.dump() + "\n";
    manifest += json{{"source", "vqa"}, {"uri", dir.str("c.jpg")}, {"width", 32}}.dump() + "\n";
    testutil::write_file(dir.str("manifest.jsonl"), manifest);

    auto records = ingest_manifest(dir.str("manifest.jsonl"));
    REQUIRE(records.size() == 2);
    CHECK(records[0].image_id == hash::sha256_hex("bytes-of-image-a").substr(0, 32));
}

TEST_CASE("malformed manifests are rejected") {
    testutil::TempDir dir;
    testutil::write_file(dir.str("no-header.csv"), "coco,/x/y.jpg\n");
    CHECK_THROWS_AS(ingest_manifest(dir.str("no-header.csv")), MalformedManifestError);
    testutil::write_file(dir.str("bad.jsonl"), "{not json\n");
    CHECK_THROWS_AS(ingest_manifest(dir.str("bad.jsonl")), MalformedManifestError);
    CHECK_THROWS_AS(ingest_manifest(dir.str("absent.csv")), MalformedManifestError);
}

TEST_CASE("sample ids are stable 32-hex content digests") {
    auto task = TaskTypePath::parse("ocr");
    std::string id = sample_id("img1", task, "What?");
    CHECK(id.size() == 32);
    CHECK(id.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(sample_id("img1", task, "What?") == id);
    CHECK(sample_id("img2", task, "What?") != id);
    CHECK(sample_id("img1", task, "Other?") != id);
    CHECK(sample_id("img1", TaskTypePath::parse("detection"), "What?") != id);
}

namespace {

struct ExportFixture {
    testutil::TempDir dir;
    std::map<std::string, ImageRecord> images_by_id;
    Taxonomy tax;
    std::vector<DatasetSample> samples;
    std::string out_dir;

    ExportFixture() {
        make_images(dir);
        out_dir = dir.str("out");
        for (const char* name : {"a", "b", "c"}) {
            std::string uri = dir.str(std::string(name) + ".jpg");
            std::string id = hash::sha256_hex(testutil::read_file(uri)).substr(0, 32);
            images_by_id[id] = {id, "coco", uri, std::nullopt, std::nullopt};
        }
        tax.insert(TaskTypePath::parse("ocr~webpage ocr"), {PathOriginKind::Seed, ""});
        tax.insert(TaskTypePath::parse("detection"), {PathOriginKind::Seed, ""});

        int q = 0;
        for (const auto& [id, rec] : images_by_id) {
            for (const char* task : {"ocr~webpage ocr", "detection"}) {
                DatasetSample s;
                auto tp = TaskTypePath::parse(task);
                s.question = "Question " + std::to_string(q) + "?";
                s.answer = "Answer " + std::to_string(q++);
                s.id = sample_id(id, tp, s.question);
                s.image = "images/" + id + ".jpg";
                s.task_path = tp;
                s.provenance = {"mock", {"ra", "rb", "rc"}, {1, 1, 0}};
                samples.push_back(std::move(s));
            }
        }
    }
};

}  // namespace

TEST_CASE("export writes a sorted dataset with verifiable manifest") {
    ExportFixture fx;
    auto manifest = export_dataset(fx.samples, fx.images_by_id, fx.tax, fx.out_dir, "cfg123");

    // manifest hashes match the files on disk
    for (const auto& [name, digest] : manifest.artifact_sha256)
        CHECK(hash::sha256_file_hex(fx.out_dir + "/" + name) == digest);
    CHECK(manifest.artifact_sha256.count("dataset.jsonl") == 1);
    CHECK(manifest.artifact_sha256.count("datacard.json") == 1);
    CHECK(manifest.artifact_sha256.count("taxonomy.txt") == 1);
    CHECK(fs::exists(fx.out_dir + "/manifest.json"));

    auto loaded = load_dataset(fx.out_dir + "/dataset.jsonl");
    REQUIRE(loaded.size() == fx.samples.size());
    for (size_t i = 1; i < loaded.size(); ++i) CHECK(loaded[i - 1].id < loaded[i].id);
    for (const auto& s : loaded) {
        CHECK(fs::exists(fs::path(fx.out_dir) / s.image));
        CHECK(s.provenance.votes == std::vector<int>{1, 1, 0});
    }

    // conversation format: two turns, image placeholder first
    std::string first_line;
    {
        std::ifstream f(fx.out_dir + "/dataset.jsonl");
        std::getline(f, first_line);
    }
    json obj = json::parse(first_line);
    REQUIRE(obj.at("conversations").size() == 2);
    CHECK(obj["conversations"][0]["from"] == "human");
    std::string human = obj["conversations"][0]["value"];
    CHECK(human.rfind("<image>\n", 0) == 0);
    CHECK(obj["conversations"][1]["from"] == "gpt");
}

TEST_CASE("export refuses to clobber without force") {
    ExportFixture fx;
    export_dataset(fx.samples, fx.images_by_id, fx.tax, fx.out_dir, "cfg123");
    CHECK_THROWS_AS(export_dataset(fx.samples, fx.images_by_id, fx.tax, fx.out_dir, "cfg123"),
                    OutputExistsError);
    CHECK_NOTHROW(
        export_dataset(fx.samples, fx.images_by_id, fx.tax, fx.out_dir, "cfg123", true));
}

TEST_CASE("export fails on unresolved images") {
    ExportFixture fx;
    fx.samples[0].image = "images/ffffffffffffffffffffffffffffffff.jpg";
    CHECK_THROWS_AS(export_dataset(fx.samples, fx.images_by_id, fx.tax, fx.out_dir, "x"),
                    UnresolvedImageError);
}

TEST_CASE("datacard numbers match an independent recount") {
    ExportFixture fx;
    auto card = emit_data_card(fx.samples, fx.images_by_id, fx.tax, "cfg123");
    CHECK(card.total_samples == 6);
    CHECK(card.total_task_types == 2);
    CHECK(card.total_images == 3);
    CHECK(card.per_level_task_counts.at(1) == 2);  // ocr, detection
    CHECK(card.per_level_task_counts.at(2) == 1);  // ocr~webpage ocr
    CHECK(card.per_source_image_counts.at("coco") == 3);
    CHECK(card.distribution.total_tasks == 2);
    CHECK(card.distribution.total_samples == 6);

    json parsed = json::parse(card.to_json());
    CHECK(parsed["totals"]["samples"] == 6);
    CHECK(parsed["config_hash"] == "cfg123");
    size_t bucket_sum = 0;
    for (const auto& b : parsed["distribution"]["buckets"])
        bucket_sum += b["task_types"].get<size_t>();
    CHECK(bucket_sum == 2);
}
