#include "taskforge/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "taskforge/hash.hpp"
#include "taskforge/jsonl.hpp"
#include "taskforge/matching.hpp"
#include "taskforge/qa.hpp"
#include "taskforge/referee.hpp"
#include "taskforge/sampler.hpp"
#include "taskforge/strings.hpp"

namespace taskforge {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string stage_name(StageId id) {
    switch (id) {
        case StageId::Expand: return "expand";
        case StageId::Embed: return "embed";
        case StageId::Match: return "match";
        case StageId::Filter: return "filter";
        case StageId::QaGen: return "qagen";
        case StageId::Cot: return "cot";
        case StageId::Referee: return "referee";
        case StageId::Balance: return "balance";
        case StageId::Export: return "export";
    }
    throw Error("unknown stage");
}

StageId stage_from_name(const std::string& name) {
    for (StageId id : stage_order())
        if (stage_name(id) == name) return id;
    throw ConfigError("unknown stage name: " + name);
}

std::vector<StageId> stage_order() {
    return {StageId::Expand, StageId::Embed,   StageId::Match,
            StageId::Filter, StageId::QaGen,   StageId::Cot,
            StageId::Referee, StageId::Balance, StageId::Export};
}

namespace {

// Task types named in the paper's pipeline description, used when no seed
// file is configured.
const char* kDefaultSeeds =
    "ocr\n"
    "ocr~webpage ocr\n"
    "image description\n"
    "logical reasoning\n"
    "logical reasoning~complex reasoning~software and coding\n"
    "detection\n"
    "detection~anomaly detection\n"
    "multiple choice questions\n"
    "fill-in-the-blank questions\n";

struct PairRecord {
    TaskTypePath task;
    std::string question;
    std::string answer;
    bool cot = false;
    std::string parser;
};

json pair_to_json(const PairRecord& p) {
    return {{"task", p.task.render()},
            {"question", p.question},
            {"answer", p.answer},
            {"cot", p.cot},
            {"parser", p.parser}};
}

PairRecord pair_from_json(const json& obj) {
    PairRecord p;
    p.task = TaskTypePath::parse(obj.at("task").get<std::string>());
    p.question = obj.at("question").get<std::string>();
    p.answer = obj.at("answer").get<std::string>();
    p.cot = obj.value("cot", false);
    p.parser = obj.value("parser", "strict");
    return p;
}

std::string image_ext(const std::string& uri) {
    std::string ext = fs::path(uri).extension().string();
    return ext.empty() ? ".img" : ext;
}

}  // namespace

struct Pipeline::Impl {
    RunConfig cfg;
    fs::path workdir;
    fs::path items_dir;
    std::shared_ptr<MockBackend> shared_mock;
    std::shared_ptr<EmbeddingCache> cache;
    std::map<std::string, std::unique_ptr<Gateway>> gateways;
    PromptLibrary prompts;
    std::unique_ptr<CheckpointLedger> ledger;
    int lock_fd = -1;
    std::mutex io_mu;

    explicit Impl(RunConfig c) : cfg(std::move(c)) {
        workdir = cfg.workdir;
        items_dir = workdir / "items";
        fs::create_directories(items_dir);
        if (!cfg.prompt_dir.empty()) prompts = PromptLibrary::with_overrides(cfg.prompt_dir);
        cache = std::make_shared<EmbeddingCache>((workdir / "embeddings.bin").string());
    }

    ~Impl() {
        if (lock_fd >= 0) ::close(lock_fd);
    }

    Gateway& gateway(const std::string& backend_id) {
        auto it = gateways.find(backend_id);
        if (it != gateways.end()) return *it->second;

        BackendSpec spec;
        if (auto bit = cfg.backends.find(backend_id); bit != cfg.backends.end())
            spec = bit->second;
        else
            spec.id = backend_id;  // default: mock

        std::shared_ptr<Backend> backend;
        if (spec.type == "mock") {
            if (!shared_mock) {
                shared_mock = std::make_shared<MockBackend>(cfg.seed, spec.embedding_dim);
                shared_mock->set_referee_yes_percent(cfg.mock_referee_yes_percent);
                if (!cfg.mock_call_log.empty()) shared_mock->set_call_log(cfg.mock_call_log);
            }
            backend = shared_mock;
        } else {
            backend = std::make_shared<HttpBackend>(spec.base_url, spec.api_key, spec.model,
                                                    spec.embedding_dim);
        }
        GatewayConfig gcfg;
        gcfg.max_retries = cfg.max_retries;
        gcfg.max_in_flight = cfg.max_in_flight;
        gcfg.requests_per_minute = cfg.requests_per_minute;
        auto gw = std::make_unique<Gateway>(std::move(backend), gcfg, cache);
        return *gateways.emplace(backend_id, std::move(gw)).first->second;
    }

    fs::path items_file(const std::string& stage) const {
        return items_dir / (stage + ".jsonl");
    }

    std::map<std::string, json> load_items(const std::string& stage) const {
        std::map<std::string, json> out;
        for (const auto& obj : jsonl::read_checked(items_file(stage).string()))
            out[obj.at("item").get<std::string>()] = obj.at("data");
        return out;
    }

    // Runs pending items through a bounded worker pool; results are appended
    // to the stage item file before the ledger records completion.
    void process(const std::string& stage, const std::vector<std::string>& item_ids,
                 const std::function<std::pair<json, ItemStatus>(const std::string&)>& fn,
                 StageRunStats& stats) {
        stats.items += item_ids.size();
        std::vector<std::string> pending;
        for (const auto& id : item_ids) {
            if (ledger->is_done(stage, id)) {
                ++stats.prior;
            } else {
                pending.push_back(id);
            }
        }
        if (pending.empty()) return;

        std::atomic<size_t> next{0};
        std::atomic<size_t> executed{0}, skipped{0}, failed{0};
        size_t n_threads = std::min<size_t>(cfg.max_in_flight, pending.size());
        auto worker = [&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= pending.size()) return;
                const std::string& id = pending[i];
                try {
                    auto [data, status] = fn(id);
                    std::string payload_hash = hash::sha256_hex(data.dump()).substr(0, 16);
                    {
                        std::lock_guard lock(io_mu);
                        jsonl::append_checked(items_file(stage).string(),
                                              json{{"item", id}, {"data", data}});
                    }
                    ledger->record(stage, id, status, payload_hash);
                    if (status == ItemStatus::Skipped)
                        ++skipped;
                    else
                        ++executed;
                } catch (const std::exception& e) {
                    ledger->record(stage, id, ItemStatus::Failed,
                                   hash::sha256_hex(e.what()).substr(0, 16));
                    ++failed;
                }
            }
        };
        std::vector<std::thread> threads;
        for (size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();

        stats.executed += executed;
        stats.skipped += skipped;
        stats.failed += failed;
        if (static_cast<double>(failed) >
            cfg.failure_ceiling * static_cast<double>(item_ids.size()))
            throw StageFailedThresholdError(stage + ": " + std::to_string(failed) + "/" +
                                            std::to_string(item_ids.size()) +
                                            " items failed, over the ceiling");
    }

    // ------------------------------------------------------------ stages

    Taxonomy load_seed_taxonomy() const {
        if (!cfg.seed_taxonomy.empty()) return Taxonomy::load(cfg.seed_taxonomy);
        return Taxonomy::from_lines(kDefaultSeeds, {PathOriginKind::Seed, ""});
    }

    void stage_expand(StageRunStats& stats) {
        Taxonomy state = load_seed_taxonomy();
        PathOrigin origin{PathOriginKind::Expanded, cfg.config_hash()};

        for (int level = 1; level <= cfg.expansion_max_level; ++level) {
            for (int round = 0; round < cfg.expansion_rounds; ++round) {
                std::vector<std::optional<TaskTypePath>> parents;
                if (level == 1) {
                    parents.push_back(std::nullopt);
                } else {
                    for (const auto& p : state.paths_at_level(level - 1)) parents.push_back(p);
                }
                std::vector<std::string> item_ids;
                std::map<std::string, std::optional<TaskTypePath>> parent_by_item;
                for (const auto& p : parents) {
                    std::string id = "L" + std::to_string(level) + ".R" + std::to_string(round) +
                                     "." + (p ? p->render() : "root");
                    item_ids.push_back(id);
                    parent_by_item[id] = p;
                }

                process(
                    "expand", item_ids,
                    [&](const std::string& id) -> std::pair<json, ItemStatus> {
                        const auto& parent = parent_by_item.at(id);
                        std::vector<std::string> siblings = state.children(parent);
                        auto req = ExpansionRequest::make(level, parent, siblings);
                        ChatRequest creq;
                        creq.backend_id = cfg.chat_backend;
                        creq.stage = ChatStage::Expand;
                        creq.template_id = template_id_name(req.template_id);
                        if (parent) creq.slots["parent_task"] = parent->render();
                        creq.slots[level == 1 ? "known_categories" : "known_subcategories"] =
                            strings::join(siblings, ", ");
                        creq.prompt = prompts.build_expansion_prompt(req);
                        ChatResponse resp = gateway(cfg.chat_backend).chat(creq);

                        ExpansionParseReport rep;
                        auto paths = parse_expansion_response(resp.text, req, &rep);
                        json out;
                        out["paths"] = json::array();
                        for (const auto& p : paths) out["paths"].push_back(p.render());
                        out["skipped"] = rep.skipped();
                        out["rerooted"] = rep.rerooted;
                        return {out, ItemStatus::Done};
                    },
                    stats);

                // merge the round through the single writer
                auto results = load_items("expand");
                for (const auto& id : item_ids) {
                    auto it = results.find(id);
                    if (it == results.end()) continue;  // failed item
                    for (const auto& p : it->second.at("paths"))
                        state.insert(TaskTypePath::parse(p.get<std::string>()), origin);
                }
            }
        }
        state.save((workdir / "taxonomy.txt").string());
    }

    std::vector<ImageRecord> load_images() const {
        std::vector<ImageRecord> out;
        for (const auto& obj : jsonl::read_plain((workdir / "images.jsonl").string())) {
            ImageRecord rec;
            rec.image_id = obj.at("image_id").get<std::string>();
            rec.source_dataset = obj.at("source").get<std::string>();
            rec.uri = obj.at("uri").get<std::string>();
            if (obj.contains("width") && !obj["width"].is_null())
                rec.width = obj["width"].get<int>();
            if (obj.contains("height") && !obj["height"].is_null())
                rec.height = obj["height"].get<int>();
            out.push_back(std::move(rec));
        }
        return out;
    }

    void stage_embed(StageRunStats& stats) {
        // ingest first: later items need the image list
        process(
            "embed", {"ingest"},
            [&](const std::string&) -> std::pair<json, ItemStatus> {
                if (cfg.image_manifest.empty())
                    throw ConfigError("image_manifest is required for the embed stage");
                IngestReport rep;
                auto records = ingest_manifest(cfg.image_manifest, &rep);
                std::sort(records.begin(), records.end(),
                          [](const ImageRecord& a, const ImageRecord& b) {
                              return a.image_id < b.image_id;
                          });
                std::vector<json> rows;
                for (const auto& r : records) {
                    json row = {{"image_id", r.image_id}, {"source", r.source_dataset},
                                {"uri", r.uri}};
                    if (r.width) row["width"] = *r.width;
                    if (r.height) row["height"] = *r.height;
                    rows.push_back(std::move(row));
                }
                jsonl::write_plain((workdir / "images.jsonl").string(), rows);
                json out = {{"rows", rep.rows},
                            {"records", records.size()},
                            {"duplicates", rep.duplicates},
                            {"quarantined", rep.quarantined},
                            {"per_source", rep.per_source}};
                return {out, ItemStatus::Done};
            },
            stats);

        auto images = load_images();
        Taxonomy tax = Taxonomy::load((workdir / "taxonomy.txt").string());

        std::vector<std::string> item_ids;
        std::map<std::string, std::string> uri_by_item;
        for (const auto& img : images) {
            item_ids.push_back("img:" + img.image_id);
            uri_by_item["img:" + img.image_id] = img.uri;
        }
        for (const auto& p : tax.all_paths()) item_ids.push_back("task:" + p.render());

        process(
            "embed", item_ids,
            [&](const std::string& id) -> std::pair<json, ItemStatus> {
                EmbeddingVector v;
                if (strings::starts_with(id, "img:")) {
                    v = gateway(cfg.embedding_backend)
                            .embed_image(cfg.embedding_backend, uri_by_item.at(id));
                } else {
                    v = gateway(cfg.embedding_backend)
                            .embed_text(cfg.embedding_backend, id.substr(5));
                }
                return {json{{"dim", v.dimension()}}, ItemStatus::Done};
            },
            stats);
    }

    void stage_match(StageRunStats& stats) {
        auto images = load_images();
        Taxonomy tax = Taxonomy::load((workdir / "taxonomy.txt").string());

        std::vector<ScoredTask> tasks;
        for (const auto& p : tax.all_paths())
            tasks.push_back({p, gateway(cfg.embedding_backend)
                                    .embed_text(cfg.embedding_backend, p.render())});

        MatchConfig mcfg;
        mcfg.k = cfg.k;
        mcfg.min_score = cfg.min_similarity;

        std::map<std::string, std::string> uri_by_id;
        std::vector<std::string> item_ids;
        for (const auto& img : images) {
            item_ids.push_back("img:" + img.image_id);
            uri_by_id[img.image_id] = img.uri;
        }

        process(
            "match", item_ids,
            [&](const std::string& id) -> std::pair<json, ItemStatus> {
                std::string image_id = id.substr(4);
                EmbeddingVector iv = gateway(cfg.embedding_backend)
                                         .embed_image(cfg.embedding_backend,
                                                      uri_by_id.at(image_id));
                auto matches = top_k_tasks(image_id, iv, tasks, mcfg);
                json cands = json::array();
                for (const auto& m : matches)
                    cands.push_back({{"task", m.task_path.render()},
                                     {"score", m.score},
                                     {"rank", m.rank}});
                return {json{{"candidates", cands}}, ItemStatus::Done};
            },
            stats);

        write_match_view();
    }

    void write_match_view() {
        auto items = load_items("match");
        std::vector<json> rows;
        for (const auto& [id, data] : items) {
            if (!strings::starts_with(id, "img:")) continue;
            rows.push_back({{"image_id", id.substr(4)}, {"candidates", data.at("candidates")}});
        }
        jsonl::write_plain((workdir / "match.jsonl").string(), rows);
    }

    void stage_filter(StageRunStats& stats) {
        auto images = load_images();
        auto match_items = load_items("match");
        std::map<std::string, std::string> uri_by_id;
        std::vector<std::string> item_ids;
        for (const auto& img : images) {
            item_ids.push_back("img:" + img.image_id);
            uri_by_id[img.image_id] = img.uri;
        }

        process(
            "filter", item_ids,
            [&](const std::string& id) -> std::pair<json, ItemStatus> {
                std::string image_id = id.substr(4);
                auto mit = match_items.find(id);
                if (mit == match_items.end())
                    return {json{{"filtered", json::array()}}, ItemStatus::Skipped};

                std::vector<TaskTypePath> candidates;
                for (const auto& c : mit->second.at("candidates"))
                    candidates.push_back(TaskTypePath::parse(c.at("task").get<std::string>()));
                if (candidates.empty())
                    return {json{{"filtered", json::array()}}, ItemStatus::Skipped};

                ChatRequest creq;
                creq.backend_id = cfg.chat_backend;
                creq.stage = ChatStage::Filter;
                creq.template_id = "p_filter";
                std::vector<std::string> rendered;
                for (const auto& c : candidates) rendered.push_back(c.render());
                creq.slots["init_task_type"] = strings::join(rendered, ", ");
                creq.prompt = prompts.build_filter_prompt(candidates);
                creq.image_ref = uri_by_id.at(image_id);

                std::vector<TaskTypePath> filtered;
                FilterParseReport rep;
                bool fail_open = false;
                try {
                    filtered =
                        parse_filter_response(gateway(cfg.chat_backend).chat(creq).text,
                                              candidates, &rep);
                } catch (const UnparseableError&) {
                    try {  // one retry with the same prompt
                        filtered =
                            parse_filter_response(gateway(cfg.chat_backend).chat(creq).text,
                                                  candidates, &rep);
                    } catch (const UnparseableError&) {
                        filtered = candidates;  // fail-open: keep raw top-k
                        fail_open = true;
                    }
                }
                json out;
                out["filtered"] = json::array();
                for (const auto& f : filtered) out["filtered"].push_back(f.render());
                out["fail_open"] = fail_open;
                out["dropped"] = rep.dropped_count;
                return {out, ItemStatus::Done};
            },
            stats);

        // combined per-image view: candidates + filtered
        auto filter_items = load_items("filter");
        std::vector<json> rows;
        for (const auto& [id, data] : filter_items) {
            json row = {{"image_id", id.substr(4)}, {"filtered", data.at("filtered")}};
            if (auto mit = match_items.find(id); mit != match_items.end())
                row["candidates"] = mit->second.at("candidates");
            else
                row["candidates"] = json::array();
            rows.push_back(std::move(row));
        }
        jsonl::write_plain((workdir / "filter.jsonl").string(), rows);
    }

    void stage_qagen(StageRunStats& stats) {
        auto images = load_images();
        auto filter_items = load_items("filter");
        std::map<std::string, std::string> uri_by_id;
        std::vector<std::string> item_ids;
        for (const auto& img : images) {
            item_ids.push_back("img:" + img.image_id);
            uri_by_id[img.image_id] = img.uri;
        }

        process(
            "qagen", item_ids,
            [&](const std::string& id) -> std::pair<json, ItemStatus> {
                std::string image_id = id.substr(4);
                auto fit = filter_items.find(id);
                std::vector<TaskTypePath> filtered;
                if (fit != filter_items.end())
                    for (const auto& t : fit->second.at("filtered"))
                        filtered.push_back(TaskTypePath::parse(t.get<std::string>()));
                if (filtered.empty())
                    return {json{{"pairs", json::array()}}, ItemStatus::Skipped};

                ChatRequest creq;
                creq.backend_id = cfg.chat_backend;
                creq.stage = ChatStage::QaGen;
                creq.template_id = "p_qa";
                std::vector<std::string> rendered;
                for (const auto& t : filtered) rendered.push_back(t.render());
                creq.slots["task_labels"] = strings::join(rendered, ", ");
                creq.prompt = prompts.build_qa_prompt(filtered);
                creq.image_ref = uri_by_id.at(image_id);

                std::vector<QACandidate> pairs;
                QaParseReport rep;
                try {
                    pairs = parse_qa_response(gateway(cfg.chat_backend).chat(creq).text,
                                              image_id, filtered, &rep);
                } catch (const UnparseableError&) {
                    try {  // one retry, then the image is skipped for this stage
                        pairs = parse_qa_response(gateway(cfg.chat_backend).chat(creq).text,
                                                  image_id, filtered, &rep);
                    } catch (const UnparseableError&) {
                        return {json{{"pairs", json::array()}, {"unparseable", true}},
                                ItemStatus::Skipped};
                    }
                }
                json out;
                out["pairs"] = json::array();
                for (const auto& p : pairs)
                    out["pairs"].push_back(pair_to_json(
                        {p.task_path, p.question, p.answer, p.cot, p.parser}));
                out["foreign_task"] = rep.foreign_task;
                out["lenient_lines"] = rep.lenient_lines;
                return {out, ItemStatus::Done};
            },
            stats);

        write_pair_view("qagen", workdir / "qagen.jsonl");
    }

    void write_pair_view(const std::string& stage, const fs::path& path) {
        auto items = load_items(stage);
        std::vector<json> rows;
        for (const auto& [id, data] : items) {
            if (!strings::starts_with(id, "img:")) continue;
            for (const auto& p : data.at("pairs")) {
                json row = p;
                row["image_id"] = id.substr(4);
                rows.push_back(std::move(row));
            }
        }
        std::sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
            auto ka = std::make_pair(a.at("image_id").get<std::string>(),
                                     a.at("task").get<std::string>());
            auto kb = std::make_pair(b.at("image_id").get<std::string>(),
                                     b.at("task").get<std::string>());
            return ka < kb;
        });
        jsonl::write_plain(path.string(), rows);
    }

    void stage_cot(StageRunStats& stats) {
        auto images = load_images();
        auto qa_items = load_items("qagen");
        std::map<std::string, std::string> uri_by_id;
        std::vector<std::string> item_ids;
        for (const auto& img : images) {
            item_ids.push_back("img:" + img.image_id);
            uri_by_id[img.image_id] = img.uri;
        }

        process(
            "cot", item_ids,
            [&](const std::string& id) -> std::pair<json, ItemStatus> {
                auto qit = qa_items.find(id);
                if (qit == qa_items.end() || qit->second.at("pairs").empty())
                    return {json{{"pairs", json::array()}}, ItemStatus::Skipped};

                json out_pairs = json::array();
                for (const auto& pj : qit->second.at("pairs")) {
                    PairRecord p = pair_from_json(pj);
                    ChatRequest creq;
                    creq.backend_id = cfg.chat_backend;
                    creq.stage = ChatStage::Cot;
                    creq.template_id = "p_cot";
                    creq.slots["question"] = p.question;
                    creq.prompt = prompts.build_cot_prompt(p.question);
                    creq.image_ref = uri_by_id.at(id.substr(4));
                    p.answer = gateway(cfg.chat_backend).chat(creq).text;
                    p.cot = true;
                    out_pairs.push_back(pair_to_json(p));
                }
                return {json{{"pairs", out_pairs}}, ItemStatus::Done};
            },
            stats);

        write_pair_view("cot", workdir / "cot.jsonl");
    }

    void stage_referee(StageRunStats& stats) {
        auto images = load_images();
        std::string source_stage = cfg.cot_enabled ? "cot" : "qagen";
        auto pair_items = load_items(source_stage);
        std::map<std::string, std::string> uri_by_id;
        std::vector<std::string> item_ids;
        for (const auto& img : images) {
            item_ids.push_back("img:" + img.image_id);
            uri_by_id[img.image_id] = img.uri;
        }

        process(
            "referee", item_ids,
            [&](const std::string& id) -> std::pair<json, ItemStatus> {
                auto pit = pair_items.find(id);
                if (pit == pair_items.end() || pit->second.at("pairs").empty())
                    return {json{{"results", json::array()}}, ItemStatus::Skipped};

                std::string image_id = id.substr(4);
                json results = json::array();
                for (const auto& pj : pit->second.at("pairs")) {
                    PairRecord p = pair_from_json(pj);
                    QACandidate cand{image_id, p.task, p.question, p.answer,
                                     cfg.chat_backend, p.cot, p.parser};

                    std::vector<RefereeVerdict> verdicts;
                    for (const auto& ref_id : cfg.referee_backends) {
                        ChatRequest creq;
                        creq.backend_id = ref_id;
                        creq.stage = ChatStage::Referee;
                        creq.template_id = "p_filter_referee";
                        creq.slots["task_type"] = p.task.render();
                        creq.slots["question"] = p.question;
                        creq.slots["referee_id"] = ref_id;
                        creq.prompt = prompts.build_referee_prompt(p.task, p.question);
                        creq.image_ref = uri_by_id.at(image_id);

                        RefereeVerdict v;
                        v.referee_id = ref_id;
                        v.raw_text = gateway(ref_id).chat(creq).text;
                        try {
                            v.vote = parse_vote(v.raw_text);
                        } catch (const UnparseableVoteError&) {
                            try {  // one retry
                                v.raw_text = gateway(ref_id).chat(creq).text;
                                v.vote = parse_vote(v.raw_text);
                            } catch (const UnparseableVoteError&) {
                                v.vote = 0;  // conservative reject
                                v.parse_failed = true;
                            }
                        }
                        verdicts.push_back(std::move(v));
                    }
                    ScreeningResult res = aggregate(cand, verdicts);

                    json votes = json::array();
                    for (const auto& v : res.verdicts)
                        votes.push_back({{"referee", v.referee_id},
                                         {"vote", v.vote},
                                         {"raw_text", v.raw_text},
                                         {"parse_failed", v.parse_failed}});
                    json rj = pair_to_json(p);
                    rj["votes"] = votes;
                    rj["total"] = res.total;
                    rj["accepted"] = res.accepted;
                    results.push_back(std::move(rj));
                }
                return {json{{"results", results}}, ItemStatus::Done};
            },
            stats);

        write_referee_views();
    }

    void write_referee_views() {
        auto items = load_items("referee");
        std::vector<json> all, rejects;
        for (const auto& [id, data] : items) {
            if (!strings::starts_with(id, "img:")) continue;
            for (const auto& r : data.at("results")) {
                json row = r;
                row["image_id"] = id.substr(4);
                json pub = row;
                for (auto& v : pub["votes"]) v.erase("raw_text");
                all.push_back(pub);
                if (!r.at("accepted").get<bool>()) rejects.push_back(row);
            }
        }
        auto by_key = [](const json& a, const json& b) {
            auto ka = std::make_pair(a.at("image_id").get<std::string>(),
                                     a.at("task").get<std::string>());
            auto kb = std::make_pair(b.at("image_id").get<std::string>(),
                                     b.at("task").get<std::string>());
            return ka < kb;
        };
        std::sort(all.begin(), all.end(), by_key);
        std::sort(rejects.begin(), rejects.end(), by_key);
        jsonl::write_plain((workdir / "referee.jsonl").string(), all);
        jsonl::write_plain((workdir / "rejects.jsonl").string(), rejects);
    }

    std::vector<ScreeningResult> load_accepted() const {
        std::vector<ScreeningResult> out;
        for (const auto& obj : jsonl::read_checked(items_file("referee").string())) {
            std::string id = obj.at("item").get<std::string>();
            if (!strings::starts_with(id, "img:")) continue;
            std::string image_id = id.substr(4);
            for (const auto& r : obj.at("data").at("results")) {
                if (!r.at("accepted").get<bool>()) continue;
                PairRecord p = pair_from_json(r);
                ScreeningResult res;
                res.candidate = {image_id, p.task, p.question, p.answer,
                                 cfg.chat_backend, p.cot, p.parser};
                for (const auto& v : r.at("votes"))
                    res.verdicts.push_back({v.at("referee").get<std::string>(),
                                            v.at("vote").get<int>(),
                                            v.value("raw_text", ""),
                                            v.value("parse_failed", false)});
                res.total = r.at("total").get<int>();
                res.accepted = true;
                out.push_back(std::move(res));
            }
        }
        return out;
    }

    void stage_balance(StageRunStats& stats) {
        auto accepted = load_accepted();
        std::map<std::string, std::vector<ScreeningResult>> by_task;
        for (auto& r : accepted) by_task[r.candidate.task_path.render()].push_back(r);

        BalanceConfig bcfg;
        bcfg.max_per_task = cfg.max_per_task;
        bcfg.rng_seed = cfg.seed;
        bcfg.allow_cap_override = cfg.allow_cap_override;
        bcfg.random_cap_per_task = cfg.random_cap_per_task;

        std::vector<std::string> item_ids;
        for (const auto& [task, _] : by_task) item_ids.push_back("task:" + task);

        process(
            "balance", item_ids,
            [&](const std::string& id) -> std::pair<json, ItemStatus> {
                // per-task selection equals the global balance restricted to
                // this task: the permutation stream is task-keyed
                auto kept = balance(by_task.at(id.substr(5)), bcfg);
                json ids = json::array();
                for (const auto& c : kept)
                    ids.push_back(sample_id(c.image_id, c.task_path, c.question));
                return {json{{"kept", ids}}, ItemStatus::Done};
            },
            stats);

        write_balanced_view();
    }

    void write_balanced_view() {
        std::set<std::string> kept_ids;
        for (const auto& [id, data] : load_items("balance")) {
            if (!strings::starts_with(id, "task:")) continue;
            for (const auto& k : data.at("kept")) kept_ids.insert(k.get<std::string>());
        }
        std::vector<json> rows;
        for (const auto& res : load_accepted()) {
            const auto& c = res.candidate;
            std::string sid = sample_id(c.image_id, c.task_path, c.question);
            if (!kept_ids.count(sid)) continue;
            json votes = json::array();
            for (const auto& v : res.verdicts)
                votes.push_back({{"referee", v.referee_id}, {"vote", v.vote}});
            rows.push_back({{"id", sid},
                            {"image_id", c.image_id},
                            {"task", c.task_path.render()},
                            {"question", c.question},
                            {"answer", c.answer},
                            {"cot", c.cot},
                            {"votes", votes},
                            {"total", res.total}});
        }
        std::sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
            return a.at("id").get<std::string>() < b.at("id").get<std::string>();
        });
        jsonl::write_plain((workdir / "balanced.jsonl").string(), rows);
    }

    void stage_export(StageRunStats& stats) {
        process(
            "export", {"dataset"},
            [&](const std::string&) -> std::pair<json, ItemStatus> {
                auto images = load_images();
                std::map<std::string, ImageRecord> by_id;
                for (const auto& img : images) by_id[img.image_id] = img;
                Taxonomy tax = Taxonomy::load((workdir / "taxonomy.txt").string());

                std::vector<DatasetSample> samples;
                for (const auto& row :
                     jsonl::read_plain((workdir / "balanced.jsonl").string())) {
                    DatasetSample s;
                    s.id = row.at("id").get<std::string>();
                    std::string image_id = row.at("image_id").get<std::string>();
                    auto it = by_id.find(image_id);
                    if (it == by_id.end())
                        throw UnresolvedImageError("unknown image " + image_id);
                    s.image = "images/" + image_id + image_ext(it->second.uri);
                    s.question = row.at("question").get<std::string>();
                    s.answer = row.at("answer").get<std::string>();
                    s.task_path = TaskTypePath::parse(row.at("task").get<std::string>());
                    s.provenance.generator = cfg.chat_backend;
                    for (const auto& v : row.at("votes")) {
                        s.provenance.referees.push_back(v.at("referee").get<std::string>());
                        s.provenance.votes.push_back(v.at("vote").get<int>());
                    }
                    samples.push_back(std::move(s));
                }
                auto manifest = export_dataset(samples, by_id, tax, cfg.out_dir,
                                               cfg.config_hash(), /*force=*/true);
                return {json{{"artifacts", manifest.artifact_sha256}}, ItemStatus::Done};
            },
            stats);
    }

    RunReport run(std::optional<StageId> from, std::optional<StageId> to,
                  bool override_config) {
        ledger = CheckpointLedger::open((workdir / "ledger.jsonl").string(),
                                        cfg.config_hash(), override_config);
        // advisory lock: exactly one coordinator per ledger
        std::string lock_path = (workdir / "ledger.lock").string();
        lock_fd = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
        if (lock_fd < 0 || ::flock(lock_fd, LOCK_EX | LOCK_NB) != 0)
            throw Error("another coordinator holds the ledger lock: " + lock_path);

        RunReport report;
        auto order = stage_order();
        for (StageId stage : order) {
            if (from && static_cast<int>(stage) < static_cast<int>(*from)) continue;
            if (to && static_cast<int>(stage) > static_cast<int>(*to)) break;
            if (stage == StageId::Cot && !cfg.cot_enabled) continue;

            StageRunStats& stats = report.stages[stage_name(stage)];
            switch (stage) {
                case StageId::Expand: stage_expand(stats); break;
                case StageId::Embed: stage_embed(stats); break;
                case StageId::Match: stage_match(stats); break;
                case StageId::Filter: stage_filter(stats); break;
                case StageId::QaGen: stage_qagen(stats); break;
                case StageId::Cot: stage_cot(stats); break;
                case StageId::Referee: stage_referee(stats); break;
                case StageId::Balance: stage_balance(stats); break;
                case StageId::Export: stage_export(stats); break;
            }
        }
        ::flock(lock_fd, LOCK_UN);
        ::close(lock_fd);
        lock_fd = -1;
        return report;
    }
};

Pipeline::Pipeline(RunConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
Pipeline::~Pipeline() = default;

RunReport Pipeline::run(std::optional<StageId> from, std::optional<StageId> to,
                        bool override_config) {
    return impl_->run(from, to, override_config);
}

std::map<std::string, StageProgress> Pipeline::status(const std::string& ledger_path) {
    return CheckpointLedger::scan(ledger_path);
}

MockBackend* Pipeline::mock_backend() {
    impl_->gateway(impl_->cfg.chat_backend);  // force creation
    return impl_->shared_mock.get();
}

const CostMeter& Pipeline::meter(const std::string& backend_id) {
    return impl_->gateway(backend_id).meter();
}

VerifyReport Pipeline::verify(const std::string& out_dir, const std::string& workdir,
                              int max_per_task) {
    VerifyReport rep;
    fs::path dir(out_dir);

    if (!fs::exists(dir / "dataset.jsonl")) {
        rep.violations.push_back("missing dataset.jsonl");
        return rep;
    }

    // manifest hashes
    if (fs::exists(dir / "manifest.json")) {
        std::ifstream mf(dir / "manifest.json");
        json manifest = json::parse(mf);
        for (const auto& [name, expected] : manifest.at("artifacts").items()) {
            std::string actual = hash::sha256_file_hex((dir / name).string());
            if (actual != expected.get<std::string>())
                rep.violations.push_back("hash mismatch for " + name);
        }
    } else {
        rep.violations.push_back("missing manifest.json");
    }

    std::vector<DatasetSample> samples;
    try {
        samples = load_dataset((dir / "dataset.jsonl").string());
    } catch (const std::exception& e) {
        rep.violations.push_back(std::string("dataset schema: ") + e.what());
        return rep;
    }

    // schema: two turns with leading image placeholder
    {
        std::ifstream f(dir / "dataset.jsonl");
        std::string line;
        while (std::getline(f, line)) {
            if (strings::trim(line).empty()) continue;
            json obj = json::parse(line);
            const auto& conv = obj.at("conversations");
            if (conv.size() != 2)
                rep.violations.push_back("sample " + obj.at("id").get<std::string>() +
                                         ": conversation must have exactly 2 turns");
            else {
                std::string human = conv.at(0).at("value").get<std::string>();
                if (!strings::starts_with(human, kImagePlaceholder))
                    rep.violations.push_back("sample " + obj.at("id").get<std::string>() +
                                             ": human turn lacks image placeholder");
            }
        }
    }

    // per-task cap
    std::map<std::string, size_t> per_task;
    for (const auto& s : samples) ++per_task[s.task_path.render()];
    for (const auto& [task, n] : per_task)
        if (n > static_cast<size_t>(max_per_task))
            rep.violations.push_back("task " + task + " has " + std::to_string(n) +
                                     " samples, cap is " + std::to_string(max_per_task));

    // taxonomy membership + image resolution
    Taxonomy tax;
    if (fs::exists(dir / "taxonomy.txt")) {
        tax = Taxonomy::load((dir / "taxonomy.txt").string());
        for (const auto& s : samples)
            if (!tax.contains(s.task_path))
                rep.violations.push_back("task not in taxonomy: " + s.task_path.render());
    } else {
        rep.violations.push_back("missing taxonomy.txt");
    }
    for (const auto& s : samples) {
        fs::path img = dir / s.image;
        if (!fs::exists(img))
            rep.violations.push_back("unresolved image for sample " + s.id);
    }

    // datacard audit against an independent recount
    if (fs::exists(dir / "datacard.json")) {
        std::ifstream cf(dir / "datacard.json");
        json card = json::parse(cf);
        std::set<std::string> image_ids;
        for (const auto& s : samples) image_ids.insert(fs::path(s.image).stem().string());
        if (card.at("totals").at("samples").get<size_t>() != samples.size())
            rep.violations.push_back("datacard sample total mismatch");
        if (card.at("totals").at("task_types").get<size_t>() != per_task.size())
            rep.violations.push_back("datacard task type total mismatch");
        if (card.at("totals").at("images").get<size_t>() != image_ids.size())
            rep.violations.push_back("datacard image total mismatch");
        size_t bucket_sum = 0;
        for (const auto& b : card.at("distribution").at("buckets"))
            bucket_sum += b.at("task_types").get<size_t>();
        if (bucket_sum != per_task.size())
            rep.violations.push_back("distribution buckets do not sum to task type count");
        auto levels = tax.level_counts();
        for (const auto& [lvl, n] : levels) {
            auto key = std::to_string(lvl);
            if (card.at("per_level_task_counts").value(key, size_t{0}) != n)
                rep.violations.push_back("datacard level " + key + " count mismatch");
        }
    } else {
        rep.violations.push_back("missing datacard.json");
    }

    // cross-check against the pipeline workdir: every sample's task must be
    // in its image's filtered list
    if (!workdir.empty() && fs::exists(fs::path(workdir) / "filter.jsonl")) {
        std::map<std::string, std::set<std::string>> filtered_by_image;
        for (const auto& row : jsonl::read_plain((fs::path(workdir) / "filter.jsonl").string()))
            for (const auto& t : row.at("filtered"))
                filtered_by_image[row.at("image_id").get<std::string>()].insert(
                    t.get<std::string>());
        for (const auto& s : samples) {
            std::string image_id = fs::path(s.image).stem().string();
            if (!filtered_by_image[image_id].count(s.task_path.render()))
                rep.violations.push_back("sample " + s.id +
                                         ": task not in image's filtered list");
        }
    }

    return rep;
}

}  // namespace taskforge
