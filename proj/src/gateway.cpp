#include "taskforge/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "taskforge/hash.hpp"
#include "taskforge/strings.hpp"

namespace taskforge {

using json = nlohmann::json;

double EmbeddingVector::norm() const {
    double s = 0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
}

int64_t estimate_tokens(const std::string& text) {
    return static_cast<int64_t>((text.size() + 3) / 4);
}

std::string chat_stage_name(ChatStage stage) {
    switch (stage) {
        case ChatStage::Expand: return "expand";
        case ChatStage::Filter: return "filter";
        case ChatStage::QaGen: return "qagen";
        case ChatStage::Cot: return "cot";
        case ChatStage::Referee: return "referee";
    }
    throw Error("unknown chat stage");
}

void CostMeter::record(const std::string& backend_id, const Usage& usage, int retries) {
    std::lock_guard lock(mu_);
    auto& c = counters_[backend_id];
    c.requests += 1;
    c.retries += retries;
    c.input_tokens += usage.input_tokens;
    c.output_tokens += usage.output_tokens;
}

std::map<std::string, BackendCounters> CostMeter::snapshot() const {
    std::lock_guard lock(mu_);
    return counters_;
}

// ---------------------------------------------------------------- mock

namespace {

// Small word pools for synthetic labels and answers.
const char* kAdjectives[] = {"visual",  "spatial",  "semantic", "temporal",
                             "fine",    "abstract", "layered",  "contextual",
                             "applied", "composite"};
const char* kNouns[] = {"scene",   "object", "layout",  "symbol",  "pattern",
                        "texture", "figure", "diagram", "caption", "region"};
const char* kVerbs[] = {"analysis",    "recognition", "grounding",  "extraction",
                        "comparison",  "summarization", "reasoning", "localization",
                        "description", "classification"};

std::string canonical_slots(const ChatRequest& req) {
    std::string s = chat_stage_name(req.stage) + "\x1f" + req.template_id;
    for (const auto& [k, v] : req.slots) {
        s += '\x1f';
        s += k;
        s += '\x1e';
        s += v;
    }
    if (req.image_ref) {
        s += "\x1fimage\x1e";
        s += *req.image_ref;
    }
    return s;
}

std::string synth_label(uint64_t h) {
    return std::string(kAdjectives[h % 10]) + " " + kNouns[(h >> 8) % 10] + " " +
           kVerbs[(h >> 16) % 10];
}

std::string base64_encode(std::string_view data) {
    static const char* tbl =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 2 < data.size(); i += 3) {
        uint32_t v = (static_cast<unsigned char>(data[i]) << 16) |
                     (static_cast<unsigned char>(data[i + 1]) << 8) |
                     static_cast<unsigned char>(data[i + 2]);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += tbl[v & 63];
    }
    if (i + 1 == data.size()) {
        uint32_t v = static_cast<unsigned char>(data[i]) << 16;
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == data.size()) {
        uint32_t v = (static_cast<unsigned char>(data[i]) << 16) |
                     (static_cast<unsigned char>(data[i + 1]) << 8);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

}  // namespace

MockBackend::MockBackend(uint64_t seed, size_t embedding_dim)
    : seed_(seed), embedding_dim_(embedding_dim) {}

void MockBackend::script_reply(ChatStage stage, const std::string& prompt,
                               const std::string& reply) {
    scripted_[chat_stage_name(stage) + ":" + hash::sha256_hex(prompt)] = reply;
}

void MockBackend::set_call_log(const std::string& path) {
    std::lock_guard lock(log_mu_);
    call_log_path_ = path;
}

ChatResponse MockBackend::chat(const ChatRequest& req) {
    int cur = ++in_flight_;
    int prev = max_concurrency_.load();
    while (cur > prev && !max_concurrency_.compare_exchange_weak(prev, cur)) {
    }
    struct Guard {
        std::atomic<int>& c;
        ~Guard() { --c; }
    } guard{in_flight_};

    ++chat_calls_;
    {
        std::lock_guard lock(log_mu_);
        if (!call_log_path_.empty()) {
            std::ofstream f(call_log_path_, std::ios::app);
            f << "chat\t" << chat_stage_name(req.stage) << "\t"
              << hash::sha256_hex(canonical_slots(req)) << "\n";
        }
    }

    if (pending_failures_.fetch_sub(1) > 0)
        throw TransientBackendError("injected transient failure");
    pending_failures_.store(std::max(0, pending_failures_.load()));

    std::string key = chat_stage_name(req.stage) + ":" + hash::sha256_hex(req.prompt);
    std::string text;
    if (auto it = scripted_.find(key); it != scripted_.end()) {
        text = it->second;
    } else {
        text = fallback_reply(req);
    }
    ChatResponse resp;
    resp.text = text;
    resp.usage.input_tokens = estimate_tokens(req.prompt);
    resp.usage.output_tokens = estimate_tokens(text);
    return resp;
}

std::string MockBackend::fallback_reply(const ChatRequest& req) const {
    uint64_t h = hash::fnv1a64(canonical_slots(req), seed_ ^ 0x7461736b666f7267ull);

    switch (req.stage) {
        case ChatStage::Expand: {
            int depth = 1;
            if (req.template_id == "p2_w" || req.template_id == "p2_w/o") depth = 2;
            if (req.template_id == "p3_w" || req.template_id == "p3_w/o") depth = 3;
            std::string parent;
            if (auto it = req.slots.find("parent_task"); it != req.slots.end())
                parent = it->second;
            size_t n = 4 + h % 5;
            std::string out;
            for (size_t i = 0; i < n; ++i) {
                uint64_t hi = hash::splitmix64(h + i);
                std::string label = synth_label(hi);
                if (depth == 1) {
                    out += label;
                } else if (hi % 5 == 0) {
                    out += label;  // bare label, exercises re-rooting
                } else {
                    out += parent + "~" + label;
                }
                out += "\n";
            }
            return out;
        }
        case ChatStage::Filter: {
            std::string cands;
            if (auto it = req.slots.find("init_task_type"); it != req.slots.end())
                cands = it->second;
            std::vector<std::string> kept;
            for (auto& c : strings::split(cands, ',')) {
                std::string t = strings::trim(c);
                if (t.empty()) continue;
                uint64_t hc = hash::fnv1a64(t, h);
                if (hc % 3 != 0) kept.push_back(t);  // keep ~2/3
            }
            if (kept.empty()) return "[None]";
            return "[" + strings::join(kept, ", ") + "]";
        }
        case ChatStage::QaGen: {
            std::string tasks;
            if (auto it = req.slots.find("task_labels"); it != req.slots.end())
                tasks = it->second;
            std::string body;
            for (auto& c : strings::split(tasks, ',')) {
                std::string t = strings::trim(c);
                if (t.empty()) continue;
                uint64_t ht = hash::fnv1a64(t, h);
                std::string q = "Considering the " + std::string(kNouns[ht % 10]) +
                                " in the image, what does it reveal about " + t + "?";
                std::string a = "The " + std::string(kNouns[ht % 10]) + " shows a " +
                                kAdjectives[(ht >> 8) % 10] + " " + kNouns[(ht >> 16) % 10] +
                                " consistent with " + t + ".";
                if (ht % 13 == 0) {
                    // occasional sloppy line to exercise the lenient parser
                    body += "{'task_type': '" + t + "', 'question': '" + q +
                            "', 'answer': '" + a + "',}\n";
                } else {
                    json line = {{"task_type", t}, {"question", q}, {"answer", a}};
                    body += line.dump() + "\n";
                }
            }
            if (h % 7 == 0) return "```json\n" + body + "```\n";
            return body;
        }
        case ChatStage::Cot: {
            std::string q;
            if (auto it = req.slots.find("question"); it != req.slots.end()) q = it->second;
            uint64_t hq = hash::fnv1a64(q, h);
            return "Step 1: Examine the " + std::string(kNouns[hq % 10]) +
                   " shown in the image. Step 2: Relate it to the question. Step 3: "
                   "Conclude. Final answer: a " +
                   kAdjectives[(hq >> 8) % 10] + " " + kNouns[(hq >> 16) % 10] + ".";
        }
        case ChatStage::Referee: {
            return (h % 100) < static_cast<uint64_t>(referee_yes_percent_) ? "1" : "0";
        }
    }
    throw Error("unknown stage");
}

std::vector<double> MockBackend::embed(const std::string& content, Modality modality) {
    ++embed_calls_;
    {
        std::lock_guard lock(log_mu_);
        if (!call_log_path_.empty()) {
            std::ofstream f(call_log_path_, std::ios::app);
            f << "embed\t" << (modality == Modality::Image ? "image" : "text") << "\t"
              << hash::sha256_hex(content) << "\n";
        }
    }
    // Seeded hash expanded to the declared dimension, then L2-normalized.
    uint64_t h = hash::fnv1a64(content, seed_);
    if (modality == Modality::Image) h = hash::splitmix64(h ^ 0x696d616765ull);
    std::vector<double> v(embedding_dim_);
    double norm2 = 0;
    for (size_t i = 0; i < embedding_dim_; ++i) {
        uint64_t hi = hash::splitmix64(h + i);
        v[i] = static_cast<double>(hi >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        norm2 += v[i] * v[i];
    }
    double norm = std::sqrt(norm2);
    for (auto& x : v) x /= norm;
    return v;
}

// ---------------------------------------------------------------- http

HttpBackend::HttpBackend(std::string base_url, std::string api_key, std::string model,
                         size_t embedding_dim)
    : base_url_(std::move(base_url)),
      api_key_(std::move(api_key)),
      model_(std::move(model)),
      embedding_dim_(embedding_dim) {}

ChatResponse HttpBackend::chat(const ChatRequest& req) {
    httplib::Client cli(base_url_);
    cli.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    json content = json::array();
    content.push_back({{"type", "text"}, {"text", req.prompt}});
    if (req.image_ref) {
        std::ifstream f(*req.image_ref, std::ios::binary);
        if (!f) throw UnreadableImageError("cannot read image: " + *req.image_ref);
        std::stringstream ss;
        ss << f.rdbuf();
        content.push_back(
            {{"type", "image_url"},
             {"image_url", {{"url", "data:image/jpeg;base64," + base64_encode(ss.str())}}}});
    }
    json body = {{"model", model_},
                 {"messages", json::array({{{"role", "user"}, {"content", content}}})},
                 {"temperature", req.decode.temperature},
                 {"max_tokens", req.decode.max_output_tokens}};

    auto res = cli.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw TransientBackendError("no response from " + base_url_);
    if (res->status == 401 || res->status == 403)
        throw AuthFailureError("auth failure from " + base_url_);
    if (res->status == 429 || res->status >= 500)
        throw TransientBackendError("status " + std::to_string(res->status));
    if (res->status != 200)
        throw Error("chat endpoint returned status " + std::to_string(res->status));

    json reply = json::parse(res->body);
    ChatResponse out;
    out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (reply.contains("usage")) {
        out.usage.input_tokens = reply["usage"].value("prompt_tokens", 0);
        out.usage.output_tokens = reply["usage"].value("completion_tokens", 0);
    } else {
        out.usage.input_tokens = estimate_tokens(req.prompt);
        out.usage.output_tokens = estimate_tokens(out.text);
    }
    return out;
}

std::vector<double> HttpBackend::embed(const std::string& content, Modality modality) {
    httplib::Client cli(base_url_);
    cli.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    json body = {{"model", model_}};
    if (modality == Modality::Image) {
        body["input"] = json::array({base64_encode(content)});
        body["modality"] = "image";
    } else {
        body["input"] = json::array({content});
    }
    auto res = cli.Post("/v1/embeddings", headers, body.dump(), "application/json");
    if (!res) throw TransientBackendError("no response from " + base_url_);
    if (res->status == 401 || res->status == 403)
        throw AuthFailureError("auth failure from " + base_url_);
    if (res->status == 429 || res->status >= 500)
        throw TransientBackendError("status " + std::to_string(res->status));
    if (res->status != 200)
        throw Error("embeddings endpoint returned status " + std::to_string(res->status));

    json reply = json::parse(res->body);
    return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
}

// ---------------------------------------------------------------- cache

namespace {
constexpr char kCacheMagic[8] = {'T', 'F', 'E', 'C', 'A', 'C', 'H', '1'};
}

EmbeddingCache::EmbeddingCache(const std::string& file_path) : file_path_(file_path) {
    load();
}

void EmbeddingCache::load() {
    std::ifstream f(file_path_, std::ios::binary);
    if (!f) {
        // fresh cache: write the header now
        std::ofstream out(file_path_, std::ios::binary);
        if (!out) throw Error("cannot create embedding cache: " + file_path_);
        out.write(kCacheMagic, sizeof(kCacheMagic));
        return;
    }
    char magic[8];
    f.read(magic, 8);
    if (f.gcount() != 8 || std::memcmp(magic, kCacheMagic, 8) != 0)
        throw Error("bad embedding cache header: " + file_path_);
    while (true) {
        uint32_t key_len = 0, dim = 0;
        f.read(reinterpret_cast<char*>(&key_len), 4);
        if (f.gcount() != 4) break;
        std::string key(key_len, '\0');
        f.read(key.data(), key_len);
        if (static_cast<uint32_t>(f.gcount()) != key_len) break;
        f.read(reinterpret_cast<char*>(&dim), 4);
        if (f.gcount() != 4) break;
        std::vector<double> values(dim);
        f.read(reinterpret_cast<char*>(values.data()), dim * sizeof(double));
        if (static_cast<size_t>(f.gcount()) != dim * sizeof(double)) break;
        entries_[key] = std::move(values);
    }
}

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingCache::put(const std::string& key, const std::vector<double>& values) {
    std::lock_guard lock(mu_);
    if (!entries_.emplace(key, values).second) return;
    if (file_path_.empty()) return;
    std::ofstream f(file_path_, std::ios::binary | std::ios::app);
    uint32_t key_len = static_cast<uint32_t>(key.size());
    uint32_t dim = static_cast<uint32_t>(values.size());
    f.write(reinterpret_cast<const char*>(&key_len), 4);
    f.write(key.data(), key_len);
    f.write(reinterpret_cast<const char*>(&dim), 4);
    f.write(reinterpret_cast<const char*>(values.data()), dim * sizeof(double));
    f.flush();
}

size_t EmbeddingCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

// ---------------------------------------------------------------- gateway

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayConfig cfg,
                 std::shared_ptr<EmbeddingCache> cache)
    : backend_(std::move(backend)), cfg_(cfg), cache_(std::move(cache)) {
    if (!cache_) cache_ = std::make_shared<EmbeddingCache>();
    bucket_tokens_ = cfg_.requests_per_minute;
    bucket_last_ = std::chrono::steady_clock::now();
}

void Gateway::acquire_slot() {
    std::unique_lock lock(slot_mu_);
    slot_cv_.wait(lock, [&] { return in_flight_ < cfg_.max_in_flight; });
    ++in_flight_;
}

void Gateway::release_slot() {
    {
        std::lock_guard lock(slot_mu_);
        --in_flight_;
    }
    slot_cv_.notify_one();
}

void Gateway::rate_limit_wait() {
    if (cfg_.requests_per_minute <= 0) return;
    for (;;) {
        std::unique_lock lock(bucket_mu_);
        auto now = std::chrono::steady_clock::now();
        double elapsed = std::chrono::duration<double>(now - bucket_last_).count();
        bucket_last_ = now;
        bucket_tokens_ = std::min(cfg_.requests_per_minute,
                                  bucket_tokens_ + elapsed * cfg_.requests_per_minute / 60.0);
        if (bucket_tokens_ >= 1.0) {
            bucket_tokens_ -= 1.0;
            return;
        }
        double wait_s = (1.0 - bucket_tokens_) * 60.0 / cfg_.requests_per_minute;
        lock.unlock();
        std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
    }
}

ChatResponse Gateway::chat(const ChatRequest& req) {
    int retries = 0;
    double backoff = cfg_.backoff_initial_ms;
    acquire_slot();
    struct Guard {
        Gateway& g;
        ~Guard() { g.release_slot(); }
    } guard{*this};

    for (;;) {
        rate_limit_wait();
        try {
            ChatResponse resp = backend_->chat(req);
            size_t limit = static_cast<size_t>(req.decode.max_output_tokens) * 16;
            if (resp.text.size() > limit)
                throw ResponseTooLargeError("reply of " + std::to_string(resp.text.size()) +
                                            " bytes exceeds limit");
            meter_.record(req.backend_id, resp.usage, retries);
            return resp;
        } catch (const TransientBackendError& e) {
            if (retries >= cfg_.max_retries) {
                meter_.record(req.backend_id, {}, retries);
                throw BackendUnavailableError(std::string("retries exhausted: ") + e.what());
            }
            ++retries;
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff));
            backoff *= cfg_.backoff_factor;
        }
    }
}

std::vector<double> Gateway::embed_cached(const std::string& backend_id, const std::string& key,
                                          const std::string& content, Modality modality) {
    if (auto hit = cache_->get(key)) return *hit;

    int retries = 0;
    double backoff = cfg_.backoff_initial_ms;
    acquire_slot();
    struct Guard {
        Gateway& g;
        ~Guard() { g.release_slot(); }
    } guard{*this};

    for (;;) {
        rate_limit_wait();
        try {
            std::vector<double> v = backend_->embed(content, modality);
            if (v.size() != backend_->embedding_dimension())
                throw DimensionMismatchError(
                    "backend declared dim " + std::to_string(backend_->embedding_dimension()) +
                    " but returned " + std::to_string(v.size()));
            Usage usage;
            usage.input_tokens = estimate_tokens(content);
            meter_.record(backend_id, usage, retries);
            cache_->put(key, v);
            return v;
        } catch (const TransientBackendError& e) {
            if (retries >= cfg_.max_retries) {
                meter_.record(backend_id, {}, retries);
                throw BackendUnavailableError(std::string("retries exhausted: ") + e.what());
            }
            ++retries;
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff));
            backoff *= cfg_.backoff_factor;
        }
    }
}

EmbeddingVector Gateway::embed_text(const std::string& backend_id, const std::string& text) {
    std::string key = "text:" + backend_id + ":" + hash::sha256_hex(text);
    EmbeddingVector out;
    out.values = embed_cached(backend_id, key, text, Modality::Text);
    out.modality = Modality::Text;
    return out;
}

EmbeddingVector Gateway::embed_image(const std::string& backend_id,
                                     const std::string& image_path) {
    std::ifstream f(image_path, std::ios::binary);
    if (!f) throw UnreadableImageError("cannot read image: " + image_path);
    std::stringstream ss;
    ss << f.rdbuf();
    std::string bytes = ss.str();
    std::string key = "image:" + backend_id + ":" + hash::sha256_hex(bytes);
    EmbeddingVector out;
    out.values = embed_cached(backend_id, key, bytes, Modality::Image);
    out.modality = Modality::Image;
    return out;
}

}  // namespace taskforge
