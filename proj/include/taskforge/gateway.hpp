#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "taskforge/errors.hpp"

namespace taskforge {

enum class Modality { Image, Text };

struct EmbeddingVector {
    std::vector<double> values;
    Modality modality = Modality::Text;

    size_t dimension() const { return values.size(); }
    double norm() const;
};

struct DecodeParams {
    double temperature = 0.0;
    int max_output_tokens = 2048;
};

// Pipeline stage a chat request belongs to; the mock backend keys its
// scripted grammar on this.
enum class ChatStage { Expand, Filter, QaGen, Cot, Referee };

std::string chat_stage_name(ChatStage stage);

struct ChatRequest {
    std::string backend_id;
    ChatStage stage = ChatStage::Expand;
    std::string template_id;
    std::map<std::string, std::string> slots;
    std::string prompt;
    std::optional<std::string> image_ref;  // file path or URL
    DecodeParams decode;
};

struct Usage {
    int64_t input_tokens = 0;
    int64_t output_tokens = 0;
};

struct ChatResponse {
    std::string text;
    Usage usage;
};

// ceil(utf8 bytes / 4); used for cost reporting only.
int64_t estimate_tokens(const std::string& text);

struct BackendCounters {
    int64_t requests = 0;
    int64_t retries = 0;
    int64_t input_tokens = 0;
    int64_t output_tokens = 0;
};

class CostMeter {
public:
    void record(const std::string& backend_id, const Usage& usage, int retries);
    std::map<std::string, BackendCounters> snapshot() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, BackendCounters> counters_;
};

// Transient backend failure; the gateway retries these with backoff.
struct TransientBackendError : Error {
    using Error::Error;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResponse chat(const ChatRequest& req) = 0;
    // content is raw bytes (file bytes for images, utf-8 for text)
    virtual std::vector<double> embed(const std::string& content, Modality modality) = 0;
    virtual size_t embedding_dimension() const = 0;
};

// Deterministic offline backend: replies are a pure function of
// (stage, template id, slot values, seed). Supports fixture overrides,
// fault injection, and a call log for exactly-once auditing.
class MockBackend : public Backend {
public:
    explicit MockBackend(uint64_t seed, size_t embedding_dim = 64);

    ChatResponse chat(const ChatRequest& req) override;
    std::vector<double> embed(const std::string& content, Modality modality) override;
    size_t embedding_dimension() const override { return embedding_dim_; }

    // Scripted reply for a specific (stage, prompt hash).
    void script_reply(ChatStage stage, const std::string& prompt, const std::string& reply);

    // The next n chat calls fail with a transient error.
    void inject_transient_failures(int n) { pending_failures_ = n; }

    // Appends one line per model call to the given file (for cross-run
    // exactly-once checks).
    void set_call_log(const std::string& path);

    int64_t chat_calls() const { return chat_calls_.load(); }
    int64_t embed_calls() const { return embed_calls_.load(); }
    int max_concurrency_seen() const { return max_concurrency_.load(); }

    // Fraction (0..100) of referee votes that come back 1; default 80.
    void set_referee_yes_percent(int pct) { referee_yes_percent_ = pct; }

private:
    std::string fallback_reply(const ChatRequest& req) const;

    uint64_t seed_;
    size_t embedding_dim_;
    int referee_yes_percent_ = 80;
    std::map<std::string, std::string> scripted_;
    std::atomic<int> pending_failures_{0};
    std::atomic<int64_t> chat_calls_{0};
    std::atomic<int64_t> embed_calls_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_concurrency_{0};
    std::mutex log_mu_;
    std::string call_log_path_;
};

// OpenAI-compatible HTTP backend: POST {base_url}/v1/chat/completions and
// {base_url}/v1/embeddings. Images are sent as base64 data URLs.
class HttpBackend : public Backend {
public:
    HttpBackend(std::string base_url, std::string api_key, std::string model,
                size_t embedding_dim);

    ChatResponse chat(const ChatRequest& req) override;
    std::vector<double> embed(const std::string& content, Modality modality) override;
    size_t embedding_dimension() const override { return embedding_dim_; }

private:
    std::string base_url_;
    std::string api_key_;
    std::string model_;
    size_t embedding_dim_;
};

// Content-hash-keyed persistent embedding cache. Binary file with a magic
// header; survives restart; at most one billable call per content.
class EmbeddingCache {
public:
    EmbeddingCache() = default;  // in-memory only
    explicit EmbeddingCache(const std::string& file_path);

    std::optional<std::vector<double>> get(const std::string& key) const;
    void put(const std::string& key, const std::vector<double>& values);
    size_t size() const;

private:
    void load();

    mutable std::mutex mu_;
    std::string file_path_;
    std::map<std::string, std::vector<double>> entries_;
};

struct GatewayConfig {
    int max_retries = 3;
    double backoff_initial_ms = 10.0;
    double backoff_factor = 2.0;
    int max_in_flight = 8;
    double requests_per_minute = 0;  // 0 = unlimited
};

// Uniform client layer: retries with exponential backoff, token-bucket rate
// limiting, bounded in-flight requests, cost metering, and the shared
// embedding cache. Safe for concurrent callers.
class Gateway {
public:
    Gateway(std::shared_ptr<Backend> backend, GatewayConfig cfg,
            std::shared_ptr<EmbeddingCache> cache = nullptr);

    ChatResponse chat(const ChatRequest& req);
    EmbeddingVector embed_text(const std::string& backend_id, const std::string& text);
    EmbeddingVector embed_image(const std::string& backend_id, const std::string& image_path);

    const CostMeter& meter() const { return meter_; }
    Backend& backend() { return *backend_; }

private:
    std::vector<double> embed_cached(const std::string& backend_id, const std::string& key,
                                     const std::string& content, Modality modality);
    void acquire_slot();
    void release_slot();
    void rate_limit_wait();

    std::shared_ptr<Backend> backend_;
    GatewayConfig cfg_;
    std::shared_ptr<EmbeddingCache> cache_;
    CostMeter meter_;

    std::mutex slot_mu_;
    std::condition_variable slot_cv_;
    int in_flight_ = 0;

    std::mutex bucket_mu_;
    double bucket_tokens_ = 0;
    std::chrono::steady_clock::time_point bucket_last_{};
};

}  // namespace taskforge
