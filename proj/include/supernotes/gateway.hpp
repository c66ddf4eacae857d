#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace supernotes {

struct ChatRequest {
    std::string model_id;
    std::vector<std::pair<std::string, std::string>> messages;  // (role, content)
    double temperature = 0.95;
    double top_p = 0.8;
    int max_output_chars = 0;  // 0 = provider default

    void validate() const;
};

// Raised by providers; the gateway retries transient failures only.
class ProviderError : public std::runtime_error {
public:
    ProviderError(bool transient, const std::string& what)
        : std::runtime_error(what), transient_(transient) {}
    bool transient() const { return transient_; }

private:
    bool transient_;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string chat(const ChatRequest& req) = 0;
    virtual std::vector<double> embed(const std::string& model_id, const std::string& text) = 0;
};

class GatewayError : public std::runtime_error {
public:
    enum class Kind { Fatal, RetryBudgetExhausted, EmptyCompletion, DimensionMismatch, JudgeFailure };

    GatewayError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct RetryPolicy {
    int max_attempts = 3;
    int base_delay_ms = 500;
    int max_delay_ms = 8000;
};

struct GatewayConfig {
    std::string chat_model = "gpt-4o-mini";
    std::string embedding_model = "text-embedding-3-small";
    int embedding_dim = 512;
    double temperature = 0.95;
    double top_p = 0.8;
    RetryPolicy retry;
    int requests_per_minute = 0;  // 0 = unlimited
    int max_in_flight = 8;
    std::string cache_path;  // append-only embedding cache; empty = memory only
};

struct GatewayStats {
    long chat_requests = 0;    // provider-level attempts
    long embed_requests = 0;
    long retries = 0;
    long cache_hits = 0;
    long cache_misses = 0;
};

// Serializes provider access behind retries, rate limiting, bounded
// concurrency, and a persistent embedding cache.
class Gateway {
public:
    Gateway(std::unique_ptr<Provider> provider, GatewayConfig config);

    // First completion text; retries transient failures with exponential
    // backoff up to the retry budget.
    std::string chat_complete(const ChatRequest& req);

    Eigen::VectorXd embed_text(const std::string& text);

    // Renders the yes/no judge prompt and parses the leading 0/1. Unparseable
    // replies are re-asked twice, then flagged as a judge failure.
    bool judge_principle(const std::string& text, const std::string& principle);

    ChatRequest default_chat_request() const;
    const GatewayConfig& config() const { return config_; }
    GatewayStats stats() const;

private:
    template <typename Fn>
    auto with_retries(Fn&& fn) -> decltype(fn());
    void throttle();

    std::unique_ptr<Provider> provider_;
    GatewayConfig config_;

    mutable std::mutex stats_mutex_;
    GatewayStats stats_;

    std::mutex cache_mutex_;
    std::map<std::string, Eigen::VectorXd> cache_;

    std::mutex limiter_mutex_;
    double tokens_ = 0.0;
    std::chrono::steady_clock::time_point last_refill_;

    std::mutex inflight_mutex_;
    std::condition_variable inflight_cv_;
    int in_flight_ = 0;
};

// Scriptable in-process provider for offline runs and tests.
class StubProvider : public Provider {
public:
    using ChatHandler = std::function<std::string(const ChatRequest&)>;
    using EmbedHandler = std::function<std::vector<double>(const std::string&, const std::string&)>;

    explicit StubProvider(int embedding_dim = 512);

    std::string chat(const ChatRequest& req) override;
    std::vector<double> embed(const std::string& model_id, const std::string& text) override;

    void set_chat_handler(ChatHandler handler);
    void set_embed_handler(EmbedHandler handler);

    // Scripted one-shot behaviors, consumed FIFO before the handler runs.
    void push_chat_response(std::string text);
    void push_chat_failure(bool transient, std::string message);
    void push_embed_failure(bool transient, std::string message);

    long chat_calls() const;
    long embed_calls() const;
    std::vector<ChatRequest> captured_requests() const;

    // Deterministic pseudo-embedding used when no handler is set.
    static std::vector<double> hash_embedding(const std::string& model_id, const std::string& text,
                                              int dim);

private:
    struct Scripted {
        bool fail = false;
        bool transient = false;
        std::string payload;
    };

    mutable std::mutex mutex_;
    int embedding_dim_;
    ChatHandler chat_handler_;
    EmbedHandler embed_handler_;
    std::deque<Scripted> chat_script_;
    std::deque<Scripted> embed_script_;
    long chat_calls_ = 0;
    long embed_calls_ = 0;
    std::vector<ChatRequest> captured_;
};

// HTTP provider speaking the de facto chat-completions and embeddings JSON
// shapes; base URL configurable so any compatible server works.
struct HttpProviderConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "SUPERNOTES_API_KEY";
    int timeout_seconds = 60;
};

std::unique_ptr<Provider> make_http_provider(const HttpProviderConfig& config);

// Prompt rendering ------------------------------------------------------

struct NoteContext {
    std::string text;
    std::string rating_summary;         // e.g. "3 helpful / 1 not helpful"
    std::vector<std::string> top_tags;  // most frequent first
};

struct GenerationContext {
    std::string post_text;
    std::vector<NoteContext> notes;
};

std::string render_generation_prompt(const GenerationContext& ctx);
std::string render_judge_prompt(const std::string& text, const std::string& principle);

}  // namespace supernotes
