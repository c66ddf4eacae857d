#include "supernotes/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "supernotes/seeding.hpp"

namespace supernotes {

namespace {

std::string cache_key(const std::string& model_id, const std::string& text) {
    std::string payload = model_id;
    payload.push_back('\0');
    payload += text;
    std::ostringstream hex;
    hex << std::hex << fnv1a64(payload);
    return hex.str();
}

}  // namespace

void ChatRequest::validate() const {
    if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0,1]");
    if (messages.empty()) throw std::invalid_argument("chat request needs messages");
}

Gateway::Gateway(std::unique_ptr<Provider> provider, GatewayConfig config)
    : provider_(std::move(provider)), config_(std::move(config)) {
    last_refill_ = std::chrono::steady_clock::now();
    tokens_ = static_cast<double>(config_.requests_per_minute);

    if (!config_.cache_path.empty()) {
        std::ifstream in(config_.cache_path);
        std::string line;
        while (in && std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("hash") || !j.contains("vector")) continue;
            const auto values = j["vector"].get<std::vector<double>>();
            Eigen::VectorXd v =
                Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                  static_cast<Eigen::Index>(values.size()));
            cache_[j["hash"].get<std::string>()] = std::move(v);
        }
    }
}

void Gateway::throttle() {
    if (config_.requests_per_minute > 0) {
        std::unique_lock lock(limiter_mutex_);
        const auto now = std::chrono::steady_clock::now();
        const double elapsed = std::chrono::duration<double>(now - last_refill_).count();
        const double rate = config_.requests_per_minute / 60.0;
        tokens_ = std::min(static_cast<double>(config_.requests_per_minute),
                           tokens_ + elapsed * rate);
        last_refill_ = now;
        if (tokens_ < 1.0) {
            const double wait_s = (1.0 - tokens_) / rate;
            lock.unlock();
            std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
            lock.lock();
            tokens_ = 0.0;
            last_refill_ = std::chrono::steady_clock::now();
        } else {
            tokens_ -= 1.0;
        }
    }
}

template <typename Fn>
auto Gateway::with_retries(Fn&& fn) -> decltype(fn()) {
    {
        std::unique_lock lock(inflight_mutex_);
        inflight_cv_.wait(lock, [this] { return in_flight_ < config_.max_in_flight; });
        ++in_flight_;
    }
    struct Release {
        Gateway* g;
        ~Release() {
            {
                std::lock_guard lock(g->inflight_mutex_);
                --g->in_flight_;
            }
            g->inflight_cv_.notify_one();
        }
    } release{this};

    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        throttle();
        try {
            return fn();
        } catch (const ProviderError& e) {
            if (!e.transient()) {
                throw GatewayError(GatewayError::Kind::Fatal, e.what());
            }
            last_error = e.what();
            if (attempt < config_.retry.max_attempts) {
                {
                    std::lock_guard lock(stats_mutex_);
                    ++stats_.retries;
                }
                if (config_.retry.base_delay_ms > 0) {
                    const long delay = std::min<long>(
                        config_.retry.max_delay_ms,
                        static_cast<long>(config_.retry.base_delay_ms) << (attempt - 1));
                    std::this_thread::sleep_for(std::chrono::milliseconds(delay));
                }
            }
        }
    }
    throw GatewayError(GatewayError::Kind::RetryBudgetExhausted,
                       "retry budget exhausted after " +
                           std::to_string(config_.retry.max_attempts) +
                           " attempts; last error: " + last_error);
}

std::string Gateway::chat_complete(const ChatRequest& req) {
    req.validate();
    const std::string text = with_retries([&] {
        {
            std::lock_guard lock(stats_mutex_);
            ++stats_.chat_requests;
        }
        return provider_->chat(req);
    });
    if (text.empty()) {
        throw GatewayError(GatewayError::Kind::EmptyCompletion, "provider returned an empty completion");
    }
    return text;
}

Eigen::VectorXd Gateway::embed_text(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("embed_text: text must be non-empty");

    const std::string key = cache_key(config_.embedding_model, text);
    {
        std::lock_guard lock(cache_mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            std::lock_guard slock(stats_mutex_);
            ++stats_.cache_hits;
            return it->second;
        }
    }

    const std::vector<double> values = with_retries([&] {
        {
            std::lock_guard lock(stats_mutex_);
            ++stats_.embed_requests;
        }
        return provider_->embed(config_.embedding_model, text);
    });
    if (static_cast<int>(values.size()) != config_.embedding_dim) {
        throw GatewayError(GatewayError::Kind::DimensionMismatch,
                           "embedding dimension mismatch: got " + std::to_string(values.size()) +
                               ", expected " + std::to_string(config_.embedding_dim));
    }

    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(
        values.data(), static_cast<Eigen::Index>(values.size()));
    {
        std::lock_guard lock(cache_mutex_);
        auto [it, inserted] = cache_.emplace(key, v);
        if (inserted && !config_.cache_path.empty()) {
            nlohmann::json j;
            j["hash"] = key;
            j["model"] = config_.embedding_model;
            j["vector"] = values;
            std::ofstream out(config_.cache_path, std::ios::app);
            out << j.dump() << '\n';
        }
        std::lock_guard slock(stats_mutex_);
        ++stats_.cache_misses;
    }
    return v;
}

bool Gateway::judge_principle(const std::string& text, const std::string& principle) {
    ChatRequest req = default_chat_request();
    req.messages = {{"user", render_judge_prompt(text, principle)}};

    // One ask plus two re-asks.
    for (int ask = 0; ask < 3; ++ask) {
        std::string reply;
        try {
            reply = chat_complete(req);
        } catch (const GatewayError& e) {
            if (e.kind() == GatewayError::Kind::Fatal) throw;
            throw GatewayError(GatewayError::Kind::JudgeFailure,
                               std::string("judge call failed: ") + e.what());
        }
        const auto pos = reply.find_first_not_of(" \t\r\n");
        if (pos != std::string::npos) {
            if (reply[pos] == '1') return true;
            if (reply[pos] == '0') return false;
        }
    }
    throw GatewayError(GatewayError::Kind::JudgeFailure,
                       "judge reply unparseable after 2 re-asks (principle: " + principle + ")");
}

ChatRequest Gateway::default_chat_request() const {
    ChatRequest req;
    req.model_id = config_.chat_model;
    req.temperature = config_.temperature;
    req.top_p = config_.top_p;
    return req;
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(stats_mutex_);
    return stats_;
}

// StubProvider -----------------------------------------------------------

StubProvider::StubProvider(int embedding_dim) : embedding_dim_(embedding_dim) {}

std::string StubProvider::chat(const ChatRequest& req) {
    std::unique_lock lock(mutex_);
    ++chat_calls_;
    captured_.push_back(req);
    if (!chat_script_.empty()) {
        const Scripted s = chat_script_.front();
        chat_script_.pop_front();
        if (s.fail) throw ProviderError(s.transient, s.payload);
        return s.payload;
    }
    if (chat_handler_) {
        ChatHandler handler = chat_handler_;
        lock.unlock();
        return handler(req);
    }
    const std::string& prompt = req.messages.empty() ? "" : req.messages.back().second;
    if (prompt.rfind("Answer with a 1(Yes)", 0) == 0) return "0";  // parseable judge reply
    std::ostringstream out;
    out << "stub-completion-" << std::hex << fnv1a64(prompt);
    return out.str();
}

std::vector<double> StubProvider::embed(const std::string& model_id, const std::string& text) {
    std::unique_lock lock(mutex_);
    ++embed_calls_;
    if (!embed_script_.empty()) {
        const Scripted s = embed_script_.front();
        embed_script_.pop_front();
        if (s.fail) throw ProviderError(s.transient, s.payload);
    }
    if (embed_handler_) {
        EmbedHandler handler = embed_handler_;
        lock.unlock();
        return handler(model_id, text);
    }
    return hash_embedding(model_id, text, embedding_dim_);
}

void StubProvider::set_chat_handler(ChatHandler handler) {
    std::lock_guard lock(mutex_);
    chat_handler_ = std::move(handler);
}

void StubProvider::set_embed_handler(EmbedHandler handler) {
    std::lock_guard lock(mutex_);
    embed_handler_ = std::move(handler);
}

void StubProvider::push_chat_response(std::string text) {
    std::lock_guard lock(mutex_);
    chat_script_.push_back({false, false, std::move(text)});
}

void StubProvider::push_chat_failure(bool transient, std::string message) {
    std::lock_guard lock(mutex_);
    chat_script_.push_back({true, transient, std::move(message)});
}

void StubProvider::push_embed_failure(bool transient, std::string message) {
    std::lock_guard lock(mutex_);
    embed_script_.push_back({true, transient, std::move(message)});
}

long StubProvider::chat_calls() const {
    std::lock_guard lock(mutex_);
    return chat_calls_;
}

long StubProvider::embed_calls() const {
    std::lock_guard lock(mutex_);
    return embed_calls_;
}

std::vector<ChatRequest> StubProvider::captured_requests() const {
    std::lock_guard lock(mutex_);
    return captured_;
}

std::vector<double> StubProvider::hash_embedding(const std::string& model_id,
                                                 const std::string& text, int dim) {
    std::string payload = model_id;
    payload.push_back('\0');
    payload += text;
    std::mt19937_64 rng(fnv1a64(payload));
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm_sq = 0.0;
    for (double& x : v) {
        x = static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;  // uniform in [-1,1)
        norm_sq += x * x;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > 0) {
        for (double& x : v) x /= norm;
    }
    return v;
}

// HttpProvider -----------------------------------------------------------

namespace {

class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        api_key_ = key ? key : "";
        if (api_key_.empty()) {
            throw ProviderError(false, "missing API key in environment variable " +
                                           config_.api_key_env);
        }
        if (const char* base = std::getenv("SUPERNOTES_BASE_URL"); base && *base) {
            config_.base_url = base;
        }
    }

    std::string chat(const ChatRequest& req) override {
        nlohmann::json body;
        body["model"] = req.model_id;
        body["messages"] = nlohmann::json::array();
        for (const auto& [role, content] : req.messages) {
            body["messages"].push_back({{"role", role}, {"content", content}});
        }
        body["temperature"] = req.temperature;
        body["top_p"] = req.top_p;

        const nlohmann::json reply = post("/chat/completions", body);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(false, std::string("malformed chat response: ") + e.what());
        }
    }

    std::vector<double> embed(const std::string& model_id, const std::string& text) override {
        nlohmann::json body;
        body["model"] = model_id;
        body["input"] = text;
        const nlohmann::json reply = post("/embeddings", body);
        try {
            return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(false, std::string("malformed embedding response: ") + e.what());
        }
    }

private:
    // base_url may carry a path prefix ("https://host/v1"); httplib clients
    // want scheme://host only, with the prefix folded into each request path.
    static std::pair<std::string, std::string> split_base_url(const std::string& base) {
        const std::size_t scheme = base.find("://");
        const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
        const std::size_t slash = base.find('/', host_start);
        if (slash == std::string::npos) return {base, ""};
        std::string prefix = base.substr(slash);
        while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        return {base.substr(0, slash), prefix};
    }

    nlohmann::json post(const std::string& path, const nlohmann::json& body) {
        const auto [host, prefix] = split_base_url(config_.base_url);
        httplib::Client client(host);
        client.set_connection_timeout(config_.timeout_seconds);
        client.set_read_timeout(config_.timeout_seconds);
        httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};

        auto res = client.Post(prefix + path, headers, body.dump(), "application/json");
        if (!res) {
            throw ProviderError(true, "connection failure to " + config_.base_url + path);
        }
        if (res->status == 401 || res->status == 403) {
            throw ProviderError(false, "authentication failure (HTTP " +
                                           std::to_string(res->status) + ")");
        }
        if (res->status == 429 || res->status >= 500) {
            throw ProviderError(true, "HTTP " + std::to_string(res->status) + " from provider");
        }
        if (res->status != 200) {
            throw ProviderError(false, "HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded()) {
            throw ProviderError(false, "provider returned invalid JSON");
        }
        return reply;
    }

    HttpProviderConfig config_;
    std::string api_key_;
};

}  // namespace

std::unique_ptr<Provider> make_http_provider(const HttpProviderConfig& config) {
    return std::make_unique<HttpProvider>(config);
}

// Prompt rendering -------------------------------------------------------

std::string render_generation_prompt(const GenerationContext& ctx) {
    if (ctx.notes.empty()) {
        throw std::invalid_argument("generation context needs at least one note");
    }

    std::string prompt =
        "X has a crowd-sourced fact-checking program, called Community Notes. Here, users can "
        "write 'notes' on potentially misleading content. Each note needs to be rated by enough "
        "number of diversely-opinionated people (note-raters) for it to be shown publicly "
        "alongside the piece of content.\n"
        "Your job is to craft a 'supernote' summarising main points from existing notes (which I "
        "will provide). This supernote should be able to replace all existing notes. The goal of "
        "the supernote is to maximise consensus among diversely opinionated note-raters. It "
        "should be in unbiased language, not argumentative, cite high-quality sources (links) "
        "whenever applicable and should not add/ make-up new facts. It should also be within 280 "
        "characters.\n";

    prompt += "Post: " + ctx.post_text;
    for (std::size_t k = 0; k < ctx.notes.size(); ++k) {
        const NoteContext& note = ctx.notes[k];
        prompt += "\nNote " + std::to_string(k + 1) + ": " + note.text;
        if (!note.rating_summary.empty()) {
            prompt += " (Ratings: " + note.rating_summary + ")";
        }
        if (!note.top_tags.empty()) {
            prompt += " (Tags: ";
            for (std::size_t t = 0; t < note.top_tags.size(); ++t) {
                if (t) prompt += ",";
                prompt += note.top_tags[t];
            }
            prompt += ")";
        }
    }
    return prompt;
}

std::string render_judge_prompt(const std::string& text, const std::string& principle) {
    return "Answer with a 1(Yes) or 0 (No). Is this text " + principle + "?\nText: " + text;
}

}  // namespace supernotes
