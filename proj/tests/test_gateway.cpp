#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <set>
#include <thread>

#include "supernotes/gateway.hpp"
#include "test_util.hpp"

// After Eigen: the socket headers httplib drags in define macros that break
// Eigen's internals when seen first.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <nlohmann/json.hpp>

using namespace supernotes;

namespace {

struct Harness {
    StubProvider* stub;
    std::unique_ptr<Gateway> gateway;

    explicit Harness(GatewayConfig config = fast_config(), int stub_dim = 8) {
        auto owned = std::make_unique<StubProvider>(stub_dim);
        stub = owned.get();
        gateway = std::make_unique<Gateway>(std::move(owned), std::move(config));
    }

    static GatewayConfig fast_config() {
        GatewayConfig c;
        c.embedding_dim = 8;
        c.retry.max_attempts = 3;
        c.retry.base_delay_ms = 0;  // no sleeping in tests
        return c;
    }
};

ChatRequest simple_request(const std::string& content) {
    ChatRequest req;
    req.model_id = "test-model";
    req.messages = {{"user", content}};
    return req;
}

}  // namespace

TEST_CASE("generation prompt renders the template, post and note lines") {
    GenerationContext ctx;
    ctx.post_text = "the post body";
    ctx.notes.push_back({"first note text", "", {}});

    const std::string prompt = render_generation_prompt(ctx);
    CHECK(prompt.find("within 280 characters") != std::string::npos);
    CHECK(prompt.find("Post: the post body") != std::string::npos);
    CHECK(prompt.find("Note 1: first note text") != std::string::npos);
    CHECK(prompt.find("Note 2:") == std::string::npos);
    CHECK(prompt.find("(Tags:") == std::string::npos);

    std::size_t occurrences = 0, pos = 0;
    while ((pos = prompt.find("Note 1:", pos)) != std::string::npos) {
        ++occurrences;
        ++pos;
    }
    CHECK(occurrences == 1);
}

TEST_CASE("reordering notes swaps bodies and nothing else") {
    GenerationContext ab;
    ab.post_text = "p";
    ab.notes.push_back({"alpha", "", {}});
    ab.notes.push_back({"beta", "", {}});
    GenerationContext ba = ab;
    std::swap(ba.notes[0], ba.notes[1]);

    std::string rendered_ab = render_generation_prompt(ab);
    std::string rendered_ba = render_generation_prompt(ba);
    CHECK(rendered_ab.find("Note 1: alpha") != std::string::npos);
    CHECK(rendered_ab.find("Note 2: beta") != std::string::npos);
    CHECK(rendered_ba.find("Note 1: beta") != std::string::npos);
    CHECK(rendered_ba.find("Note 2: alpha") != std::string::npos);

    // Everything but the swapped bodies is identical.
    auto erase_all = [](std::string s, const std::string& needle) {
        std::size_t pos;
        while ((pos = s.find(needle)) != std::string::npos) s.erase(pos, needle.size());
        return s;
    };
    CHECK(erase_all(erase_all(rendered_ab, "alpha"), "beta") ==
          erase_all(erase_all(rendered_ba, "alpha"), "beta"));
}

TEST_CASE("tags render as a comma-joined suffix") {
    GenerationContext ctx;
    ctx.post_text = "p";
    ctx.notes.push_back({"note body", "", {"a", "b"}});
    const std::string prompt = render_generation_prompt(ctx);
    const std::string expected = "Note 1: note body (Tags: a,b)";
    CHECK(prompt.substr(prompt.size() - expected.size()) == expected);
}

TEST_CASE("rating summaries render before the tags") {
    GenerationContext ctx;
    ctx.post_text = "p";
    ctx.notes.push_back({"note body", "3 helpful / 1 not helpful", {"a"}});
    const std::string prompt = render_generation_prompt(ctx);
    CHECK(prompt.find("Note 1: note body (Ratings: 3 helpful / 1 not helpful) (Tags: a)") !=
          std::string::npos);
}

TEST_CASE("a context without notes is rejected") {
    GenerationContext ctx;
    ctx.post_text = "p";
    CHECK_THROWS_AS(render_generation_prompt(ctx), std::invalid_argument);
}

TEST_CASE("chat_complete returns the stub's canned text") {
    Harness h;
    h.stub->push_chat_response("a canned reply");
    CHECK(h.gateway->chat_complete(simple_request("hi")) == "a canned reply");
    CHECK(h.stub->chat_calls() == 1);
}

TEST_CASE("transient failures are retried and the retry count recorded") {
    Harness h;
    h.stub->push_chat_failure(true, "HTTP 429");
    h.stub->push_chat_failure(true, "HTTP 429");
    h.stub->push_chat_response("eventually fine");
    CHECK(h.gateway->chat_complete(simple_request("hi")) == "eventually fine");
    CHECK(h.stub->chat_calls() == 3);
    CHECK(h.gateway->stats().retries == 2);
}

TEST_CASE("the retry budget caps attempts and surfaces a retriable error") {
    Harness h;
    for (int i = 0; i < 5; ++i) h.stub->push_chat_failure(true, "HTTP 503");
    try {
        h.gateway->chat_complete(simple_request("hi"));
        FAIL("expected GatewayError");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::RetryBudgetExhausted);
    }
    CHECK(h.stub->chat_calls() == 3);  // budget of 3 attempts
}

TEST_CASE("auth failures are fatal and never retried") {
    Harness h;
    h.stub->push_chat_failure(false, "HTTP 401");
    try {
        h.gateway->chat_complete(simple_request("hi"));
        FAIL("expected GatewayError");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::Fatal);
    }
    CHECK(h.stub->chat_calls() == 1);
}

TEST_CASE("empty completions are an error") {
    Harness h;
    h.stub->push_chat_response("");
    CHECK_THROWS_AS(h.gateway->chat_complete(simple_request("hi")), GatewayError);
}

TEST_CASE("invalid chat parameters are rejected before any call") {
    Harness h;
    ChatRequest req = simple_request("hi");
    req.top_p = 0.0;
    CHECK_THROWS_AS(h.gateway->chat_complete(req), std::invalid_argument);
    req = simple_request("hi");
    req.temperature = -1.0;
    CHECK_THROWS_AS(h.gateway->chat_complete(req), std::invalid_argument);
    CHECK(h.stub->chat_calls() == 0);
}

TEST_CASE("the gateway sends prompts byte-identical to what was rendered") {
    Harness h;
    GenerationContext ctx;
    ctx.post_text = "post with unicode \xE2\x9C\x93 and 'quotes'";
    ctx.notes.push_back({"note", "2 helpful", {"x"}});
    const std::string prompt = render_generation_prompt(ctx);
    h.gateway->chat_complete(simple_request(prompt));
    const auto captured = h.stub->captured_requests();
    REQUIRE(captured.size() == 1);
    CHECK(captured[0].messages[0].second == prompt);
}

TEST_CASE("judge_principle parses leading 0/1 replies") {
    Harness h;
    h.stub->push_chat_response("1");
    CHECK(h.gateway->judge_principle("text", "argumentative or biased") == true);
    h.stub->push_chat_response("0 (No)");
    CHECK(h.gateway->judge_principle("text", "argumentative or biased") == false);
    h.stub->push_chat_response("  1 (Yes)");
    CHECK(h.gateway->judge_principle("text", "opinion or speculation") == true);
}

TEST_CASE("unparseable judge replies are re-asked twice then flagged") {
    Harness h;
    h.stub->set_chat_handler([](const ChatRequest&) { return "maybe"; });
    try {
        h.gateway->judge_principle("text", "argumentative or biased");
        FAIL("expected GatewayError");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::JudgeFailure);
    }
    CHECK(h.stub->chat_calls() == 3);  // initial ask + two re-asks
}

TEST_CASE("persistent transport failures during judging become judge failures") {
    Harness h;
    for (int i = 0; i < 3; ++i) h.stub->push_chat_failure(true, "HTTP 503");
    try {
        h.gateway->judge_principle("text", "argumentative or biased");
        FAIL("expected GatewayError");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::JudgeFailure);
    }
}

TEST_CASE("embeddings are cached by content") {
    Harness h;
    const Eigen::VectorXd a = h.gateway->embed_text("same text");
    const Eigen::VectorXd b = h.gateway->embed_text("same text");
    CHECK(h.stub->embed_calls() == 1);
    CHECK(a == b);
    CHECK(h.gateway->stats().cache_hits == 1);
    CHECK(h.gateway->stats().cache_misses == 1);

    h.gateway->embed_text("different text");
    CHECK(h.stub->embed_calls() == 2);
}

TEST_CASE("network calls equal the number of distinct texts") {
    Harness h;
    const std::vector<std::string> texts = {"a", "b", "a", "c", "b", "a", "d", "d"};
    std::set<std::string> distinct(texts.begin(), texts.end());
    for (const std::string& t : texts) h.gateway->embed_text(t);
    CHECK(h.stub->embed_calls() == static_cast<long>(distinct.size()));
}

TEST_CASE("empty text cannot be embedded") {
    Harness h;
    CHECK_THROWS_AS(h.gateway->embed_text(""), std::invalid_argument);
}

TEST_CASE("embedding dimension mismatches are flagged") {
    GatewayConfig config = Harness::fast_config();
    config.embedding_dim = 16;  // stub produces 8
    Harness h(config);
    try {
        h.gateway->embed_text("text");
        FAIL("expected GatewayError");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::DimensionMismatch);
    }
}

TEST_CASE("the embedding cache persists across gateway instances") {
    testutil::TempDir dir;
    GatewayConfig config = Harness::fast_config();
    config.cache_path = dir.file("cache.jsonl");

    Eigen::VectorXd original;
    {
        Harness h(config);
        original = h.gateway->embed_text("persisted text");
        h.gateway->embed_text("another text");
        CHECK(h.stub->embed_calls() == 2);
    }
    {
        Harness h(config);
        const Eigen::VectorXd reloaded = h.gateway->embed_text("persisted text");
        CHECK(h.stub->embed_calls() == 0);  // pure cache hit
        CHECK(reloaded == original);
    }
}

TEST_CASE("embed failures retry like chat failures") {
    Harness h;
    h.stub->push_embed_failure(true, "HTTP 500");
    const Eigen::VectorXd v = h.gateway->embed_text("flaky");
    CHECK(v.size() == 8);
    CHECK(h.stub->embed_calls() == 2);
}

TEST_CASE("default chat request carries the configured generation settings") {
    Harness h;
    const ChatRequest req = h.gateway->default_chat_request();
    CHECK(req.temperature == 0.95);
    CHECK(req.top_p == 0.8);
    CHECK(req.model_id == "gpt-4o-mini");
}

TEST_CASE("in-flight provider calls stay within the configured bound") {
    GatewayConfig config = Harness::fast_config();
    config.max_in_flight = 2;
    Harness h(config);

    std::atomic<int> active{0};
    std::atomic<int> peak{0};
    h.stub->set_chat_handler([&](const ChatRequest&) {
        const int now = ++active;
        int expected = peak.load();
        while (now > expected && !peak.compare_exchange_weak(expected, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --active;
        return std::string("ok");
    });

    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&h, i] {
            h.gateway->chat_complete(simple_request("msg " + std::to_string(i)));
        });
    }
    for (std::thread& t : threads) t.join();
    CHECK(peak.load() <= 2);
    CHECK(h.stub->chat_calls() == 8);
}

TEST_CASE("stub embeddings are deterministic unit vectors") {
    const auto a = StubProvider::hash_embedding("m", "text", 8);
    const auto b = StubProvider::hash_embedding("m", "text", 8);
    CHECK(a == b);
    const auto c = StubProvider::hash_embedding("m", "other", 8);
    CHECK(a != c);
    double norm = 0.0;
    for (double x : a) norm += x * x;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-9));
}

namespace {

struct LocalServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    LocalServer() = default;
    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1"; }
};

}  // namespace

TEST_CASE("http provider speaks the chat-completions and embeddings wire shapes") {
    unsetenv("SUPERNOTES_BASE_URL");
    LocalServer local;
    std::string captured_auth, captured_chat, captured_embed;
    local.server.Post("/v1/chat/completions",
                      [&](const httplib::Request& req, httplib::Response& res) {
                          captured_auth = req.get_header_value("Authorization");
                          captured_chat = req.body;
                          res.set_content(
                              R"({"choices":[{"message":{"role":"assistant","content":"wire reply"}}]})",
                              "application/json");
                      });
    local.server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        captured_embed = req.body;
        res.set_content(R"({"data":[{"embedding":[0.1,0.2,0.3,0.4]}]})", "application/json");
    });
    local.start();

    setenv("SUPERNOTES_TEST_KEY", "sekrit", 1);
    HttpProviderConfig config;
    config.base_url = local.base_url();
    config.api_key_env = "SUPERNOTES_TEST_KEY";
    auto provider = make_http_provider(config);

    ChatRequest req;
    req.model_id = "chat-model";
    req.messages = {{"system", "be brief"}, {"user", "hello"}};
    req.temperature = 0.5;
    req.top_p = 0.9;
    CHECK(provider->chat(req) == "wire reply");
    CHECK(captured_auth == "Bearer sekrit");
    const nlohmann::json chat_body = nlohmann::json::parse(captured_chat);
    CHECK(chat_body.at("model") == "chat-model");
    CHECK(chat_body.at("messages").size() == 2);
    CHECK(chat_body.at("messages").at(0).at("role") == "system");
    CHECK(chat_body.at("messages").at(1).at("content") == "hello");
    CHECK(chat_body.at("temperature") == 0.5);
    CHECK(chat_body.at("top_p") == 0.9);

    CHECK(provider->embed("embed-model", "some text") ==
          std::vector<double>{0.1, 0.2, 0.3, 0.4});
    const nlohmann::json embed_body = nlohmann::json::parse(captured_embed);
    CHECK(embed_body.at("model") == "embed-model");
    CHECK(embed_body.at("input") == "some text");
}

TEST_CASE("http provider maps status codes onto transient and fatal errors") {
    unsetenv("SUPERNOTES_BASE_URL");
    LocalServer local;
    std::atomic<int> status{429};
    local.server.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                          res.status = status.load();
                          res.set_content("{}", "application/json");
                      });
    local.start();

    setenv("SUPERNOTES_TEST_KEY", "sekrit", 1);
    HttpProviderConfig config;
    config.base_url = local.base_url();
    config.api_key_env = "SUPERNOTES_TEST_KEY";
    auto provider = make_http_provider(config);

    ChatRequest req;
    req.model_id = "m";
    req.messages = {{"user", "x"}};

    auto expect_transient = [&](int code, bool transient) {
        status = code;
        try {
            provider->chat(req);
            FAIL("expected ProviderError");
        } catch (const ProviderError& e) {
            CHECK(e.transient() == transient);
        }
    };
    expect_transient(429, true);
    expect_transient(503, true);
    expect_transient(401, false);
    expect_transient(400, false);

    SUBCASE("a missing API key is fatal up front") {
        unsetenv("SUPERNOTES_MISSING_KEY");
        HttpProviderConfig bad;
        bad.base_url = local.base_url();
        bad.api_key_env = "SUPERNOTES_MISSING_KEY";
        CHECK_THROWS_AS(make_http_provider(bad), ProviderError);
    }
}
