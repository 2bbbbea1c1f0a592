#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "duet/backends.hpp"
#include "duet/referee.hpp"

using namespace duet;
using nlohmann::json;

namespace {

GenerationRequest make_request(const std::string& prompt) {
    GenerationRequest req;
    req.user_prompt = prompt;
    return req;
}

double mock_cosine(const std::string& a, const std::string& b) {
    MockEmbedder embedder;
    return cosine(embedder.embed(a), embedder.embed(b));
}

// Runs an httplib server for the lifetime of the test case.
class StubServer {
public:
    explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", handler);
        server_.Post("/v1/embeddings", handler);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

HttpBackendConfig stub_config(const StubServer& server) {
    HttpBackendConfig cfg;
    cfg.base_url = server.base_url();
    cfg.model = "stub-model";
    cfg.max_retries = 1;
    cfg.initial_backoff = std::chrono::milliseconds(10);
    return cfg;
}

}  // namespace

TEST_CASE("mock generator matches script entries in order") {
    std::vector<ScriptEntry> script = {
        {ScriptEntry::Kind::exact, "What is the capital of France?", "Paris"},
        {ScriptEntry::Kind::substring, "capital", "some capital"},
    };
    MockGenerator gen(script, "UNKNOWN");

    CHECK(gen.generate(make_request("What is the capital of France?")).text == "Paris");
    CHECK(gen.generate(make_request("name a capital city")).text == "some capital");
    CHECK(gen.generate(make_request("unrelated")).text == "UNKNOWN");
}

TEST_CASE("mock generator without fallback errors on unmatched prompts") {
    MockGenerator gen({}, std::nullopt);
    CHECK_THROWS_AS(gen.generate(make_request("anything")), BackendError);
}

TEST_CASE("mock generator is a pure function of (script, request)") {
    MockGenerator gen({{ScriptEntry::Kind::substring, "q", "a"}}, "f");
    auto r1 = gen.generate(make_request("some q"));
    auto r2 = gen.generate(make_request("some q"));
    CHECK(r1.text == r2.text);
    CHECK(r1.model_name == r2.model_name);
}

TEST_CASE("script file loads JSONL entries") {
    auto path = (std::filesystem::temp_directory_path() / "duet_script.jsonl").string();
    {
        std::ofstream out(path);
        out << R"({"match":{"kind":"exact","value":"hi"},"response":"hello"})" << "\n";
        out << R"({"match":{"kind":"substring","value":"weather"},"response":"sunny"})" << "\n";
    }
    MockGenerator gen(MockGenerator::load_script(path));
    CHECK(gen.generate(make_request("hi")).text == "hello");
    CHECK(gen.generate(make_request("how is the weather today")).text == "sunny");
}

TEST_CASE("invalid generation requests are rejected") {
    MockGenerator gen({}, "x");
    GenerationRequest req;
    req.max_tokens = 0;
    CHECK_THROWS_AS(gen.generate(req), ConfigError);
}

TEST_CASE("mock embedder is deterministic") {
    MockEmbedder embedder;
    auto a = embedder.embed("cat");
    auto b = embedder.embed("cat");
    CHECK(a.values == b.values);
    CHECK(a.dim() == 256);
}

TEST_CASE("repeated tokens scale a bucket, direction unchanged") {
    CHECK(mock_cosine("cat", "cat cat") == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("disjoint collision-free token sets are orthogonal") {
    MockEmbedder embedder;
    REQUIRE(embedder.bucket("alpha") != embedder.bucket("omega"));
    CHECK(mock_cosine("alpha", "omega") == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("bucket assignment agrees with a direct FNV-1a evaluation") {
    // FNV-1a 64: h = 14695981039346656037; per byte h = (h ^ c) * 1099511628211.
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : std::string("cat")) h = (h ^ c) * 1099511628211ULL;
    MockEmbedder embedder;
    CHECK(embedder.bucket("cat") == h % 256);
}

TEST_CASE("embedding vectors are L2-normalized") {
    MockEmbedder embedder;
    auto v = embedder.embed("one two three");
    double norm = 0;
    for (double x : v.values) norm += x * x;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("empty text cannot be embedded") {
    MockEmbedder embedder;
    CHECK_THROWS_AS(embedder.embed(""), BackendError);
}

TEST_CASE("http generator parses a stubbed completion") {
    StubServer server([](const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body);
        REQUIRE(body.at("messages").size() == 2);
        CHECK(body["messages"][1]["role"] == "user");
        res.set_content(json{{"model", "stub-model"},
                             {"choices", json::array({{{"message",
                                                        {{"content", "Paris"}}}}})},
                             {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 1}}}}
                            .dump(),
                        "application/json");
    });
    HttpGenerator gen(stub_config(server));
    auto result = gen.generate(make_request("What is the capital of France?"));
    CHECK(result.text == "Paris");
    REQUIRE(result.token_usage.has_value());
    CHECK(result.token_usage->prompt_tokens == 7);
}

TEST_CASE("http generator sends the bearer token") {
    std::string seen_auth;
    StubServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        res.set_content(
            json{{"choices", json::array({{{"message", {{"content", "ok"}}}}})}}.dump(),
            "application/json");
    });
    auto cfg = stub_config(server);
    cfg.api_key = "secret";
    HttpGenerator gen(cfg);
    gen.generate(make_request("q"));
    CHECK(seen_auth == "Bearer secret");
}

TEST_CASE("non-2xx responses raise a protocol error and are not retried") {
    std::atomic<int> calls{0};
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    HttpGenerator gen(stub_config(server));
    try {
        gen.generate(make_request("q"));
        FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
        CHECK(e.status == 400);
        CHECK(e.body == "bad request");
    }
    CHECK(calls == 1);
}

TEST_CASE("unreachable host fails with a transport error after retries") {
    HttpBackendConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";  // nothing listens here
    cfg.model = "m";
    cfg.max_retries = 2;
    cfg.initial_backoff = std::chrono::milliseconds(1);
    HttpGenerator gen(cfg);
    CHECK_THROWS_AS(gen.generate(make_request("q")), TransportError);
}

TEST_CASE("http embedder parses vectors and enforces a stable dim") {
    std::atomic<int> calls{0};
    StubServer server([&](const httplib::Request&, httplib::Response& res) {
        int n = ++calls;
        json vec = n <= 2 ? json::array({1.0, 0.0, 0.0}) : json::array({1.0, 0.0});
        res.set_content(json{{"data", json::array({{{"embedding", vec}}})}}.dump(),
                        "application/json");
    });
    HttpEmbedder embedder(stub_config(server));
    CHECK(embedder.embed("a").dim() == 3);
    CHECK(embedder.embed("b").dim() == 3);
    CHECK(embedder.dim() == 3);
    CHECK_THROWS_AS(embedder.embed("c"), ProtocolError);  // dim shrank to 2
}
