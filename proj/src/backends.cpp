#include "duet/backends.hpp"

#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include "duet/retriever.hpp"

namespace duet {

using nlohmann::json;

void GenerationRequest::validate() const {
    if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (temperature < 0) throw ConfigError("temperature must be >= 0");
}

// --------------------------------------------------------------------------
// MockGenerator

std::vector<ScriptEntry> MockGenerator::load_script(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open script " + path);
    std::vector<ScriptEntry> script;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        ScriptEntry entry;
        const std::string kind = j.at("match").at("kind").get<std::string>();
        if (kind == "exact") {
            entry.kind = ScriptEntry::Kind::exact;
        } else if (kind == "substring") {
            entry.kind = ScriptEntry::Kind::substring;
        } else {
            throw ParseError(path + ": line " + std::to_string(line_no) +
                             ": unknown match kind " + kind);
        }
        entry.value = j.at("match").at("value").get<std::string>();
        entry.response = j.at("response").get<std::string>();
        script.push_back(std::move(entry));
    }
    return script;
}

GenerationResult MockGenerator::generate(const GenerationRequest& request) {
    request.validate();
    for (const auto& entry : script_) {
        bool matched = entry.kind == ScriptEntry::Kind::exact
                           ? request.user_prompt == entry.value
                           : request.user_prompt.find(entry.value) != std::string::npos;
        if (matched) return {entry.response, model_name_, {}, std::nullopt};
    }
    if (fallback_) return {*fallback_, model_name_, {}, std::nullopt};
    throw BackendError("mock generator: no script entry matches request and no fallback set");
}

// --------------------------------------------------------------------------
// MockEmbedder

std::uint64_t MockEmbedder::fnv1a64(const std::string& token) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : token) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

EmbeddingVector MockEmbedder::embed(const std::string& text) {
    if (text.empty()) throw BackendError("cannot embed empty text");
    std::vector<double> values(dim_, 0.0);
    for (const auto& token : tokenize(text)) values[bucket(token)] += 1.0;
    double norm = 0.0;
    for (double v : values) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& v : values) v /= norm;
    }
    return {std::move(values)};
}

// --------------------------------------------------------------------------
// HTTP backends

void HttpBackendConfig::apply_env() {
    if (base_url.empty()) {
        if (const char* v = std::getenv("DUET_BASE_URL")) base_url = v;
    }
    if (api_key.empty()) {
        if (const char* v = std::getenv("DUET_API_KEY")) api_key = v;
    }
}

namespace {

// Bounds in-flight requests per backend handle.
class ConcurrencyGate {
public:
    explicit ConcurrencyGate(std::size_t limit) : limit_(limit) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < limit_; });
        ++in_flight_;
    }

    void release() {
        {
            std::lock_guard lock(mu_);
            --in_flight_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t limit_;
    std::size_t in_flight_ = 0;
};

struct GateGuard {
    ConcurrencyGate& gate;
    explicit GateGuard(ConcurrencyGate& g) : gate(g) { gate.acquire(); }
    ~GateGuard() { gate.release(); }
};

// POSTs a JSON body; retries transport failures with exponential backoff,
// never retries a well-formed HTTP response.
json post_json(const HttpBackendConfig& cfg, const std::string& path, const json& body) {
    if (cfg.base_url.empty())
        throw ConfigError("no base_url configured (set DUET_BASE_URL or config)");

    httplib::Headers headers;
    if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
    const std::string payload = body.dump();

    std::string last_transport_error;
    bool last_was_timeout = false;
    auto backoff = cfg.initial_backoff;
    for (std::size_t attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        httplib::Client client(cfg.base_url);
        client.set_connection_timeout(cfg.timeout.count(), 0);
        client.set_read_timeout(cfg.timeout.count(), 0);
        client.set_write_timeout(cfg.timeout.count(), 0);

        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            // Anything without an HTTP response (connect refused, timeouts,
            // mid-stream read errors) counts as transient transport failure.
            last_transport_error = httplib::to_string(res.error());
            last_was_timeout = res.error() == httplib::Error::ConnectionTimeout ||
                               res.error() == httplib::Error::Read;
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw ProtocolError(res->status, res->body,
                                "backend returned HTTP " + std::to_string(res->status));
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw ProtocolError(res->status, res->body,
                                std::string("backend returned invalid JSON: ") + e.what());
        }
    }
    const std::string msg = "backend unreachable after " +
                            std::to_string(cfg.max_retries + 1) +
                            " attempts: " + last_transport_error;
    if (last_was_timeout) throw TimeoutError(msg);
    throw TransportError(msg);
}

}  // namespace

struct HttpGenerator::Impl {
    HttpBackendConfig cfg;
    ConcurrencyGate gate;
    explicit Impl(HttpBackendConfig c) : cfg(std::move(c)), gate(cfg.max_concurrency) {}
};

HttpGenerator::HttpGenerator(HttpBackendConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {
    impl_->cfg.apply_env();
}

HttpGenerator::~HttpGenerator() = default;

std::string HttpGenerator::name() const { return impl_->cfg.model; }

GenerationResult HttpGenerator::generate(const GenerationRequest& request) {
    request.validate();
    json body = {
        {"model", impl_->cfg.model},
        {"messages",
         json::array({{{"role", "system"}, {"content", request.system_prompt}},
                      {{"role", "user"}, {"content", request.user_prompt}}})},
        {"max_tokens", request.max_tokens},
        {"temperature", request.temperature},
    };
    if (request.stop) body["stop"] = *request.stop;

    GateGuard guard(impl_->gate);
    auto start = std::chrono::steady_clock::now();
    json response = post_json(impl_->cfg, "/v1/chat/completions", body);
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);

    GenerationResult result;
    try {
        result.text = response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw ProtocolError(200, response.dump(),
                            std::string("malformed completion response: ") + e.what());
    }
    result.model_name = response.value("model", impl_->cfg.model);
    result.latency = elapsed;
    if (response.contains("usage")) {
        TokenUsage usage;
        usage.prompt_tokens = response["usage"].value("prompt_tokens", 0);
        usage.completion_tokens = response["usage"].value("completion_tokens", 0);
        result.token_usage = usage;
    }
    return result;
}

struct HttpEmbedder::Impl {
    HttpBackendConfig cfg;
    ConcurrencyGate gate;
    std::mutex dim_mu;
    std::size_t dim = 0;
    explicit Impl(HttpBackendConfig c) : cfg(std::move(c)), gate(cfg.max_concurrency) {}
};

HttpEmbedder::HttpEmbedder(HttpBackendConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {
    impl_->cfg.apply_env();
}

HttpEmbedder::~HttpEmbedder() = default;

std::size_t HttpEmbedder::dim() const {
    std::lock_guard lock(impl_->dim_mu);
    return impl_->dim;
}

EmbeddingVector HttpEmbedder::embed(const std::string& text) {
    if (text.empty()) throw BackendError("cannot embed empty text");
    json body = {{"model", impl_->cfg.model}, {"input", text}};

    GateGuard guard(impl_->gate);
    json response = post_json(impl_->cfg, "/v1/embeddings", body);
    EmbeddingVector vec;
    try {
        vec.values = response.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ProtocolError(200, response.dump(),
                            std::string("malformed embedding response: ") + e.what());
    }
    std::lock_guard lock(impl_->dim_mu);
    if (impl_->dim == 0) {
        impl_->dim = vec.dim();
    } else if (impl_->dim != vec.dim()) {
        throw ProtocolError(200, "", "embedding dim changed from " +
                                         std::to_string(impl_->dim) + " to " +
                                         std::to_string(vec.dim()));
    }
    return vec;
}

}  // namespace duet
