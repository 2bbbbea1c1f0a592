#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "duet/errors.hpp"

namespace duet {

struct GenerationRequest {
    std::string system_prompt;
    std::string user_prompt;
    std::size_t max_tokens = 256;
    double temperature = 0.0;
    std::optional<std::vector<std::string>> stop;

    void validate() const;
    bool operator==(const GenerationRequest&) const = default;
};

struct TokenUsage {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
};

struct GenerationResult {
    std::string text;  // raw completion, untrimmed
    std::string model_name;
    std::chrono::milliseconds latency{0};
    std::optional<TokenUsage> token_usage;
};

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual GenerationResult generate(const GenerationRequest& request) = 0;
    virtual std::string name() const = 0;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual std::size_t dim() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted mock generator. Entries are matched against the user prompt in
// script order; first match wins. Pure function of (script, request).

struct ScriptEntry {
    enum class Kind { exact, substring };
    Kind kind = Kind::exact;
    std::string value;
    std::string response;
};

class MockGenerator : public Generator {
public:
    explicit MockGenerator(std::vector<ScriptEntry> script,
                           std::optional<std::string> fallback = std::nullopt,
                           std::string model_name = "mock")
        : script_(std::move(script)),
          fallback_(std::move(fallback)),
          model_name_(std::move(model_name)) {}

    /// Loads a JSONL script: {"match":{"kind":"exact"|"substring","value":...},"response":...}
    static std::vector<ScriptEntry> load_script(const std::string& path);

    GenerationResult generate(const GenerationRequest& request) override;
    std::string name() const override { return model_name_; }

private:
    std::vector<ScriptEntry> script_;
    std::optional<std::string> fallback_;
    std::string model_name_;
};

// ---------------------------------------------------------------------------
// Hash-based bag-of-words mock embedder: each token FNV-1a-hashed to a bucket,
// bucket counts L2-normalized. Deterministic and similarity-preserving enough
// for tests.

class MockEmbedder : public Embedder {
public:
    explicit MockEmbedder(std::size_t dim = 256) : dim_(dim) {}

    EmbeddingVector embed(const std::string& text) override;
    std::size_t dim() const override { return dim_; }

    static std::uint64_t fnv1a64(const std::string& token);
    std::size_t bucket(const std::string& token) const { return fnv1a64(token) % dim_; }

private:
    std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Networked backends speaking the standard chat-completions wire protocol.

struct HttpBackendConfig {
    std::string base_url;   // e.g. http://localhost:8080
    std::string model;
    std::string api_key;    // bearer token; empty = no auth header
    std::chrono::seconds timeout{60};
    std::size_t max_retries = 3;          // transport failures only
    std::chrono::milliseconds initial_backoff{250};
    std::size_t max_concurrency = 4;

    /// Fills base_url/api_key from DUET_BASE_URL / DUET_API_KEY when unset.
    void apply_env();
};

class HttpGenerator : public Generator {
public:
    explicit HttpGenerator(HttpBackendConfig config);
    ~HttpGenerator() override;

    GenerationResult generate(const GenerationRequest& request) override;
    std::string name() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(HttpBackendConfig config);
    ~HttpEmbedder() override;

    EmbeddingVector embed(const std::string& text) override;
    std::size_t dim() const override;  // 0 until the first successful call

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace duet
