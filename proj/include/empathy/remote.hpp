#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

#include "empathy/providers.hpp"

namespace empathy {

/// Retries for transient failures (transport errors, 429, 5xx). Delay
/// before retry i (1-based) is base_delay * 2^(i-1), capped at max_delay,
/// scaled by a uniform factor in [1 - jitter, 1 + jitter].
struct RetryPolicy {
    int retries = 3;
    std::chrono::milliseconds base_delay{1000};
    std::chrono::milliseconds max_delay{8000};
    double jitter = 0.2;

    std::chrono::milliseconds delay_for(int retry, double unit_random) const;
};

struct RemoteEndpoint {
    std::string base_url;  // e.g. https://api.openai.com/v1
    std::string api_key;
    std::chrono::seconds timeout{60};
    RetryPolicy retry;
    std::ptrdiff_t max_outstanding = 8;
};

/// Aborts further chat calls once the accumulated token usage reaches the
/// cap. A cap of 0 disables the guard.
class TokenBudget {
public:
    explicit TokenBudget(std::int64_t cap) : cap_(cap) {}

    void check() const;
    void charge(const TokenUsage& usage) noexcept;
    std::int64_t used() const noexcept { return used_.load(); }
    std::int64_t cap() const noexcept { return cap_; }

private:
    std::int64_t cap_;
    std::atomic<std::int64_t> used_{0};
};

/// JSON-over-HTTP POST with bearer auth, bounded concurrency and retries.
class HttpJsonClient {
public:
    explicit HttpJsonClient(RemoteEndpoint endpoint);
    ~HttpJsonClient();

    nlohmann::json post(const std::string& path, const nlohmann::json& body);
    CallCounts counts() const { return counter_.snapshot(); }

private:
    nlohmann::json post_once(const std::string& path, const std::string& body);

    RemoteEndpoint endpoint_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::counting_semaphore<> outstanding_;
    CallCounter counter_;
};

/// OpenAI-compatible /chat/completions client.
class RemoteChat final : public ChatProvider {
public:
    RemoteChat(RemoteEndpoint endpoint, std::shared_ptr<TokenBudget> budget = nullptr);

    ChatResponse complete(const ChatRequest& request) override;
    std::string kind() const override { return "remote-chat"; }
    CallCounts counts() const override { return client_.counts(); }

private:
    HttpJsonClient client_;
    std::shared_ptr<TokenBudget> budget_;
};

/// OpenAI-compatible /embeddings client.
class RemoteSentenceEmbedder final : public SentenceEmbedder {
public:
    RemoteSentenceEmbedder(RemoteEndpoint endpoint, std::string model, std::size_t dimension);

    Embedding embed(std::string_view text) override;
    std::size_t dimension() const override { return dimension_; }
    std::string encoder_id() const override { return "remote:" + model_; }
    CallCounts counts() const override { return client_.counts(); }

private:
    HttpJsonClient client_;
    std::string model_;
    std::size_t dimension_;
};

/// POST /token_embeddings {"model","input"} -> {"tokens":[..],"embeddings":[[..]..]}.
class RemoteTokenEmbedder final : public TokenEmbedder {
public:
    RemoteTokenEmbedder(RemoteEndpoint endpoint, std::string model);

    std::vector<TokenEmbedding> embed_tokens(std::string_view text) override;
    std::string encoder_id() const override { return "remote:" + model_; }

private:
    HttpJsonClient client_;
    std::string model_;
};

/// POST /commonsense {"context","relation","num_candidates"} -> {"inferences":[..]}.
class RemoteCommonsense final : public CommonsenseProvider {
public:
    RemoteCommonsense(RemoteEndpoint endpoint, int num_candidates = 5);

    std::vector<std::string> infer(std::string_view context_text, Relation relation) override;
    CallCounts counts() const override { return client_.counts(); }

private:
    HttpJsonClient client_;
    int num_candidates_;
};

}  // namespace empathy
