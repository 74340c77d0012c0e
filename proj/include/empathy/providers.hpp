#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "empathy/relation.hpp"
#include "json.hpp"

namespace empathy {

inline constexpr std::string_view kDefaultChatModel = "gpt-3.5-turbo";
inline constexpr std::string_view kDefaultJudgeModel = "gpt-4";
inline constexpr std::string_view kDefaultEncoderModel = "all-mpnet-base-v2";
inline constexpr std::size_t kDefaultEmbeddingDim = 768;

struct ChatMessage {
    std::string role;  // "system", "user" or "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::string model_id{kDefaultChatModel};
    std::optional<int> max_tokens;

    /// Provider-standard chat-completion body. Always carries temperature.
    nlohmann::json payload() const;
    static ChatRequest from_payload(const nlohmann::json& payload);
    /// Throws ValidationError on an empty message list, an unknown role or
    /// a negative temperature.
    void validate() const;
};

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct ChatResponse {
    std::string content;
    std::optional<TokenUsage> usage;
    std::string provider_meta;

    nlohmann::json to_json() const;
    static ChatResponse from_json(const nlohmann::json& j);
};

struct Embedding {
    std::vector<double> values;

    std::size_t dimension() const noexcept { return values.size(); }
    bool operator==(const Embedding&) const = default;
};

struct TokenEmbedding {
    std::string token;
    Embedding vector;
};

/// Snapshot of provider activity.
struct CallCounts {
    std::uint64_t network_calls = 0;
    std::uint64_t cache_hits = 0;
};

/// Thread-safe counters shared by provider implementations.
class CallCounter {
public:
    CallCounter() = default;
    CallCounter(const CallCounter& other) noexcept
        : network_(other.network_.load()), cached_(other.cached_.load()) {}
    CallCounter& operator=(const CallCounter& other) noexcept {
        network_ = other.network_.load();
        cached_ = other.cached_.load();
        return *this;
    }

    void network() noexcept { network_.fetch_add(1, std::memory_order_relaxed); }
    void cached() noexcept { cached_.fetch_add(1, std::memory_order_relaxed); }
    CallCounts snapshot() const noexcept { return {network_.load(), cached_.load()}; }

private:
    std::atomic<std::uint64_t> network_{0};
    std::atomic<std::uint64_t> cached_{0};
};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    /// Short identifier of the implementation, part of every cache key.
    virtual std::string kind() const = 0;
    virtual CallCounts counts() const = 0;
};

class SentenceEmbedder {
public:
    virtual ~SentenceEmbedder() = default;
    virtual Embedding embed(std::string_view text) = 0;
    virtual std::size_t dimension() const = 0;
    /// Identifies provider and model; indexes built with a different id are
    /// rejected at load time.
    virtual std::string encoder_id() const = 0;
    virtual CallCounts counts() const = 0;
};

class TokenEmbedder {
public:
    virtual ~TokenEmbedder() = default;
    /// One vector per token, in order. Throws ValidationError when the text
    /// has no tokens.
    virtual std::vector<TokenEmbedding> embed_tokens(std::string_view text) = 0;
    virtual std::string encoder_id() const = 0;
};

class CommonsenseProvider {
public:
    virtual ~CommonsenseProvider() = default;
    /// Candidate inferences, most confident first. Never empty on success.
    virtual std::vector<std::string> infer(std::string_view context_text, Relation relation) = 0;
    virtual CallCounts counts() const = 0;
};

}  // namespace empathy
