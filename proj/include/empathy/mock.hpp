#pragma once

#include <functional>
#include <map>
#include <string>

#include "empathy/providers.hpp"

namespace empathy {

struct PromptTemplate;

using ChatResponder = std::function<std::string(const ChatRequest&)>;

/// Replies with the last non-empty line of the last message.
ChatResponder echo_responder();

/// Looks the last message up in `script`; unmatched messages get `fallback`
/// (or a ProviderError when `fallback` is empty).
ChatResponder scripted_responder(std::map<std::string, std::string> script, ChatResponder fallback = {});

/// Deterministic stand-in for a chat model that follows the pipeline's
/// prompts: answers stage-1 prompts with an emotion/situation guess, judge
/// prompts with a verdict token, and anything else with a short listener
/// reply derived from the last Speaker line.
ChatResponder listener_responder(const PromptTemplate& tmpl);

/// In-process chat provider backed by a responder function.
class MockChat final : public ChatProvider {
public:
    explicit MockChat(ChatResponder responder) : responder_(std::move(responder)) {}

    ChatResponse complete(const ChatRequest& request) override;
    std::string kind() const override { return "mock"; }
    CallCounts counts() const override { return counter_.snapshot(); }

private:
    ChatResponder responder_;
    CallCounter counter_;
};

/// Hash-seeded pseudo-random unit vectors: same text, same vector.
class MockSentenceEmbedder final : public SentenceEmbedder {
public:
    explicit MockSentenceEmbedder(std::size_t dimension = kDefaultEmbeddingDim) : dimension_(dimension) {}

    Embedding embed(std::string_view text) override;
    std::size_t dimension() const override { return dimension_; }
    std::string encoder_id() const override { return "mock-sentence-" + std::to_string(dimension_); }
    CallCounts counts() const override { return counter_.snapshot(); }

private:
    std::size_t dimension_;
    CallCounter counter_;
};

/// Whitespace tokenizer with context-free hash-seeded token vectors.
class MockTokenEmbedder final : public TokenEmbedder {
public:
    explicit MockTokenEmbedder(std::size_t dimension = kDefaultEmbeddingDim) : dimension_(dimension) {}

    std::vector<TokenEmbedding> embed_tokens(std::string_view text) override;
    std::string encoder_id() const override { return "mock-token-" + std::to_string(dimension_); }

private:
    std::size_t dimension_;
};

/// Returns {"<relation>: stub"} for any context.
class MockCommonsense final : public CommonsenseProvider {
public:
    std::vector<std::string> infer(std::string_view context_text, Relation relation) override;
    CallCounts counts() const override { return counter_.snapshot(); }

private:
    CallCounter counter_;
};

/// Unit vector derived from `seed_text`; exposed for tests and fixtures.
Embedding hashed_unit_vector(std::string_view seed_text, std::size_t dimension);

}  // namespace empathy
