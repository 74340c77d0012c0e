#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "empathy/prompting.hpp"
#include "empathy/providers.hpp"
#include "empathy/remote.hpp"
#include "json.hpp"

namespace empathy {

/// One provider slot. Accepted kinds per slot:
///   chat, judge:       mock | remote-chat | cache-only
///   embedding:         mock | remote-embed | cache-only
///   token_embedding:   mock | remote-embed | cache-only
///   commonsense:       mock | remote | file
struct ProviderSpec {
    std::string kind = "mock";
    std::string base_url;
    std::string model;
    std::string api_key_env;  // name of the variable holding the credential
    std::size_t dimension = kDefaultEmbeddingDim;
    /// Cache key namespace. Cache-only slots must use the namespace the
    /// cache was filled under; defaults to the live provider's kind.
    std::string cache_namespace;
    std::filesystem::path path;  // commonsense "file"
    int timeout_seconds = 60;
    int retries = 3;
    int max_outstanding = 8;
    int num_candidates = 5;

    nlohmann::json to_json() const;
    static ProviderSpec from_json(const nlohmann::json& j, const std::string& slot);
};

struct ProviderConfig {
    ProviderSpec chat;
    ProviderSpec judge;
    ProviderSpec embedding;
    ProviderSpec token_embedding;
    ProviderSpec commonsense;
    /// Write-through cache for chat and embedding calls; required by
    /// cache-only slots.
    std::optional<std::filesystem::path> cache_dir;
    /// Token cap for chat calls; 0 disables the guard.
    std::int64_t token_budget = 0;

    /// Every slot mocked, no cache.
    static ProviderConfig all_mock();
    static ProviderConfig from_json(const nlohmann::json& j);
    static ProviderConfig load(const std::filesystem::path& path);
    /// Credentials are never included, only the variable names.
    nlohmann::json to_json() const;
};

struct ProviderSet {
    std::shared_ptr<ChatProvider> chat;
    std::shared_ptr<ChatProvider> judge;
    std::shared_ptr<SentenceEmbedder> embedder;
    std::shared_ptr<TokenEmbedder> token_embedder;
    std::shared_ptr<CommonsenseProvider> commonsense;
    std::shared_ptr<TokenBudget> budget;
    std::string chat_model;
    std::string judge_model;
};

/// Builds every slot. `tmpl` drives the mock chat responder. Throws
/// ValidationError for unknown kinds, a missing cache_dir for cache-only
/// slots, or an unset credential variable.
ProviderSet make_providers(const ProviderConfig& config, const PromptTemplate& tmpl = PromptTemplate::defaults());

}  // namespace empathy
