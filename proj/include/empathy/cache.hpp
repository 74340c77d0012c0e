#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include "empathy/providers.hpp"

namespace empathy {

/// Content hash over (provider kind, model id, full request payload).
struct CacheKey {
    std::string digest;

    static CacheKey of(std::string_view provider_kind, std::string_view model_id, const nlohmann::json& payload);
    bool operator==(const CacheKey&) const = default;
};

struct CacheRecord {
    std::string digest;
    nlohmann::json request;
    nlohmann::json response;
    std::string timestamp;
};

/// Write-through on-disk response cache, one JSON file per key.
/// Concurrent lookups proceed in parallel; stores for the same key are
/// serialized and land atomically (temp file + rename).
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    std::optional<CacheRecord> lookup(const CacheKey& key);
    void store(const CacheKey& key, const nlohmann::json& request, const nlohmann::json& response);

    const std::filesystem::path& directory() const noexcept { return dir_; }

private:
    std::filesystem::path path_for(const CacheKey& key) const;
    std::mutex& stripe(const CacheKey& key);

    std::filesystem::path dir_;
    std::shared_mutex memo_mutex_;
    std::unordered_map<std::string, CacheRecord> memo_;
    std::array<std::mutex, 64> write_stripes_;
};

/// Serves repeated requests from the cache. With no inner provider it runs
/// in cache-only mode and a miss raises ProviderError(CacheMiss).
class CachedChat final : public ChatProvider {
public:
    CachedChat(std::shared_ptr<ChatProvider> inner, std::shared_ptr<ResponseCache> cache, std::string kind);

    ChatResponse complete(const ChatRequest& request) override;
    std::string kind() const override { return kind_; }
    CallCounts counts() const override;

private:
    std::shared_ptr<ChatProvider> inner_;
    std::shared_ptr<ResponseCache> cache_;
    std::string kind_;
    CallCounter hits_;
};

class CachedSentenceEmbedder final : public SentenceEmbedder {
public:
    CachedSentenceEmbedder(std::shared_ptr<SentenceEmbedder> inner, std::shared_ptr<ResponseCache> cache,
                           std::string encoder_id, std::size_t dimension);

    Embedding embed(std::string_view text) override;
    std::size_t dimension() const override { return dimension_; }
    std::string encoder_id() const override { return encoder_id_; }
    CallCounts counts() const override;

private:
    std::shared_ptr<SentenceEmbedder> inner_;
    std::shared_ptr<ResponseCache> cache_;
    std::string encoder_id_;
    std::size_t dimension_;
    CallCounter hits_;
};

class CachedTokenEmbedder final : public TokenEmbedder {
public:
    CachedTokenEmbedder(std::shared_ptr<TokenEmbedder> inner, std::shared_ptr<ResponseCache> cache,
                        std::string encoder_id);

    std::vector<TokenEmbedding> embed_tokens(std::string_view text) override;
    std::string encoder_id() const override { return encoder_id_; }

private:
    std::shared_ptr<TokenEmbedder> inner_;
    std::shared_ptr<ResponseCache> cache_;
    std::string encoder_id_;
};

}  // namespace empathy
