#include "empathy/cache.hpp"

#include <filesystem>

#include "empathy/error.hpp"
#include "empathy/hashing.hpp"
#include "empathy/io.hpp"

namespace empathy {

using json = nlohmann::json;
namespace fs = std::filesystem;

CacheKey CacheKey::of(std::string_view provider_kind, std::string_view model_id, const json& payload) {
    std::string material;
    material.append(provider_kind).push_back('\n');
    material.append(model_id).push_back('\n');
    material.append(payload.dump());
    return {sha256_hex(material)};
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path ResponseCache::path_for(const CacheKey& key) const {
    return dir_ / key.digest.substr(0, 2) / (key.digest + ".json");
}

std::mutex& ResponseCache::stripe(const CacheKey& key) {
    return write_stripes_[fnv1a64(key.digest) % write_stripes_.size()];
}

std::optional<CacheRecord> ResponseCache::lookup(const CacheKey& key) {
    {
        std::shared_lock lock(memo_mutex_);
        if (auto it = memo_.find(key.digest); it != memo_.end()) return it->second;
    }
    const auto path = path_for(key);
    if (!fs::exists(path)) return std::nullopt;
    CacheRecord rec;
    try {
        const auto j = json::parse(read_file(path));
        rec.digest = j.at("digest").get<std::string>();
        rec.request = j.at("request");
        rec.response = j.at("response");
        rec.timestamp = j.value("timestamp", std::string{});
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Malformed, "corrupt cache record " + path.string() + ": " + e.what());
    }
    if (rec.digest != key.digest) {
        throw ProviderError(ProviderError::Kind::Malformed, "cache record " + path.string() + " has wrong digest");
    }
    std::unique_lock lock(memo_mutex_);
    memo_.emplace(key.digest, rec);
    return rec;
}

void ResponseCache::store(const CacheKey& key, const json& request, const json& response) {
    CacheRecord rec{key.digest, request, response, utc_timestamp()};
    json j = {{"digest", rec.digest}, {"request", rec.request}, {"response", rec.response}, {"timestamp", rec.timestamp}};
    {
        std::lock_guard guard(stripe(key));
        atomic_write(path_for(key), j.dump() + "\n");
    }
    std::unique_lock lock(memo_mutex_);
    memo_.insert_or_assign(key.digest, std::move(rec));
}

CachedChat::CachedChat(std::shared_ptr<ChatProvider> inner, std::shared_ptr<ResponseCache> cache, std::string kind)
    : inner_(std::move(inner)), cache_(std::move(cache)), kind_(std::move(kind)) {
    if (!cache_) throw ValidationError("CachedChat requires a cache");
}

ChatResponse CachedChat::complete(const ChatRequest& request) {
    request.validate();
    const auto payload = request.payload();
    const auto key = CacheKey::of(kind_, request.model_id, payload);
    if (auto hit = cache_->lookup(key)) {
        hits_.cached();
        return ChatResponse::from_json(hit->response);
    }
    if (!inner_) {
        throw ProviderError(ProviderError::Kind::CacheMiss, "cache-only chat: no cached response for key " + key.digest);
    }
    auto response = inner_->complete(request);
    cache_->store(key, payload, response.to_json());
    return response;
}

CallCounts CachedChat::counts() const {
    CallCounts c = inner_ ? inner_->counts() : CallCounts{};
    c.cache_hits += hits_.snapshot().cache_hits;
    return c;
}

CachedSentenceEmbedder::CachedSentenceEmbedder(std::shared_ptr<SentenceEmbedder> inner,
                                               std::shared_ptr<ResponseCache> cache, std::string encoder_id,
                                               std::size_t dimension)
    : inner_(std::move(inner)), cache_(std::move(cache)), encoder_id_(std::move(encoder_id)), dimension_(dimension) {
    if (!cache_) throw ValidationError("CachedSentenceEmbedder requires a cache");
}

Embedding CachedSentenceEmbedder::embed(std::string_view text) {
    if (text.empty()) throw ValidationError("embed_sentence: empty text");
    const json payload = {{"input", text}, {"model", encoder_id_}};
    const auto key = CacheKey::of("sentence-embedding", encoder_id_, payload);
    if (auto hit = cache_->lookup(key)) {
        hits_.cached();
        Embedding e{hit->response.at("embedding").get<std::vector<double>>()};
        if (e.dimension() != dimension_) {
            throw ProviderError(ProviderError::Kind::Malformed, "cached embedding has wrong dimension");
        }
        return e;
    }
    if (!inner_) {
        throw ProviderError(ProviderError::Kind::CacheMiss,
                            "cache-only embedder: no cached vector for key " + key.digest);
    }
    auto e = inner_->embed(text);
    cache_->store(key, payload, {{"embedding", e.values}});
    return e;
}

CallCounts CachedSentenceEmbedder::counts() const {
    CallCounts c = inner_ ? inner_->counts() : CallCounts{};
    c.cache_hits += hits_.snapshot().cache_hits;
    return c;
}

CachedTokenEmbedder::CachedTokenEmbedder(std::shared_ptr<TokenEmbedder> inner, std::shared_ptr<ResponseCache> cache,
                                         std::string encoder_id)
    : inner_(std::move(inner)), cache_(std::move(cache)), encoder_id_(std::move(encoder_id)) {
    if (!cache_) throw ValidationError("CachedTokenEmbedder requires a cache");
}

std::vector<TokenEmbedding> CachedTokenEmbedder::embed_tokens(std::string_view text) {
    const json payload = {{"input", text}, {"model", encoder_id_}};
    const auto key = CacheKey::of("token-embedding", encoder_id_, payload);
    std::vector<TokenEmbedding> out;
    if (auto hit = cache_->lookup(key)) {
        const auto& tokens = hit->response.at("tokens");
        const auto& vectors = hit->response.at("embeddings");
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            out.push_back({tokens[i].get<std::string>(), Embedding{vectors.at(i).get<std::vector<double>>()}});
        }
        return out;
    }
    if (!inner_) {
        throw ProviderError(ProviderError::Kind::CacheMiss,
                            "cache-only token embedder: no cached vectors for key " + key.digest);
    }
    out = inner_->embed_tokens(text);
    json tokens = json::array(), vectors = json::array();
    for (const auto& t : out) {
        tokens.push_back(t.token);
        vectors.push_back(t.vector.values);
    }
    cache_->store(key, payload, {{"tokens", tokens}, {"embeddings", vectors}});
    return out;
}

}  // namespace empathy
