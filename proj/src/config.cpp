#include "empathy/config.hpp"

#include <cstdlib>
#include <set>

#include "empathy/cache.hpp"
#include "empathy/error.hpp"
#include "empathy/io.hpp"
#include "empathy/knowledge.hpp"
#include "empathy/mock.hpp"

namespace empathy {

using json = nlohmann::json;

namespace {

const std::set<std::string> kSpecKeys = {"kind",           "base_url",        "model",          "api_key_env",
                                         "dimension",      "cache_namespace", "path",           "timeout_seconds",
                                         "retries",        "max_outstanding", "num_candidates"};

std::string default_model(const std::string& slot) {
    if (slot == "chat") return std::string(kDefaultChatModel);
    if (slot == "judge") return std::string(kDefaultJudgeModel);
    if (slot == "embedding") return std::string(kDefaultEncoderModel);
    return {};
}

ProviderSpec default_spec(const std::string& slot) {
    ProviderSpec s;
    s.model = default_model(slot);
    return s;
}

RemoteEndpoint endpoint_for(const ProviderSpec& s, const std::string& slot) {
    if (s.base_url.empty()) throw ValidationError(slot + ": remote provider needs base_url");
    RemoteEndpoint ep;
    ep.base_url = s.base_url;
    if (!s.api_key_env.empty()) {
        const char* key = std::getenv(s.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw ValidationError(slot + ": credential variable " + s.api_key_env + " is not set");
        }
        ep.api_key = key;
    }
    ep.timeout = std::chrono::seconds(s.timeout_seconds);
    ep.retry.retries = s.retries;
    ep.max_outstanding = s.max_outstanding;
    return ep;
}

std::shared_ptr<ResponseCache> need_cache(const std::shared_ptr<ResponseCache>& cache, const std::string& slot) {
    if (!cache) throw ValidationError(slot + ": cache-only provider needs cache_dir");
    return cache;
}

void check_kind(const std::string& slot, const std::string& kind, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
        if (kind == a) return;
    }
    std::string list;
    for (const char* a : allowed) list += (list.empty() ? "" : "|") + std::string(a);
    throw ValidationError(slot + ": unknown provider kind '" + kind + "' (expected " + list + ")");
}

std::shared_ptr<ChatProvider> make_chat(const ProviderSpec& s, const std::string& slot,
                                        const std::shared_ptr<ResponseCache>& cache,
                                        const std::shared_ptr<TokenBudget>& budget, const PromptTemplate& tmpl) {
    check_kind(slot, s.kind, {"mock", "remote-chat", "cache-only"});
    if (s.kind == "cache-only") {
        const auto ns = s.cache_namespace.empty() ? std::string("remote-chat") : s.cache_namespace;
        return std::make_shared<CachedChat>(nullptr, need_cache(cache, slot), ns);
    }
    std::shared_ptr<ChatProvider> live;
    if (s.kind == "mock") {
        live = std::make_shared<MockChat>(listener_responder(tmpl));
    } else {
        live = std::make_shared<RemoteChat>(endpoint_for(s, slot), budget);
    }
    if (!cache) return live;
    const auto ns = s.cache_namespace.empty() ? live->kind() : s.cache_namespace;
    return std::make_shared<CachedChat>(live, cache, ns);
}

std::shared_ptr<SentenceEmbedder> make_embedder(const ProviderSpec& s, const std::shared_ptr<ResponseCache>& cache) {
    check_kind("embedding", s.kind, {"mock", "remote-embed", "cache-only"});
    if (s.kind == "cache-only") {
        const auto id = s.cache_namespace.empty() ? "remote:" + s.model : s.cache_namespace;
        return std::make_shared<CachedSentenceEmbedder>(nullptr, need_cache(cache, "embedding"), id, s.dimension);
    }
    std::shared_ptr<SentenceEmbedder> live;
    if (s.kind == "mock") {
        live = std::make_shared<MockSentenceEmbedder>(s.dimension);
    } else {
        live = std::make_shared<RemoteSentenceEmbedder>(endpoint_for(s, "embedding"), s.model, s.dimension);
    }
    if (!cache) return live;
    return std::make_shared<CachedSentenceEmbedder>(live, cache, live->encoder_id(), s.dimension);
}

std::shared_ptr<TokenEmbedder> make_token_embedder(const ProviderSpec& s,
                                                   const std::shared_ptr<ResponseCache>& cache) {
    check_kind("token_embedding", s.kind, {"mock", "remote-embed", "cache-only"});
    if (s.kind == "cache-only") {
        const auto id = s.cache_namespace.empty() ? "remote:" + s.model : s.cache_namespace;
        return std::make_shared<CachedTokenEmbedder>(nullptr, need_cache(cache, "token_embedding"), id);
    }
    std::shared_ptr<TokenEmbedder> live;
    if (s.kind == "mock") {
        live = std::make_shared<MockTokenEmbedder>(s.dimension);
    } else {
        live = std::make_shared<RemoteTokenEmbedder>(endpoint_for(s, "token_embedding"), s.model);
    }
    if (!cache) return live;
    return std::make_shared<CachedTokenEmbedder>(live, cache, live->encoder_id());
}

std::shared_ptr<CommonsenseProvider> make_commonsense(const ProviderSpec& s) {
    check_kind("commonsense", s.kind, {"mock", "remote", "file"});
    if (s.kind == "mock") return std::make_shared<MockCommonsense>();
    if (s.kind == "file") {
        if (s.path.empty()) throw ValidationError("commonsense: file provider needs path");
        return std::make_shared<FileCommonsense>(FileCommonsense::load(s.path));
    }
    return std::make_shared<RemoteCommonsense>(endpoint_for(s, "commonsense"), s.num_candidates);
}

}  // namespace

json ProviderSpec::to_json() const {
    json j = {{"kind", kind}};
    if (!base_url.empty()) j["base_url"] = base_url;
    if (!model.empty()) j["model"] = model;
    if (!api_key_env.empty()) j["api_key_env"] = api_key_env;
    if (!cache_namespace.empty()) j["cache_namespace"] = cache_namespace;
    if (!path.empty()) j["path"] = path.string();
    j["dimension"] = dimension;
    return j;
}

ProviderSpec ProviderSpec::from_json(const json& j, const std::string& slot) {
    if (!j.is_object()) throw ValidationError(slot + ": provider entry must be an object");
    for (const auto& [k, _] : j.items()) {
        if (!kSpecKeys.contains(k)) throw ValidationError(slot + ": unknown key '" + k + "'");
    }
    ProviderSpec s = default_spec(slot);
    try {
        s.kind = j.value("kind", s.kind);
        s.base_url = j.value("base_url", s.base_url);
        s.model = j.value("model", s.model);
        s.api_key_env = j.value("api_key_env", s.api_key_env);
        s.dimension = j.value("dimension", s.dimension);
        s.cache_namespace = j.value("cache_namespace", s.cache_namespace);
        s.path = j.value("path", std::string{});
        s.timeout_seconds = j.value("timeout_seconds", s.timeout_seconds);
        s.retries = j.value("retries", s.retries);
        s.max_outstanding = j.value("max_outstanding", s.max_outstanding);
        s.num_candidates = j.value("num_candidates", s.num_candidates);
    } catch (const json::exception& e) {
        throw ValidationError(slot + ": " + e.what());
    }
    if (s.dimension == 0) throw ValidationError(slot + ": dimension must be positive");
    if (s.max_outstanding < 1) throw ValidationError(slot + ": max_outstanding must be >= 1");
    if (s.retries < 0) throw ValidationError(slot + ": retries must be >= 0");
    return s;
}

ProviderConfig ProviderConfig::all_mock() {
    ProviderConfig c;
    c.chat = default_spec("chat");
    c.judge = default_spec("judge");
    c.embedding = default_spec("embedding");
    c.token_embedding = default_spec("token_embedding");
    c.commonsense = default_spec("commonsense");
    return c;
}

ProviderConfig ProviderConfig::from_json(const json& j) {
    static const std::set<std::string> kTop = {"chat",        "judge",     "embedding",   "token_embedding",
                                               "commonsense", "cache_dir", "token_budget"};
    if (!j.is_object()) throw ValidationError("provider config must be an object");
    for (const auto& [k, _] : j.items()) {
        if (!kTop.contains(k)) throw ValidationError("provider config: unknown key '" + k + "'");
    }
    auto c = all_mock();
    const auto slot = [&](const char* name, ProviderSpec& out) {
        if (j.contains(name)) out = ProviderSpec::from_json(j[name], name);
    };
    slot("chat", c.chat);
    slot("embedding", c.embedding);
    slot("token_embedding", c.token_embedding);
    slot("commonsense", c.commonsense);
    if (j.contains("judge")) {
        c.judge = ProviderSpec::from_json(j["judge"], "judge");
        // A remote judge without its own endpoint or credential borrows the chat ones.
        if (c.judge.kind == "remote-chat" && c.chat.kind == "remote-chat") {
            if (c.judge.base_url.empty()) c.judge.base_url = c.chat.base_url;
            if (c.judge.api_key_env.empty()) c.judge.api_key_env = c.chat.api_key_env;
        }
    } else {
        // The judge shares the chat endpoint unless told otherwise.
        c.judge = c.chat;
        c.judge.model = std::string(kDefaultJudgeModel);
    }
    if (j.contains("cache_dir") && !j["cache_dir"].is_null()) c.cache_dir = j["cache_dir"].get<std::string>();
    c.token_budget = j.value("token_budget", std::int64_t{0});
    if (c.token_budget < 0) throw ValidationError("provider config: token_budget must be >= 0");
    return c;
}

ProviderConfig ProviderConfig::load(const std::filesystem::path& path) {
    const auto text = read_file(path);
    try {
        return from_json(json::parse(text));
    } catch (const json::parse_error& e) {
        throw ParseError("provider config " + path.string() + ": " + e.what());
    }
}

json ProviderConfig::to_json() const {
    return {{"chat", chat.to_json()},
            {"judge", judge.to_json()},
            {"embedding", embedding.to_json()},
            {"token_embedding", token_embedding.to_json()},
            {"commonsense", commonsense.to_json()},
            {"cache_dir", cache_dir ? json(cache_dir->string()) : json(nullptr)},
            {"token_budget", token_budget}};
}

ProviderSet make_providers(const ProviderConfig& config, const PromptTemplate& tmpl) {
    std::shared_ptr<ResponseCache> cache;
    if (config.cache_dir) cache = std::make_shared<ResponseCache>(*config.cache_dir);
    ProviderSet set;
    set.budget = std::make_shared<TokenBudget>(config.token_budget);
    set.chat = make_chat(config.chat, "chat", cache, set.budget, tmpl);
    set.judge = make_chat(config.judge, "judge", cache, set.budget, tmpl);
    set.embedder = make_embedder(config.embedding, cache);
    set.token_embedder = make_token_embedder(config.token_embedding, cache);
    set.commonsense = make_commonsense(config.commonsense);
    set.chat_model = config.chat.model;
    set.judge_model = config.judge.model;
    return set;
}

}  // namespace empathy
