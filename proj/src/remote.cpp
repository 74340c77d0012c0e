#include "empathy/remote.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "empathy/error.hpp"

namespace empathy {

using json = nlohmann::json;

std::chrono::milliseconds RetryPolicy::delay_for(int retry, double unit_random) const {
    const double base = static_cast<double>(base_delay.count()) * std::pow(2.0, retry - 1);
    const double capped = std::min(base, static_cast<double>(max_delay.count()));
    const double factor = 1.0 + jitter * (2.0 * unit_random - 1.0);
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(capped * factor)));
}

void TokenBudget::check() const {
    if (cap_ > 0 && used_.load() >= cap_) {
        throw ProviderError(ProviderError::Kind::Budget, "token budget exhausted: used " + std::to_string(used_.load()) +
                                                             " of " + std::to_string(cap_));
    }
}

void TokenBudget::charge(const TokenUsage& usage) noexcept {
    used_.fetch_add(usage.prompt_tokens + usage.completion_tokens);
}

namespace {

/// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

class SemaphoreGuard {
public:
    explicit SemaphoreGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
    ~SemaphoreGuard() { s_.release(); }
    SemaphoreGuard(const SemaphoreGuard&) = delete;
    SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

private:
    std::counting_semaphore<>& s_;
};

}  // namespace

HttpJsonClient::HttpJsonClient(RemoteEndpoint endpoint)
    : endpoint_(std::move(endpoint)), outstanding_(std::max<std::ptrdiff_t>(1, endpoint_.max_outstanding)) {
    if (endpoint_.base_url.empty()) throw ValidationError("remote provider: base_url is empty");
    std::tie(scheme_host_port_, path_prefix_) = split_base_url(endpoint_.base_url);
}

HttpJsonClient::~HttpJsonClient() = default;

json HttpJsonClient::post_once(const std::string& path, const std::string& body) {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(endpoint_.timeout);
    client.set_read_timeout(endpoint_.timeout);
    client.set_write_timeout(endpoint_.timeout);
    httplib::Headers headers;
    if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

    counter_.network();
    auto res = client.Post(path_prefix_ + path, headers, body, "application/json");
    if (!res) {
        throw ProviderError(ProviderError::Kind::Transport,
                            "POST " + path + " failed: " + httplib::to_string(res.error()));
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
        throw ProviderError(ProviderError::Kind::Auth, "POST " + path + ": authentication failed (HTTP " +
                                                           std::to_string(status) + ")");
    }
    if (status == 429) throw ProviderError(ProviderError::Kind::RateLimit, "POST " + path + ": rate limited");
    if (status >= 500) {
        throw ProviderError(ProviderError::Kind::Transport, "POST " + path + ": HTTP " + std::to_string(status));
    }
    if (status < 200 || status >= 300) {
        throw ProviderError(ProviderError::Kind::Other,
                            "POST " + path + ": HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Malformed, "POST " + path + ": reply is not JSON: " + e.what());
    }
}

json HttpJsonClient::post(const std::string& path, const json& body) {
    const auto text = body.dump();
    thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
    for (int attempt = 0;; ++attempt) {
        try {
            SemaphoreGuard guard(outstanding_);
            return post_once(path, text);
        } catch (const ProviderError& e) {
            if (!e.retriable() || attempt >= endpoint_.retry.retries) throw;
            const double u = std::uniform_real_distribution<double>(0.0, 1.0)(jitter_rng);
            std::this_thread::sleep_for(endpoint_.retry.delay_for(attempt + 1, u));
        }
    }
}

RemoteChat::RemoteChat(RemoteEndpoint endpoint, std::shared_ptr<TokenBudget> budget)
    : client_(std::move(endpoint)), budget_(std::move(budget)) {}

ChatResponse RemoteChat::complete(const ChatRequest& request) {
    request.validate();
    if (budget_) budget_->check();
    const auto reply = client_.post("/chat/completions", request.payload());
    ChatResponse out;
    try {
        out.content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        if (reply.contains("usage") && reply["usage"].is_object()) {
            out.usage = TokenUsage{reply["usage"].value("prompt_tokens", std::int64_t{0}),
                                   reply["usage"].value("completion_tokens", std::int64_t{0})};
        }
        out.provider_meta = reply.value("model", std::string{});
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Malformed, std::string("chat completion reply: ") + e.what());
    }
    if (budget_ && out.usage) budget_->charge(*out.usage);
    return out;
}

RemoteSentenceEmbedder::RemoteSentenceEmbedder(RemoteEndpoint endpoint, std::string model, std::size_t dimension)
    : client_(std::move(endpoint)), model_(std::move(model)), dimension_(dimension) {}

Embedding RemoteSentenceEmbedder::embed(std::string_view text) {
    if (text.empty()) throw ValidationError("embed_sentence: empty text");
    const auto reply = client_.post("/embeddings", {{"model", model_}, {"input", text}});
    Embedding e;
    try {
        e.values = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& ex) {
        throw ProviderError(ProviderError::Kind::Malformed, std::string("embedding reply: ") + ex.what());
    }
    if (e.dimension() != dimension_) {
        throw ProviderError(ProviderError::Kind::Malformed, "embedding reply has dimension " +
                                                                std::to_string(e.dimension()) + ", expected " +
                                                                std::to_string(dimension_));
    }
    return e;
}

RemoteTokenEmbedder::RemoteTokenEmbedder(RemoteEndpoint endpoint, std::string model)
    : client_(std::move(endpoint)), model_(std::move(model)) {}

std::vector<TokenEmbedding> RemoteTokenEmbedder::embed_tokens(std::string_view text) {
    const auto reply = client_.post("/token_embeddings", {{"model", model_}, {"input", text}});
    std::vector<TokenEmbedding> out;
    try {
        const auto& tokens = reply.at("tokens");
        const auto& vectors = reply.at("embeddings");
        if (tokens.size() != vectors.size()) throw ProviderError(ProviderError::Kind::Malformed, "token count mismatch");
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            out.push_back({tokens[i].get<std::string>(), Embedding{vectors[i].get<std::vector<double>>()}});
        }
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Malformed, std::string("token embedding reply: ") + e.what());
    }
    if (out.empty()) throw ValidationError("embed_tokens: text has no tokens");
    return out;
}

RemoteCommonsense::RemoteCommonsense(RemoteEndpoint endpoint, int num_candidates)
    : client_(std::move(endpoint)), num_candidates_(num_candidates) {}

std::vector<std::string> RemoteCommonsense::infer(std::string_view context_text, Relation relation) {
    const auto reply = client_.post("/commonsense", {{"context", context_text},
                                                     {"relation", relation_name(relation)},
                                                     {"num_candidates", num_candidates_}});
    std::vector<std::string> out;
    try {
        out = reply.at("inferences").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Malformed, std::string("commonsense reply: ") + e.what());
    }
    if (out.empty()) {
        throw ProviderError(ProviderError::Kind::Malformed,
                            "commonsense reply has no inferences for " + std::string(relation_name(relation)));
    }
    return out;
}

}  // namespace empathy
