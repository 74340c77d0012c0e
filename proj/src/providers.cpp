#include "empathy/providers.hpp"

#include "empathy/error.hpp"

namespace empathy {

using json = nlohmann::json;

json ChatRequest::payload() const {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    json body = {{"model", model_id}, {"messages", std::move(msgs)}, {"temperature", temperature}};
    if (max_tokens) body["max_tokens"] = *max_tokens;
    return body;
}

ChatRequest ChatRequest::from_payload(const json& payload) {
    ChatRequest r;
    try {
        r.model_id = payload.at("model").get<std::string>();
        r.temperature = payload.value("temperature", 0.0);
        for (const auto& m : payload.at("messages")) {
            r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
        }
        if (payload.contains("max_tokens")) r.max_tokens = payload["max_tokens"].get<int>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("chat request payload: ") + e.what());
    }
    return r;
}

void ChatRequest::validate() const {
    if (messages.empty()) throw ValidationError("chat request has no messages");
    for (const auto& m : messages) {
        if (m.role != "system" && m.role != "user" && m.role != "assistant") {
            throw ValidationError("chat request: unknown message role '" + m.role + "'");
        }
    }
    if (!(temperature >= 0)) throw ValidationError("chat request: temperature must be >= 0");
    if (max_tokens && *max_tokens <= 0) throw ValidationError("chat request: max_tokens must be positive");
}

json ChatResponse::to_json() const {
    json j = {{"content", content}, {"provider_meta", provider_meta}};
    if (usage) {
        j["usage"] = {{"prompt_tokens", usage->prompt_tokens}, {"completion_tokens", usage->completion_tokens}};
    }
    return j;
}

ChatResponse ChatResponse::from_json(const json& j) {
    ChatResponse r;
    try {
        r.content = j.at("content").get<std::string>();
        r.provider_meta = j.value("provider_meta", std::string{});
        if (j.contains("usage") && j["usage"].is_object()) {
            r.usage = TokenUsage{j["usage"].value("prompt_tokens", std::int64_t{0}),
                                 j["usage"].value("completion_tokens", std::int64_t{0})};
        }
    } catch (const json::exception& e) {
        throw ProviderError(ProviderError::Kind::Malformed, std::string("chat response record: ") + e.what());
    }
    return r;
}

}  // namespace empathy
