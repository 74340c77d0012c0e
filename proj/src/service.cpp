#include "empathy/service.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>

#include "empathy/io.hpp"
#include "httplib.h"

namespace empathy {

using json = nlohmann::json;

json ServiceError::to_json() const {
    return {{"error", {{"code", code_}, {"message", what()}, {"retriable", retriable_}}}};
}

json TurnTrace::to_json() const {
    json j = empathy::to_json(response);
    j["turn"] = turn;
    return j;
}

json ChatSession::to_json() const {
    json history_json = json::array();
    for (const auto& u : history) {
        history_json.push_back({{"index", u.index}, {"role", role_name(u.role)}, {"text", u.text}});
    }
    json traces_json = json::array();
    for (const auto& t : traces) traces_json.push_back(t.to_json());
    return {{"session_id", session_id}, {"strategy", strategy.to_json()}, {"history", history_json},
            {"traces", traces_json}};
}

ChatSession ChatSession::from_json(const json& j) {
    ChatSession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.strategy = GenerationStrategy::from_json(j.at("strategy"));
    for (const auto& u : j.at("history")) {
        s.history.push_back({u.at("index").get<int>(), parse_role(u.at("role").get<std::string>()),
                             u.at("text").get<std::string>()});
    }
    for (const auto& t : j.at("traces")) {
        s.traces.push_back({t.at("turn").get<int>(), generated_response_from_json(t)});
    }
    return s;
}

GenerationStrategy strategy_from_request(const json& j) {
    try {
        if (j.is_string()) return strategy_from_request(json{{"kind", j.get<std::string>()}});
        if (!j.is_object()) throw ValidationError("strategy must be a string or an object");
        json full = j;
        const auto kind = j.at("kind").get<std::string>();
        if ((kind == "few-shot" || kind == "ss-icl") && !full.contains("k")) full["k"] = 5;
        return GenerationStrategy::from_json(full);
    } catch (const json::exception& e) {
        throw ServiceError("invalid_strategy", 400, std::string("bad strategy: ") + e.what());
    } catch (const ValidationError& e) {
        throw ServiceError("invalid_strategy", 400, e.what());
    } catch (const ParseError& e) {
        throw ServiceError("invalid_strategy", 400, e.what());
    }
}

ChatService::ChatService(GenerationResources resources, GenerationSettings settings, std::uint64_t seed)
    : resources_(resources), settings_(std::move(settings)), seed_(seed) {}

void ChatService::check_strategy(const GenerationStrategy& strategy) const {
    using K = GenerationStrategy::Kind;
    const auto unavailable = [&](const std::string& what) {
        throw ServiceError("strategy_unavailable", 400, strategy.label() + " needs " + what + " on the server");
    };
    switch (strategy.kind) {
        case K::FewShotRandom:
            if (resources_.train_pool == nullptr) unavailable("a training pool");
            break;
        case K::SemanticIcl:
            if (resources_.index == nullptr || resources_.embedder == nullptr) unavailable("an exemplar index");
            break;
        case K::KnowledgeAugmented:
            if (resources_.commonsense == nullptr) unavailable("a commonsense provider");
            break;
        case K::TwoStage:
            if (strategy.variant != TwoStageVariant::Inferred) {
                throw ServiceError("invalid_strategy", 400, "gold two-stage variants need labelled dialogues");
            }
            break;
        case K::ZeroShot: break;
    }
}

std::string ChatService::create_session(const GenerationStrategy& strategy) {
    check_strategy(strategy);
    std::unique_lock lock(sessions_mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(next_id_++));
    auto slot = std::make_shared<Slot>();
    slot->state.session_id = buf;
    slot->state.strategy = strategy;
    sessions_.emplace(buf, slot);
    return buf;
}

std::shared_ptr<ChatService::Slot> ChatService::find(const std::string& session_id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw ServiceError("session_not_found", 404, "no session '" + session_id + "'");
    return it->second;
}

ChatReply ChatService::handle_chat(const std::string& session_id, const std::string& text,
                                   const std::optional<GenerationStrategy>& strategy) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw ServiceError("empty_message", 400, "message text must be non-empty");
    }
    auto slot = find(session_id);
    std::lock_guard turn(slot->turn_mutex);
    auto& state = slot->state;
    if (strategy) check_strategy(*strategy);
    const auto active = strategy.value_or(state.strategy);

    EvalItem item;
    item.dialogue_id = session_id;
    item.context = state.history;
    const int speaker_index = static_cast<int>(state.history.size()) + 1;
    item.context.push_back({speaker_index, Role::Speaker, text});
    item.turn = speaker_index + 1;
    item.reference = {item.turn, Role::Listener, ""};

    GeneratedResponse response;
    try {
        response = generate(item, active, resources_, settings_, seed_);
    } catch (const ProviderError& e) {
        throw ServiceError("provider_error", 502, e.what(), e.retriable());
    } catch (const KnowledgeError& e) {
        throw ServiceError("provider_error", 502, e.what(), true);
    } catch (const StageOneError& e) {
        throw ServiceError("provider_error", 502, e.what(), false);
    } catch (const ValidationError& e) {
        throw ServiceError("invalid_request", 400, e.what());
    }

    state.strategy = active;
    state.history = std::move(item.context);
    state.history.push_back({item.turn, Role::Listener, response.text});
    TurnTrace trace{item.turn, std::move(response)};
    state.traces.push_back(trace);
    return {trace.response.text, std::move(trace)};
}

ChatSession ChatService::session(const std::string& session_id) const {
    auto slot = find(session_id);
    std::lock_guard turn(slot->turn_mutex);
    return slot->state;
}

std::vector<std::string> ChatService::session_ids() const {
    std::shared_lock lock(sessions_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : sessions_) ids.push_back(id);
    return ids;
}

json ChatService::strategies_schema() {
    const json k_param = {{"name", "k"}, {"type", "integer"}, {"minimum", 1}, {"default", 5}};
    return json::array({
        {{"kind", "zero-shot"}, {"parameters", json::array()}},
        {{"kind", "few-shot"}, {"parameters", json::array({k_param})}},
        {{"kind", "ss-icl"}, {"parameters", json::array({k_param})}},
        {{"kind", "two-stage"},
         {"parameters", json::array({{{"name", "variant"}, {"type", "string"}, {"enum", {"inferred"}},
                                      {"default", "inferred"}}})}},
        {{"kind", "knowledge"},
         {"parameters",
          json::array({{{"name", "top_m"}, {"type", "integer"}, {"minimum", 1}, {"default", 1}}})}},
    });
}

void ChatService::save_snapshot(const std::filesystem::path& path) const {
    json sessions = json::array();
    std::uint64_t next_id = 0;
    {
        std::shared_lock lock(sessions_mutex_);
        next_id = next_id_;
        for (const auto& [id, slot] : sessions_) {
            std::lock_guard turn(slot->turn_mutex);
            sessions.push_back(slot->state.to_json());
        }
    }
    atomic_write(path, json{{"next_id", next_id}, {"sessions", sessions}}.dump() + "\n");
}

void ChatService::load_snapshot(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError("session snapshot " + path.string() + ": " + e.what());
    }
    std::map<std::string, std::shared_ptr<Slot>> loaded;
    for (const auto& s : j.at("sessions")) {
        auto slot = std::make_shared<Slot>();
        slot->state = ChatSession::from_json(s);
        loaded.emplace(slot->state.session_id, slot);
    }
    std::unique_lock lock(sessions_mutex_);
    sessions_ = std::move(loaded);
    next_id_ = j.value("next_id", std::uint64_t{sessions_.size() + 1});
}

// ---------------------------------------------------------------------------
// HTTP

struct ChatHttpServer::Impl {
    ChatService& service;
    httplib::Server server;

    explicit Impl(ChatService& s) : service(s) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F&& body) {
    return [body = std::forward<F>(body)](const httplib::Request& req, httplib::Response& res) {
        try {
            body(req, res);
        } catch (const ServiceError& e) {
            send_json(res, e.status(), e.to_json());
        } catch (const json::exception& e) {
            send_json(res, 400, ServiceError("invalid_request", 400, e.what()).to_json());
        } catch (const std::exception& e) {
            spdlog::error("request {} {} failed: {}", req.method, req.path, e.what());
            send_json(res, 500, ServiceError("internal", 500, e.what()).to_json());
        }
    };
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ServiceError("invalid_request", 400, "request body must be a JSON object");
    }
    return j;
}

}  // namespace

ChatHttpServer::ChatHttpServer(ChatService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& srv = impl_->server;
    auto& svc = impl_->service;

    srv.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
                send_json(res, 200, {{"status", "ok"}});
            }));
    srv.Get("/strategies", guarded([](const httplib::Request&, httplib::Response& res) {
                send_json(res, 200, {{"strategies", ChatService::strategies_schema()}});
            }));
    srv.Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 const auto body = parse_body(req);
                 const auto strategy =
                     body.contains("strategy") ? strategy_from_request(body["strategy"]) : GenerationStrategy{};
                 const auto id = svc.create_session(strategy);
                 send_json(res, 201, {{"session_id", id}, {"strategy", strategy.to_json()}});
             }));
    srv.Post(R"(/sessions/([^/]+)/messages)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 const auto body = parse_body(req);
                 if (!body.contains("text") || !body["text"].is_string()) {
                     throw ServiceError("invalid_request", 400, "body needs a string field 'text'");
                 }
                 std::optional<GenerationStrategy> strategy;
                 if (body.contains("strategy") && !body["strategy"].is_null()) {
                     strategy = strategy_from_request(body["strategy"]);
                 }
                 const auto out = svc.handle_chat(req.matches[1], body["text"].get<std::string>(), strategy);
                 send_json(res, 200, {{"reply", out.reply}, {"trace", out.trace.to_json()}});
             }));
    srv.Get(R"(/sessions/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, svc.session(req.matches[1]).to_json());
            }));
}

ChatHttpServer::~ChatHttpServer() { stop(); }

int ChatHttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void ChatHttpServer::run() { impl_->server.listen_after_bind(); }

void ChatHttpServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace empathy
