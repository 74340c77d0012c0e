#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/error.hpp"
#include "empathy/generation.hpp"
#include "json.hpp"

namespace empathy {

/// Error surfaced to HTTP clients: a stable machine-readable code, the
/// status to send and whether resending the same request may succeed.
class ServiceError : public Error {
public:
    ServiceError(std::string code, int status, std::string message, bool retriable = false)
        : Error(std::move(message)), code_(std::move(code)), status_(status), retriable_(retriable) {}

    const std::string& code() const noexcept { return code_; }
    int status() const noexcept { return status_; }
    bool retriable() const noexcept { return retriable_; }
    nlohmann::json to_json() const;

private:
    std::string code_;
    int status_;
    bool retriable_;
};

/// Per-turn record of how a Listener reply was produced.
struct TurnTrace {
    int turn = 0;  // index of the Listener utterance in the history
    GeneratedResponse response;

    nlohmann::json to_json() const;
};

struct ChatSession {
    std::string session_id;
    GenerationStrategy strategy;
    std::vector<Utterance> history;  // Speaker, Listener, Speaker, ...
    std::vector<TurnTrace> traces;   // one per Listener utterance

    nlohmann::json to_json() const;
    static ChatSession from_json(const nlohmann::json& j);
};

struct ChatReply {
    std::string reply;
    TurnTrace trace;
};

/// In-memory chat sessions over the generation pipeline. Turns within a
/// session are serialized; distinct sessions run concurrently. The
/// resources are shared read-only.
class ChatService {
public:
    ChatService(GenerationResources resources, GenerationSettings settings, std::uint64_t seed = 0);

    /// Throws ServiceError("invalid_strategy", 400) for strategies chat
    /// cannot serve (gold two-stage variants need a labelled dialogue).
    std::string create_session(const GenerationStrategy& strategy);

    /// Appends the Speaker turn, generates the Listener turn over the whole
    /// history and appends it. A failed turn leaves the session unchanged.
    /// Errors: unknown session -> 404, empty text -> 400, provider failure
    /// -> 502 (retriable per the provider error).
    ChatReply handle_chat(const std::string& session_id, const std::string& text,
                          const std::optional<GenerationStrategy>& strategy = std::nullopt);

    ChatSession session(const std::string& session_id) const;
    std::vector<std::string> session_ids() const;

    /// Strategy kinds with their parameter schemas.
    static nlohmann::json strategies_schema();

    void save_snapshot(const std::filesystem::path& path) const;
    void load_snapshot(const std::filesystem::path& path);

private:
    struct Slot {
        std::mutex turn_mutex;
        ChatSession state;
    };

    std::shared_ptr<Slot> find(const std::string& session_id) const;
    void check_strategy(const GenerationStrategy& strategy) const;

    GenerationResources resources_;
    GenerationSettings settings_;
    std::uint64_t seed_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
    std::uint64_t next_id_ = 1;
};

/// Parses a strategy from {"kind": ..., "k"|"variant"|"top_m": ...} or a
/// bare kind string; missing k defaults to 5.
GenerationStrategy strategy_from_request(const nlohmann::json& j);

/// HTTP front end:
///   POST /sessions                 {"strategy": ...}        -> {"session_id"}
///   POST /sessions/{id}/messages   {"text", "strategy"?}    -> {"reply", "trace"}
///   GET  /sessions/{id}                                      -> session
///   GET  /strategies, GET /health
/// Errors are {"error": {"code", "message", "retriable"}}.
class ChatHttpServer {
public:
    explicit ChatHttpServer(ChatService& service);
    ~ChatHttpServer();

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace empathy
