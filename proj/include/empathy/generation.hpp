#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/knowledge.hpp"
#include "empathy/prompting.hpp"
#include "empathy/providers.hpp"
#include "empathy/retrieval.hpp"
#include "json.hpp"

namespace empathy {

enum class TwoStageVariant { Inferred, GoldEmotion, GoldSituation };

struct GenerationStrategy {
    enum class Kind { ZeroShot, FewShotRandom, SemanticIcl, TwoStage, KnowledgeAugmented };

    Kind kind = Kind::ZeroShot;
    std::size_t k = 0;      // FewShotRandom, SemanticIcl
    TwoStageVariant variant = TwoStageVariant::Inferred;
    std::size_t top_m = 1;  // KnowledgeAugmented

    static GenerationStrategy zero_shot() { return {}; }
    static GenerationStrategy few_shot(std::size_t k) { return {Kind::FewShotRandom, k}; }
    static GenerationStrategy semantic_icl(std::size_t k = 5) { return {Kind::SemanticIcl, k}; }
    static GenerationStrategy two_stage(TwoStageVariant v = TwoStageVariant::Inferred) {
        return {Kind::TwoStage, 0, v};
    }
    static GenerationStrategy knowledge(std::size_t top_m = 1) {
        return {Kind::KnowledgeAugmented, 0, TwoStageVariant::Inferred, top_m};
    }

    /// Throws ValidationError when k or top_m is zero for kinds that use it.
    void validate() const;
    /// Human-readable label, e.g. "few-shot(5)" or "two-stage(emo)".
    std::string label() const;
    nlohmann::json to_json() const;
    static GenerationStrategy from_json(const nlohmann::json& j);

    bool operator==(const GenerationStrategy&) const = default;
};

std::string_view strategy_kind_name(GenerationStrategy::Kind kind) noexcept;
std::string_view variant_name(TwoStageVariant v) noexcept;
/// Accepts "inferred", "emo"/"gold_emotion", "situ"/"gold_situation".
TwoStageVariant parse_variant(std::string_view name);

/// Emotion/situation guess produced by the first stage.
struct StageOneThought {
    std::string raw_text;
    /// Text actually carried into the second stage. Equals raw_text unless a
    /// gold variant substituted part of it.
    std::string carried_text;
    std::optional<std::string> parsed_emotion;
    std::optional<std::string> parsed_situation;

    bool operator==(const StageOneThought&) const = default;
};

/// Pulls an emotion and a situation out of free text. Phrases such as
/// "emotion is/may be/:" and "situation is/may be/:" are tried first; a
/// bare emotion label from `emotions` is the fallback for the emotion.
/// Fields stay empty when nothing is found.
StageOneThought parse_stage_one(const std::string& raw, const EmotionSet& emotions = EmotionSet::builtin());

/// Replaces the parsed emotion (or situation) in the thought with the gold
/// value. When nothing was parsed, a sentence stating the gold value is
/// appended instead.
std::string substitute_gold(const StageOneThought& thought, TwoStageVariant variant, const EvalItem& item);

struct ExemplarSelection {
    std::vector<Dialogue> dialogues;
    std::vector<std::string> ids;
    std::vector<double> scores;  // SemanticIcl only, descending
};

struct GeneratedResponse {
    std::string text;
    GenerationStrategy strategy;
    std::vector<PromptText> prompts;
    std::vector<ChatRequest> requests;
    std::optional<StageOneThought> thought;
    std::vector<std::string> exemplar_ids;
    std::vector<double> exemplar_scores;
    std::optional<std::string> knowledge_digest;
    std::optional<std::string> knowledge_block;
};

/// Settings shared by every generation call.
struct GenerationSettings {
    PromptTemplate tmpl = PromptTemplate::defaults();
    std::string chat_model{kDefaultChatModel};
    double temperature = 0.0;
    std::optional<int> max_tokens;
    KnowledgeQuery knowledge_query = KnowledgeQuery::LastSpeakerUtterance;
    std::size_t parallelism = 8;

    nlohmann::json to_json() const;
};

/// Non-owning view of the read-only data and providers a run uses. Only
/// the members needed by the chosen strategy must be set.
struct GenerationResources {
    const std::vector<Dialogue>* train_pool = nullptr;
    const ExemplarIndex* index = nullptr;
    ChatProvider* chat = nullptr;
    SentenceEmbedder* embedder = nullptr;
    CommonsenseProvider* commonsense = nullptr;
};

/// ZeroShot: none. FewShotRandom(k): k distinct pool dialogues drawn with a
/// generator seeded by (seed, item id). SemanticIcl(k): the k most similar
/// indexed dialogues, best first. The item's own dialogue is never chosen.
/// Throws ValidationError when k exceeds the candidate pool.
ExemplarSelection select_exemplars(const GenerationStrategy& strategy, const EvalItem& item,
                                   const GenerationResources& res, std::uint64_t seed);

/// One chat call for every strategy except TwoStage.
GeneratedResponse generate_single(const EvalItem& item, const GenerationStrategy& strategy,
                                  const ExemplarSelection& exemplars, const std::optional<AugmentedContext>& knowledge,
                                  ChatProvider& chat, const GenerationSettings& settings);

/// Stage 1 asks for the emotion and situation; stage 2 continues the same
/// conversation and asks for the reply. Throws StageOneError when the
/// first reply is empty.
GeneratedResponse generate_two_stage(const EvalItem& item, TwoStageVariant variant, ChatProvider& chat,
                                     const GenerationSettings& settings);

/// Selects exemplars / gathers knowledge as the strategy requires, then
/// generates.
GeneratedResponse generate(const EvalItem& item, const GenerationStrategy& strategy, const GenerationResources& res,
                           const GenerationSettings& settings, std::uint64_t seed);

/// Outcome for one input item; exactly one of response/error is set.
struct ItemOutcome {
    EvalItem item;
    std::optional<GeneratedResponse> response;
    std::optional<std::string> error;
};

struct ProviderCounts {
    CallCounts chat;
    CallCounts embedding;
    CallCounts commonsense;
};

struct RunManifest {
    std::string run_id;
    GenerationStrategy strategy;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::vector<ItemOutcome> outcomes;
    ProviderCounts counts;
    std::string started_at;
    std::string finished_at;

    std::size_t failures() const;

    /// Header record then one record per item, in input order.
    std::string serialize() const;
    static RunManifest parse(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static RunManifest load(const std::filesystem::path& path);
};

/// Field names that carry wall-clock time and differ between otherwise
/// identical runs.
inline constexpr std::string_view kTimestampFields[] = {"started_at", "finished_at"};

/// Processes items with up to settings.parallelism concurrent workers.
/// Item failures are recorded, never thrown.
RunManifest run_batch(const std::vector<EvalItem>& items, const GenerationStrategy& strategy,
                      const GenerationResources& res, const GenerationSettings& settings, std::uint64_t seed,
                      const nlohmann::json& extra_config = nlohmann::json::object());

struct ReplayReport {
    std::size_t replayed = 0;
    std::size_t identical = 0;
    std::vector<std::string> mismatched_ids;
    std::vector<std::string> failed_ids;
};

/// Re-sends every recorded request and compares the replies with the
/// recorded stage-1 thought and final response.
ReplayReport replay_manifest(const RunManifest& manifest, ChatProvider& chat);

nlohmann::json to_json(const PromptText& p);
PromptText prompt_text_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalItem& item);
EvalItem eval_item_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GeneratedResponse& r);
GeneratedResponse generated_response_from_json(const nlohmann::json& j);

}  // namespace empathy
