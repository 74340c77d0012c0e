#include "empathy/generation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <regex>
#include <thread>

#include "empathy/error.hpp"
#include "empathy/hashing.hpp"
#include "empathy/io.hpp"
#include "empathy/random.hpp"

namespace empathy {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Strategy

std::string_view strategy_kind_name(GenerationStrategy::Kind kind) noexcept {
    switch (kind) {
        case GenerationStrategy::Kind::ZeroShot: return "zero-shot";
        case GenerationStrategy::Kind::FewShotRandom: return "few-shot";
        case GenerationStrategy::Kind::SemanticIcl: return "ss-icl";
        case GenerationStrategy::Kind::TwoStage: return "two-stage";
        case GenerationStrategy::Kind::KnowledgeAugmented: return "knowledge";
    }
    return "";
}

std::string_view variant_name(TwoStageVariant v) noexcept {
    switch (v) {
        case TwoStageVariant::Inferred: return "inferred";
        case TwoStageVariant::GoldEmotion: return "emo";
        case TwoStageVariant::GoldSituation: return "situ";
    }
    return "";
}

TwoStageVariant parse_variant(std::string_view name) {
    if (name == "inferred") return TwoStageVariant::Inferred;
    if (name == "emo" || name == "gold_emotion") return TwoStageVariant::GoldEmotion;
    if (name == "situ" || name == "gold_situation") return TwoStageVariant::GoldSituation;
    throw ValidationError("unknown two-stage variant '" + std::string(name) + "'");
}

void GenerationStrategy::validate() const {
    if ((kind == Kind::FewShotRandom || kind == Kind::SemanticIcl) && k == 0) {
        throw ValidationError("strategy " + label() + ": k must be >= 1");
    }
    if (kind == Kind::KnowledgeAugmented && top_m == 0) {
        throw ValidationError("strategy " + label() + ": top_m must be >= 1");
    }
}

std::string GenerationStrategy::label() const {
    std::string out(strategy_kind_name(kind));
    switch (kind) {
        case Kind::FewShotRandom:
        case Kind::SemanticIcl: return out + "(" + std::to_string(k) + ")";
        case Kind::TwoStage: return out + "(" + std::string(variant_name(variant)) + ")";
        case Kind::KnowledgeAugmented: return out + "(" + std::to_string(top_m) + ")";
        case Kind::ZeroShot: break;
    }
    return out;
}

json GenerationStrategy::to_json() const {
    json j = {{"kind", strategy_kind_name(kind)}};
    switch (kind) {
        case Kind::FewShotRandom:
        case Kind::SemanticIcl: j["k"] = k; break;
        case Kind::TwoStage: j["variant"] = variant_name(variant); break;
        case Kind::KnowledgeAugmented: j["top_m"] = top_m; break;
        case Kind::ZeroShot: break;
    }
    return j;
}

GenerationStrategy GenerationStrategy::from_json(const json& j) {
    GenerationStrategy s;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "zero-shot") {
        s = zero_shot();
    } else if (kind == "few-shot") {
        s = few_shot(j.at("k").get<std::size_t>());
    } else if (kind == "ss-icl") {
        s = semantic_icl(j.at("k").get<std::size_t>());
    } else if (kind == "two-stage") {
        s = two_stage(parse_variant(j.value("variant", std::string("inferred"))));
    } else if (kind == "knowledge") {
        s = knowledge(j.value("top_m", std::size_t{1}));
    } else {
        throw ValidationError("unknown strategy kind '" + kind + "'");
    }
    s.validate();
    return s;
}

json GenerationSettings::to_json() const {
    json j = {{"chat_model", chat_model},
              {"temperature", temperature},
              {"knowledge_query", knowledge_query == KnowledgeQuery::FullContext ? "full-context" : "last-speaker"},
              {"template", json::parse(tmpl.to_json_text())}};
    if (max_tokens) j["max_tokens"] = *max_tokens;
    return j;
}

// ---------------------------------------------------------------------------
// Stage-one parsing

namespace {

std::string trim_copy(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n\"'");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n\"',");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// Position of `word` in `text` as a whole word, or npos.
std::size_t find_word(const std::string& text, const std::string& word) {
    if (word.empty()) return std::string::npos;
    std::size_t pos = 0;
    while ((pos = text.find(word, pos)) != std::string::npos) {
        const bool left = pos == 0 || !is_word_char(text[pos - 1]);
        const auto after = pos + word.size();
        const bool right = after >= text.size() || !is_word_char(text[after]);
        if (left && right) return pos;
        pos = after;
    }
    return std::string::npos;
}

std::optional<std::string> match_field(const std::string& raw, const std::regex& re) {
    std::smatch m;
    if (!std::regex_search(raw, m, re)) return std::nullopt;
    auto value = trim_copy(m[1].str());
    if (value.empty()) return std::nullopt;
    return value;
}

const std::regex& emotion_regex() {
    static const std::regex re(
        R"(emotion(?:al state)?s?\s*(?::|-|\bis\b|\bare\b|\b(?:may|might|could|would|seems? to|appears? to)\s+be\b)\s*:?\s*(?:that\s+of\s+|likely\s+)?([^.;\n]+))",
        std::regex::icase | std::regex::ECMAScript);
    return re;
}

const std::regex& situation_regex() {
    static const std::regex re(
        R"(situation\s*(?::|-|\bis\b|\b(?:may|might|could|would|seems? to|appears? to)\s+be\b)\s*:?\s*([^\n]+?)(?:\.\s|\.$|;|\n|$))",
        std::regex::icase | std::regex::ECMAScript);
    return re;
}

}  // namespace

StageOneThought parse_stage_one(const std::string& raw, const EmotionSet& emotions) {
    StageOneThought t;
    t.raw_text = raw;
    t.carried_text = raw;
    t.parsed_emotion = match_field(raw, emotion_regex());
    if (!t.parsed_emotion) {
        const auto lowered = lower(raw);
        std::size_t best = std::string::npos;
        for (const auto& label : emotions.labels()) {
            const auto pos = find_word(lowered, label);
            if (pos < best) {
                best = pos;
                t.parsed_emotion = raw.substr(pos, label.size());
            }
        }
    }
    t.parsed_situation = match_field(raw, situation_regex());
    return t;
}

std::string substitute_gold(const StageOneThought& thought, TwoStageVariant variant, const EvalItem& item) {
    if (variant == TwoStageVariant::Inferred) return thought.raw_text;
    const bool emo = variant == TwoStageVariant::GoldEmotion;
    const auto& parsed = emo ? thought.parsed_emotion : thought.parsed_situation;
    const std::string gold = emo ? item.emotion : item.situation;
    std::string text = thought.raw_text;
    if (parsed) {
        if (const auto pos = text.find(*parsed); pos != std::string::npos) {
            text.replace(pos, parsed->size(), gold);
            return text;
        }
    }
    const std::string sentence = emo ? "The user's emotion is " + gold + "." : "The situation is " + gold + ".";
    if (!text.empty() && text.back() != ' ' && text.back() != '\n') text.push_back(' ');
    return text + sentence;
}

// ---------------------------------------------------------------------------
// Exemplar selection

namespace {

const Dialogue& find_dialogue(const std::vector<Dialogue>& pool, const std::string& id) {
    const auto it = std::find_if(pool.begin(), pool.end(), [&](const Dialogue& d) { return d.id == id; });
    if (it == pool.end()) throw ValidationError("exemplar " + id + " is in the index but not in the training pool");
    return *it;
}

}  // namespace

ExemplarSelection select_exemplars(const GenerationStrategy& strategy, const EvalItem& item,
                                   const GenerationResources& res, std::uint64_t seed) {
    strategy.validate();
    ExemplarSelection sel;
    using Kind = GenerationStrategy::Kind;
    if (strategy.kind != Kind::FewShotRandom && strategy.kind != Kind::SemanticIcl) return sel;
    if (!res.train_pool || res.train_pool->empty()) throw ValidationError("select_exemplars: empty training pool");
    const auto& pool = *res.train_pool;

    if (strategy.kind == Kind::FewShotRandom) {
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (pool[i].id != item.dialogue_id) candidates.push_back(i);
        }
        if (strategy.k > candidates.size()) {
            throw ValidationError("select_exemplars: k=" + std::to_string(strategy.k) + " exceeds pool of " +
                                  std::to_string(candidates.size()));
        }
        std::sort(candidates.begin(), candidates.end(),
                  [&](std::size_t a, std::size_t b) { return pool[a].id < pool[b].id; });
        Rng rng(mix64(seed ^ fnv1a64(item.id())));
        for (std::size_t i = 0; i < strategy.k; ++i) {
            const auto j = i + rng.below(candidates.size() - i);
            std::swap(candidates[i], candidates[j]);
            sel.dialogues.push_back(pool[candidates[i]]);
            sel.ids.push_back(pool[candidates[i]].id);
        }
        return sel;
    }

    if (!res.index || !res.embedder) throw ValidationError("select_exemplars: ss-icl needs an index and an embedder");
    if (res.embedder->encoder_id() != res.index->encoder_id()) {
        throw ValidationError("select_exemplars: index encoder '" + res.index->encoder_id() +
                              "' differs from query encoder '" + res.embedder->encoder_id() + "'");
    }
    const auto available = res.index->size() - (std::any_of(res.index->entries().begin(), res.index->entries().end(),
                                                            [&](const IndexEntry& e) {
                                                                return e.dialogue_id == item.dialogue_id;
                                                            })
                                                    ? 1
                                                    : 0);
    if (strategy.k > available) {
        throw ValidationError("select_exemplars: k=" + std::to_string(strategy.k) + " exceeds index of " +
                              std::to_string(available));
    }
    const auto ranked = top_k_similar(*res.index, item.context, strategy.k, *res.embedder, {item.dialogue_id});
    for (const auto& r : ranked) {
        sel.dialogues.push_back(find_dialogue(pool, r.dialogue_id));
        sel.ids.push_back(r.dialogue_id);
        sel.scores.push_back(r.score);
    }
    return sel;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

ChatRequest make_request(std::vector<ChatMessage> messages, const GenerationSettings& s) {
    ChatRequest r;
    r.messages = std::move(messages);
    r.temperature = s.temperature;
    r.model_id = s.chat_model;
    r.max_tokens = s.max_tokens;
    return r;
}

}  // namespace

GeneratedResponse generate_single(const EvalItem& item, const GenerationStrategy& strategy,
                                  const ExemplarSelection& exemplars, const std::optional<AugmentedContext>& knowledge,
                                  ChatProvider& chat, const GenerationSettings& settings) {
    if (strategy.kind == GenerationStrategy::Kind::TwoStage) {
        throw ValidationError("generate_single: two-stage strategies need generate_two_stage");
    }
    if (item.context.empty()) throw ValidationError("generate_single: item " + item.id() + " has no context");
    auto bundle = PromptBundle::from_template(settings.tmpl, item.context);
    bundle.exemplars = exemplars.dialogues;
    GeneratedResponse out;
    out.strategy = strategy;
    out.exemplar_ids = exemplars.ids;
    out.exemplar_scores = exemplars.scores;
    if (strategy.kind == GenerationStrategy::Kind::KnowledgeAugmented) {
        if (!knowledge) throw ValidationError("generate_single: knowledge strategy without a knowledge block");
        apply_knowledge(bundle, *knowledge, settings.tmpl);
        out.knowledge_digest = knowledge->knowledge.digest();
        out.knowledge_block = knowledge->knowledge.rendered;
    }
    auto prompt = render_prompt(bundle);
    auto request = make_request({{"user", prompt.text}}, settings);
    out.text = chat.complete(request).content;
    out.prompts.push_back(std::move(prompt));
    out.requests.push_back(std::move(request));
    return out;
}

GeneratedResponse generate_two_stage(const EvalItem& item, TwoStageVariant variant, ChatProvider& chat,
                                     const GenerationSettings& settings) {
    if (item.context.empty()) throw ValidationError("generate_two_stage: item " + item.id() + " has no context");
    auto bundle = PromptBundle::from_template(settings.tmpl, item.context);
    bundle.extras.push_back({"stage1", settings.tmpl.stage1, ExtraPlacement::AfterContext});
    auto first = render_prompt(bundle);

    GeneratedResponse out;
    out.strategy = GenerationStrategy::two_stage(variant);
    auto req1 = make_request({{"user", first.text}}, settings);
    const std::string raw = chat.complete(req1).content;
    if (raw.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw StageOneError("item " + item.id() + ": stage-1 reply is empty");
    }
    auto thought = parse_stage_one(raw);
    thought.carried_text = substitute_gold(thought, variant, item);

    auto req2 = make_request(
        {{"user", first.text}, {"assistant", thought.carried_text}, {"user", settings.tmpl.stage2}}, settings);
    auto second = PromptText::join(
        {{"stage1_request", first.text}, {"stage1_reply", thought.carried_text}, {"stage2_request", settings.tmpl.stage2}});
    out.text = chat.complete(req2).content;
    out.prompts = {std::move(first), std::move(second)};
    out.requests = {std::move(req1), std::move(req2)};
    out.thought = std::move(thought);
    return out;
}

GeneratedResponse generate(const EvalItem& item, const GenerationStrategy& strategy, const GenerationResources& res,
                           const GenerationSettings& settings, std::uint64_t seed) {
    strategy.validate();
    if (!res.chat) throw ValidationError("generate: no chat provider");
    if (strategy.kind == GenerationStrategy::Kind::TwoStage) {
        return generate_two_stage(item, strategy.variant, *res.chat, settings);
    }
    const auto exemplars = select_exemplars(strategy, item, res, seed);
    std::optional<AugmentedContext> knowledge;
    if (strategy.kind == GenerationStrategy::Kind::KnowledgeAugmented) {
        if (!res.commonsense) throw ValidationError("generate: knowledge strategy needs a commonsense provider");
        auto inferences = gather_inferences(item.context, *res.commonsense, strategy.top_m, settings.knowledge_query,
                                            std::min<std::size_t>(settings.parallelism, kRelationCount));
        knowledge = augment_context(item.context, assemble_knowledge_block(std::move(inferences), settings.tmpl));
    }
    return generate_single(item, strategy, exemplars, knowledge, *res.chat, settings);
}

// ---------------------------------------------------------------------------
// Batch runs

std::size_t RunManifest::failures() const {
    return static_cast<std::size_t>(
        std::count_if(outcomes.begin(), outcomes.end(), [](const ItemOutcome& o) { return o.error.has_value(); }));
}

namespace {

CallCounts diff(CallCounts after, CallCounts before) {
    return {after.network_calls - before.network_calls, after.cache_hits - before.cache_hits};
}

ProviderCounts snapshot(const GenerationResources& res) {
    ProviderCounts c;
    if (res.chat) c.chat = res.chat->counts();
    if (res.embedder) c.embedding = res.embedder->counts();
    if (res.commonsense) c.commonsense = res.commonsense->counts();
    return c;
}

}  // namespace

RunManifest run_batch(const std::vector<EvalItem>& items, const GenerationStrategy& strategy,
                      const GenerationResources& res, const GenerationSettings& settings, std::uint64_t seed,
                      const json& extra_config) {
    if (items.empty()) throw ValidationError("run_batch: no items");
    strategy.validate();

    RunManifest m;
    m.strategy = strategy;
    m.seed = seed;
    m.config = settings.to_json();
    for (const auto& [k, v] : extra_config.items()) m.config[k] = v;
    m.started_at = utc_timestamp();

    std::string id_material = strategy.to_json().dump() + "|" + std::to_string(seed) + "|" + m.config.dump();
    for (const auto& item : items) id_material += "|" + item.id();
    m.run_id = sha256_hex(id_material).substr(0, 16);

    const auto before = snapshot(res);
    m.outcomes.resize(items.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
            auto& out = m.outcomes[i];
            out.item = items[i];
            try {
                out.response = generate(items[i], strategy, res, settings, seed);
            } catch (const std::exception& e) {
                out.error = items[i].id() + ": " + e.what();
            }
        }
    };
    const auto n_threads = std::clamp<std::size_t>(settings.parallelism, 1, items.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    const auto after = snapshot(res);
    m.counts = {diff(after.chat, before.chat), diff(after.embedding, before.embedding),
                diff(after.commonsense, before.commonsense)};
    m.finished_at = utc_timestamp();
    return m;
}

ReplayReport replay_manifest(const RunManifest& manifest, ChatProvider& chat) {
    ReplayReport report;
    for (const auto& o : manifest.outcomes) {
        if (!o.response) continue;
        ++report.replayed;
        const auto& r = *o.response;
        try {
            std::vector<std::string> replies;
            for (const auto& req : r.requests) replies.push_back(chat.complete(req).content);
            bool same = !replies.empty() && replies.back() == r.text;
            if (r.thought && replies.size() == 2) same = same && replies.front() == r.thought->raw_text;
            if (same) {
                ++report.identical;
            } else {
                report.mismatched_ids.push_back(o.item.id());
            }
        } catch (const std::exception&) {
            report.failed_ids.push_back(o.item.id());
        }
    }
    return report;
}

}  // namespace empathy
