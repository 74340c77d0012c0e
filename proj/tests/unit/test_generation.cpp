#include <fstream>
#include <set>

#include "doctest.h"
#include "empathy/error.hpp"
#include "empathy/generation.hpp"
#include "empathy/mock.hpp"
#include "support.hpp"

using namespace empathy;
using empathy::testing::make_dialogue;
using empathy::testing::synthetic_corpus;

namespace {

EvalItem item_from(const std::string& id, std::vector<std::string> texts, const std::string& emotion = "sad",
                   const std::string& situation = "My dog ran away.") {
    auto d = make_dialogue(id, std::move(texts), emotion, situation);
    return derive_eval_items(d).back();
}

/// Replies "R<n>" with a call number; fails on chosen call numbers.
class NumberedChat final : public ChatProvider {
public:
    std::set<int> fail_on;
    std::vector<ChatRequest> seen;
    std::mutex mu;

    ChatResponse complete(const ChatRequest& r) override {
        std::lock_guard lock(mu);
        counter_.network();
        const int n = static_cast<int>(seen.size()) + 1;
        seen.push_back(r);
        if (fail_on.count(n)) throw ProviderError(ProviderError::Kind::Other, "scripted failure");
        return {"R" + std::to_string(n), std::nullopt, ""};
    }
    std::string kind() const override { return "numbered"; }
    CallCounts counts() const override { return counter_.snapshot(); }

private:
    CallCounter counter_;
};

/// Fails only for prompts containing a marker.
class MarkerFailChat final : public ChatProvider {
public:
    explicit MarkerFailChat(std::string marker) : marker_(std::move(marker)) {}
    ChatResponse complete(const ChatRequest& r) override {
        counter_.network();
        if (r.messages.back().content.find(marker_) != std::string::npos) {
            throw ProviderError(ProviderError::Kind::Other, "marked");
        }
        return {"fine", std::nullopt, ""};
    }
    std::string kind() const override { return "marker"; }
    CallCounts counts() const override { return counter_.snapshot(); }

private:
    std::string marker_;
    CallCounter counter_;
};

std::vector<EvalItem> fixture_items() {
    std::ifstream in(empathy::testing::fixture("dialogues.csv"));
    return derive_eval_items(parse_corpus(in).dialogues);
}

}  // namespace

TEST_CASE("strategy labels, JSON round trip and validation") {
    CHECK(GenerationStrategy::zero_shot().label() == "zero-shot");
    CHECK(GenerationStrategy::few_shot(5).label().find('5') != std::string::npos);
    for (const auto& s : {GenerationStrategy::zero_shot(), GenerationStrategy::few_shot(3),
                          GenerationStrategy::semantic_icl(5), GenerationStrategy::two_stage(TwoStageVariant::GoldEmotion),
                          GenerationStrategy::knowledge(2)}) {
        CHECK(GenerationStrategy::from_json(s.to_json()) == s);
    }
    CHECK_THROWS_AS(GenerationStrategy::few_shot(0).validate(), ValidationError);
    CHECK_THROWS_AS(GenerationStrategy::knowledge(0).validate(), ValidationError);
    CHECK(parse_variant("emo") == TwoStageVariant::GoldEmotion);
    CHECK(parse_variant("gold_situation") == TwoStageVariant::GoldSituation);
    CHECK_THROWS(parse_variant("guess"));
}

TEST_CASE("stage-one parsing") {
    const auto t = parse_stage_one("The user's emotion may be sad. The situation may be: their dog ran away.");
    CHECK(t.parsed_emotion == std::optional<std::string>("sad"));
    CHECK(t.parsed_situation == std::optional<std::string>("their dog ran away"));
    CHECK(t.carried_text == t.raw_text);

    const auto bare = parse_stage_one("They sound lonely and a bit anxious.");
    CHECK(bare.parsed_emotion == std::optional<std::string>("lonely"));
    CHECK_FALSE(bare.parsed_situation);

    const auto none = parse_stage_one("Hard to say.");
    CHECK_FALSE(none.parsed_emotion);
    CHECK_FALSE(none.parsed_situation);
}

TEST_CASE("gold substitution replaces the parsed span or appends a sentence") {
    const auto item = item_from("g", {"hi", "hello", "bye"}, "proud", "I won a race.");
    const auto t = parse_stage_one("The user's emotion may be sad. The situation may be: a loss.");
    CHECK(substitute_gold(t, TwoStageVariant::Inferred, item) == t.raw_text);
    CHECK(substitute_gold(t, TwoStageVariant::GoldEmotion, item) ==
          "The user's emotion may be proud. The situation may be: a loss.");
    CHECK(substitute_gold(t, TwoStageVariant::GoldSituation, item) ==
          "The user's emotion may be sad. The situation may be: I won a race..");
    const auto none = parse_stage_one("Hard to say.");
    CHECK(substitute_gold(none, TwoStageVariant::GoldEmotion, item) == "Hard to say. The user's emotion is proud.");
}

TEST_CASE("zero-shot sends one request with the rendered prompt") {
    NumberedChat chat;
    GenerationResources res;
    res.chat = &chat;
    const auto item = item_from("z", {"I lost my keys.", "Oh no.", "Found them later."});
    const auto r = generate(item, GenerationStrategy::zero_shot(), res, {}, 0);
    CHECK(r.text == "R1");
    REQUIRE(r.requests.size() == 1);
    CHECK(r.requests[0].temperature == 0.0);
    CHECK(r.requests[0].messages.size() == 1);
    CHECK(r.requests[0].messages[0].content == r.prompts[0].text);
    CHECK(r.prompts[0].text.find("Instance") == std::string::npos);
    CHECK(chat.counts().network_calls == 1);
}

TEST_CASE("two-stage is one conversation of two requests") {
    MockChat chat(listener_responder(PromptTemplate::defaults()));
    GenerationResources res;
    res.chat = &chat;
    const auto item = item_from("t", {"I feel so lonely since I moved.", "That is hard.", "Yes, I know nobody."});
    const auto r = generate(item, GenerationStrategy::two_stage(), res, {}, 0);
    REQUIRE(r.requests.size() == 2);
    REQUIRE(r.thought);
    const auto& stage1 = r.requests[0].messages.back().content;
    CHECK(stage1.substr(stage1.size() - PromptTemplate::defaults().stage1.size()) == PromptTemplate::defaults().stage1);
    const auto& second = r.requests[1].messages;
    REQUIRE(second.size() == 3);
    CHECK(second[0].content == stage1);
    CHECK(second[1].role == "assistant");
    CHECK(second[1].content == r.thought->raw_text);
    CHECK(second[2].content == PromptTemplate::defaults().stage2);
    CHECK(r.thought->parsed_emotion == std::optional<std::string>("lonely"));
    CHECK(chat.counts().network_calls == 2);
}

TEST_CASE("gold two-stage variants carry the substituted thought") {
    MockChat chat(scripted_responder({}, [](const ChatRequest& r) {
        return r.messages.size() == 1 ? std::string("The user's emotion may be sad. The situation may be: unclear.")
                                       : std::string("reply");
    }));
    GenerationResources res;
    res.chat = &chat;
    const auto item = item_from("g", {"a", "b", "c"}, "joyful", "Got a puppy.");
    const auto emo = generate(item, GenerationStrategy::two_stage(TwoStageVariant::GoldEmotion), res, {}, 0);
    CHECK(emo.requests[1].messages[1].content.find("joyful") != std::string::npos);
    CHECK(emo.requests[1].messages[1].content.find("sad") == std::string::npos);
    CHECK(emo.thought->raw_text.find("sad") != std::string::npos);
    const auto situ = generate(item, GenerationStrategy::two_stage(TwoStageVariant::GoldSituation), res, {}, 0);
    CHECK(situ.requests[1].messages[1].content.find("Got a puppy.") != std::string::npos);
}

TEST_CASE("an empty stage-one reply is a StageOneError") {
    MockChat chat(scripted_responder({}, [](const ChatRequest&) { return std::string("  \n"); }));
    CHECK_THROWS_AS(generate_two_stage(item_from("e", {"a", "b", "c"}), TwoStageVariant::Inferred, chat, {}),
                    StageOneError);
}

TEST_CASE("few-shot exemplars are seeded, distinct and exclude the item's dialogue") {
    const auto pool = synthetic_corpus(30);
    NumberedChat chat;
    GenerationResources res;
    res.chat = &chat;
    res.train_pool = &pool;
    auto item = derive_eval_items(pool[4]).front();
    const auto a = select_exemplars(GenerationStrategy::few_shot(10), item, res, 7);
    const auto b = select_exemplars(GenerationStrategy::few_shot(10), item, res, 7);
    CHECK(a.ids == b.ids);
    CHECK(std::set<std::string>(a.ids.begin(), a.ids.end()).size() == 10);
    CHECK(std::find(a.ids.begin(), a.ids.end(), pool[4].id) == a.ids.end());
    CHECK(select_exemplars(GenerationStrategy::few_shot(29), item, res, 1).ids.size() == 29);
    CHECK_THROWS_AS(select_exemplars(GenerationStrategy::few_shot(30), item, res, 1), ValidationError);
    int differing = 0;
    for (std::uint64_t s = 8; s < 20; ++s) differing += select_exemplars(GenerationStrategy::few_shot(10), item, res, s).ids != a.ids;
    CHECK(differing > 8);
}

TEST_CASE("semantic exemplars are the best matches in descending order") {
    const auto pool = synthetic_corpus(40);
    MockSentenceEmbedder embedder(32);
    const auto index = build_index(pool, embedder);
    GenerationResources res;
    res.train_pool = &pool;
    res.index = &index;
    res.embedder = &embedder;
    const auto item = derive_eval_items(pool[0]).back();
    const auto sel = select_exemplars(GenerationStrategy::semantic_icl(5), item, res, 0);
    REQUIRE(sel.ids.size() == 5);
    CHECK(std::find(sel.ids.begin(), sel.ids.end(), pool[0].id) == sel.ids.end());
    for (std::size_t i = 1; i < 5; ++i) CHECK(sel.scores[i - 1] >= sel.scores[i]);
    const auto q = embedder.embed(flatten_context(item.context));
    const auto want = index.top_k(q, 6, {pool[0].id});
    for (std::size_t i = 0; i < 5; ++i) CHECK(sel.ids[i] == want[i].dialogue_id);

    MockSentenceEmbedder other(16);
    res.embedder = &other;
    CHECK_THROWS_AS(select_exemplars(GenerationStrategy::semantic_icl(5), item, res, 0), ValidationError);
}

TEST_CASE("knowledge strategy adds the block and records its digest") {
    NumberedChat chat;
    MockCommonsense cs;
    GenerationResources res;
    res.chat = &chat;
    res.commonsense = &cs;
    const auto r = generate(item_from("k", {"a", "b", "c"}), GenerationStrategy::knowledge(), res, {}, 0);
    REQUIRE(r.knowledge_block);
    REQUIRE(r.knowledge_digest);
    CHECK(r.prompts[0].has_section(kKnowledgeLabel));
    CHECK(r.prompts[0].text.find(*r.knowledge_block) != std::string::npos);
    CHECK(cs.counts().network_calls == 5);
}

TEST_CASE("a batch with one failing item keeps going") {
    std::vector<EvalItem> items;
    for (int i = 0; i < 10; ++i) items.push_back(item_from("b" + std::to_string(i), {"text " + std::to_string(i), "ok", "more"}));
    MarkerFailChat chat("text 6");
    GenerationResources res;
    res.chat = &chat;
    GenerationSettings settings;
    settings.parallelism = 4;
    const auto m = run_batch(items, GenerationStrategy::zero_shot(), res, settings, 0);
    REQUIRE(m.outcomes.size() == 10);
    CHECK(m.failures() == 1);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(m.outcomes[i].item.id() == items[i].id());
        CHECK(m.outcomes[i].response.has_value() != m.outcomes[i].error.has_value());
    }
    CHECK(m.outcomes[6].error.has_value());
    CHECK(m.counts.chat.network_calls == 10);
}

TEST_CASE("batch manifests are deterministic apart from timestamps and round-trip") {
    const auto items = fixture_items();
    const auto pool = synthetic_corpus(20);
    MockChat chat(listener_responder(PromptTemplate::defaults()));
    GenerationResources res;
    res.chat = &chat;
    res.train_pool = &pool;
    GenerationSettings one, many;
    one.parallelism = 1;
    many.parallelism = 8;
    auto a = run_batch(items, GenerationStrategy::few_shot(3), res, one, 42);
    auto b = run_batch(items, GenerationStrategy::few_shot(3), res, many, 42);
    CHECK(a.run_id == b.run_id);
    a.started_at = b.started_at = a.finished_at = b.finished_at = "";
    a.counts = b.counts = {};
    CHECK(a.serialize() == b.serialize());
    const auto parsed = RunManifest::parse(a.serialize());
    CHECK(parsed.serialize() == a.serialize());
    CHECK(parsed.strategy == a.strategy);
}

TEST_CASE("replay reproduces recorded replies") {
    MockChat chat(listener_responder(PromptTemplate::defaults()));
    GenerationResources res;
    res.chat = &chat;
    std::vector<EvalItem> items{item_from("r1", {"I am so proud of my son.", "Why?", "He graduated."}),
                                item_from("r2", {"a", "b", "c"})};
    const auto m = run_batch(items, GenerationStrategy::two_stage(), res, {}, 1);
    auto report = replay_manifest(m, chat);
    CHECK(report.replayed == 2);
    CHECK(report.identical == 2);
    CHECK(report.mismatched_ids.empty());

    MockChat other(scripted_responder({}, [](const ChatRequest&) { return std::string("different"); }));
    report = replay_manifest(m, other);
    CHECK(report.mismatched_ids.size() == 2);
}
