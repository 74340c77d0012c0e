#include <set>
#include <sstream>

#include "doctest.h"
#include "empathy/error.hpp"
#include "empathy/hashing.hpp"
#include "empathy/knowledge.hpp"
#include "empathy/mock.hpp"
#include "support.hpp"

using namespace empathy;
using empathy::testing::make_dialogue;

namespace {

/// Returns fixed candidate lists per relation; can fail chosen relations.
class TableCommonsense final : public CommonsenseProvider {
public:
    std::map<Relation, std::vector<std::string>> table;
    std::set<Relation> failing;
    std::vector<std::string> queries;
    std::mutex mu;

    std::vector<std::string> infer(std::string_view text, Relation r) override {
        {
            std::lock_guard lock(mu);
            queries.emplace_back(text);
        }
        counter_.network();
        if (failing.count(r)) throw ProviderError(ProviderError::Kind::Transport, "down");
        auto it = table.find(r);
        return it == table.end() ? std::vector<std::string>{"something"} : it->second;
    }
    CallCounts counts() const override { return counter_.snapshot(); }

private:
    CallCounter counter_;
};

std::vector<Utterance> ctx() {
    return make_dialogue("k", {"My dog died last week.", "I'm so sorry.", "I miss him a lot."}).utterances;
}

}  // namespace

TEST_CASE("one call per relation, all five in canonical order") {
    TableCommonsense cs;
    const auto infs = gather_inferences(ctx(), cs);
    REQUIRE(infs.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(infs[i].relation == kAllRelations[i]);
    CHECK(cs.counts().network_calls == 5);
    for (const auto& q : cs.queries) CHECK(q == "I miss him a lot.");
}

TEST_CASE("query text modes") {
    CHECK(knowledge_query_text(ctx(), KnowledgeQuery::LastSpeakerUtterance) == "I miss him a lot.");
    CHECK(knowledge_query_text(ctx(), KnowledgeQuery::FullContext) ==
          "My dog died last week. I'm so sorry. I miss him a lot.");
    CHECK_THROWS_AS(knowledge_query_text({}, KnowledgeQuery::FullContext), ValidationError);
}

TEST_CASE("candidates are trimmed, deduplicated and cut to top_m") {
    TableCommonsense cs;
    cs.table[Relation::xWant] = {"  to rest ", "to rest", "", "to sleep", "to eat"};
    CHECK(gather_inferences(ctx(), cs, 1)[2].texts == std::vector<std::string>{"to rest"});
    CHECK(gather_inferences(ctx(), cs, 2)[2].texts == std::vector<std::string>{"to rest", "to sleep"});
    CHECK(gather_inferences(ctx(), cs, 10)[2].texts.size() == 3);
    CHECK_THROWS_AS(gather_inferences(ctx(), cs, 0), ValidationError);
}

TEST_CASE("failures name every failed relation") {
    TableCommonsense cs;
    cs.failing = {Relation::xNeed, Relation::xReact};
    try {
        gather_inferences(ctx(), cs, 1, KnowledgeQuery::LastSpeakerUtterance, 1);
        FAIL("expected KnowledgeError");
    } catch (const KnowledgeError& e) {
        CHECK(e.failed_relations == std::vector<std::string>{"xNeed", "xReact"});
    }
    TableCommonsense blank;
    blank.table[Relation::xEffect] = {"   "};
    CHECK_THROWS_AS(gather_inferences(ctx(), blank), KnowledgeError);
}

TEST_CASE("block renders one framed line per relation") {
    TableCommonsense cs;
    cs.table[Relation::xReact] = {"sad"};
    cs.table[Relation::xWant] = {"to talk to her."};
    const auto block = assemble_knowledge_block(gather_inferences(ctx(), cs));
    std::istringstream lines(block.rendered);
    std::vector<std::string> got;
    for (std::string l; std::getline(lines, l);) got.push_back(l);
    REQUIRE(got.size() == 5);
    CHECK(got[0] == "xIntent: The speaker intends something.");
    CHECK(got[2] == "xWant: The speaker wants to talk to her.");
    CHECK(got[4] == "xReact: The speaker feels sad.");
    CHECK(block.digest() == sha256_hex(block.rendered));
}

TEST_CASE("block assembly validates relations") {
    std::vector<CommonsenseInference> four;
    for (std::size_t i = 0; i < 4; ++i) four.push_back({kAllRelations[i], {"x"}});
    CHECK_THROWS_AS(assemble_knowledge_block(four), ValidationError);
    auto dup = four;
    dup.push_back({Relation::xIntent, {"y"}});
    CHECK_THROWS_AS(assemble_knowledge_block(dup), ValidationError);
    auto empty_text = four;
    empty_text.push_back({Relation::xReact, {}});
    CHECK_THROWS_AS(assemble_knowledge_block(empty_text), ValidationError);
}

TEST_CASE("knowledge goes before the context and removing it restores the plain prompt") {
    MockCommonsense cs;
    const auto block = assemble_knowledge_block(gather_inferences(ctx(), cs));
    const auto aug = augment_context(ctx(), block);
    CHECK(aug.base_context == ctx());

    const auto plain = PromptBundle::from_template(PromptTemplate::defaults(), ctx());
    auto bundle = plain;
    apply_knowledge(bundle, aug);
    CHECK(bundle.dialogue_context == plain.dialogue_context);
    const auto p = render_prompt(bundle);
    const auto k = p.section(kKnowledgeLabel);
    REQUIRE(k);
    CHECK(k->rfind(PromptTemplate::defaults().knowledge_header + "\n", 0) == 0);
    CHECK(p.text.find("xIntent: The speaker intends xIntent: stub.") < p.text.find("Speaker: My dog died"));
    CHECK(p.without_section(kKnowledgeLabel) == render_prompt(plain).text);
}

TEST_CASE("file commonsense store round-trips and misses loudly") {
    FileCommonsense store;
    store.insert("I miss him a lot.", Relation::xWant, {"to talk to her"});
    std::stringstream buf;
    store.write(buf);
    auto back = FileCommonsense::parse(buf);
    CHECK(back.size() == 1);
    CHECK(back.infer("I miss him a lot.", Relation::xWant) == std::vector<std::string>{"to talk to her"});
    CHECK(back.counts().cache_hits == 1);
    try {
        back.infer("I miss him a lot.", Relation::xNeed);
        FAIL("expected cache miss");
    } catch (const ProviderError& e) {
        CHECK(e.kind() == ProviderError::Kind::CacheMiss);
    }
}

TEST_CASE("file commonsense store rejects bad records") {
    std::istringstream unknown(R"({"context_digest":"ab","relation":"oReact","inferences":["x"]})");
    CHECK_THROWS_AS(FileCommonsense::parse(unknown), ParseError);
    std::istringstream empty_list(R"({"context_digest":"ab","relation":"xWant","inferences":[]})");
    CHECK_THROWS_AS(FileCommonsense::parse(empty_list), ParseError);
    std::istringstream garbage("{nope");
    CHECK_THROWS_AS(FileCommonsense::parse(garbage), ParseError);
    std::istringstream blank_lines("\n\n");
    CHECK(FileCommonsense::parse(blank_lines).size() == 0);
}
