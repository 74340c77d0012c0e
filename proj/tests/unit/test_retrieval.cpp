#include <algorithm>
#include <map>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "empathy/error.hpp"
#include "empathy/mock.hpp"
#include "empathy/retrieval.hpp"
#include "support.hpp"

using namespace empathy;
using empathy::testing::make_dialogue;
using empathy::testing::synthetic_corpus;

namespace {

// Oracle: textbook cosine in long double.
double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return static_cast<double>(dot / std::sqrt(na * nb));
}

std::vector<ScoredId> oracle_top_k(const ExemplarIndex& index, const Embedding& q, std::size_t k) {
    std::vector<ScoredId> all;
    for (const auto& e : index.entries()) all.push_back({e.dialogue_id, oracle_cosine(e.vector.values, q.values)});
    std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
        return a.score != b.score ? a.score > b.score : a.dialogue_id < b.dialogue_id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

/// Embedder that returns fixed vectors per text.
class TableEmbedder final : public SentenceEmbedder {
public:
    explicit TableEmbedder(std::map<std::string, std::vector<double>> table, std::size_t dim)
        : table_(std::move(table)), dim_(dim) {}
    Embedding embed(std::string_view text) override {
        auto it = table_.find(std::string(text));
        if (it == table_.end()) throw ProviderError(ProviderError::Kind::Other, "no vector for " + std::string(text));
        return {it->second};
    }
    std::size_t dimension() const override { return dim_; }
    std::string encoder_id() const override { return "table"; }
    CallCounts counts() const override { return {}; }

private:
    std::map<std::string, std::vector<double>> table_;
    std::size_t dim_;
};

}  // namespace

TEST_CASE("flatten_context joins texts with single spaces") {
    CHECK(flatten_context(make_dialogue("d", {"hello"}).utterances) == "hello");
    CHECK(flatten_context(make_dialogue("d", {"a", "b", "c"}).utterances) == "a b c");
    CHECK(flatten_context(make_dialogue("d", {"two  spaces", " x "}).utterances) == "two  spaces  x ");
}

TEST_CASE("cosine_similarity examples") {
    CHECK(cosine_similarity({{0.3, -1.2, 4.0}}, {{0.3, -1.2, 4.0}}) == 1.0);
    CHECK(cosine_similarity({{1, 0}}, {{0, 1}}) == 0.0);
    CHECK(cosine_similarity({{1, 1}}, {{1, 0}}) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(std::abs(cosine_similarity({{1, 1}}, {{1, 0}}) - 0.70710678118654752) < 1e-9);
}

TEST_CASE("cosine_similarity errors") {
    CHECK_THROWS_AS(cosine_similarity({{0, 0}}, {{1, 0}}), ValidationError);
    CHECK_THROWS_AS(cosine_similarity({{1, 0}}, {{1, 0, 0}}), ValidationError);
}

TEST_CASE("property: cosine is symmetric, bounded and scale-invariant") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> scale(0.01, 100);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t dim = 1 + trial % 17;
        Embedding a, b;
        for (std::size_t i = 0; i < dim; ++i) {
            a.values.push_back(normal(gen));
            b.values.push_back(normal(gen));
        }
        const double ab = cosine_similarity(a, b);
        CHECK(ab == cosine_similarity(b, a));
        CHECK(std::abs(ab) <= 1.0);
        CHECK(std::abs(ab - oracle_cosine(a.values, b.values)) < 1e-12);
        auto scaled = a;
        const double s = scale(gen);
        for (auto& v : scaled.values) v *= s;
        CHECK(std::abs(cosine_similarity(scaled, b) - ab) < 1e-9);
        CHECK(std::abs(cosine_similarity(a, a) - 1.0) < 1e-12);
    }
}

TEST_CASE("build_index embeds every training dialogue") {
    const auto train = synthetic_corpus(3);
    MockSentenceEmbedder embedder;
    const auto index = build_index(train, embedder, 2);
    CHECK(index.size() == 3);
    CHECK(index.dimension() == 768);
    CHECK(index.encoder_id() == embedder.encoder_id());
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(index.entries()[i].sentence == flatten_context(train[i].utterances));
        CHECK(index.entries()[i].vector == embedder.embed(flatten_context(train[i].utterances)));
    }
}

TEST_CASE("stored vectors are the provider's outputs") {
    const auto train = std::vector{make_dialogue("a", {"x1", "y1"}), make_dialogue("b", {"x2", "y2"})};
    TableEmbedder table({{"x1 y1", {1, 0, 0}}, {"x2 y2", {0, 1, 0}}}, 3);
    const auto index = build_index(train, table);
    CHECK(index.entries()[0].vector.values == std::vector<double>{1, 0, 0});
    CHECK(index.entries()[1].vector.values == std::vector<double>{0, 1, 0});
}

TEST_CASE("failed embeddings are reported together") {
    const auto train = std::vector{make_dialogue("a", {"x1", "y1"}), make_dialogue("b", {"bad", "y2"}),
                                   make_dialogue("c", {"also", "bad"})};
    TableEmbedder table({{"x1 y1", {1, 0}}}, 2);
    try {
        build_index(train, table, 3);
        FAIL("expected PartialBuildError");
    } catch (const PartialBuildError& e) {
        CHECK(e.failed_ids == std::vector<std::string>{"b", "c"});
    }
}

TEST_CASE("index persistence round-trips byte-identically") {
    MockSentenceEmbedder embedder(32);
    const auto index = build_index(synthetic_corpus(25), embedder);
    std::stringstream buf;
    index.write(buf);
    const auto text = buf.str();
    std::istringstream in(text);
    const auto back = ExemplarIndex::read(in, embedder.encoder_id());
    CHECK(back == index);
    std::stringstream again;
    back.write(again);
    CHECK(again.str() == text);

    std::istringstream wrong(text);
    CHECK_THROWS_AS(ExemplarIndex::read(wrong, "other-encoder"), ValidationError);

    empathy::testing::TempDir dir("index");
    index.save(dir / "idx.jsonl");
    CHECK(ExemplarIndex::load(dir / "idx.jsonl") == index);
}

TEST_CASE("malformed index files are rejected") {
    std::istringstream empty("");
    CHECK_THROWS_AS(ExemplarIndex::read(empty), ParseError);
    std::istringstream short_count(R"({"dimension":2,"encoder_id":"e","count":2}
{"dialogue_id":"a","sentence":"s","vector":[1,0]}
)");
    CHECK_THROWS(ExemplarIndex::read(short_count));
    std::istringstream bad_dim(R"({"dimension":2,"encoder_id":"e","count":1}
{"dialogue_id":"a","sentence":"s","vector":[1,0,0]}
)");
    CHECK_THROWS(ExemplarIndex::read(bad_dim));
}

TEST_CASE("top_k examples") {
    // Scores against the query (1,0): 0.9, 0.5, 0.1.
    const auto v = [](double c) { return Embedding{{c, std::sqrt(1 - c * c)}}; };
    ExemplarIndex index(2, "t", {{"low", "", v(0.1)}, {"high", "", v(0.9)}, {"mid", "", v(0.5)}});
    const auto top = index.top_k({{1, 0}}, 2);
    REQUIRE(top.size() == 2);
    CHECK(top[0].dialogue_id == "high");
    CHECK(top[1].dialogue_id == "mid");
    CHECK(top[0].score == doctest::Approx(0.9));
    CHECK(index.top_k({{1, 0}}, 10).size() == 3);
    CHECK(index.top_k({{1, 0}}, 3, {"high"}).front().dialogue_id == "mid");
}

TEST_CASE("ties are broken by ascending id") {
    ExemplarIndex index(2, "t", {{"b", "", {{1, 0}}}, {"c", "", {{1, 0}}}, {"a", "", {{1, 0}}}});
    const auto top = index.top_k({{2, 0}}, 3);
    CHECK(top[0].dialogue_id == "a");
    CHECK(top[1].dialogue_id == "b");
    CHECK(top[2].dialogue_id == "c");
}

TEST_CASE("self-query ranks the dialogue first with score 1") {
    const auto train = synthetic_corpus(200);
    MockSentenceEmbedder embedder;
    const auto index = build_index(train, embedder);
    for (std::size_t i = 0; i < train.size(); i += 17) {
        const auto top = top_k_similar(index, train[i].utterances, 3, embedder);
        CHECK(top[0].dialogue_id == train[i].id);
        CHECK(std::abs(top[0].score - 1.0) < 1e-6);
    }
}

TEST_CASE("property: top_k equals the exhaustive oracle") {
    MockSentenceEmbedder embedder(64);
    const auto index = build_index(synthetic_corpus(300), embedder);
    std::mt19937_64 gen(3);
    for (int q = 0; q < 40; ++q) {
        const auto query = embedder.embed("query " + std::to_string(gen()));
        for (std::size_t k : {1U, 5U, 10U, 300U, 400U}) {
            const auto got = index.top_k(query, k);
            const auto want = oracle_top_k(index, query, k);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].dialogue_id == want[i].dialogue_id);
                CHECK(std::abs(got[i].score - want[i].score) < 1e-12);
                if (i > 0) CHECK(got[i - 1].score >= got[i].score);
            }
        }
    }
}

TEST_CASE("property: index build is independent of input order") {
    MockSentenceEmbedder embedder(48);
    auto train = synthetic_corpus(60);
    const auto a = build_index(train, embedder);
    std::mt19937_64 gen(8);
    std::shuffle(train.begin(), train.end(), gen);
    const auto b = build_index(train, embedder, 3);
    CHECK(a == b);
    const auto query = embedder.embed("anything at all");
    CHECK(a.top_k(query, 7) == b.top_k(query, 7));
}

TEST_CASE("index construction validates entries") {
    CHECK_THROWS_AS(ExemplarIndex(2, "t", {{"a", "", {{1, 0}}}, {"a", "", {{0, 1}}}}), IntegrityError);
    CHECK_THROWS_AS(ExemplarIndex(2, "t", {{"a", "", {{1, 0, 0}}}}), ValidationError);
    CHECK_THROWS_AS(ExemplarIndex(2, "t", {{"a", "", {{NAN, 0}}}}), ValidationError);
}
