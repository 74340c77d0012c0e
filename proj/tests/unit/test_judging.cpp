#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "empathy/error.hpp"
#include "empathy/judging.hpp"
#include "empathy/mock.hpp"
#include "support.hpp"

using namespace empathy;
using empathy::testing::make_dialogue;

namespace {

// Oracle: rank of x[i] = (#less) + (#equal + 1) / 2, then textbook Pearson.
double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<long double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            long double less = 0, equal = 0;
            for (double w : v) {
                less += w < v[i];
                equal += w == v[i];
            }
            r[i] = less + (equal + 1) / 2;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const long double n = static_cast<long double>(x.size());
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += rx[i] / n;
        my += ry[i] / n;
    }
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

// Oracle: tau-b from pair enumeration.
double oracle_kendall(const std::vector<double>& x, const std::vector<double>& y) {
    long double conc = 0, disc = 0, tx = 0, ty = 0, pairs = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            ++pairs;
            const double dx = x[i] - x[j], dy = y[i] - y[j];
            if (dx == 0) ++tx;
            if (dy == 0) ++ty;
            if (dx * dy > 0) ++conc;
            if (dx * dy < 0) ++disc;
        }
    }
    return static_cast<double>((conc - disc) / std::sqrt((pairs - tx) * (pairs - ty)));
}

/// Prefers whichever shown response contains "GOOD".
class PreferGood final : public ChatProvider {
public:
    ChatResponse complete(const ChatRequest& r) override {
        counter_.network();
        const auto& p = r.messages.back().content;
        const auto a = p.find("Response A: ");
        const auto b = p.find("\nResponse B: ");
        const auto shown_a = p.substr(a, b - a);
        const auto shown_b = p.substr(b);
        const bool ga = shown_a.find("GOOD") != std::string::npos;
        const bool gb = shown_b.find("GOOD") != std::string::npos;
        return {ga == gb ? "Tie" : (ga ? "A" : "B"), std::nullopt, ""};
    }
    std::string kind() const override { return "prefer-good"; }
    CallCounts counts() const override { return counter_.snapshot(); }

private:
    CallCounter counter_;
};

std::vector<Utterance> ctx() { return make_dialogue("j", {"I got the job!"}).utterances; }

RatingRecord score(std::string item, std::string rater, Aspect a, int s) {
    return {std::move(item), std::move(rater), a, s};
}

}  // namespace

TEST_CASE("aspects and verdict names") {
    CHECK(parse_aspect("EMP") == Aspect::Empathy);
    CHECK(parse_aspect("coherence") == Aspect::Coherence);
    CHECK(parse_aspect("inf") == Aspect::Informativity);
    CHECK_THROWS_AS(parse_aspect("style"), ParseError);
    CHECK(aspect_definition(Aspect::Empathy).find("feelings") != std::string_view::npos);
    CHECK(encode_verdict(Verdict::Win) == 1);
    CHECK(encode_verdict(Verdict::Tie) == 0);
    CHECK(encode_verdict(Verdict::Lose) == -1);
    for (auto v : {Verdict::Win, Verdict::Lose, Verdict::Tie}) CHECK(parse_verdict_name(verdict_name(v)) == v);
}

TEST_CASE("judge verdict parsing") {
    CHECK(parse_judge_verdict("A") == ShownVerdict::First);
    CHECK(parse_judge_verdict(" b. ") == ShownVerdict::Second);
    CHECK(parse_judge_verdict("TIE") == ShownVerdict::Tie);
    CHECK(parse_judge_verdict("I think A is better") == ShownVerdict::First);
    CHECK(parse_judge_verdict("Response B wins") == ShownVerdict::Second);
    CHECK_FALSE(parse_judge_verdict("Both are fine"));
    CHECK_FALSE(parse_judge_verdict(""));
}

TEST_CASE("judge prompt carries the aspect definition and both responses") {
    const auto p = build_judge_prompt(ctx(), "first", "second", Aspect::Coherence, PromptTemplate::defaults());
    CHECK(p.find(std::string(aspect_definition(Aspect::Coherence))) != std::string::npos);
    CHECK(p.find("Speaker: I got the job!") != std::string::npos);
    CHECK(p.find("Response A: first\nResponse B: second") != std::string::npos);
}

TEST_CASE("property: verdicts do not depend on presentation order") {
    PreferGood judge;
    CHECK(judge_swaps(1));
    CHECK_FALSE(judge_swaps(2));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (auto aspect : kABAspects) {
            CHECK(judge_pair(ctx(), "GOOD reply", "meh", aspect, judge, seed).verdict == Verdict::Win);
            CHECK(judge_pair(ctx(), "meh", "GOOD reply", aspect, judge, seed).verdict == Verdict::Lose);
            CHECK(judge_pair(ctx(), "meh", "also meh", aspect, judge, seed).verdict == Verdict::Tie);
        }
    }
}

TEST_CASE("a swapped 'A' means the second response won") {
    MockChat always_a(scripted_responder({}, [](const ChatRequest&) { return std::string("A"); }));
    CHECK(judge_pair(ctx(), "x", "y", Aspect::Empathy, always_a, 0).verdict == Verdict::Win);
    CHECK(judge_pair(ctx(), "x", "y", Aspect::Empathy, always_a, 1).verdict == Verdict::Lose);
}

TEST_CASE("an unreadable reply is reprompted once, then fails") {
    MockChat second_try(scripted_responder({}, [](const ChatRequest& r) {
        return r.messages.size() == 1 ? std::string("Both are lovely") : std::string("Tie");
    }));
    CHECK(judge_pair(ctx(), "x", "y", Aspect::Empathy, second_try, 0).verdict == Verdict::Tie);
    CHECK(second_try.counts().network_calls == 2);

    MockChat never(scripted_responder({}, [](const ChatRequest&) { return std::string("no idea"); }));
    CHECK_THROWS_AS(judge_pair(ctx(), "x", "y", Aspect::Empathy, never, 0), JudgeParseError);
    CHECK(never.counts().network_calls == 2);
    CHECK_THROWS_AS(judge_pair(ctx(), "", "y", Aspect::Empathy, never, 0), ValidationError);
    CHECK_THROWS_AS(judge_pair(ctx(), "x", "y", Aspect::Fluency, never, 0), ValidationError);
}

TEST_CASE("judge requests use temperature 0 and the judge model") {
    ChatRequest seen;
    MockChat spy(scripted_responder({}, [&](const ChatRequest& r) {
        seen = r;
        return std::string("A");
    }));
    judge_pair(ctx(), "x", "y", Aspect::Empathy, spy, 0);
    CHECK(seen.temperature == 0.0);
    CHECK(seen.model_id == "gpt-4");
}

TEST_CASE("rating files") {
    std::istringstream good(R"({"item_id":"d#2","rater_id":"h1","aspect":"empathy","score":4}
{"item_id":"d#2","rater_id":"h1","aspect":"coherence","choice":"win"}
)");
    const auto rs = read_ratings(good);
    REQUIRE(rs.size() == 2);
    CHECK(rs[0].encoded() == 4.0);
    CHECK(rs[1].encoded() == 1.0);
    std::stringstream buf;
    write_ratings(buf, rs);
    const auto back = read_ratings(buf);
    CHECK(back.size() == 2);
    CHECK(back[1].value == rs[1].value);

    std::istringstream both(R"({"item_id":"a","rater_id":"h","aspect":"empathy","score":1,"choice":"tie"})");
    CHECK_THROWS_AS(read_ratings(both), ParseError);
    std::istringstream range(R"({"item_id":"a","rater_id":"h","aspect":"empathy","score":6})");
    CHECK_THROWS_AS(read_ratings(range), ParseError);
    std::istringstream dup(R"({"item_id":"a","rater_id":"h","aspect":"empathy","score":1}
{"item_id":"a","rater_id":"h","aspect":"empathy","score":2}
)");
    CHECK_THROWS_AS(read_ratings(dup), IntegrityError);
}

TEST_CASE("spearman and kendall examples") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    CHECK(spearman(x, x) == 1.0);
    CHECK(kendall_tau(x, x) == 1.0);
    const std::vector<double> rev{5, 4, 3, 2, 1};
    CHECK(spearman(x, rev) == -1.0);
    CHECK(std::abs(spearman(x, std::vector<double>{1, 3, 2, 5, 4}) - 0.8) < 1e-12);
    CHECK(std::abs(kendall_tau(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) - 1.0 / 3) < 1e-12);
    CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
}

TEST_CASE("undefined correlations") {
    const std::vector<double> c{2, 2, 2};
    const std::vector<double> v{1, 2, 3};
    CHECK_THROWS_AS(spearman(c, v), UndefinedCorrelationError);
    CHECK_THROWS_AS(kendall_tau(c, v), UndefinedCorrelationError);
    CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}), UndefinedCorrelationError);
    CHECK_THROWS_AS(kendall_tau(v, std::vector<double>{1, 2}), UndefinedCorrelationError);
}

TEST_CASE("property: correlations equal brute-force oracles") {
    std::mt19937_64 gen(17);
    std::uniform_int_distribution<int> len(2, 50), level(1, 5);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 400; ++trial) {
        const int n = len(gen);
        std::vector<double> x(n), y(n);
        const bool tied = trial % 2 == 0;
        for (int i = 0; i < n; ++i) {
            x[i] = tied ? level(gen) : normal(gen);
            y[i] = tied ? level(gen) : normal(gen);
        }
        double s;
        try {
            s = spearman(x, y);
        } catch (const UndefinedCorrelationError&) {
            continue;
        }
        CHECK(std::abs(s - oracle_spearman(x, y)) < 1e-12);
        CHECK(std::abs(kendall_tau(x, y) - oracle_kendall(x, y)) < 1e-12);
    }
}

TEST_CASE("property: strictly increasing transforms leave correlations unchanged") {
    std::mt19937_64 gen(23);
    std::uniform_int_distribution<int> level(1, 5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(30), y(30);
        for (int i = 0; i < 30; ++i) {
            x[i] = level(gen);
            y[i] = level(gen);
        }
        std::vector<double> tx(30), ty(30);
        for (int i = 0; i < 30; ++i) {
            tx[i] = std::exp(x[i]) + 3;
            ty[i] = y[i] * y[i] * y[i] - 7;
        }
        CHECK(std::abs(spearman(x, y) - spearman(tx, ty)) < 1e-12);
        CHECK(std::abs(kendall_tau(x, y) - kendall_tau(tx, ty)) < 1e-12);
    }
}

TEST_CASE("independent random raters barely correlate") {
    std::mt19937_64 gen(1234);
    std::uniform_int_distribution<int> level(1, 5);
    std::vector<double> x(1000), y(1000);
    for (int i = 0; i < 1000; ++i) {
        x[i] = level(gen);
        y[i] = level(gen);
    }
    CHECK(std::abs(spearman(x, y)) < 0.1);
    CHECK(std::abs(kendall_tau(x, y)) < 0.1);
}

TEST_CASE("rater reduction: strict majority, else mean") {
    const auto r = reduce_ratings({score("i", "h1", Aspect::Empathy, 4), score("i", "h2", Aspect::Empathy, 4),
                                   score("i", "h3", Aspect::Empathy, 1), score("j", "h1", Aspect::Empathy, 1),
                                   score("j", "h2", Aspect::Empathy, 2), score("j", "h3", Aspect::Empathy, 5)});
    CHECK(r.at({"i", Aspect::Empathy}) == 4.0);
    CHECK(r.at({"j", Aspect::Empathy}) == doctest::Approx(8.0 / 3));
}

TEST_CASE("correlate_raters: identity gives 1, thin aspects are warned about") {
    std::vector<RatingRecord> human, model;
    std::mt19937_64 gen(2);
    std::uniform_int_distribution<int> level(1, 5);
    for (int i = 0; i < 40; ++i) {
        for (auto a : {Aspect::Empathy, Aspect::Coherence}) {
            const int s = level(gen);
            human.push_back(score("it" + std::to_string(i), "h", a, s));
            model.push_back(score("it" + std::to_string(i), "judge:gpt-4", a, s));
        }
    }
    human.push_back(score("only", "h", Aspect::Fluency, 3));
    model.push_back(score("only", "judge:gpt-4", Aspect::Fluency, 3));
    const auto rep = correlate_raters(human, model);
    CHECK(rep.per_aspect.size() == 2);
    for (const auto& [a, cell] : rep.per_aspect) {
        CHECK(cell.spearman == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(cell.kendall_tau == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(cell.n == 40);
    }
    REQUIRE(rep.overall);
    CHECK(rep.overall->spearman == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(rep.warnings.empty());
    CHECK(correlate_raters(human, model, OverallMode::MeanOfAspects).overall->kendall_tau ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.table().find("overall") != std::string::npos);
}

TEST_CASE("judging two manifests yields one choice per item and aspect") {
    MockChat chat(listener_responder(PromptTemplate::defaults()));
    GenerationResources res;
    res.chat = &chat;
    std::vector<EvalItem> items;
    for (int i = 0; i < 4; ++i) items.push_back(derive_eval_items(make_dialogue("m" + std::to_string(i), {"hi", "yo"})).front());
    const auto a = run_batch(items, GenerationStrategy::zero_shot(), res, {}, 0);
    const auto b = run_batch(items, GenerationStrategy::two_stage(), res, {}, 0);
    PreferGood judge;
    const auto run = judge_manifests(a, b, judge, 5);
    CHECK(run.ratings.size() == 12);
    CHECK(run.skipped.empty());
    for (const auto& r : run.ratings) CHECK(r.rater_id == "judge:gpt-4");
    std::size_t total = 0;
    for (const auto& [aspect, t] : run.tally) total += t.win + t.lose + t.tie;
    CHECK(total == 12);
    const auto again = judge_manifests(a, b, judge, 5, {}, 1);
    for (std::size_t i = 0; i < 12; ++i) CHECK(again.ratings[i].value == run.ratings[i].value);
}
