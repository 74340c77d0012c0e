#include "empathy/judging.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "empathy/error.hpp"
#include "empathy/hashing.hpp"

namespace empathy {

using json = nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

std::string_view aspect_name(Aspect a) noexcept {
    switch (a) {
        case Aspect::Empathy: return "empathy";
        case Aspect::Coherence: return "coherence";
        case Aspect::Informativity: return "informativity";
        case Aspect::Fluency: return "fluency";
    }
    return "";
}

Aspect parse_aspect(std::string_view name) {
    const auto n = lower(name);
    if (n == "empathy" || n == "emp") return Aspect::Empathy;
    if (n == "coherence" || n == "coh") return Aspect::Coherence;
    if (n == "informativity" || n == "inf") return Aspect::Informativity;
    if (n == "fluency" || n == "flu") return Aspect::Fluency;
    throw ParseError("unknown aspect '" + std::string(name) + "'");
}

std::string_view aspect_definition(Aspect a) noexcept {
    switch (a) {
        case Aspect::Empathy:
            return "whether the response shows an understanding of the user’s feelings and experiences, and "
                   "expresses appropriately";
        case Aspect::Coherence: return "whether the response is coherent and relevant to the context";
        case Aspect::Informativity: return "whether the response contains more valuable information";
        case Aspect::Fluency: return "whether the response is readable";
    }
    return "";
}

std::string_view verdict_name(Verdict v) noexcept {
    switch (v) {
        case Verdict::Win: return "win";
        case Verdict::Lose: return "lose";
        case Verdict::Tie: return "tie";
    }
    return "";
}

Verdict parse_verdict_name(std::string_view name) {
    const auto n = lower(name);
    if (n == "win") return Verdict::Win;
    if (n == "lose") return Verdict::Lose;
    if (n == "tie") return Verdict::Tie;
    throw ParseError("unknown A/B choice '" + std::string(name) + "'");
}

int encode_verdict(Verdict v) noexcept {
    switch (v) {
        case Verdict::Win: return 1;
        case Verdict::Lose: return -1;
        case Verdict::Tie: return 0;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Judge

std::optional<ShownVerdict> parse_judge_verdict(std::string_view reply) {
    // Inside prose a lowercase "a" is an article, so only the whole reply
    // matches the letters case-insensitively.
    const auto classify = [](std::string_view token, bool any_case) -> std::optional<ShownVerdict> {
        const auto is_edge = [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); };
        while (!token.empty() && is_edge(token.front())) token.remove_prefix(1);
        while (!token.empty() && is_edge(token.back())) token.remove_suffix(1);
        const auto folded = lower(token);
        if (token == "A" || (any_case && folded == "a")) return ShownVerdict::First;
        if (token == "B" || (any_case && folded == "b")) return ShownVerdict::Second;
        if (folded == "tie") return ShownVerdict::Tie;
        return std::nullopt;
    };
    if (auto v = classify(reply, true)) return v;

    std::istringstream in{std::string(reply)};
    std::string token;
    while (in >> token) {
        if (auto v = classify(token, false)) return v;
    }
    return std::nullopt;
}

std::string build_judge_prompt(const std::vector<Utterance>& context, std::string_view shown_a,
                               std::string_view shown_b, Aspect aspect, const PromptTemplate& tmpl) {
    std::string aspect_title(aspect_name(aspect));
    aspect_title.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(aspect_title.front())));
    std::string out = tmpl.judge_instruction;
    out += "\n\nAspect: " + aspect_title + ": " + std::string(aspect_definition(aspect)) + ".";
    out += "\n\nDialogue context:\n" + render_dialogue(context);
    out += "\n\nResponse A: " + std::string(shown_a);
    out += "\nResponse B: " + std::string(shown_b);
    return out;
}

ABChoice judge_pair(const std::vector<Utterance>& context, std::string_view response_a, std::string_view response_b,
                    Aspect aspect, ChatProvider& judge, std::uint64_t seed, const JudgeSettings& settings) {
    if (response_a.empty() || response_b.empty()) throw ValidationError("judge_pair: responses must be non-empty");
    if (aspect == Aspect::Fluency) throw ValidationError("judge_pair: fluency is not compared in A/B tests");
    const bool swap = judge_swaps(seed);
    const auto shown_a = swap ? response_b : response_a;
    const auto shown_b = swap ? response_a : response_b;

    ChatRequest req;
    req.model_id = settings.model;
    req.temperature = settings.temperature;
    req.messages.push_back({"user", build_judge_prompt(context, shown_a, shown_b, aspect, settings.tmpl)});
    auto reply = judge.complete(req).content;
    auto verdict = parse_judge_verdict(reply);
    if (!verdict) {
        req.messages.push_back({"assistant", reply});
        req.messages.push_back({"user", settings.tmpl.judge_reprompt});
        reply = judge.complete(req).content;
        verdict = parse_judge_verdict(reply);
    }
    if (!verdict) throw JudgeParseError("judge reply has no A/B/Tie verdict: " + reply.substr(0, 120));

    ABChoice choice;
    choice.rationale = reply;
    if (*verdict == ShownVerdict::Tie) {
        choice.verdict = Verdict::Tie;
    } else {
        const bool first_won = *verdict == ShownVerdict::First;
        choice.verdict = (first_won != swap) ? Verdict::Win : Verdict::Lose;
    }
    return choice;
}

// ---------------------------------------------------------------------------
// Ratings files

double RatingRecord::encoded() const {
    if (const auto* s = std::get_if<int>(&value)) return *s;
    return encode_verdict(std::get<Verdict>(value));
}

std::vector<RatingRecord> read_ratings(std::istream& in) {
    std::vector<RatingRecord> out;
    std::set<std::tuple<std::string, std::string, Aspect>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        RatingRecord r;
        try {
            const auto j = json::parse(line);
            r.item_id = j.at("item_id").get<std::string>();
            r.rater_id = j.at("rater_id").get<std::string>();
            r.aspect = parse_aspect(j.at("aspect").get<std::string>());
            const bool has_score = j.contains("score");
            const bool has_choice = j.contains("choice");
            if (has_score == has_choice) {
                throw ParseError("ratings line " + std::to_string(line_no) + ": need exactly one of score/choice");
            }
            if (has_score) {
                const int score = j["score"].get<int>();
                if (score < 1 || score > 5) {
                    throw ParseError("ratings line " + std::to_string(line_no) + ": score " + std::to_string(score) +
                                     " outside 1..5");
                }
                r.value = score;
            } else {
                r.value = parse_verdict_name(j["choice"].get<std::string>());
            }
        } catch (const json::exception& e) {
            throw ParseError("ratings line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.emplace(r.item_id, r.rater_id, r.aspect).second) {
            throw IntegrityError("ratings line " + std::to_string(line_no) + ": duplicate record for (" + r.item_id +
                                 ", " + r.rater_id + ", " + std::string(aspect_name(r.aspect)) + ")");
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<RatingRecord> load_ratings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open ratings file " + path.string());
    return read_ratings(in);
}

void write_ratings(std::ostream& out, const std::vector<RatingRecord>& records) {
    for (const auto& r : records) {
        json j = {{"item_id", r.item_id}, {"rater_id", r.rater_id}, {"aspect", aspect_name(r.aspect)}};
        if (const auto* s = std::get_if<int>(&r.value)) {
            j["score"] = *s;
        } else {
            j["choice"] = verdict_name(std::get<Verdict>(r.value));
        }
        out << j.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Rank correlation

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        // Positions i..j-1 share the mean of ranks i+1..j.
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
        i = j;
    }
    return ranks;
}

namespace {

void check_inputs(std::span<const double> x, std::span<const double> y, const char* who) {
    if (x.size() != y.size()) {
        throw UndefinedCorrelationError(std::string(who) + ": length mismatch (" + std::to_string(x.size()) + " vs " +
                                        std::to_string(y.size()) + ")");
    }
    if (x.size() < 2) throw UndefinedCorrelationError(std::string(who) + ": need at least 2 samples");
    const auto constant = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
    };
    if (constant(x) || constant(y)) throw UndefinedCorrelationError(std::string(who) + ": constant input");
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    check_inputs(x, y, "spearman");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(rx.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mx;
        const double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    check_inputs(x, y, "kendall_tau");
    const auto n = x.size();
    std::int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            if (dx == 0) ++ties_x;
            if (dy == 0) ++ties_y;
            if (dx == 0 || dy == 0) continue;
            if ((dx > 0) == (dy > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const auto pairs = static_cast<std::int64_t>(n * (n - 1) / 2);
    const double denom = std::sqrt(static_cast<double>(pairs - ties_x) * static_cast<double>(pairs - ties_y));
    if (denom == 0) throw UndefinedCorrelationError("kendall_tau: all pairs tied");
    return std::clamp(static_cast<double>(concordant - discordant) / denom, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Rater agreement

std::map<std::pair<std::string, Aspect>, double> reduce_ratings(const std::vector<RatingRecord>& records) {
    std::map<std::pair<std::string, Aspect>, std::vector<double>> grouped;
    for (const auto& r : records) grouped[{r.item_id, r.aspect}].push_back(r.encoded());
    std::map<std::pair<std::string, Aspect>, double> out;
    for (auto& [key, values] : grouped) {
        std::map<double, std::size_t> votes;
        for (double v : values) ++votes[v];
        std::optional<double> majority;
        for (const auto& [v, c] : votes) {
            if (2 * c > values.size()) majority = v;
        }
        out[key] = majority ? *majority
                            : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    }
    return out;
}

CorrelationReport correlate_raters(const std::vector<RatingRecord>& human, const std::vector<RatingRecord>& model,
                                   OverallMode mode) {
    const auto h = reduce_ratings(human);
    const auto m = reduce_ratings(model);
    CorrelationReport report;
    std::vector<double> pooled_x, pooled_y;
    double sum_s = 0, sum_k = 0;
    std::size_t sum_n = 0, cells = 0;
    for (auto aspect : kAllAspects) {
        std::vector<double> xs, ys;
        for (const auto& [key, hv] : h) {
            if (key.second != aspect) continue;
            if (auto it = m.find(key); it != m.end()) {
                xs.push_back(hv);
                ys.push_back(it->second);
            }
        }
        if (xs.empty()) continue;
        pooled_x.insert(pooled_x.end(), xs.begin(), xs.end());
        pooled_y.insert(pooled_y.end(), ys.begin(), ys.end());
        try {
            CorrelationCell cell{spearman(xs, ys), kendall_tau(xs, ys), xs.size()};
            report.per_aspect[aspect] = cell;
            sum_s += cell.spearman;
            sum_k += cell.kendall_tau;
            sum_n += cell.n;
            ++cells;
        } catch (const UndefinedCorrelationError& e) {
            report.warnings.push_back(std::string(aspect_name(aspect)) + " omitted: " + e.what());
        }
    }
    if (mode == OverallMode::Pooled) {
        try {
            report.overall = CorrelationCell{spearman(pooled_x, pooled_y), kendall_tau(pooled_x, pooled_y),
                                             pooled_x.size()};
        } catch (const UndefinedCorrelationError& e) {
            report.warnings.push_back(std::string("overall omitted: ") + e.what());
        }
    } else if (cells > 0) {
        report.overall = CorrelationCell{sum_s / static_cast<double>(cells), sum_k / static_cast<double>(cells), sum_n};
    } else {
        report.warnings.push_back("overall omitted: no aspect had a defined correlation");
    }
    return report;
}

json CorrelationReport::to_json() const {
    json aspects = json::object();
    for (const auto& [a, c] : per_aspect) {
        aspects[std::string(aspect_name(a))] = {{"spearman", c.spearman}, {"kendall_tau", c.kendall_tau}, {"n", c.n}};
    }
    json j = {{"aspects", aspects}, {"warnings", warnings}};
    j["overall"] = overall ? json{{"spearman", overall->spearman}, {"kendall_tau", overall->kendall_tau},
                                  {"n", overall->n}}
                           : json(nullptr);
    return j;
}

std::string CorrelationReport::table() const {
    std::ostringstream out;
    out << std::left << std::setw(16) << "Aspect" << std::right << std::setw(10) << "Spearman" << std::setw(14)
        << "Kendall-Tau" << std::setw(8) << "n" << '\n';
    const auto row = [&](std::string_view name, const CorrelationCell& c) {
        out << std::left << std::setw(16) << name << std::right << std::fixed << std::setprecision(3) << std::setw(10)
            << c.spearman << std::setw(14) << c.kendall_tau << std::setw(8) << c.n << '\n';
    };
    for (const auto& [a, c] : per_aspect) row(aspect_name(a), c);
    if (overall) row("overall", *overall);
    for (const auto& w : warnings) out << "warning: " << w << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Manifest A/B

JudgeRun judge_manifests(const RunManifest& a, const RunManifest& b, ChatProvider& judge, std::uint64_t seed,
                         const JudgeSettings& settings, std::size_t parallelism) {
    std::map<std::string, const ItemOutcome*> by_id;
    for (const auto& o : b.outcomes) {
        if (o.response) by_id[o.item.id()] = &o;
    }
    struct Task {
        const ItemOutcome* left;
        const ItemOutcome* right;
        Aspect aspect;
    };
    std::vector<Task> tasks;
    for (const auto& o : a.outcomes) {
        if (!o.response) continue;
        auto it = by_id.find(o.item.id());
        if (it == by_id.end()) continue;
        for (auto aspect : kABAspects) tasks.push_back({&o, it->second, aspect});
    }

    std::vector<std::optional<RatingRecord>> results(tasks.size());
    std::vector<std::string> errors(tasks.size());
    const std::string rater = "judge:" + settings.model;
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
            const auto& t = tasks[i];
            const auto item_id = t.left->item.id();
            const auto task_seed = mix64(seed ^ fnv1a64(item_id + "/" + std::string(aspect_name(t.aspect))));
            try {
                const auto choice = judge_pair(t.left->item.context, t.left->response->text, t.right->response->text,
                                               t.aspect, judge, task_seed, settings);
                results[i] = RatingRecord{item_id, rater, t.aspect, choice.verdict};
            } catch (const std::exception& e) {
                errors[i] = item_id + "/" + std::string(aspect_name(t.aspect)) + ": " + e.what();
            }
        }
    };
    const auto n_threads = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(tasks.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    JudgeRun run;
    for (auto aspect : kABAspects) run.tally[aspect] = {};
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (!results[i]) {
            run.skipped.push_back(errors[i]);
            continue;
        }
        auto& tally = run.tally[results[i]->aspect];
        switch (std::get<Verdict>(results[i]->value)) {
            case Verdict::Win: ++tally.win; break;
            case Verdict::Lose: ++tally.lose; break;
            case Verdict::Tie: ++tally.tie; break;
        }
        run.ratings.push_back(std::move(*results[i]));
    }
    return run;
}

}  // namespace empathy
