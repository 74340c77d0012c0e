#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/generation.hpp"
#include "empathy/prompting.hpp"
#include "empathy/providers.hpp"

namespace empathy {

enum class Aspect { Empathy, Coherence, Informativity, Fluency };

inline constexpr Aspect kAllAspects[] = {Aspect::Empathy, Aspect::Coherence, Aspect::Informativity, Aspect::Fluency};
/// Aspects compared in A/B tests; fluency is rated but not compared.
inline constexpr Aspect kABAspects[] = {Aspect::Empathy, Aspect::Coherence, Aspect::Informativity};

std::string_view aspect_name(Aspect a) noexcept;
/// Case-insensitive; accepts full names and the short forms emp/coh/inf/flu.
Aspect parse_aspect(std::string_view name);
/// What raters are asked to judge for the aspect.
std::string_view aspect_definition(Aspect a) noexcept;

enum class Verdict { Win, Lose, Tie };

std::string_view verdict_name(Verdict v) noexcept;
Verdict parse_verdict_name(std::string_view name);
/// Win = 1, Tie = 0, Lose = -1.
int encode_verdict(Verdict v) noexcept;

struct ABChoice {
    Verdict verdict = Verdict::Tie;
    std::string rationale;
};

/// Which displayed response a judge preferred.
enum class ShownVerdict { First, Second, Tie };

/// Exact "A"/"B"/"Tie" (ignoring case, surrounding punctuation) first; then
/// the first token in the reply that is one of those.
std::optional<ShownVerdict> parse_judge_verdict(std::string_view reply);

struct JudgeSettings {
    PromptTemplate tmpl = PromptTemplate::defaults();
    std::string model{kDefaultJudgeModel};
    double temperature = 0.0;
};

/// Prompt with the instruction, the aspect definition, the context and the
/// two responses labelled A and B.
std::string build_judge_prompt(const std::vector<Utterance>& context, std::string_view shown_a,
                               std::string_view shown_b, Aspect aspect, const PromptTemplate& tmpl);

/// True when the seed puts response_b in the "A" slot.
constexpr bool judge_swaps(std::uint64_t seed) noexcept { return (seed & 1U) != 0; }

/// Pairwise preference of `response_a` over `response_b`. Presentation
/// order is chosen by the seed and undone before returning. Throws
/// JudgeParseError when neither the reply nor one reprompt yields a verdict.
ABChoice judge_pair(const std::vector<Utterance>& context, std::string_view response_a, std::string_view response_b,
                    Aspect aspect, ChatProvider& judge, std::uint64_t seed, const JudgeSettings& settings = {});

struct RatingRecord {
    std::string item_id;
    std::string rater_id;
    Aspect aspect = Aspect::Empathy;
    std::variant<int, Verdict> value;  // 1..5 score, or A/B choice

    double encoded() const;
};

/// One JSON object per line: item_id, rater_id, aspect and either
/// "score" (1..5) or "choice" (win|lose|tie). Throws ParseError on bad
/// records and IntegrityError on a repeated (item, rater, aspect).
std::vector<RatingRecord> read_ratings(std::istream& in);
std::vector<RatingRecord> load_ratings(const std::filesystem::path& path);
void write_ratings(std::ostream& out, const std::vector<RatingRecord>& records);

/// Average (fractional) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. Throws UndefinedCorrelationError
/// for mismatched lengths, fewer than two samples or a constant input.
double spearman(std::span<const double> x, std::span<const double> y);

/// Tau-b with the standard tie correction, exhaustive pair scan.
double kendall_tau(std::span<const double> x, std::span<const double> y);

struct CorrelationCell {
    double spearman = 0;
    double kendall_tau = 0;
    std::size_t n = 0;
};

enum class OverallMode { Pooled, MeanOfAspects };

struct CorrelationReport {
    std::map<Aspect, CorrelationCell> per_aspect;
    std::optional<CorrelationCell> overall;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
    std::string table() const;
};

/// Reduces each side to one value per (item, aspect): the value held by a
/// strict majority of raters, else the mean. Choices are encoded 1/0/-1.
std::map<std::pair<std::string, Aspect>, double> reduce_ratings(const std::vector<RatingRecord>& records);

/// Aspects with fewer than two aligned items, or with a constant side, are
/// left out with a warning.
CorrelationReport correlate_raters(const std::vector<RatingRecord>& human, const std::vector<RatingRecord>& model,
                                   OverallMode mode = OverallMode::Pooled);

struct JudgeTally {
    std::size_t win = 0;
    std::size_t lose = 0;
    std::size_t tie = 0;
};

struct JudgeRun {
    std::vector<RatingRecord> ratings;  // choices of manifest A vs B
    std::map<Aspect, JudgeTally> tally;
    std::vector<std::string> skipped;   // "<item>/<aspect>: reason"
};

/// A/B-judges every item present with a response in both manifests.
JudgeRun judge_manifests(const RunManifest& a, const RunManifest& b, ChatProvider& judge, std::uint64_t seed,
                         const JudgeSettings& settings = {}, std::size_t parallelism = 8);

}  // namespace empathy
