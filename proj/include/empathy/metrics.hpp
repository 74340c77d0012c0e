#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "empathy/generation.hpp"
#include "empathy/providers.hpp"

namespace empathy {

/// Lowercased tokens. Whitespace separates tokens and every ASCII
/// punctuation character becomes a token of its own.
struct TokenSequence {
    std::vector<std::string> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    bool operator==(const TokenSequence&) const = default;
};

TokenSequence tokenize(std::string_view text);
std::string join_tokens(const TokenSequence& seq);

/// Corpus-level distinct-n: unique n-grams over total n-grams across all
/// responses, times 100. Throws UndefinedMetricError when no response has
/// n tokens.
double distinct_n(const std::vector<TokenSequence>& responses, std::size_t n);

struct BleuPair {
    TokenSequence candidate;
    TokenSequence reference;
};

/// Corpus BLEU with uniform weights over orders 1..max_n, clipped counts
/// summed over the corpus and the usual brevity penalty, times 100. An
/// order with no matches uses 1 / (2 * total n-grams of that order) as its
/// precision. Throws ValidationError for max_n outside {2, 4} or no pairs,
/// UndefinedMetricError when all candidates are empty.
double corpus_bleu(const std::vector<BleuPair>& pairs, std::size_t max_n);

struct BertScore {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

/// 2PR / (P + R), or 0 when both are 0.
double harmonic_f1(double precision, double recall) noexcept;

/// Greedy cosine matching of token embeddings, no idf weighting and no
/// baseline rescaling.
BertScore bert_score(const std::vector<TokenEmbedding>& candidate, const std::vector<TokenEmbedding>& reference);
BertScore bert_score(std::string_view candidate, std::string_view reference, TokenEmbedder& embedder);

/// Share (x100) of thoughts whose emotion text mentions the gold label as
/// a whole word; raw_text is searched when nothing was parsed. Labels
/// compare case-insensitively with '_' treated as a space.
double emotion_accuracy(const std::vector<std::optional<StageOneThought>>& thoughts,
                        const std::vector<std::string>& gold);
bool emotion_matches(const StageOneThought& thought, std::string_view gold);

struct MetricReport {
    double dist1 = 0;
    double dist2 = 0;
    double bleu2 = 0;
    double bleu4 = 0;
    double bert_p = 0;
    double bert_r = 0;
    double bert_f = 0;
    std::optional<double> acc;
    std::size_t num_items = 0;
    std::size_t num_tokens = 0;
    std::string run_id;
    std::string strategy;
    std::string token_encoder;

    nlohmann::json to_json() const;
    /// Column-aligned table: Dist-1 Dist-2 P_BERT R_BERT F_BERT B-2 B-4 Acc.
    std::string table() const;
};

/// Metrics over every successful item of a manifest. BERTScore P and R are
/// averaged over items and F is their harmonic mean. Acc is reported only
/// for two-stage runs.
MetricReport evaluate_manifest(const RunManifest& manifest, TokenEmbedder& embedder);

}  // namespace empathy
