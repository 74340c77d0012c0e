#include "empathy/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "empathy/error.hpp"
#include "empathy/retrieval.hpp"

namespace empathy {

using json = nlohmann::json;

TokenSequence tokenize(std::string_view text) {
    TokenSequence out;
    std::string current;
    const auto flush = [&] {
        if (!current.empty()) out.tokens.push_back(std::move(current));
        current.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c < 0x80 && std::ispunct(c)) {
            flush();
            out.tokens.emplace_back(1, ch);
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::string join_tokens(const TokenSequence& seq) {
    std::string out;
    for (const auto& t : seq.tokens) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, std::size_t> ngram_counts(const TokenSequence& seq, std::size_t n) {
    std::map<NGram, std::size_t> counts;
    if (seq.size() < n) return counts;
    for (std::size_t i = 0; i + n <= seq.size(); ++i) {
        ++counts[NGram(seq.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                       seq.tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

}  // namespace

double distinct_n(const std::vector<TokenSequence>& responses, std::size_t n) {
    if (n == 0) throw ValidationError("distinct_n: n must be >= 1");
    std::set<NGram> unique;
    std::size_t total = 0;
    for (const auto& r : responses) {
        if (r.size() < n) continue;
        for (std::size_t i = 0; i + n <= r.size(); ++i) {
            unique.emplace(r.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                           r.tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
            ++total;
        }
    }
    if (total == 0) throw UndefinedMetricError("distinct_n: no " + std::to_string(n) + "-grams in the responses");
    return 100.0 * static_cast<double>(unique.size()) / static_cast<double>(total);
}

double corpus_bleu(const std::vector<BleuPair>& pairs, std::size_t max_n) {
    if (max_n != 2 && max_n != 4) throw ValidationError("corpus_bleu: max_n must be 2 or 4");
    if (pairs.empty()) throw ValidationError("corpus_bleu: no pairs");

    std::vector<std::size_t> matches(max_n + 1, 0), totals(max_n + 1, 0);
    std::size_t cand_len = 0, ref_len = 0;
    for (const auto& [cand, ref] : pairs) {
        cand_len += cand.size();
        ref_len += ref.size();
        for (std::size_t n = 1; n <= max_n; ++n) {
            const auto c = ngram_counts(cand, n);
            const auto r = ngram_counts(ref, n);
            for (const auto& [gram, count] : c) {
                totals[n] += count;
                if (auto it = r.find(gram); it != r.end()) matches[n] += std::min(count, it->second);
            }
        }
    }
    if (cand_len == 0) throw UndefinedMetricError("corpus_bleu: candidate corpus is empty");

    double log_sum = 0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        // An order with no candidate n-grams at all is smoothed as if it had one.
        const double precision =
            matches[n] > 0 ? static_cast<double>(matches[n]) / static_cast<double>(totals[n])
                           : 1.0 / (2.0 * static_cast<double>(std::max<std::size_t>(totals[n], 1)));
        log_sum += std::log(precision) / static_cast<double>(max_n);
    }
    const double bp = cand_len < ref_len
                          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                          : 1.0;
    return 100.0 * bp * std::exp(log_sum);
}

double harmonic_f1(double precision, double recall) noexcept {
    const double sum = precision + recall;
    return sum == 0 ? 0.0 : 2.0 * precision * recall / sum;
}

namespace {

double greedy_mean(const std::vector<TokenEmbedding>& from, const std::vector<TokenEmbedding>& to) {
    double total = 0;
    for (const auto& f : from) {
        double best = -1.0;
        for (const auto& t : to) best = std::max(best, cosine_similarity(f.vector, t.vector));
        total += best;
    }
    return total / static_cast<double>(from.size());
}

}  // namespace

BertScore bert_score(const std::vector<TokenEmbedding>& candidate, const std::vector<TokenEmbedding>& reference) {
    if (candidate.empty() || reference.empty()) throw ValidationError("bert_score: both texts need >= 1 token");
    BertScore s;
    s.recall = greedy_mean(reference, candidate);
    s.precision = greedy_mean(candidate, reference);
    s.f1 = harmonic_f1(s.precision, s.recall);
    return s;
}

BertScore bert_score(std::string_view candidate, std::string_view reference, TokenEmbedder& embedder) {
    return bert_score(embedder.embed_tokens(candidate), embedder.embed_tokens(reference));
}

namespace {

std::string normalize_label(std::string_view s) {
    std::string out;
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        out.push_back(ch == '_' ? ' ' : static_cast<char>(std::tolower(c)));
    }
    return out;
}

bool contains_whole_word(const std::string& text, const std::string& word) {
    if (word.empty()) return false;
    const auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    std::size_t pos = 0;
    while ((pos = text.find(word, pos)) != std::string::npos) {
        const auto after = pos + word.size();
        if ((pos == 0 || !is_word(text[pos - 1])) && (after >= text.size() || !is_word(text[after]))) return true;
        ++pos;
    }
    return false;
}

}  // namespace

bool emotion_matches(const StageOneThought& thought, std::string_view gold) {
    const auto& haystack = thought.parsed_emotion ? *thought.parsed_emotion : thought.raw_text;
    return contains_whole_word(normalize_label(haystack), normalize_label(gold));
}

double emotion_accuracy(const std::vector<std::optional<StageOneThought>>& thoughts,
                        const std::vector<std::string>& gold) {
    if (thoughts.size() != gold.size()) {
        throw ValidationError("emotion_accuracy: " + std::to_string(thoughts.size()) + " thoughts vs " +
                              std::to_string(gold.size()) + " gold labels");
    }
    if (thoughts.empty()) throw UndefinedMetricError("emotion_accuracy: no items");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < thoughts.size(); ++i) {
        if (thoughts[i] && emotion_matches(*thoughts[i], gold[i])) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(thoughts.size());
}

json MetricReport::to_json() const {
    json j = {{"run_id", run_id},
              {"strategy", strategy},
              {"token_encoder", token_encoder},
              {"dist1", dist1},
              {"dist2", dist2},
              {"bert_p", bert_p},
              {"bert_r", bert_r},
              {"bert_f", bert_f},
              {"bleu2", bleu2},
              {"bleu4", bleu4},
              {"acc", acc ? json(*acc) : json(nullptr)},
              {"num_items", num_items},
              {"num_tokens", num_tokens},
              {"notes",
               "Dist-n and BLEU use this tool's tokenizer; BLEU smooths zero-match orders with 1/(2*total). "
               "Scores are comparable across runs of this tool, not across toolkits."}};
    return j;
}

std::string MetricReport::table() const {
    std::ostringstream out;
    const char* heads[] = {"Strategy", "Dist-1", "Dist-2", "P_BERT", "R_BERT", "F_BERT", "B-2", "B-4", "Acc"};
    const int widths[] = {20, 8, 8, 8, 8, 8, 8, 8, 8};
    for (std::size_t i = 0; i < std::size(heads); ++i) {
        out << (i == 0 ? std::left : std::right) << std::setw(widths[i]) << heads[i];
    }
    out << '\n' << std::left << std::setw(widths[0]) << strategy << std::right << std::fixed;
    out << std::setprecision(2) << std::setw(widths[1]) << dist1 << std::setw(widths[2]) << dist2;
    out << std::setprecision(4) << std::setw(widths[3]) << bert_p << std::setw(widths[4]) << bert_r
        << std::setw(widths[5]) << bert_f;
    out << std::setprecision(2) << std::setw(widths[6]) << bleu2 << std::setw(widths[7]) << bleu4;
    if (acc) {
        out << std::setw(widths[8]) << *acc;
    } else {
        out << std::setw(widths[8]) << "-";
    }
    out << '\n';
    return out.str();
}

MetricReport evaluate_manifest(const RunManifest& manifest, TokenEmbedder& embedder) {
    MetricReport report;
    report.run_id = manifest.run_id;
    report.strategy = manifest.strategy.label();
    report.token_encoder = embedder.encoder_id();

    std::vector<TokenSequence> responses;
    std::vector<BleuPair> pairs;
    std::vector<std::optional<StageOneThought>> thoughts;
    std::vector<std::string> gold;
    double p_sum = 0, r_sum = 0;
    for (const auto& o : manifest.outcomes) {
        if (!o.response) continue;
        const auto& r = *o.response;
        auto cand = tokenize(r.text);
        report.num_tokens += cand.size();
        pairs.push_back({cand, tokenize(o.item.reference.text)});
        responses.push_back(std::move(cand));
        // An empty reply matches nothing; it scores 0 rather than aborting the report.
        if (r.text.find_first_not_of(" \t\r\n") != std::string::npos) {
            const auto bs = bert_score(r.text, o.item.reference.text, embedder);
            p_sum += bs.precision;
            r_sum += bs.recall;
        }
        thoughts.push_back(r.thought);
        gold.push_back(o.item.emotion);
    }
    report.num_items = responses.size();
    if (report.num_items == 0) throw UndefinedMetricError("evaluate: manifest has no successful items");

    report.dist1 = distinct_n(responses, 1);
    report.dist2 = distinct_n(responses, 2);
    report.bleu2 = corpus_bleu(pairs, 2);
    report.bleu4 = corpus_bleu(pairs, 4);
    report.bert_p = p_sum / static_cast<double>(report.num_items);
    report.bert_r = r_sum / static_cast<double>(report.num_items);
    report.bert_f = harmonic_f1(report.bert_p, report.bert_r);
    if (manifest.strategy.kind == GenerationStrategy::Kind::TwoStage) report.acc = emotion_accuracy(thoughts, gold);
    return report;
}

}  // namespace empathy
