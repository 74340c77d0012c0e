#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/providers.hpp"

namespace empathy {

/// Utterance texts joined by single spaces, roles dropped.
std::string flatten_context(const std::vector<Utterance>& context);

/// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Throws ValidationError on a
/// dimension mismatch or a zero-norm input.
double cosine_similarity(const Embedding& a, const Embedding& b);

struct IndexEntry {
    std::string dialogue_id;
    std::string sentence;
    Embedding vector;

    bool operator==(const IndexEntry&) const = default;
};

struct ScoredId {
    std::string dialogue_id;
    double score = 0;

    bool operator==(const ScoredId&) const = default;
};

/// Training dialogues paired with the embedding of their flattened context.
/// Entries are kept sorted by dialogue id.
class ExemplarIndex {
public:
    ExemplarIndex(std::size_t dimension, std::string encoder_id, std::vector<IndexEntry> entries);

    std::size_t dimension() const noexcept { return dimension_; }
    const std::string& encoder_id() const noexcept { return encoder_id_; }
    const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    /// Exhaustive scan: the k best entries by descending cosine similarity,
    /// ties broken by ascending id. Ids in `exclude` are skipped.
    std::vector<ScoredId> top_k(const Embedding& query, std::size_t k,
                                const std::set<std::string>& exclude = {}) const;

    /// Header line {"dimension","encoder_id","count"} then one entry per line.
    void write(std::ostream& out) const;
    /// Throws ParseError on malformed input and ValidationError when
    /// `expected_encoder_id` is non-empty and differs from the file's.
    static ExemplarIndex read(std::istream& in, const std::string& expected_encoder_id = {});

    void save(const std::filesystem::path& path) const;
    static ExemplarIndex load(const std::filesystem::path& path, const std::string& expected_encoder_id = {});

    bool operator==(const ExemplarIndex&) const = default;

private:
    std::size_t dimension_;
    std::string encoder_id_;
    std::vector<IndexEntry> entries_;
};

/// Embeds every training dialogue's full utterance list with up to
/// `parallelism` concurrent embedder calls. Throws PartialBuildError naming
/// the dialogues whose embedding failed.
ExemplarIndex build_index(const std::vector<Dialogue>& train, SentenceEmbedder& embed, std::size_t parallelism = 8);

/// Embeds the flattened query context and ranks the index against it.
std::vector<ScoredId> top_k_similar(const ExemplarIndex& index, const std::vector<Utterance>& query_context,
                                    std::size_t k, SentenceEmbedder& embed,
                                    const std::set<std::string>& exclude = {});

}  // namespace empathy
