#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "empathy/corpus.hpp"
#include "empathy/prompting.hpp"
#include "empathy/providers.hpp"
#include "empathy/relation.hpp"

namespace empathy {

struct CommonsenseInference {
    Relation relation;
    std::vector<std::string> texts;  // trimmed, deduplicated, non-empty

    bool operator==(const CommonsenseInference&) const = default;
};

struct KnowledgeBlock {
    std::vector<CommonsenseInference> inferences;  // all five, canonical order
    std::string rendered;                          // one labelled line per relation

    /// SHA-256 of the rendered text.
    std::string digest() const;
};

struct AugmentedContext {
    std::vector<Utterance> base_context;
    KnowledgeBlock knowledge;

    /// The knowledge section as it is inserted into a prompt bundle:
    /// header line, then the rendered block, placed before the dialogue
    /// context.
    PromptExtra to_extra(const PromptTemplate& tmpl = PromptTemplate::defaults()) const;
};

inline constexpr std::string_view kKnowledgeLabel = "knowledge";

/// Which text is sent to the commonsense provider.
enum class KnowledgeQuery {
    LastSpeakerUtterance,  // the most recent Speaker turn
    FullContext,           // the whole flattened context
};

std::string knowledge_query_text(const std::vector<Utterance>& context, KnowledgeQuery mode);

/// One provider call per relation (run concurrently, at most `parallelism`
/// at a time). Each result is trimmed, deduplicated and cut to `top_m`.
/// Throws KnowledgeError listing the relations that failed.
std::vector<CommonsenseInference> gather_inferences(const std::vector<Utterance>& context,
                                                    CommonsenseProvider& provider, std::size_t top_m = 1,
                                                    KnowledgeQuery mode = KnowledgeQuery::LastSpeakerUtterance,
                                                    std::size_t parallelism = 5);

/// Throws ValidationError if any relation is missing or repeated.
KnowledgeBlock assemble_knowledge_block(std::vector<CommonsenseInference> inferences,
                                        const PromptTemplate& tmpl = PromptTemplate::defaults());

AugmentedContext augment_context(std::vector<Utterance> context, KnowledgeBlock block);

/// Adds the knowledge section to `bundle` without touching its context.
void apply_knowledge(PromptBundle& bundle, const AugmentedContext& augmented,
                     const PromptTemplate& tmpl = PromptTemplate::defaults());

/// Offline commonsense store keyed by (SHA-256 of query text, relation).
/// File format: one JSON object per line with "context_digest",
/// "relation" and "inferences"; an optional "context" field is ignored.
class FileCommonsense final : public CommonsenseProvider {
public:
    /// Throws ParseError on malformed records or unknown relation names.
    static FileCommonsense load(const std::filesystem::path& path);
    static FileCommonsense parse(std::istream& in);

    std::vector<std::string> infer(std::string_view context_text, Relation relation) override;
    CallCounts counts() const override { return counter_.snapshot(); }

    void insert(std::string_view context_text, Relation relation, std::vector<std::string> inferences);
    void write(std::ostream& out) const;
    std::size_t size() const noexcept { return records_.size(); }

private:
    std::map<std::pair<std::string, Relation>, std::vector<std::string>> records_;
    CallCounter counter_;
};

}  // namespace empathy
