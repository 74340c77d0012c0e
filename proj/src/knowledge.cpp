#include "empathy/knowledge.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <istream>
#include <ostream>
#include <set>
#include <thread>

#include "empathy/error.hpp"
#include "empathy/hashing.hpp"
#include "empathy/retrieval.hpp"
#include "json.hpp"

namespace empathy {

using json = nlohmann::json;

namespace {

std::string trimmed(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> clean(const std::vector<std::string>& raw, std::size_t top_m) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& r : raw) {
        auto t = trimmed(r);
        if (t.empty() || !seen.insert(t).second) continue;
        out.push_back(std::move(t));
        if (out.size() == top_m) break;
    }
    return out;
}

std::string fill_frame(const std::string& frame, const std::vector<std::string>& texts) {
    std::string joined;
    for (const auto& t : texts) {
        if (!joined.empty()) joined += ", ";
        joined += t;
    }
    // Inference texts often end with their own period.
    while (!joined.empty() && joined.back() == '.') joined.pop_back();
    const auto pos = frame.find("{}");
    if (pos == std::string::npos) return frame + " " + joined;
    return frame.substr(0, pos) + joined + frame.substr(pos + 2);
}

}  // namespace

std::string KnowledgeBlock::digest() const { return sha256_hex(rendered); }

PromptExtra AugmentedContext::to_extra(const PromptTemplate& tmpl) const {
    return {std::string(kKnowledgeLabel), tmpl.knowledge_header + "\n" + knowledge.rendered,
            ExtraPlacement::BeforeContext};
}

std::string knowledge_query_text(const std::vector<Utterance>& context, KnowledgeQuery mode) {
    if (context.empty()) throw ValidationError("knowledge query: empty context");
    if (mode == KnowledgeQuery::FullContext) return flatten_context(context);
    for (auto it = context.rbegin(); it != context.rend(); ++it) {
        if (it->role == Role::Speaker) return it->text;
    }
    return flatten_context(context);
}

std::vector<CommonsenseInference> gather_inferences(const std::vector<Utterance>& context,
                                                    CommonsenseProvider& provider, std::size_t top_m,
                                                    KnowledgeQuery mode, std::size_t parallelism) {
    if (top_m == 0) throw ValidationError("gather_inferences: top_m must be >= 1");
    const auto query = knowledge_query_text(context, mode);

    std::array<std::vector<std::string>, kRelationCount> results;
    std::array<std::string, kRelationCount> errors;
    const auto run = [&](std::size_t i) {
        try {
            results[i] = clean(provider.infer(query, kAllRelations[i]), top_m);
            if (results[i].empty()) errors[i] = "provider returned no usable inference";
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    };
    const auto width = std::clamp<std::size_t>(parallelism, 1, kRelationCount);
    for (std::size_t start = 0; start < kRelationCount; start += width) {
        std::vector<std::thread> batch;
        for (std::size_t i = start + 1; i < std::min(start + width, kRelationCount); ++i) batch.emplace_back(run, i);
        run(start);
        for (auto& t : batch) t.join();
    }

    std::vector<std::string> failed;
    std::string message = "commonsense inference failed for";
    for (std::size_t i = 0; i < kRelationCount; ++i) {
        if (errors[i].empty()) continue;
        failed.emplace_back(relation_name(kAllRelations[i]));
        message += " " + failed.back() + " (" + errors[i] + ")";
    }
    if (!failed.empty()) throw KnowledgeError(message, std::move(failed));

    std::vector<CommonsenseInference> out;
    for (std::size_t i = 0; i < kRelationCount; ++i) out.push_back({kAllRelations[i], std::move(results[i])});
    return out;
}

KnowledgeBlock assemble_knowledge_block(std::vector<CommonsenseInference> inferences, const PromptTemplate& tmpl) {
    std::array<const CommonsenseInference*, kRelationCount> slot{};
    for (const auto& inf : inferences) {
        auto& s = slot[relation_index(inf.relation)];
        if (s) throw ValidationError("knowledge block: duplicate relation " + std::string(relation_name(inf.relation)));
        if (inf.texts.empty()) {
            throw ValidationError("knowledge block: no text for relation " + std::string(relation_name(inf.relation)));
        }
        s = &inf;
    }
    KnowledgeBlock block;
    for (std::size_t i = 0; i < kRelationCount; ++i) {
        if (!slot[i]) {
            throw ValidationError("knowledge block: missing relation " + std::string(relation_name(kAllRelations[i])));
        }
        if (i) block.rendered.push_back('\n');
        block.rendered += std::string(relation_name(kAllRelations[i])) + ": " +
                          fill_frame(tmpl.relation_frames[i], slot[i]->texts);
        block.inferences.push_back(*slot[i]);
    }
    return block;
}

AugmentedContext augment_context(std::vector<Utterance> context, KnowledgeBlock block) {
    return {std::move(context), std::move(block)};
}

void apply_knowledge(PromptBundle& bundle, const AugmentedContext& augmented, const PromptTemplate& tmpl) {
    bundle.extras.push_back(augmented.to_extra(tmpl));
}

FileCommonsense FileCommonsense::parse(std::istream& in) {
    FileCommonsense store;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string digest, relation;
        std::vector<std::string> inferences;
        try {
            const auto rec = json::parse(line);
            digest = rec.at("context_digest").get<std::string>();
            relation = rec.at("relation").get<std::string>();
            inferences = rec.at("inferences").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw ParseError("knowledge cache line " + std::to_string(line_no) + ": " + e.what());
        }
        const auto r = relation_from_name(relation);
        if (!r) throw ParseError("knowledge cache line " + std::to_string(line_no) + ": unknown relation '" + relation + "'");
        if (inferences.empty()) {
            throw ParseError("knowledge cache line " + std::to_string(line_no) + ": empty inference list");
        }
        store.records_[{digest, *r}] = std::move(inferences);
    }
    return store;
}

FileCommonsense FileCommonsense::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open knowledge cache " + path.string());
    return parse(in);
}

std::vector<std::string> FileCommonsense::infer(std::string_view context_text, Relation relation) {
    const auto digest = sha256_hex(context_text);
    auto it = records_.find({digest, relation});
    if (it == records_.end()) {
        throw ProviderError(ProviderError::Kind::CacheMiss, "missing knowledge for (" + digest + ", " +
                                                                std::string(relation_name(relation)) + ")");
    }
    counter_.cached();
    return it->second;
}

void FileCommonsense::insert(std::string_view context_text, Relation relation, std::vector<std::string> inferences) {
    records_[{sha256_hex(context_text), relation}] = std::move(inferences);
}

void FileCommonsense::write(std::ostream& out) const {
    for (const auto& [key, inferences] : records_) {
        out << json{{"context_digest", key.first}, {"relation", relation_name(key.second)}, {"inferences", inferences}}
                   .dump()
            << '\n';
    }
}

}  // namespace empathy
