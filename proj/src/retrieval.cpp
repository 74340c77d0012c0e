#include "empathy/retrieval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "empathy/error.hpp"
#include "empathy/io.hpp"
#include "json.hpp"

namespace empathy {

using json = nlohmann::json;

std::string flatten_context(const std::vector<Utterance>& context) {
    std::string out;
    for (const auto& u : context) {
        if (!out.empty()) out.push_back(' ');
        out.append(u.text);
    }
    return out;
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
    if (a.dimension() != b.dimension()) {
        throw ValidationError("cosine_similarity: dimension mismatch (" + std::to_string(a.dimension()) + " vs " +
                              std::to_string(b.dimension()) + ")");
    }
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0 || nb == 0) throw ValidationError("cosine_similarity: zero-norm vector");
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): for a == b this is
    // exactly na, so self-similarity comes out as exactly 1.
    const double s = dot / std::sqrt(na * nb);
    return std::clamp(s, -1.0, 1.0);
}

ExemplarIndex::ExemplarIndex(std::size_t dimension, std::string encoder_id, std::vector<IndexEntry> entries)
    : dimension_(dimension), encoder_id_(std::move(encoder_id)), entries_(std::move(entries)) {
    if (dimension_ == 0) throw ValidationError("exemplar index: dimension must be positive");
    std::sort(entries_.begin(), entries_.end(),
              [](const IndexEntry& a, const IndexEntry& b) { return a.dialogue_id < b.dialogue_id; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.vector.dimension() != dimension_) {
            throw ValidationError("exemplar index: entry " + e.dialogue_id + " has dimension " +
                                  std::to_string(e.vector.dimension()) + ", expected " + std::to_string(dimension_));
        }
        if (!std::all_of(e.vector.values.begin(), e.vector.values.end(), [](double v) { return std::isfinite(v); })) {
            throw ValidationError("exemplar index: entry " + e.dialogue_id + " has non-finite values");
        }
        if (i > 0 && entries_[i - 1].dialogue_id == e.dialogue_id) {
            throw IntegrityError("exemplar index: duplicate dialogue id " + e.dialogue_id);
        }
    }
}

std::vector<ScoredId> ExemplarIndex::top_k(const Embedding& query, std::size_t k,
                                           const std::set<std::string>& exclude) const {
    if (k == 0) throw ValidationError("top_k: k must be >= 1");
    if (entries_.empty()) throw ValidationError("top_k: index is empty");
    std::vector<ScoredId> scored;
    scored.reserve(entries_.size());
    for (const auto& e : entries_) {
        if (exclude.count(e.dialogue_id)) continue;
        scored.push_back({e.dialogue_id, cosine_similarity(e.vector, query)});
    }
    const auto better = [](const ScoredId& a, const ScoredId& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.dialogue_id < b.dialogue_id;
    };
    const auto keep = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
    scored.resize(keep);
    return scored;
}

void ExemplarIndex::write(std::ostream& out) const {
    out << json{{"dimension", dimension_}, {"encoder_id", encoder_id_}, {"count", entries_.size()}}.dump() << '\n';
    for (const auto& e : entries_) {
        out << json{{"dialogue_id", e.dialogue_id}, {"sentence", e.sentence}, {"vector", e.vector.values}}.dump()
            << '\n';
    }
}

ExemplarIndex ExemplarIndex::read(std::istream& in, const std::string& expected_encoder_id) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("index file is empty");
    std::size_t dimension = 0, count = 0;
    std::string encoder_id;
    std::vector<IndexEntry> entries;
    try {
        const auto header = json::parse(line);
        dimension = header.at("dimension").get<std::size_t>();
        encoder_id = header.at("encoder_id").get<std::string>();
        count = header.at("count").get<std::size_t>();
        if (!expected_encoder_id.empty() && encoder_id != expected_encoder_id) {
            throw ValidationError("index was built with encoder '" + encoder_id + "', but the configured encoder is '" +
                                  expected_encoder_id + "'");
        }
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto rec = json::parse(line);
            entries.push_back({rec.at("dialogue_id").get<std::string>(), rec.at("sentence").get<std::string>(),
                               Embedding{rec.at("vector").get<std::vector<double>>()}});
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("index file: ") + e.what());
    }
    if (entries.size() != count) {
        throw ParseError("index file: header announces " + std::to_string(count) + " entries, found " +
                         std::to_string(entries.size()));
    }
    return ExemplarIndex(dimension, std::move(encoder_id), std::move(entries));
}

void ExemplarIndex::save(const std::filesystem::path& path) const {
    std::ostringstream out;
    write(out);
    atomic_write(path, out.str());
}

ExemplarIndex ExemplarIndex::load(const std::filesystem::path& path, const std::string& expected_encoder_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open index file " + path.string());
    return read(in, expected_encoder_id);
}

ExemplarIndex build_index(const std::vector<Dialogue>& train, SentenceEmbedder& embed, std::size_t parallelism) {
    if (train.empty()) throw ValidationError("build_index: no training dialogues");
    std::vector<IndexEntry> entries(train.size());
    std::vector<std::string> failed;
    std::mutex failed_mutex;
    std::atomic<std::size_t> next{0};

    const auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < train.size(); i = next.fetch_add(1)) {
            const auto& d = train[i];
            entries[i].dialogue_id = d.id;
            entries[i].sentence = flatten_context(d.utterances);
            try {
                entries[i].vector = embed.embed(entries[i].sentence);
            } catch (const Error&) {
                std::lock_guard lock(failed_mutex);
                failed.push_back(d.id);
            }
        }
    };
    const auto n_threads = std::clamp<std::size_t>(parallelism, 1, train.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    if (!failed.empty()) {
        std::sort(failed.begin(), failed.end());
        std::string msg = "build_index: embedding failed for " + std::to_string(failed.size()) + " dialogue(s):";
        for (std::size_t i = 0; i < failed.size() && i < 10; ++i) msg += " " + failed[i];
        throw PartialBuildError(msg, std::move(failed));
    }
    return ExemplarIndex(embed.dimension(), embed.encoder_id(), std::move(entries));
}

std::vector<ScoredId> top_k_similar(const ExemplarIndex& index, const std::vector<Utterance>& query_context,
                                    std::size_t k, SentenceEmbedder& embed, const std::set<std::string>& exclude) {
    if (query_context.empty()) throw ValidationError("top_k_similar: empty query context");
    return index.top_k(embed.embed(flatten_context(query_context)), k, exclude);
}

}  // namespace empathy
