#include "empathy/mock.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "empathy/corpus.hpp"
#include "empathy/error.hpp"
#include "empathy/hashing.hpp"
#include "empathy/prompting.hpp"
#include "empathy/random.hpp"

namespace empathy {

namespace {

std::string last_nonempty_line(std::string_view text) {
    std::size_t end = text.size();
    while (end > 0) {
        const auto nl = text.rfind('\n', end - 1);
        const std::size_t start = (nl == std::string_view::npos) ? 0 : nl + 1;
        auto line = text.substr(start, end - start);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) return std::string(line);
        if (nl == std::string_view::npos) break;
        end = nl;
    }
    return {};
}

/// Last "Speaker: ..." line of the first user message, without the prefix.
std::string last_speaker_line(const ChatRequest& req) {
    static constexpr std::string_view kPrefix = "Speaker: ";
    std::string found;
    for (const auto& m : req.messages) {
        if (m.role != "user") continue;
        std::istringstream in(m.content);
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind(kPrefix, 0) == 0) found = line.substr(kPrefix.size());
        }
        break;
    }
    return found;
}

bool contains_word(const std::string& haystack, const std::string& word) {
    std::size_t pos = 0;
    while ((pos = haystack.find(word, pos)) != std::string::npos) {
        const bool left = pos == 0 || !std::isalpha(static_cast<unsigned char>(haystack[pos - 1]));
        const auto after = pos + word.size();
        const bool right = after >= haystack.size() || !std::isalpha(static_cast<unsigned char>(haystack[after]));
        if (left && right) return true;
        pos = after;
    }
    return false;
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

constexpr const char* kOpeners[] = {
    "I'm sorry to hear that.",
    "That sounds like a lot to deal with.",
    "Oh wow, I can imagine how you feel.",
    "That must have been quite something.",
    "I understand why that matters to you.",
    "That sounds really meaningful.",
};

constexpr const char* kFollowUps[] = {
    "How are you holding up?",
    "What happened next?",
    "Do you want to talk more about it?",
    "Have you told anyone else about it?",
    "How did that make you feel?",
};

}  // namespace

ChatResponder echo_responder() {
    return [](const ChatRequest& req) { return last_nonempty_line(req.messages.back().content); };
}

ChatResponder scripted_responder(std::map<std::string, std::string> script, ChatResponder fallback) {
    return [script = std::move(script), fallback = std::move(fallback)](const ChatRequest& req) {
        auto it = script.find(req.messages.back().content);
        if (it != script.end()) return it->second;
        if (fallback) return fallback(req);
        throw ProviderError(ProviderError::Kind::Other, "scripted mock: no reply for message");
    };
}

ChatResponder listener_responder(const PromptTemplate& tmpl) {
    return [stage1 = tmpl.stage1](const ChatRequest& req) -> std::string {
        const auto& last = req.messages.back().content;
        const auto h = fnv1a64(last);
        if (last.find("Response A:") != std::string::npos && last.find("Response B:") != std::string::npos) {
            static constexpr const char* kVerdicts[] = {"A", "B", "Tie"};
            return kVerdicts[h % 3];
        }
        const auto speaker = last_speaker_line(req);
        if (!stage1.empty() && last.size() >= stage1.size() &&
            last.compare(last.size() - stage1.size(), stage1.size(), stage1) == 0) {
            const auto& labels = EmotionSet::builtin().labels();
            const auto context = lower(speaker);
            std::string emotion;
            for (const auto& l : labels) {
                if (contains_word(context, l)) {
                    emotion = l;
                    break;
                }
            }
            if (emotion.empty()) {
                auto it = labels.begin();
                std::advance(it, static_cast<std::ptrdiff_t>(h % labels.size()));
                emotion = *it;
            }
            return "The user's emotion may be " + emotion + ". The situation may be: " +
                   (speaker.empty() ? std::string("unclear") : speaker);
        }
        std::string reply = kOpeners[h % std::size(kOpeners)];
        if (!speaker.empty()) {
            std::istringstream words(speaker);
            std::string w, quote;
            for (int i = 0; i < 5 && (words >> w); ++i) quote += (i ? " " : "") + w;
            reply += " You mentioned \"" + quote + "\".";
        }
        reply += " ";
        reply += kFollowUps[(h >> 8) % std::size(kFollowUps)];
        return reply;
    };
}

ChatResponse MockChat::complete(const ChatRequest& request) {
    request.validate();
    counter_.network();
    ChatResponse r;
    r.content = responder_(request);
    r.provider_meta = "mock";
    return r;
}

Embedding hashed_unit_vector(std::string_view seed_text, std::size_t dimension) {
    if (dimension == 0) throw ValidationError("embedding dimension must be positive");
    Rng rng(mix64(fnv1a64(seed_text)));
    Embedding e;
    e.values.resize(dimension);
    double norm2 = 0;
    do {
        norm2 = 0;
        for (auto& v : e.values) {
            v = 2.0 * rng.unit() - 1.0;
            norm2 += v * v;
        }
    } while (norm2 == 0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& v : e.values) v *= inv;
    return e;
}

Embedding MockSentenceEmbedder::embed(std::string_view text) {
    if (text.empty()) throw ValidationError("embed_sentence: empty text");
    counter_.network();
    return hashed_unit_vector(text, dimension_);
}

std::vector<TokenEmbedding> MockTokenEmbedder::embed_tokens(std::string_view text) {
    std::vector<TokenEmbedding> out;
    std::istringstream in{std::string(text)};
    std::string tok;
    while (in >> tok) out.push_back({tok, hashed_unit_vector("token:" + tok, dimension_)});
    if (out.empty()) throw ValidationError("embed_tokens: text has no tokens");
    return out;
}

std::vector<std::string> MockCommonsense::infer(std::string_view, Relation relation) {
    counter_.network();
    return {std::string(relation_name(relation)) + ": stub"};
}

}  // namespace empathy
