#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "empathy/corpus.hpp"

namespace empathy::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::mt19937_64 gen{std::random_device{}()};
        path_ = std::filesystem::temp_directory_path() / ("empathy-" + tag + "-" + std::to_string(gen()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(EMPATHY_FIXTURES) / name; }

/// Dialogue with alternating roles starting at Speaker.
inline Dialogue make_dialogue(const std::string& id, const std::vector<std::string>& texts,
                              const std::string& emotion = "sad", const std::string& situation = "A situation.") {
    Dialogue d{id, emotion, situation, {}};
    for (std::size_t i = 0; i < texts.size(); ++i) {
        d.utterances.push_back({static_cast<int>(i + 1), i % 2 == 0 ? Role::Speaker : Role::Listener, texts[i]});
    }
    return d;
}

/// Synthetic corpus of `n` four-turn dialogues with distinct texts.
inline std::vector<Dialogue> synthetic_corpus(std::size_t n) {
    static const char* kEmotions[] = {"sad", "joyful", "afraid", "proud", "angry", "lonely"};
    std::vector<Dialogue> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto tag = std::to_string(i);
        out.push_back(make_dialogue("conv" + std::string(4 - std::min<std::size_t>(tag.size(), 4), '0') + tag,
                                    {"speaker opens topic " + tag, "listener asks about " + tag,
                                     "speaker explains more on " + tag, "listener comforts " + tag},
                                    kEmotions[i % 6], "Situation number " + tag + "."));
    }
    return out;
}

}  // namespace empathy::testing
