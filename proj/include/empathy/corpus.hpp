#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace empathy {

enum class Role { Speaker, Listener };

std::string_view role_name(Role role) noexcept;
Role parse_role(std::string_view name);

struct Utterance {
    int index = 1;  // 1-based position in the dialogue
    Role role = Role::Speaker;
    std::string text;

    bool operator==(const Utterance&) const = default;
};

struct Dialogue {
    std::string id;
    std::string emotion;
    std::string situation;
    std::vector<Utterance> utterances;

    bool operator==(const Dialogue&) const = default;
};

/// One generation target: a Listener turn and everything said before it.
struct EvalItem {
    std::string dialogue_id;
    int turn = 0;  // index of the reference utterance
    std::vector<Utterance> context;
    Utterance reference;
    std::string emotion;
    std::string situation;

    /// "<dialogue_id>#<turn>", unique across a corpus.
    std::string id() const;
};

struct CorpusSplit {
    std::vector<Dialogue> train;
    std::vector<Dialogue> valid;
    std::vector<Dialogue> test;
};

struct SplitRatio {
    double train = 8;
    double valid = 1;
    double test = 1;
};

/// The closed set of emotion labels a dialogue may carry.
class EmotionSet {
public:
    /// The 32 labels shipped with the dataset.
    static const EmotionSet& builtin();
    /// One label per line; blank lines and '#' comments ignored.
    static EmotionSet load(const std::filesystem::path& path);

    explicit EmotionSet(std::set<std::string> labels) : labels_(std::move(labels)) {}

    bool contains(std::string_view label) const { return labels_.find(std::string(label)) != labels_.end(); }
    const std::set<std::string>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }

private:
    std::set<std::string> labels_;
};

struct ParseStats {
    std::size_t rows = 0;
    std::size_t dropped_rows = 0;
};

struct ParsedCorpus {
    std::vector<Dialogue> dialogues;
    ParseStats stats;
};

/// Parses the dataset's per-utterance comma-separated format
/// (conv_id, utterance_idx, context, prompt, speaker_idx, utterance, ...).
/// "_comma_" is unescaped. Rows missing a mandatory field or carrying an
/// unknown emotion label are dropped and counted; a dialogue that ends up
/// with fewer than two utterances is dropped too.
/// Throws ParseError on a malformed header and IntegrityError on a
/// duplicate (conv_id, utterance_idx).
ParsedCorpus parse_corpus(std::istream& in, const EmotionSet& emotions = EmotionSet::builtin());

/// Canonical corpus file: one JSON object per line.
void write_corpus(std::ostream& out, const std::vector<Dialogue>& dialogues);
std::vector<Dialogue> read_corpus(std::istream& in, const EmotionSet& emotions = EmotionSet::builtin());

void save_corpus(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues);
std::vector<Dialogue> load_corpus(const std::filesystem::path& path,
                                  const EmotionSet& emotions = EmotionSet::builtin());

/// Throws IntegrityError if `d` breaks a Dialogue invariant.
void validate_dialogue(const Dialogue& d, const EmotionSet& emotions = EmotionSet::builtin());

/// Seeded partition. Valid and test sizes are the nearest integers to their
/// share; the remainder goes to train. The result does not depend on the
/// order of `dialogues`.
CorpusSplit split_corpus(std::vector<Dialogue> dialogues, SplitRatio ratio, std::uint64_t seed);

/// One item per Listener utterance, in dialogue order.
std::vector<EvalItem> derive_eval_items(const Dialogue& dialogue);
std::vector<EvalItem> derive_eval_items(const std::vector<Dialogue>& dialogues);

}  // namespace empathy
