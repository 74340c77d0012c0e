#include "empathy/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "empathy/error.hpp"
#include "empathy/random.hpp"
#include "json.hpp"

namespace empathy {

using json = nlohmann::json;

namespace {

constexpr std::string_view kBuiltinEmotions[] = {
    "afraid",      "angry",     "annoyed",     "anticipating", "anxious",  "apprehensive", "ashamed",
    "caring",      "confident", "content",     "devastated",   "disappointed", "disgusted", "embarrassed",
    "excited",     "faithful",  "furious",     "grateful",     "guilty",   "hopeful",      "impressed",
    "jealous",     "joyful",    "lonely",      "nostalgic",    "prepared", "proud",        "sad",
    "sentimental", "surprised", "terrified",   "trusting",
};

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string unescape(std::string_view s) {
    static constexpr std::string_view kToken = "_comma_";
    std::string out;
    out.reserve(s.size());
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(kToken, start);
        if (pos == std::string_view::npos) {
            out.append(s.substr(start));
            break;
        }
        out.append(s.substr(start, pos - start));
        out.push_back(',');
        start = pos + kToken.size();
    }
    return out;
}

struct Row {
    int index;
    std::string emotion;
    std::string situation;
    std::string text;
};

void assign_roles(std::vector<Utterance>& utterances) {
    for (std::size_t i = 0; i < utterances.size(); ++i) {
        utterances[i].index = static_cast<int>(i + 1);
        utterances[i].role = (i % 2 == 0) ? Role::Speaker : Role::Listener;
    }
}

}  // namespace

std::string_view role_name(Role role) noexcept {
    return role == Role::Speaker ? "speaker" : "listener";
}

Role parse_role(std::string_view name) {
    if (name == "speaker" || name == "Speaker") return Role::Speaker;
    if (name == "listener" || name == "Listener") return Role::Listener;
    throw ParseError("unknown utterance role '" + std::string(name) + "'");
}

std::string EvalItem::id() const { return dialogue_id + "#" + std::to_string(turn); }

const EmotionSet& EmotionSet::builtin() {
    static const EmotionSet set = [] {
        std::set<std::string> labels;
        for (auto l : kBuiltinEmotions) labels.emplace(l);
        return EmotionSet(std::move(labels));
    }();
    return set;
}

EmotionSet EmotionSet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open emotion label file " + path.string());
    std::set<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        labels.emplace(t);
    }
    if (labels.empty()) throw ParseError("emotion label file " + path.string() + " is empty");
    return EmotionSet(std::move(labels));
}

ParsedCorpus parse_corpus(std::istream& in, const EmotionSet& emotions) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("corpus stream is empty; expected a header row");

    const auto header = split_commas(trim(line));
    std::map<std::string, std::size_t, std::less<>> column;
    for (std::size_t i = 0; i < header.size(); ++i) column.emplace(std::string(trim(header[i])), i);
    auto col = [&](std::string_view name) {
        auto it = column.find(name);
        if (it == column.end()) {
            throw ParseError("malformed corpus header: missing column '" + std::string(name) + "'");
        }
        return it->second;
    };
    const std::size_t c_conv = col("conv_id");
    const std::size_t c_idx = col("utterance_idx");
    const std::size_t c_emotion = col("context");
    const std::size_t c_situation = col("prompt");
    const std::size_t c_text = col("utterance");

    ParsedCorpus result;
    // Insertion order of conversations is preserved for output order.
    std::vector<std::string> order;
    std::map<std::string, std::map<int, Row>> groups;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++result.stats.rows;
        const auto fields = split_commas(line);
        auto field = [&](std::size_t c) -> std::string_view {
            return c < fields.size() ? trim(fields[c]) : std::string_view{};
        };
        const auto conv = field(c_conv);
        const auto idx_text = field(c_idx);
        const auto emotion = field(c_emotion);
        const auto text = field(c_text);
        int idx = 0;
        const auto [ptr, ec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), idx);
        const bool idx_ok = ec == std::errc{} && ptr == idx_text.data() + idx_text.size() && idx >= 1;
        if (conv.empty() || !idx_ok || emotion.empty() || text.empty() || !emotions.contains(emotion)) {
            ++result.stats.dropped_rows;
            continue;
        }
        auto [git, inserted] = groups.try_emplace(std::string(conv));
        if (inserted) order.emplace_back(conv);
        Row row{idx, std::string(emotion), unescape(field(c_situation)), unescape(text)};
        if (!git->second.emplace(idx, std::move(row)).second) {
            throw IntegrityError("duplicate utterance (" + std::string(conv) + ", " + std::to_string(idx) +
                                 ") at line " + std::to_string(line_no));
        }
    }

    for (const auto& conv : order) {
        const auto& rows = groups.at(conv);
        Dialogue d;
        d.id = conv;
        d.emotion = rows.begin()->second.emotion;
        d.situation = rows.begin()->second.situation;
        for (const auto& [idx, row] : rows) d.utterances.push_back({idx, Role::Speaker, row.text});
        assign_roles(d.utterances);
        if (d.utterances.size() < 2) {
            result.stats.dropped_rows += d.utterances.size();
            continue;
        }
        result.dialogues.push_back(std::move(d));
    }
    if (result.stats.dropped_rows > 0) {
        spdlog::warn("parse_corpus: dropped {} of {} rows", result.stats.dropped_rows, result.stats.rows);
    }
    return result;
}

void validate_dialogue(const Dialogue& d, const EmotionSet& emotions) {
    if (d.id.empty()) throw IntegrityError("dialogue with empty id");
    if (!emotions.contains(d.emotion)) {
        throw IntegrityError("dialogue " + d.id + ": unknown emotion label '" + d.emotion + "'");
    }
    if (d.utterances.size() < 2) throw IntegrityError("dialogue " + d.id + ": fewer than 2 utterances");
    for (std::size_t i = 0; i < d.utterances.size(); ++i) {
        const auto& u = d.utterances[i];
        const Role expected = (i % 2 == 0) ? Role::Speaker : Role::Listener;
        if (u.index != static_cast<int>(i + 1) || u.role != expected) {
            throw IntegrityError("dialogue " + d.id + ": utterance " + std::to_string(i + 1) +
                                 " breaks speaker/listener alternation");
        }
        if (u.text.empty()) throw IntegrityError("dialogue " + d.id + ": empty utterance text");
    }
}

void write_corpus(std::ostream& out, const std::vector<Dialogue>& dialogues) {
    for (const auto& d : dialogues) {
        json utt = json::array();
        for (const auto& u : d.utterances) utt.push_back({{"role", role_name(u.role)}, {"text", u.text}});
        json rec = {{"id", d.id}, {"emotion", d.emotion}, {"situation", d.situation}, {"utterances", utt}};
        out << rec.dump() << '\n';
    }
}

std::vector<Dialogue> read_corpus(std::istream& in, const EmotionSet& emotions) {
    std::vector<Dialogue> out;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        Dialogue d;
        try {
            const auto rec = json::parse(line);
            d.id = rec.at("id").get<std::string>();
            d.emotion = rec.at("emotion").get<std::string>();
            d.situation = rec.at("situation").get<std::string>();
            for (const auto& u : rec.at("utterances")) {
                d.utterances.push_back({static_cast<int>(d.utterances.size() + 1),
                                        parse_role(u.at("role").get<std::string>()),
                                        u.at("text").get<std::string>()});
            }
        } catch (const json::exception& e) {
            throw ParseError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        validate_dialogue(d, emotions);
        if (!seen.insert(d.id).second) throw IntegrityError("duplicate dialogue id " + d.id);
        out.push_back(std::move(d));
    }
    return out;
}

void save_corpus(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write corpus file " + path.string());
    write_corpus(out, dialogues);
    if (!out) throw Error("failed writing corpus file " + path.string());
}

std::vector<Dialogue> load_corpus(const std::filesystem::path& path, const EmotionSet& emotions) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open corpus file " + path.string());
    return read_corpus(in, emotions);
}

CorpusSplit split_corpus(std::vector<Dialogue> dialogues, SplitRatio ratio, std::uint64_t seed) {
    if (dialogues.empty()) throw ValidationError("split_corpus: no dialogues");
    if (ratio.train < 0 || ratio.valid < 0 || ratio.test < 0) {
        throw ValidationError("split_corpus: ratio weights must be non-negative");
    }
    const double total = ratio.train + ratio.valid + ratio.test;
    if (!(total > 0)) throw ValidationError("split_corpus: ratio weights must sum to a positive value");

    std::sort(dialogues.begin(), dialogues.end(), [](const Dialogue& a, const Dialogue& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < dialogues.size(); ++i) {
        if (dialogues[i].id == dialogues[i - 1].id) {
            throw IntegrityError("split_corpus: duplicate dialogue id " + dialogues[i].id);
        }
    }

    const auto n = dialogues.size();
    const auto share = [&](double w) { return static_cast<std::size_t>(std::llround(n * w / total)); };
    std::size_t n_valid = share(ratio.valid);
    std::size_t n_test = share(ratio.test);
    // A positive weight keeps at least one dialogue while train can spare it.
    const std::size_t train_floor = ratio.train > 0 ? 1 : 0;
    if (ratio.valid > 0 && n_valid == 0 && n > n_test + train_floor) n_valid = 1;
    if (ratio.test > 0 && n_test == 0 && n > n_valid + train_floor) n_test = 1;
    if (n_valid + n_test > n) n_test = n - n_valid;
    const std::size_t n_train = n - n_valid - n_test;

    const auto check = [&](const char* name, double w, std::size_t size) {
        if (w > 0 && size == 0) {
            throw ValidationError(std::string("split_corpus: ") + name + " split would be empty (" +
                                  std::to_string(n) + " dialogues)");
        }
    };
    check("train", ratio.train, n_train);
    check("valid", ratio.valid, n_valid);
    check("test", ratio.test, n_test);

    Rng rng(seed);
    rng.shuffle(dialogues);

    CorpusSplit split;
    auto it = std::make_move_iterator(dialogues.begin());
    split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
    split.valid.assign(it + static_cast<std::ptrdiff_t>(n_train),
                       it + static_cast<std::ptrdiff_t>(n_train + n_valid));
    split.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_valid), std::make_move_iterator(dialogues.end()));
    return split;
}

std::vector<EvalItem> derive_eval_items(const Dialogue& dialogue) {
    std::vector<EvalItem> items;
    for (std::size_t i = 1; i < dialogue.utterances.size(); ++i) {
        const auto& u = dialogue.utterances[i];
        if (u.role != Role::Listener) continue;
        EvalItem item;
        item.dialogue_id = dialogue.id;
        item.turn = u.index;
        item.context.assign(dialogue.utterances.begin(), dialogue.utterances.begin() + static_cast<std::ptrdiff_t>(i));
        item.reference = u;
        item.emotion = dialogue.emotion;
        item.situation = dialogue.situation;
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<EvalItem> derive_eval_items(const std::vector<Dialogue>& dialogues) {
    std::vector<EvalItem> items;
    for (const auto& d : dialogues) {
        auto part = derive_eval_items(d);
        items.insert(items.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return items;
}

}  // namespace empathy
