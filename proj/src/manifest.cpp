#include <sstream>

#include "empathy/error.hpp"
#include "empathy/generation.hpp"
#include "empathy/io.hpp"

namespace empathy {

using json = nlohmann::json;

namespace {

json utterances_to_json(const std::vector<Utterance>& us) {
    json arr = json::array();
    for (const auto& u : us) arr.push_back({{"role", role_name(u.role)}, {"text", u.text}});
    return arr;
}

std::vector<Utterance> utterances_from_json(const json& arr) {
    std::vector<Utterance> out;
    for (const auto& u : arr) {
        out.push_back({static_cast<int>(out.size() + 1), parse_role(u.at("role").get<std::string>()),
                       u.at("text").get<std::string>()});
    }
    return out;
}

json counts_to_json(const CallCounts& c) { return {{"network_calls", c.network_calls}, {"cache_hits", c.cache_hits}}; }

CallCounts counts_from_json(const json& j) {
    return {j.value("network_calls", std::uint64_t{0}), j.value("cache_hits", std::uint64_t{0})};
}

json optional_string(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> optional_string(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
}

}  // namespace

json to_json(const PromptText& p) {
    json spans = json::array();
    for (const auto& s : p.spans) spans.push_back({{"label", s.label}, {"start", s.start}, {"end", s.end}});
    return {{"text", p.text}, {"spans", spans}};
}

PromptText prompt_text_from_json(const json& j) {
    PromptText p;
    p.text = j.at("text").get<std::string>();
    for (const auto& s : j.at("spans")) {
        p.spans.push_back({s.at("label").get<std::string>(), s.at("start").get<std::size_t>(),
                           s.at("end").get<std::size_t>()});
    }
    return p;
}

json to_json(const EvalItem& item) {
    return {{"id", item.id()},
            {"dialogue_id", item.dialogue_id},
            {"turn", item.turn},
            {"context", utterances_to_json(item.context)},
            {"reference", item.reference.text},
            {"emotion", item.emotion},
            {"situation", item.situation}};
}

EvalItem eval_item_from_json(const json& j) {
    EvalItem item;
    item.dialogue_id = j.at("dialogue_id").get<std::string>();
    item.turn = j.at("turn").get<int>();
    item.context = utterances_from_json(j.at("context"));
    item.reference = {item.turn, Role::Listener, j.at("reference").get<std::string>()};
    item.emotion = j.at("emotion").get<std::string>();
    item.situation = j.at("situation").get<std::string>();
    return item;
}

json to_json(const GeneratedResponse& r) {
    json prompts = json::array();
    for (const auto& p : r.prompts) prompts.push_back(to_json(p));
    json requests = json::array();
    for (const auto& q : r.requests) requests.push_back(q.payload());
    json thought = nullptr;
    if (r.thought) {
        thought = {{"raw_text", r.thought->raw_text},
                   {"carried_text", r.thought->carried_text},
                   {"parsed_emotion", optional_string(r.thought->parsed_emotion)},
                   {"parsed_situation", optional_string(r.thought->parsed_situation)}};
    }
    return {{"text", r.text},
            {"strategy", r.strategy.to_json()},
            {"prompts", prompts},
            {"requests", requests},
            {"thought", thought},
            {"exemplar_ids", r.exemplar_ids},
            {"exemplar_scores", r.exemplar_scores},
            {"knowledge_digest", optional_string(r.knowledge_digest)},
            {"knowledge_block", optional_string(r.knowledge_block)}};
}

GeneratedResponse generated_response_from_json(const json& j) {
    GeneratedResponse r;
    r.text = j.at("text").get<std::string>();
    r.strategy = GenerationStrategy::from_json(j.at("strategy"));
    for (const auto& p : j.at("prompts")) r.prompts.push_back(prompt_text_from_json(p));
    for (const auto& q : j.at("requests")) r.requests.push_back(ChatRequest::from_payload(q));
    if (j.contains("thought") && !j["thought"].is_null()) {
        const auto& t = j["thought"];
        StageOneThought thought;
        thought.raw_text = t.at("raw_text").get<std::string>();
        thought.carried_text = t.value("carried_text", thought.raw_text);
        thought.parsed_emotion = optional_string(t, "parsed_emotion");
        thought.parsed_situation = optional_string(t, "parsed_situation");
        r.thought = std::move(thought);
    }
    r.exemplar_ids = j.value("exemplar_ids", std::vector<std::string>{});
    r.exemplar_scores = j.value("exemplar_scores", std::vector<double>{});
    r.knowledge_digest = optional_string(j, "knowledge_digest");
    r.knowledge_block = optional_string(j, "knowledge_block");
    return r;
}

std::string RunManifest::serialize() const {
    std::ostringstream out;
    json header = {{"record", "header"},
                   {"format", "empathy-run-manifest/1"},
                   {"run_id", run_id},
                   {"strategy", strategy.to_json()},
                   {"config", config},
                   {"seed", seed},
                   {"items", outcomes.size()},
                   {"failures", failures()},
                   {"counts",
                    {{"chat", counts_to_json(counts.chat)},
                     {"embedding", counts_to_json(counts.embedding)},
                     {"commonsense", counts_to_json(counts.commonsense)}}},
                   {"started_at", started_at},
                   {"finished_at", finished_at}};
    out << header.dump() << '\n';
    for (const auto& o : outcomes) {
        json rec = {{"item", to_json(o.item)}};
        if (o.response) {
            rec["record"] = "item";
            rec["response"] = to_json(*o.response);
        } else {
            rec["record"] = "failure";
            rec["error"] = o.error.value_or("unknown error");
        }
        out << rec.dump() << '\n';
    }
    return out.str();
}

RunManifest RunManifest::parse(const std::string& text) {
    RunManifest m;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    try {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto rec = json::parse(line);
            const auto kind = rec.at("record").get<std::string>();
            if (kind == "header") {
                m.run_id = rec.at("run_id").get<std::string>();
                m.strategy = GenerationStrategy::from_json(rec.at("strategy"));
                m.config = rec.at("config");
                m.seed = rec.at("seed").get<std::uint64_t>();
                const auto& c = rec.at("counts");
                m.counts = {counts_from_json(c.at("chat")), counts_from_json(c.at("embedding")),
                            counts_from_json(c.at("commonsense"))};
                m.started_at = rec.value("started_at", std::string{});
                m.finished_at = rec.value("finished_at", std::string{});
                have_header = true;
                continue;
            }
            ItemOutcome o;
            o.item = eval_item_from_json(rec.at("item"));
            if (kind == "item") {
                o.response = generated_response_from_json(rec.at("response"));
            } else if (kind == "failure") {
                o.error = rec.at("error").get<std::string>();
            } else {
                throw ParseError("manifest line " + std::to_string(line_no) + ": unknown record '" + kind + "'");
            }
            m.outcomes.push_back(std::move(o));
        }
    } catch (const json::exception& e) {
        throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) throw ParseError("manifest has no header record");
    return m;
}

void RunManifest::save(const std::filesystem::path& path) const { atomic_write(path, serialize()); }

RunManifest RunManifest::load(const std::filesystem::path& path) { return parse(read_file(path)); }

}  // namespace empathy
