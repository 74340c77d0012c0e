#include "empathy/prompting.hpp"

#include <fstream>
#include <sstream>

#include "empathy/error.hpp"
#include "json.hpp"

namespace empathy {

using json = nlohmann::json;

namespace {

PromptTemplate make_defaults() {
    PromptTemplate t;
    t.task_definition =
        "This is an empathetic dialogue task: The first worker (Speaker) is given an emotion label and writes his "
        "own description of a situation when he has felt that way. Then, Speaker tells his story in a conversation "
        "with a second worker (Listener). The emotion label and situation of Speaker are invisible to Listener. "
        "Listener should recognize and acknowledge others’ feelings in a conversation as much as possible.";
    t.guideline_instruction =
        "Now you play the role of Listener, please give the corresponding response according to the existing "
        "context. You only need to provide the next round of response of Listener.";
    t.exemplar_header = "The following is the existing dialogue context:";
    t.stage1 =
        "Don't rush to reply yet, let's think step by step. Based on the existing dialogue, what may be the "
        "user's emotion, and according to his description, what may be the situation when he feels this way?";
    t.stage2 = "Now combine your thoughts with the existing dialogue context and give your response.";
    t.knowledge_header = "Commonsense knowledge about the Speaker's most recent event:";
    t.relation_frames = {
        "The speaker intends {}.",
        "Before this, the speaker needed {}.",
        "The speaker wants {}.",
        "As a result, the speaker {}.",
        "The speaker feels {}.",
    };
    t.judge_instruction =
        "You are comparing two candidate Listener responses to the same dialogue context. Judge them only on the "
        "aspect described below. Answer with exactly one token: A if Response A is better, B if Response B is "
        "better, or Tie when neither is clearly better.";
    t.judge_reprompt = "Your previous answer could not be read. Reply with exactly one token: A, B, or Tie.";
    return t;
}

const char* const kKeys[] = {"task_definition", "guideline_instruction", "exemplar_header", "stage1",
                             "stage2",          "knowledge_header",      "relation_frames", "judge_instruction",
                             "judge_reprompt"};

}  // namespace

const PromptTemplate& PromptTemplate::defaults() {
    static const PromptTemplate t = make_defaults();
    return t;
}

PromptTemplate PromptTemplate::from_json_text(std::string_view text) {
    json cfg;
    try {
        cfg = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("template config: ") + e.what());
    }
    if (!cfg.is_object()) throw ParseError("template config must be a JSON object");
    for (const auto& [key, _] : cfg.items()) {
        if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
            throw ParseError("template config: unknown key '" + key + "'");
        }
    }
    PromptTemplate t = defaults();
    auto take = [&](const char* key, std::string& field) {
        if (!cfg.contains(key)) return;
        if (!cfg[key].is_string()) throw ParseError(std::string("template config: '") + key + "' must be a string");
        field = cfg[key].get<std::string>();
    };
    take("task_definition", t.task_definition);
    take("guideline_instruction", t.guideline_instruction);
    take("exemplar_header", t.exemplar_header);
    take("stage1", t.stage1);
    take("stage2", t.stage2);
    take("knowledge_header", t.knowledge_header);
    take("judge_instruction", t.judge_instruction);
    take("judge_reprompt", t.judge_reprompt);
    if (cfg.contains("relation_frames")) {
        const auto& frames = cfg["relation_frames"];
        if (!frames.is_array() || frames.size() != kRelationCount) {
            throw ParseError("template config: 'relation_frames' must be an array of 5 strings");
        }
        for (std::size_t i = 0; i < kRelationCount; ++i) t.relation_frames[i] = frames[i].get<std::string>();
    }
    if (t.task_definition.empty() || t.guideline_instruction.empty()) {
        throw ValidationError("template config: task_definition and guideline_instruction must be non-empty");
    }
    return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open template config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string PromptTemplate::to_json_text() const {
    json j = {{"task_definition", task_definition},
              {"guideline_instruction", guideline_instruction},
              {"exemplar_header", exemplar_header},
              {"stage1", stage1},
              {"stage2", stage2},
              {"knowledge_header", knowledge_header},
              {"relation_frames", relation_frames},
              {"judge_instruction", judge_instruction},
              {"judge_reprompt", judge_reprompt}};
    return j.dump(2);
}

std::pair<std::string, std::string> default_template() {
    const auto& t = PromptTemplate::defaults();
    return {t.task_definition, t.guideline_instruction};
}

std::pair<std::string, std::string> stage_prompts() {
    const auto& t = PromptTemplate::defaults();
    return {t.stage1, t.stage2};
}

PromptBundle PromptBundle::from_template(const PromptTemplate& tmpl, std::vector<Utterance> context) {
    PromptBundle b;
    b.task_definition = tmpl.task_definition;
    b.guideline_instruction = tmpl.guideline_instruction;
    b.exemplar_header = tmpl.exemplar_header;
    b.dialogue_context = std::move(context);
    return b;
}

std::optional<std::string_view> PromptText::section(std::string_view label) const {
    for (const auto& s : spans) {
        if (s.label == label) return std::string_view(text).substr(s.start, s.end - s.start);
    }
    return std::nullopt;
}

std::string PromptText::without_section(std::string_view label) const {
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].label != label) continue;
        std::size_t start = spans[i].start;
        std::size_t end = spans[i].end;
        if (i + 1 < spans.size()) {
            end = spans[i + 1].start;
        } else if (i > 0) {
            start = spans[i - 1].end;
        }
        return text.substr(0, start) + text.substr(end);
    }
    return text;
}

PromptText PromptText::join(const std::vector<std::pair<std::string, std::string>>& sections) {
    PromptText out;
    for (const auto& [label, body] : sections) {
        if (!out.spans.empty()) out.text.append(kSectionSeparator);
        const auto start = out.text.size();
        out.text.append(body);
        out.spans.push_back({label, start, out.text.size()});
    }
    return out;
}

std::string render_dialogue(const std::vector<Utterance>& utterances) {
    std::string out;
    for (const auto& u : utterances) {
        if (!out.empty()) out.push_back('\n');
        out.append(u.role == Role::Speaker ? "Speaker: " : "Listener: ");
        out.append(u.text);
    }
    return out;
}

PromptText render_prompt(const PromptBundle& bundle) {
    std::vector<std::pair<std::string, std::string>> sections;
    sections.emplace_back("task_definition", bundle.task_definition);
    sections.emplace_back("guideline_instruction", bundle.guideline_instruction);
    if (!bundle.exemplars.empty()) {
        std::string body = bundle.exemplar_header;
        for (std::size_t i = 0; i < bundle.exemplars.size(); ++i) {
            body.append("\nInstance ").append(std::to_string(i + 1)).append(":\n");
            body.append(render_dialogue(bundle.exemplars[i].utterances));
        }
        sections.emplace_back("exemplars", std::move(body));
    }
    for (const auto& e : bundle.extras) {
        if (e.placement == ExtraPlacement::BeforeContext) sections.emplace_back(e.label, e.body);
    }
    sections.emplace_back("dialogue_context", render_dialogue(bundle.dialogue_context));
    for (const auto& e : bundle.extras) {
        if (e.placement == ExtraPlacement::AfterContext) sections.emplace_back(e.label, e.body);
    }
    return PromptText::join(sections);
}

}  // namespace empathy
