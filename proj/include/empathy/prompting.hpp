#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "empathy/corpus.hpp"

namespace empathy {

inline constexpr std::size_t kRelationCount = 5;

/// All fixed wording used to build prompts. Defaults carry the published
/// template; any field can be overridden from a JSON config file.
struct PromptTemplate {
    std::string task_definition;
    std::string guideline_instruction;
    std::string exemplar_header;
    std::string stage1;
    std::string stage2;
    std::string knowledge_header;
    /// Sentence frame per commonsense relation, canonical order; "{}" marks
    /// where the inference text goes.
    std::array<std::string, kRelationCount> relation_frames;
    std::string judge_instruction;
    std::string judge_reprompt;

    static const PromptTemplate& defaults();
    /// Missing keys fall back to the defaults. Unknown keys are rejected.
    static PromptTemplate load(const std::filesystem::path& path);
    static PromptTemplate from_json_text(std::string_view text);
    std::string to_json_text() const;
};

/// (task definition, guideline instruction) of the default template.
std::pair<std::string, std::string> default_template();

/// (stage-1 prompt, stage-2 prompt) of the default template.
std::pair<std::string, std::string> stage_prompts();

enum class ExtraPlacement { BeforeContext, AfterContext };

struct PromptExtra {
    std::string label;
    std::string body;
    ExtraPlacement placement = ExtraPlacement::AfterContext;

    bool operator==(const PromptExtra&) const = default;
};

struct PromptBundle {
    std::string task_definition;
    std::string guideline_instruction;
    std::string exemplar_header;
    std::vector<Dialogue> exemplars;
    std::vector<Utterance> dialogue_context;
    std::vector<PromptExtra> extras;

    /// Bundle with the template's wording and no exemplars or extras.
    static PromptBundle from_template(const PromptTemplate& tmpl, std::vector<Utterance> context);
};

struct SectionSpan {
    std::string label;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const SectionSpan&) const = default;
};

inline constexpr std::string_view kSectionSeparator = "\n\n";

/// Rendered prompt plus the character range of every section.
struct PromptText {
    std::string text;
    std::vector<SectionSpan> spans;

    std::optional<std::string_view> section(std::string_view label) const;
    bool has_section(std::string_view label) const { return section(label).has_value(); }

    /// Text with the labelled section and one adjacent separator removed.
    /// Returns the text unchanged if the section is absent.
    std::string without_section(std::string_view label) const;

    /// Builds a PromptText by joining labelled sections with the separator.
    static PromptText join(const std::vector<std::pair<std::string, std::string>>& sections);

    bool operator==(const PromptText&) const = default;
};

/// "Speaker: ..." / "Listener: ..." lines joined by newlines.
std::string render_dialogue(const std::vector<Utterance>& utterances);

/// Fixed section order: task definition, guideline instruction, exemplars
/// (only when present), BeforeContext extras, dialogue context,
/// AfterContext extras. Sections are separated by one blank line.
PromptText render_prompt(const PromptBundle& bundle);

}  // namespace empathy
