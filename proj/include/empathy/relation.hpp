#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace empathy {

/// Person-X commonsense relations, in canonical order.
enum class Relation { xIntent, xNeed, xWant, xEffect, xReact };

inline constexpr std::array<Relation, 5> kAllRelations = {Relation::xIntent, Relation::xNeed, Relation::xWant,
                                                         Relation::xEffect, Relation::xReact};

constexpr std::string_view relation_name(Relation r) noexcept {
    switch (r) {
        case Relation::xIntent: return "xIntent";
        case Relation::xNeed: return "xNeed";
        case Relation::xWant: return "xWant";
        case Relation::xEffect: return "xEffect";
        case Relation::xReact: return "xReact";
    }
    return "";
}

constexpr std::optional<Relation> relation_from_name(std::string_view name) noexcept {
    for (auto r : kAllRelations) {
        if (relation_name(r) == name) return r;
    }
    return std::nullopt;
}

constexpr std::size_t relation_index(Relation r) noexcept { return static_cast<std::size_t>(r); }

}  // namespace empathy
