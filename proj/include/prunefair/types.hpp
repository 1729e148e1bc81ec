#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "prunefair/errors.hpp"

namespace prunefair {

enum class PruneTechnique {
    global_unstructured,
    l1_structured,
    l1_unstructured,
    l2_structured,
    linfty_structured,
    random_structured,
    random_unstructured,
};

inline constexpr std::array kAllTechniques = {
    PruneTechnique::global_unstructured, PruneTechnique::l1_structured,
    PruneTechnique::l1_unstructured,     PruneTechnique::l2_structured,
    PruneTechnique::linfty_structured,   PruneTechnique::random_structured,
    PruneTechnique::random_unstructured,
};

enum class WeightTreatment { finetune, rewind };

inline constexpr std::string_view to_string(PruneTechnique t) {
    switch (t) {
        case PruneTechnique::global_unstructured: return "global_unstructured";
        case PruneTechnique::l1_structured: return "l1_structured";
        case PruneTechnique::l1_unstructured: return "l1_unstructured";
        case PruneTechnique::l2_structured: return "l2_structured";
        case PruneTechnique::linfty_structured: return "linfty_structured";
        case PruneTechnique::random_structured: return "random_structured";
        case PruneTechnique::random_unstructured: return "random_unstructured";
    }
    return "?";
}

inline constexpr std::string_view to_string(WeightTreatment w) {
    return w == WeightTreatment::finetune ? "finetune" : "rewind";
}

inline constexpr bool is_structured(PruneTechnique t) {
    return t == PruneTechnique::l1_structured || t == PruneTechnique::l2_structured ||
           t == PruneTechnique::linfty_structured || t == PruneTechnique::random_structured;
}

inline std::optional<PruneTechnique> parse_technique(std::string_view name) {
    for (auto t : kAllTechniques)
        if (to_string(t) == name)
            return t;
    return std::nullopt;
}

inline std::optional<WeightTreatment> parse_treatment(std::string_view name) {
    if (name == "finetune")
        return WeightTreatment::finetune;
    if (name == "rewind")
        return WeightTreatment::rewind;
    return std::nullopt;
}

}  // namespace prunefair
