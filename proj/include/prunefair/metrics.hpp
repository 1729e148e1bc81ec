#pragma once

// Per-class accuracy, unfairness gaps and accuracy quartiles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prunefair/errors.hpp"
#include "prunefair/types.hpp"

namespace prunefair::metrics {

/// Accuracy of one class; empty when the class has no evaluation examples.
using ClassAccuracy = std::optional<double>;

enum class FairnessMetric { max_min_gap, mean_min_gap };

inline constexpr std::string_view to_string(FairnessMetric m) {
    return m == FairnessMetric::max_min_gap ? "max_min" : "mean_min";
}

inline std::optional<FairnessMetric> parse_metric(std::string_view name) {
    if (name == "max_min")
        return FairnessMetric::max_min_gap;
    if (name == "mean_min")
        return FairnessMetric::mean_min_gap;
    return std::nullopt;
}

struct OperatingPoint {
    PruneTechnique technique = PruneTechnique::global_unstructured;
    WeightTreatment treatment = WeightTreatment::finetune;
    std::uint64_t seed = 0;
    std::size_t iteration = 0;
    double sparsity = 0.0;
    double total_accuracy = 0.0;
    std::vector<ClassAccuracy> per_class_accuracy;
    std::map<FairnessMetric, double> unfairness;  // absent when some class is undefined
};

inline std::vector<ClassAccuracy> per_class_accuracy(std::span<const int> predictions,
                                                     std::span<const int> labels,
                                                     std::size_t num_classes) {
    if (predictions.size() != labels.size())
        throw DimensionError("predictions and labels differ in length");
    std::vector<std::size_t> correct(num_classes, 0), total(num_classes, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (labels[i] < 0 || y >= num_classes)
            throw DimensionError("label " + std::to_string(labels[i]) + " outside [0, " +
                                 std::to_string(num_classes) + ")");
        ++total[y];
        if (predictions[i] == labels[i])
            ++correct[y];
    }
    std::vector<ClassAccuracy> a(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c)
        if (total[c] > 0)
            a[c] = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    return a;
}

inline double total_accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw DimensionError("predictions and labels differ in length");
    if (labels.empty())
        throw ValidationError("accuracy of an empty evaluation set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        correct += predictions[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

inline double unfairness(std::span<const double> a, FairnessMetric metric) {
    if (a.empty())
        throw ValidationError("unfairness of an empty accuracy vector");
    const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
    if (metric == FairnessMetric::max_min_gap)
        return *hi - *lo;
    // Mean of the gaps to the minimum; clamped so rounding never lifts it above max - min.
    double gap = 0.0;
    for (double x : a)
        gap += x - *lo;
    return std::clamp(gap / static_cast<double>(a.size()), 0.0, *hi - *lo);
}

/// Throws UndefinedValue naming the classes without evaluation examples.
inline std::vector<double> defined_or_throw(std::span<const ClassAccuracy> a) {
    std::vector<double> out;
    std::string missing;
    for (std::size_t c = 0; c < a.size(); ++c) {
        if (a[c]) {
            out.push_back(*a[c]);
        } else {
            missing += missing.empty() ? "" : ", ";
            missing += std::to_string(c);
        }
    }
    if (!missing.empty())
        throw UndefinedValue("class accuracy undefined for classes: " + missing);
    return out;
}

inline double unfairness(std::span<const ClassAccuracy> a, FairnessMetric metric) {
    const auto values = defined_or_throw(a);
    return unfairness(std::span<const double>(values), metric);
}

/// Linearly interpolated quartile cut points of a population. Values on a
/// cut point belong to the lower quartile.
class QuartileCuts {
public:
    explicit QuartileCuts(std::span<const double> population) {
        if (population.empty())
            throw ValidationError("quartile of an empty population");
        std::vector<double> sorted(population.begin(), population.end());
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < 3; ++i) {
            const double pos = 0.25 * (i + 1) * static_cast<double>(sorted.size() - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
            cuts_[i] = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
        }
    }

    int operator()(double value) const {
        for (int i = 0; i < 3; ++i)
            if (value <= cuts_[i])
                return i + 1;
        return 4;
    }

private:
    double cuts_[3] = {};
};

/// Quartile index (1..4) of `value` within `population`.
inline int accuracy_quartile(std::span<const double> population, double value) {
    return QuartileCuts(population)(value);
}

inline OperatingPoint make_operating_point(std::span<const int> predictions,
                                           std::span<const int> labels, std::size_t num_classes,
                                           double sparsity) {
    OperatingPoint p;
    p.sparsity = sparsity;
    p.total_accuracy = total_accuracy(predictions, labels);
    p.per_class_accuracy = per_class_accuracy(predictions, labels, num_classes);
    const bool all_defined = std::all_of(p.per_class_accuracy.begin(), p.per_class_accuracy.end(),
                                         [](const ClassAccuracy& a) { return a.has_value(); });
    if (all_defined) {
        for (auto m : {FairnessMetric::max_min_gap, FairnessMetric::mean_min_gap})
            p.unfairness[m] = unfairness(std::span<const ClassAccuracy>(p.per_class_accuracy), m);
    }
    return p;
}

}  // namespace prunefair::metrics
