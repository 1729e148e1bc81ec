#pragma once

// The seven pruning techniques and the iterative
// prune -> (rewind | finetune) -> retrain loop.
//
// Every technique prunes k = round(fraction * unmasked) units per step (at
// least one while anything is left). Layer-wise techniques count units per
// prunable tensor; global_unstructured counts over the union of all prunable
// weights. Structured techniques remove whole input-axis slices: dense
// columns or conv input channels. Biases are never pruned. Magnitude ties
// go to the lowest flat index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "prunefair/dataset.hpp"
#include "prunefair/errors.hpp"
#include "prunefair/metrics.hpp"
#include "prunefair/netcore.hpp"
#include "prunefair/rng.hpp"
#include "prunefair/types.hpp"

namespace prunefair::pruning {

using netcore::Layer;
using netcore::Network;

struct PruneSchedule {
    std::size_t iterations = 20;
    double fraction_per_iteration = 0.2;

    void validate() const {
        if (iterations < 1)
            throw ValidationError("prune schedule needs at least one iteration");
        if (!(fraction_per_iteration > 0.0 && fraction_per_iteration < 1.0))
            throw ValidationError("prune fraction must lie in (0, 1)");
    }
};

struct PruneEvent {
    std::size_t iteration = 0;
    std::vector<std::size_t> newly_pruned;  // per layer; zero for non-prunable layers
    double sparsity = 0.0;
    std::vector<std::string> warnings;
};

/// Units to remove from `unmasked` remaining ones.
inline std::size_t prune_count(double fraction, std::size_t unmasked) {
    if (unmasked == 0)
        return 0;
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(unmasked)));
    return std::clamp<std::size_t>(k, 1, unmasked);
}

/// Fraction of prunable weights whose mask is zero.
inline double sparsity_of(const Network& net) {
    std::size_t total = 0, masked = 0;
    for (const auto& l : net.layers()) {
        if (!l.prunable())
            continue;
        total += l.mask.size();
        for (double m : l.mask.values)
            masked += m == 0.0;
    }
    if (total == 0)
        throw ValidationError("network has no prunable weights");
    return static_cast<double>(masked) / static_cast<double>(total);
}

namespace detail {

inline void zero_weight(Layer& l, std::size_t idx) {
    l.mask[idx] = 0.0;
    l.weights[idx] = 0.0;
}

struct WeightRef {
    double magnitude;
    std::size_t layer;
    std::size_t index;
};

inline bool smaller(const WeightRef& a, const WeightRef& b) {
    return std::tie(a.magnitude, a.layer, a.index) < std::tie(b.magnitude, b.layer, b.index);
}

inline std::vector<WeightRef> unmasked_weights(const Network& net, std::size_t layer) {
    std::vector<WeightRef> refs;
    const Layer& l = net.layers()[layer];
    for (std::size_t k = 0; k < l.weights.size(); ++k)
        if (l.mask[k] != 0.0)
            refs.push_back({std::abs(l.weights[k]), layer, k});
    return refs;
}

/// Moves the k smallest (magnitude, layer, index) entries to the front.
inline void select_smallest(std::vector<WeightRef>& refs, std::size_t k) {
    if (k < refs.size())
        std::nth_element(refs.begin(), refs.begin() + static_cast<std::ptrdiff_t>(k), refs.end(),
                         smaller);
}

/// Moves k uniformly chosen entries to the front (partial Fisher-Yates).
template <typename T>
void select_random(std::vector<T>& items, std::size_t k, Rng& rng) {
    for (std::size_t i = 0; i < k && i + 1 < items.size(); ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(items.size() - i));
        std::swap(items[i], items[j]);
    }
}

inline bool slice_alive(const Layer& l, std::size_t s) {
    bool alive = false;
    l.for_each_in_slice(s, [&](std::size_t idx) { alive = alive || l.mask[idx] != 0.0; });
    return alive;
}

inline double slice_norm(const Layer& l, std::size_t s, PruneTechnique tech) {
    double acc = 0.0;
    l.for_each_in_slice(s, [&](std::size_t idx) {
        const double w = std::abs(l.weights[idx] * l.mask[idx]);
        switch (tech) {
            case PruneTechnique::l1_structured: acc += w; break;
            case PruneTechnique::l2_structured: acc += w * w; break;
            default: acc = std::max(acc, w); break;
        }
    });
    return tech == PruneTechnique::l2_structured ? std::sqrt(acc) : acc;
}

inline std::size_t prune_layer_unstructured(Network& net, std::size_t li, PruneTechnique tech,
                                            double fraction, Rng& rng) {
    auto refs = unmasked_weights(net, li);
    const std::size_t k = prune_count(fraction, refs.size());
    if (tech == PruneTechnique::random_unstructured)
        select_random(refs, k, rng);
    else
        select_smallest(refs, k);
    Layer& l = net.layers()[li];
    for (std::size_t i = 0; i < k; ++i)
        zero_weight(l, refs[i].index);
    return k;
}

inline std::size_t prune_layer_structured(Network& net, std::size_t li, PruneTechnique tech,
                                          double fraction, Rng& rng) {
    Layer& l = net.layers()[li];
    std::vector<WeightRef> slices;
    for (std::size_t s = 0; s < l.input_slices(); ++s)
        if (slice_alive(l, s))
            slices.push_back({tech == PruneTechnique::random_structured ? 0.0 : slice_norm(l, s, tech),
                              li, s});
    const std::size_t k = prune_count(fraction, slices.size());
    if (tech == PruneTechnique::random_structured)
        select_random(slices, k, rng);
    else
        select_smallest(slices, k);
    std::size_t zeroed = 0;
    for (std::size_t i = 0; i < k; ++i) {
        l.for_each_in_slice(slices[i].index, [&](std::size_t idx) {
            zeroed += l.mask[idx] != 0.0;
            zero_weight(l, idx);
        });
    }
    return zeroed;
}

}  // namespace detail

/// One pruning step. Masks only flip from 1 to 0 and pruned weights are set
/// to zero. The returned event carries the post-step sparsity; its
/// `iteration` is left for the caller to fill in.
inline PruneEvent prune_step(Network& net, PruneTechnique tech, double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("prune fraction must lie in (0, 1)");
    auto& layers = net.layers();
    PruneEvent event;
    event.newly_pruned.assign(layers.size(), 0);
    bool any_prunable = false;
    for (const auto& l : layers)
        any_prunable = any_prunable || l.prunable();
    if (!any_prunable)
        throw ValidationError("network has no prunable layer");

    if (tech == PruneTechnique::global_unstructured) {
        std::vector<detail::WeightRef> refs;
        for (std::size_t li = 0; li < layers.size(); ++li)
            if (layers[li].prunable()) {
                auto part = detail::unmasked_weights(net, li);
                refs.insert(refs.end(), part.begin(), part.end());
            }
        const std::size_t k = prune_count(fraction, refs.size());
        detail::select_smallest(refs, k);
        for (std::size_t i = 0; i < k; ++i) {
            detail::zero_weight(layers[refs[i].layer], refs[i].index);
            ++event.newly_pruned[refs[i].layer];
        }
        if (k == 0)
            event.warnings.push_back("all prunable weights already pruned");
    } else {
        for (std::size_t li = 0; li < layers.size(); ++li) {
            if (!layers[li].prunable())
                continue;
            const std::size_t n =
                is_structured(tech)
                    ? detail::prune_layer_structured(net, li, tech, fraction, rng)
                    : detail::prune_layer_unstructured(net, li, tech, fraction, rng);
            event.newly_pruned[li] = n;
            if (n == 0)
                event.warnings.push_back("layer " + std::to_string(li) +
                                         ": all units already pruned, step skipped");
        }
    }
    event.sparsity = sparsity_of(net);
    return event;
}

struct Trajectory {
    std::vector<metrics::OperatingPoint> points;  // iteration 0 is the unpruned model
    std::vector<PruneEvent> events;
};

struct IterateHooks {
    /// Called after pruning (and rewinding) and before retraining.
    std::function<void(const Network&, std::size_t iteration)> before_retrain;
};

inline metrics::OperatingPoint evaluate_point(const Network& net,
                                              const dataset::LabeledDataset& eval,
                                              PruneTechnique tech, WeightTreatment treatment,
                                              std::uint64_t seed, std::size_t iteration) {
    const auto preds = netcore::evaluate(net, eval);
    auto p = metrics::make_operating_point(preds, eval.labels, net.num_classes(), sparsity_of(net));
    p.technique = tech;
    p.treatment = treatment;
    p.seed = seed;
    p.iteration = iteration;
    return p;
}

/// Iterative pruning from an already trained network. Each iteration prunes,
/// rewinds surviving weights to the network's initial snapshot when
/// `treatment` is rewind, retrains for `cfg.epochs` and evaluates on `eval`.
/// Returns schedule.iterations + 1 operating points.
inline Trajectory iterate(Network& net, const dataset::LabeledDataset& train,
                          const dataset::LabeledDataset& eval, PruneTechnique tech,
                          WeightTreatment treatment, const PruneSchedule& schedule,
                          const netcore::TrainConfig& cfg, Rng& rng,
                          const IterateHooks& hooks = {}) {
    schedule.validate();
    cfg.validate();
    Trajectory out;
    out.points.push_back(evaluate_point(net, eval, tech, treatment, rng.seed(), 0));
    for (std::size_t it = 1; it <= schedule.iterations; ++it) {
        PruneEvent event = prune_step(net, tech, schedule.fraction_per_iteration, rng);
        event.iteration = it;
        if (treatment == WeightTreatment::rewind)
            netcore::restore_unmasked(net, net.initial_snapshot());
        if (hooks.before_retrain)
            hooks.before_retrain(net, it);
        try {
            netcore::train(net, train, cfg, rng);
        } catch (const TrainingDivergence& e) {
            throw e.at_iteration(static_cast<long>(it));
        }
        out.events.push_back(std::move(event));
        out.points.push_back(evaluate_point(net, eval, tech, treatment, rng.seed(), it));
    }
    return out;
}

}  // namespace prunefair::pruning
