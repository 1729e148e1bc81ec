#pragma once

// Operating-point selection: accuracy constraint, weak-dominance Pareto
// frontier over k objectives, and linear value-function scalarization.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "prunefair/errors.hpp"
#include "prunefair/metrics.hpp"

namespace prunefair::pareto {

using metrics::FairnessMetric;
using metrics::OperatingPoint;

enum class Direction { maximize, minimize };

enum class Field { sparsity, total_accuracy, unfairness };

struct Objective {
    std::string name;
    Direction direction = Direction::maximize;
    Field field = Field::sparsity;
    FairnessMetric metric = FairnessMetric::max_min_gap;  // used when field == unfairness

    static Objective sparsity() { return {"sparsity", Direction::maximize, Field::sparsity, {}}; }
    static Objective accuracy() {
        return {"accuracy", Direction::maximize, Field::total_accuracy, {}};
    }
    static Objective unfairness(FairnessMetric m) {
        return {"unfairness", Direction::minimize, Field::unfairness, m};
    }

    double raw(const OperatingPoint& p) const {
        switch (field) {
            case Field::sparsity: return p.sparsity;
            case Field::total_accuracy: return p.total_accuracy;
            case Field::unfairness: {
                const auto it = p.unfairness.find(metric);
                if (it == p.unfairness.end())
                    throw UndefinedValue("operating point has no " +
                                         std::string(metrics::to_string(metric)) + " unfairness");
                return it->second;
            }
        }
        return 0.0;
    }

    /// Objective value oriented so that larger is better.
    double oriented(const OperatingPoint& p) const {
        const double v = raw(p);
        return direction == Direction::maximize ? v : -v;
    }
};

/// Linear weights keyed by objective name, applied to oriented values.
struct ValueFunction {
    std::map<std::string, double> weights;

    double weight(const std::string& name) const {
        const auto it = weights.find(name);
        return it == weights.end() ? 0.0 : it->second;
    }
};

/// Candidates with total accuracy >= min_accuracy, in input order. Throws
/// EmptyFeasibleSet when nothing survives.
inline std::vector<OperatingPoint> filter_constraint(std::span<const OperatingPoint> candidates,
                                                     double min_accuracy) {
    std::vector<OperatingPoint> out;
    for (const auto& p : candidates)
        if (p.total_accuracy >= min_accuracy)
            out.push_back(p);
    if (out.empty())
        throw EmptyFeasibleSet("no candidate reaches total accuracy " +
                               std::to_string(min_accuracy));
    return out;
}

/// Oriented objective matrix: row i holds candidate i's values.
inline std::vector<std::vector<double>> objective_matrix(std::span<const OperatingPoint> candidates,
                                                         std::span<const Objective> objectives) {
    std::vector<std::vector<double>> m(candidates.size(), std::vector<double>(objectives.size()));
    for (std::size_t i = 0; i < candidates.size(); ++i)
        for (std::size_t k = 0; k < objectives.size(); ++k)
            m[i][k] = objectives[k].oriented(candidates[i]);
    return m;
}

/// a weakly dominates b: a >= b everywhere and a > b somewhere.
inline bool dominates(std::span<const double> a, std::span<const double> b) {
    bool strict = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] < b[k])
            return false;
        strict = strict || a[k] > b[k];
    }
    return strict;
}

namespace detail {

/// Two objectives: sweep in decreasing order of the first objective.
inline std::vector<bool> frontier_2d(const std::vector<std::vector<double>>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a][0] > v[b][0]; });
    std::vector<bool> keep(v.size(), false);
    double best_prev = -INFINITY;  // best second objective among strictly larger first objective
    bool have_prev = false;
    for (std::size_t g = 0; g < order.size();) {
        std::size_t end = g;
        double group_max = -INFINITY;
        while (end < order.size() && v[order[end]][0] == v[order[g]][0]) {
            group_max = std::max(group_max, v[order[end]][1]);
            ++end;
        }
        if (!have_prev || group_max > best_prev)
            for (std::size_t i = g; i < end; ++i)
                keep[order[i]] = v[order[i]][1] == group_max;
        best_prev = have_prev ? std::max(best_prev, group_max) : group_max;
        have_prev = true;
        g = end;
    }
    return keep;
}

/// k objectives: sort-filter skyline. In lexicographically decreasing order a
/// dominator always precedes what it dominates, and by transitivity checking
/// against frontier members found so far is enough.
inline std::vector<bool> frontier_kd(const std::vector<std::vector<double>>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    std::vector<bool> keep(v.size(), false);
    std::vector<std::size_t> window;
    for (std::size_t idx : order) {
        const bool dominated = std::any_of(window.begin(), window.end(), [&](std::size_t w) {
            return dominates(v[w], v[idx]);
        });
        if (!dominated) {
            keep[idx] = true;
            window.push_back(idx);
        }
    }
    return keep;
}

}  // namespace detail

/// Per-candidate frontier membership. A candidate is excluded iff another
/// candidate is at least as good on every objective and strictly better on
/// one; exact duplicates are all kept.
inline std::vector<bool> frontier_mask(std::span<const OperatingPoint> candidates,
                                       std::span<const Objective> objectives) {
    if (objectives.empty())
        throw ValidationError("at least one objective is required");
    const auto v = objective_matrix(candidates, objectives);
    for (const auto& row : v)
        for (double x : row)
            if (std::isnan(x))
                throw UndefinedValue("objective value is NaN");
    return objectives.size() == 2 ? detail::frontier_2d(v) : detail::frontier_kd(v);
}

/// Indices (ascending) of the Pareto-optimal candidates.
inline std::vector<std::size_t> pareto_frontier(std::span<const OperatingPoint> candidates,
                                                std::span<const Objective> objectives) {
    const auto keep = frontier_mask(candidates, objectives);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i])
            out.push_back(i);
    return out;
}

struct Selection {
    std::size_t chosen = 0;              // index into the scored points
    std::vector<std::size_t> tied;       // all indices within 1e-12 of the best, ascending
    std::vector<double> values;          // value of every point
};

inline double value_of(const OperatingPoint& p, std::span<const Objective> objectives,
                       const ValueFunction& vf) {
    double u = 0.0;
    for (const auto& o : objectives) {
        const double w = vf.weight(o.name);
        if (w != 0.0)
            u += w * o.oriented(p);
    }
    return u;
}

/// Maximizes sum_k w_k * oriented_k over `points` (normally the frontier).
inline Selection scalarize_select(std::span<const OperatingPoint> points,
                                  std::span<const Objective> objectives, const ValueFunction& vf) {
    if (points.empty())
        throw EmptyFeasibleSet("no operating point to select from");
    bool any_weight = false;
    for (const auto& o : objectives)
        any_weight = any_weight || vf.weight(o.name) != 0.0;
    if (!any_weight)
        throw ValidationError("value function needs at least one nonzero objective weight");
    Selection s;
    s.values.reserve(points.size());
    for (const auto& p : points)
        s.values.push_back(value_of(p, objectives, vf));
    const auto best = std::max_element(s.values.begin(), s.values.end());
    s.chosen = static_cast<std::size_t>(best - s.values.begin());
    for (std::size_t i = 0; i < s.values.size(); ++i)
        if (std::abs(s.values[i] - *best) <= 1e-12)
            s.tied.push_back(i);
    return s;
}

struct SelectionProblem {
    std::vector<OperatingPoint> candidates;
    double min_accuracy = 0.98;
    std::vector<Objective> objectives;

    void validate() const {
        if (objectives.size() < 2)
            throw ValidationError("a selection problem needs at least two objectives");
        std::set<std::string> names;
        for (const auto& o : objectives)
            if (!names.insert(o.name).second)
                throw ValidationError("duplicate objective name '" + o.name + "'");
    }
};

/// Indices refer to `SelectionProblem::candidates`.
struct SelectionOutcome {
    std::vector<std::size_t> feasible;
    std::vector<bool> on_frontier;  // per candidate; false for infeasible ones
    std::vector<std::size_t> frontier;
    std::size_t chosen = 0;
    std::vector<std::size_t> tied;
};

/// Constraint filter, then frontier, then scalarization over the frontier.
inline SelectionOutcome solve(const SelectionProblem& problem, const ValueFunction& vf) {
    problem.validate();
    SelectionOutcome out;
    std::vector<OperatingPoint> feasible;
    for (std::size_t i = 0; i < problem.candidates.size(); ++i)
        if (problem.candidates[i].total_accuracy >= problem.min_accuracy) {
            out.feasible.push_back(i);
            feasible.push_back(problem.candidates[i]);
        }
    if (feasible.empty())
        throw EmptyFeasibleSet("no candidate reaches total accuracy " +
                               std::to_string(problem.min_accuracy));
    const auto front = pareto_frontier(feasible, problem.objectives);
    out.on_frontier.assign(problem.candidates.size(), false);
    std::vector<OperatingPoint> front_points;
    for (std::size_t f : front) {
        out.frontier.push_back(out.feasible[f]);
        out.on_frontier[out.feasible[f]] = true;
        front_points.push_back(feasible[f]);
    }
    const auto sel = scalarize_select(front_points, problem.objectives, vf);
    out.chosen = out.frontier[sel.chosen];
    for (std::size_t t : sel.tied)
        out.tied.push_back(out.frontier[t]);
    return out;
}

}  // namespace prunefair::pareto
