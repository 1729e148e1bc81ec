#include <gtest/gtest.h>

#include <vector>

#include "prunefair/pareto.hpp"
#include "prunefair/rng.hpp"

using namespace prunefair;
using namespace prunefair::pareto;
using metrics::FairnessMetric;

namespace {

OperatingPoint point(double sparsity, double unfair, double accuracy = 0.99) {
    OperatingPoint p;
    p.sparsity = sparsity;
    p.total_accuracy = accuracy;
    p.unfairness[FairnessMetric::max_min_gap] = unfair;
    p.unfairness[FairnessMetric::mean_min_gap] = unfair / 2;
    return p;
}

std::vector<Objective> sparse_fair() {
    return {Objective::sparsity(), Objective::unfairness(FairnessMetric::max_min_gap)};
}

// O(n^2) pairwise weak-dominance check.
std::vector<std::size_t> brute_force_frontier(const std::vector<OperatingPoint>& pts,
                                              const std::vector<Objective>& objs) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
            bool all_ge = true, some_gt = false;
            for (const auto& o : objs) {
                const double a = o.oriented(pts[j]), b = o.oriented(pts[i]);
                all_ge = all_ge && a >= b;
                some_gt = some_gt || a > b;
            }
            dominated = all_ge && some_gt;
        }
        if (!dominated)
            out.push_back(i);
    }
    return out;
}

}  // namespace

TEST(Filter, Examples) {
    const std::vector<OperatingPoint> c = {point(0.1, 0.1, 0.99), point(0.2, 0.1, 0.97)};
    EXPECT_EQ(filter_constraint(c, 0.98).size(), 1u);
    EXPECT_EQ(filter_constraint(c, 0.98)[0].total_accuracy, 0.99);
    EXPECT_EQ(filter_constraint(c, 0.0).size(), 2u);
    EXPECT_THROW(filter_constraint(c, 1.01), EmptyFeasibleSet);
}

TEST(Frontier, OneDominatorWins) {
    const std::vector<OperatingPoint> c = {point(0.5, 0.10), point(0.6, 0.05), point(0.4, 0.20)};
    EXPECT_EQ(pareto_frontier(c, sparse_fair()), (std::vector<std::size_t>{1}));
}

TEST(Frontier, TradeOffPairBothKept) {
    const std::vector<OperatingPoint> c = {point(0.5, 0.05), point(0.7, 0.10)};
    EXPECT_EQ(pareto_frontier(c, sparse_fair()), (std::vector<std::size_t>{0, 1}));
}

TEST(Frontier, DuplicatesAllRetained) {
    const std::vector<OperatingPoint> c = {point(0.5, 0.05), point(0.5, 0.05), point(0.4, 0.05)};
    EXPECT_EQ(pareto_frontier(c, sparse_fair()), (std::vector<std::size_t>{0, 1}));
    auto three = sparse_fair();
    three.push_back(Objective::accuracy());
    EXPECT_EQ(pareto_frontier(c, three), (std::vector<std::size_t>{0, 1}));
}

TEST(Frontier, EqualFirstObjectiveDominatedBySecond) {
    const std::vector<OperatingPoint> c = {point(0.5, 0.2), point(0.5, 0.1), point(0.6, 0.3)};
    EXPECT_EQ(pareto_frontier(c, sparse_fair()), (std::vector<std::size_t>{1, 2}));
}

TEST(Frontier, MatchesBruteForceOracleOnThousandPoints) {
    for (std::size_t k : {2u, 3u}) {
        Rng rng(100 + k);
        std::vector<OperatingPoint> pts;
        for (int i = 0; i < 1000; ++i) {
            // Coarse grid values force ties in single objectives.
            pts.push_back(point(std::round(rng.uniform() * 50) / 50, std::round(rng.uniform() * 50) / 50,
                                std::round(rng.uniform() * 50) / 50));
        }
        auto objs = sparse_fair();
        if (k == 3)
            objs.push_back(Objective::accuracy());
        EXPECT_EQ(pareto_frontier(pts, objs), brute_force_frontier(pts, objs)) << k;
    }
}

TEST(Frontier, UndefinedUnfairnessRejected) {
    OperatingPoint p;
    p.sparsity = 0.5;
    const std::vector<OperatingPoint> c = {p};
    EXPECT_THROW(pareto_frontier(c, sparse_fair()), UndefinedValue);
}

TEST(Scalarize, HundredTimesFairnessWeightPicksFairerPoint) {
    const std::vector<OperatingPoint> c = {point(0.68, 0.001), point(0.90, 0.010)};
    const ValueFunction vf{{{"sparsity", 1.0}, {"unfairness", 100.0}}};
    const auto s = scalarize_select(c, sparse_fair(), vf);
    EXPECT_EQ(s.chosen, 0u);
    EXPECT_NEAR(s.values[0], 0.58, 1e-12);
    EXPECT_NEAR(s.values[1], -0.10, 1e-12);
    EXPECT_EQ(s.tied, (std::vector<std::size_t>{0}));
}

TEST(Scalarize, SingleObjectiveWeightPicksMaxSparsity) {
    const std::vector<OperatingPoint> c = {point(0.68, 0.001), point(0.90, 0.010), point(0.75, 0.002)};
    const ValueFunction vf{{{"sparsity", 1.0}, {"unfairness", 0.0}}};
    EXPECT_EQ(scalarize_select(c, sparse_fair(), vf).chosen, 1u);
}

TEST(Scalarize, TiesAndErrors) {
    const std::vector<OperatingPoint> c = {point(0.5, 0.1), point(0.6, 0.2)};
    const ValueFunction vf{{{"sparsity", 1.0}, {"unfairness", 1.0}}};
    const auto s = scalarize_select(c, sparse_fair(), vf);
    EXPECT_EQ(s.tied, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(s.chosen, 0u);
    EXPECT_THROW(scalarize_select({}, sparse_fair(), vf), EmptyFeasibleSet);
    EXPECT_THROW(scalarize_select(c, sparse_fair(), ValueFunction{}), ValidationError);
}

TEST(Scalarize, SelectedPointAlwaysOnFrontier) {
    Rng rng(77);
    std::vector<OperatingPoint> pts;
    for (int i = 0; i < 200; ++i)
        pts.push_back(point(rng.uniform(), rng.uniform(0, 0.3), rng.uniform(0.9, 1.0)));
    const auto objs = sparse_fair();
    const auto front = pareto_frontier(pts, objs);
    for (int trial = 0; trial < 100; ++trial) {
        const ValueFunction vf{{{"sparsity", rng.uniform(0.01, 1)}, {"unfairness", rng.uniform(0.01, 100)}}};
        const auto s = scalarize_select(pts, objs, vf);
        EXPECT_TRUE(std::binary_search(front.begin(), front.end(), s.chosen));
    }
}

TEST(Solve, ConstraintFrontierAndSelection) {
    SelectionProblem prob;
    prob.candidates = {point(0.9, 0.01, 0.97), point(0.68, 0.001, 0.985), point(0.5, 0.002, 0.99),
                       point(0.8, 0.005, 0.981)};
    prob.objectives = sparse_fair();
    const ValueFunction vf{{{"sparsity", 1.0}, {"unfairness", 100.0}}};
    const auto out = solve(prob, vf);
    EXPECT_EQ(out.feasible, (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_EQ(out.frontier, (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(out.on_frontier, (std::vector<bool>{false, true, false, true}));
    // u(1) = 0.68 - 0.1 = 0.58, u(3) = 0.8 - 0.5 = 0.3.
    EXPECT_EQ(out.chosen, 1u);
    prob.min_accuracy = 0.999;
    EXPECT_THROW(solve(prob, vf), EmptyFeasibleSet);
}

TEST(Solve, ValidatesObjectives) {
    SelectionProblem prob;
    prob.candidates = {point(0.5, 0.1)};
    prob.objectives = {Objective::sparsity()};
    EXPECT_THROW(solve(prob, ValueFunction{{{"sparsity", 1}}}), ValidationError);
    prob.objectives = {Objective::sparsity(), Objective::sparsity()};
    EXPECT_THROW(solve(prob, ValueFunction{{{"sparsity", 1}}}), ValidationError);
}
