#pragma once

// Report drivers over experiment CSV rows: the regression fit summary, the
// seed-averaged operating-point selection with its frontier document, the
// per-class accuracy-sparsity curves, and the writer cohort analysis.

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunefair/cohort.hpp"
#include "prunefair/config.hpp"
#include "prunefair/dataset.hpp"
#include "prunefair/errors.hpp"
#include "prunefair/experiment.hpp"
#include "prunefair/metrics.hpp"
#include "prunefair/pareto.hpp"
#include "prunefair/pruning.hpp"
#include "prunefair/regression.hpp"

namespace prunefair::reports {

using experiment::Row;
using nlohmann::json;

namespace detail {

/// NaN and infinities become JSON null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Regression

/// Regression records: pruned rows (iteration >= 1) with defined accuracies.
/// The quartile population is one a0_c per (dataset, model, technique,
/// treatment, seed, class).
inline std::vector<regression::ExperimentRecord> to_records(const std::vector<Row>& rows) {
    std::map<std::tuple<std::string, std::string, std::string, std::string, std::uint64_t, int>, double> a0;
    for (const auto& r : rows)
        if (std::isfinite(r.accuracy0))
            a0.emplace(std::tuple{r.dataset, r.model, r.technique, r.treatment, r.seed, r.cls}, r.accuracy0);
    std::vector<double> population;
    for (const auto& [key, v] : a0)
        population.push_back(v);
    std::optional<metrics::QuartileCuts> cuts;
    if (!population.empty())
        cuts.emplace(population);

    std::vector<regression::ExperimentRecord> out;
    for (const auto& r : rows) {
        if (r.iteration == 0 || !std::isfinite(r.accuracy) || !std::isfinite(r.accuracy0) ||
            !std::isfinite(r.class_entropy))
            continue;
        regression::ExperimentRecord e;
        e.accuracy = r.accuracy;
        e.sparsity = r.sparsity;
        e.accuracy0 = r.accuracy0;
        e.accuracy0_quartile = (*cuts)(r.accuracy0);
        e.imbalance = r.imbalance;
        e.class_entropy = r.class_entropy;
        e.dataset = r.dataset;
        e.model = r.model;
        e.treatment = r.treatment;
        e.technique = r.technique;
        out.push_back(std::move(e));
    }
    return out;
}

struct FitReport {
    regression::OlsFit fit;
    regression::TestResult imbalance;      // H1: coefficient > 0
    regression::TestResult class_entropy;  // H1: coefficient < 0
    json document;
};

inline FitReport fit_report(const std::vector<Row>& rows) {
    const auto records = to_records(rows);
    const auto X = regression::build_design_matrix(records);
    Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = records[i].accuracy;
    FitReport rep;
    rep.fit = regression::fit_ols(X, y);
    rep.imbalance = regression::one_tailed_test(rep.fit, "imbalance", regression::Tail::greater);
    rep.class_entropy = regression::one_tailed_test(rep.fit, "class_entropy", regression::Tail::less);
    const auto diag = regression::diagnostics(rep.fit, y);

    json terms = json::array();
    for (std::size_t j = 0; j < rep.fit.columns.size(); ++j) {
        const auto k = static_cast<Eigen::Index>(j);
        terms.push_back({{"name", rep.fit.columns[j]},
                         {"coef", rep.fit.coefficients(k)},
                         {"std_error", detail::number_or_null(rep.fit.std_errors(k))},
                         {"t", detail::number_or_null(rep.fit.t_stats(k))},
                         {"p_two_tailed", detail::number_or_null(rep.fit.p_two_tailed(k))}});
    }
    json mean_pred = json::array();
    for (double v : diag.mean_prediction)
        mean_pred.push_back(detail::number_or_null(v));
    rep.document = {
        {"n_obs", rep.fit.n_obs},
        {"df_model", rep.fit.df_model},
        {"df_resid", rep.fit.df_resid},
        {"r_squared", rep.fit.r_squared},
        {"adj_r_squared", rep.fit.adj_r_squared},
        {"baselines", X.baselines},
        {"terms", terms},
        {"hypothesis_tests",
         json::array({{{"term", "imbalance"},
                       {"alternative", "greater"},
                       {"t", rep.imbalance.t},
                       {"p_one_tailed", rep.imbalance.p}},
                      {{"term", "class_entropy"},
                       {"alternative", "less"},
                       {"t", rep.class_entropy.t},
                       {"p_one_tailed", rep.class_entropy.p}}})},
        {"diagnostics",
         {{"residual_histogram",
           {{"lo", regression::Diagnostics::kResidualLo},
            {"hi", regression::Diagnostics::kResidualHi},
            {"counts", diag.residual_counts},
            {"underflow", diag.residual_underflow},
            {"overflow", diag.residual_overflow}}},
          {"predicted_vs_target",
           {{"bins", regression::Diagnostics::kTargetBins},
            {"shares", diag.predicted_vs_target},
            {"target_counts", diag.target_bin_counts},
            {"mean_prediction", mean_pred}}}}}};
    return rep;
}

// ---------------------------------------------------------------------------
// Selection

struct Candidate {
    metrics::OperatingPoint point;  // seed-averaged; `seed` unused
    std::string dataset;
    std::string model;
    std::size_t n_seeds = 0;
};

/// Averages rows over seeds per (dataset, model, technique, treatment,
/// iteration), in order of first appearance. Sparsity, total accuracy and
/// each class accuracy are averaged directly; unfairness is the average of
/// the per-seed unfairness values and is absent when any seed has an
/// undefined class accuracy.
inline std::vector<Candidate> seed_average(const std::vector<Row>& rows,
                                           const std::optional<std::vector<std::uint64_t>>& seed_list = {}) {
    using Key = std::tuple<std::string, std::string, std::string, std::string, std::size_t>;
    struct SeedPoint {
        double sparsity = 0.0;
        double total = 0.0;
        std::map<int, double> per_class;
    };
    std::vector<Key> order;
    std::map<Key, std::map<std::uint64_t, SeedPoint>> groups;
    for (const auto& r : rows) {
        if (seed_list && std::find(seed_list->begin(), seed_list->end(), r.seed) == seed_list->end())
            continue;
        Key key{r.dataset, r.model, r.technique, r.treatment, r.iteration};
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted)
            order.push_back(key);
        auto& sp = it->second[r.seed];
        sp.sparsity = r.sparsity;
        sp.total = r.total_accuracy;
        if (!sp.per_class.emplace(r.cls, r.accuracy).second)
            throw ValidationError("duplicate row for class " + std::to_string(r.cls) + " of " + r.technique + "/" +
                                  r.treatment + " seed " + std::to_string(r.seed) + " iteration " +
                                  std::to_string(r.iteration));
    }
    std::vector<Candidate> out;
    for (const auto& key : order) {
        const auto& seeds = groups.at(key);
        Candidate c;
        std::tie(c.dataset, c.model, std::ignore, std::ignore, c.point.iteration) = key;
        c.point.technique = *parse_technique(std::get<2>(key));
        c.point.treatment = *parse_treatment(std::get<3>(key));
        c.n_seeds = seeds.size();
        int n_classes = 0;
        for (const auto& [s, sp] : seeds)
            n_classes = std::max(n_classes, sp.per_class.empty() ? 0 : sp.per_class.rbegin()->first + 1);
        std::vector<double> class_sum(static_cast<std::size_t>(n_classes), 0.0);
        std::map<metrics::FairnessMetric, double> unfair_sum;
        bool unfair_defined = true;
        const double n = static_cast<double>(seeds.size());
        for (const auto& [s, sp] : seeds) {
            c.point.sparsity += sp.sparsity / n;
            c.point.total_accuracy += sp.total / n;
            std::vector<double> vec;
            for (int k = 0; k < n_classes; ++k) {
                const auto it = sp.per_class.find(k);
                const double a = it == sp.per_class.end() ? std::nan("") : it->second;
                class_sum[static_cast<std::size_t>(k)] += a;
                vec.push_back(a);
                unfair_defined = unfair_defined && std::isfinite(a);
            }
            if (unfair_defined)
                for (auto m : {metrics::FairnessMetric::max_min_gap, metrics::FairnessMetric::mean_min_gap})
                    unfair_sum[m] += metrics::unfairness(std::span<const double>(vec), m);
        }
        for (double v : class_sum)
            c.point.per_class_accuracy.push_back(std::isfinite(v) ? std::optional(v / n) : std::nullopt);
        if (unfair_defined)
            for (const auto& [m, v] : unfair_sum)
                c.point.unfairness[m] = v / n;
        out.push_back(std::move(c));
    }
    return out;
}

struct SelectOptions {
    double min_accuracy = 0.98;
    metrics::FairnessMetric metric = metrics::FairnessMetric::max_min_gap;
    std::vector<std::string> objectives = {"sparsity", "unfairness"};
    std::map<std::string, double> weights;  // missing objectives weigh 1
    std::optional<std::vector<std::uint64_t>> seed_list;
};

inline pareto::Objective objective_named(const std::string& name, metrics::FairnessMetric metric) {
    if (name == "sparsity")
        return pareto::Objective::sparsity();
    if (name == "accuracy")
        return pareto::Objective::accuracy();
    if (name == "unfairness")
        return pareto::Objective::unfairness(metric);
    throw ValidationError("unknown objective '" + name + "' (expected sparsity, unfairness or accuracy)");
}

struct SelectReport {
    std::vector<Candidate> candidates;
    std::optional<pareto::SelectionOutcome> outcome;  // empty when nothing is feasible
    json document;                                    // frontier document
};

/// Seed-averages, filters on total accuracy, computes the frontier and picks
/// the value-maximizing frontier member. The document lists every candidate;
/// `selection.chosen_index` is null when the feasible set is empty.
inline SelectReport select_report(const std::vector<Row>& rows, const SelectOptions& opts) {
    SelectReport rep;
    rep.candidates = seed_average(rows, opts.seed_list);
    if (rep.candidates.empty())
        throw ValidationError("no candidates to select from");

    pareto::SelectionProblem problem;
    problem.min_accuracy = opts.min_accuracy;
    for (const auto& name : opts.objectives)
        problem.objectives.push_back(objective_named(name, opts.metric));
    problem.validate();
    pareto::ValueFunction vf;
    for (const auto& o : problem.objectives)
        vf.weights[o.name] = 1.0;
    for (const auto& [name, w] : opts.weights) {
        if (!vf.weights.count(name))
            throw ValidationError("weight given for '" + name + "', which is not an objective");
        if (!std::isfinite(w))
            throw ValidationError("weight for '" + name + "' is not finite");
        vf.weights[name] = w;
    }
    for (const auto& c : rep.candidates)
        problem.candidates.push_back(c.point);

    try {
        rep.outcome = pareto::solve(problem, vf);
    } catch (const EmptyFeasibleSet&) {
        rep.outcome.reset();
    }

    json objectives = json::array();
    for (const auto& o : problem.objectives) {
        json j = {{"name", o.name}, {"direction", o.direction == pareto::Direction::maximize ? "maximize" : "minimize"}};
        if (o.field == pareto::Field::unfairness)
            j["metric"] = metrics::to_string(o.metric);
        objectives.push_back(std::move(j));
    }
    json cands = json::array();
    for (std::size_t i = 0; i < rep.candidates.size(); ++i) {
        const auto& c = rep.candidates[i];
        json unfair = json::object();
        for (const auto& [m, v] : c.point.unfairness)
            unfair[std::string(metrics::to_string(m))] = v;
        json per_class = json::array();
        for (const auto& a : c.point.per_class_accuracy)
            per_class.push_back(a ? json(*a) : json(nullptr));
        cands.push_back({{"technique", to_string(c.point.technique)},
                         {"treatment", to_string(c.point.treatment)},
                         {"sparsity", c.point.sparsity},
                         {"total_accuracy", c.point.total_accuracy},
                         {"unfairness", unfair},
                         {"per_class_accuracy", per_class},
                         {"on_frontier", rep.outcome ? bool(rep.outcome->on_frontier[i]) : false},
                         {"dataset", c.dataset},
                         {"model", c.model},
                         {"iteration", c.point.iteration},
                         {"n_seeds", c.n_seeds}});
    }
    json selection = {{"weights", vf.weights}};
    selection["chosen_index"] = rep.outcome ? json(rep.outcome->chosen) : json(nullptr);
    selection["tied_indices"] = rep.outcome ? json(rep.outcome->tied) : json::array();
    rep.document = {{"objectives", objectives},
                    {"constraint", {{"min_accuracy", opts.min_accuracy}}},
                    {"candidates", cands},
                    {"selection", selection}};
    return rep;
}

// ---------------------------------------------------------------------------
// Curves

struct CurvePoint {
    std::size_t iteration = 0;
    double sparsity = 0.0;
    double accuracy = 0.0;
};

struct Series {
    std::string dataset, model, technique, treatment;
    std::uint64_t seed = 0;
    int cls = 0;
    double accuracy0 = 0.0;
    std::vector<CurvePoint> points;  // ascending iteration
};

/// One (sparsity, accuracy) series per class of every trajectory.
inline std::vector<Series> curves(const std::vector<Row>& rows) {
    using Key = std::tuple<std::string, std::string, std::string, std::string, std::uint64_t, int>;
    std::vector<Key> order;
    std::map<Key, Series> by_key;
    for (const auto& r : rows) {
        Key key{r.dataset, r.model, r.technique, r.treatment, r.seed, r.cls};
        auto [it, inserted] = by_key.try_emplace(key);
        if (inserted) {
            order.push_back(key);
            it->second = Series{r.dataset, r.model, r.technique, r.treatment, r.seed, r.cls, r.accuracy0, {}};
        }
        it->second.points.push_back({r.iteration, r.sparsity, r.accuracy});
    }
    std::vector<Series> out;
    for (const auto& key : order) {
        auto s = std::move(by_key.at(key));
        std::stable_sort(s.points.begin(), s.points.end(),
                         [](const CurvePoint& a, const CurvePoint& b) { return a.iteration < b.iteration; });
        out.push_back(std::move(s));
    }
    return out;
}

inline json curves_report(const std::vector<Row>& rows) {
    json series = json::array();
    for (const auto& s : curves(rows)) {
        json pts = json::array();
        for (const auto& p : s.points)
            pts.push_back({{"iteration", p.iteration},
                           {"sparsity", p.sparsity},
                           {"accuracy", detail::number_or_null(p.accuracy)}});
        series.push_back({{"dataset", s.dataset},
                          {"model", s.model},
                          {"technique", s.technique},
                          {"treatment", s.treatment},
                          {"seed", s.seed},
                          {"class", s.cls},
                          {"accuracy0", detail::number_or_null(s.accuracy0)},
                          {"points", pts}});
    }
    return {{"series", series}};
}

// ---------------------------------------------------------------------------
// Cohort analysis

struct CohortConfig {
    // synthetic writers (used when the idx paths are empty)
    dataset::CohortSpec spec;
    std::uint64_t train_seed = 1;
    std::uint64_t test_seed = 2;
    std::uint64_t template_seed = 0;
    // idx with metadata sidecars
    std::filesystem::path train_images, train_labels, test_images, test_labels, test_metadata;

    config::ModelConfig model;
    netcore::TrainConfig train;
    pruning::PruneSchedule schedule;
    PruneTechnique technique = PruneTechnique::global_unstructured;
    WeightTreatment treatment = WeightTreatment::rewind;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> output;
};

/// Reads a cohort config. Sections: [dataset] (image geometry and, for idx
/// data, file paths), [cohort] (writer groups), [model], [train], [prune].
inline CohortConfig parse_cohort_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
    config::Reader r(config::parse_table(in));
    CohortConfig c;
    const auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    if (auto out = r.string("experiment.output"))
        c.output = resolve(*out);
    for (auto [key, dst] : {std::pair{"dataset.train_images", &c.train_images},
                            std::pair{"dataset.train_labels", &c.train_labels},
                            std::pair{"dataset.test_images", &c.test_images},
                            std::pair{"dataset.test_labels", &c.test_labels},
                            std::pair{"dataset.test_metadata", &c.test_metadata}})
        if (auto p = r.string(key))
            *dst = resolve(*p);

    auto& base = c.spec.base;
    base.rows = r.count("dataset.rows").value_or(16);
    base.cols = r.count("dataset.cols").value_or(16);
    base.strokes_per_class = r.count("dataset.strokes_per_class").value_or(base.strokes_per_class);
    base.thickness = r.number("dataset.thickness").value_or(base.thickness);
    const std::size_t n_classes = r.count("dataset.classes").value_or(10);
    const double noise = r.number("dataset.noise").value_or(0.1);
    const double shift = r.number("dataset.shift").value_or(1.0);
    for (std::size_t k = 0; k < n_classes; ++k) {
        dataset::ClassSpec cls;
        cls.count = 1;
        cls.noise = noise;
        cls.shift = shift;
        base.classes.push_back(cls);
    }
    const auto names = r.strings("cohort.groups").value_or(std::vector<std::string>{"hsf0", "hsf4"});
    const auto writers = r.counts("cohort.writers").value_or(std::vector<std::uint64_t>(names.size(), 20));
    const auto means = r.numbers("cohort.tilt_mean").value_or(std::vector<double>(names.size(), 0.0));
    const auto spreads = r.numbers("cohort.tilt_spread").value_or(std::vector<double>(names.size(), 0.2));
    if (writers.size() != names.size() || means.size() != names.size() || spreads.size() != names.size())
        throw ValidationError("cohort.writers, cohort.tilt_mean and cohort.tilt_spread need one entry per group");
    for (std::size_t g = 0; g < names.size(); ++g)
        c.spec.groups.push_back({names[g], writers[g], means[g], spreads[g]});
    c.spec.min_digits = r.count("cohort.min_digits").value_or(c.spec.min_digits);
    c.spec.max_digits = r.count("cohort.max_digits").value_or(c.spec.max_digits);
    c.spec.per_image_tilt_jitter = r.number("cohort.per_image_tilt_jitter").value_or(c.spec.per_image_tilt_jitter);
    c.spec.thickness_spread = r.number("cohort.thickness_spread").value_or(c.spec.thickness_spread);
    c.train_seed = r.count("cohort.train_seed").value_or(c.train_seed);
    c.test_seed = r.count("cohort.test_seed").value_or(c.test_seed);
    c.template_seed = r.count("cohort.template_seed").value_or(c.template_seed);

    const auto arch = r.string("model.arch").value_or("lenet");
    if (arch != "lenet" && arch != "mlp")
        throw ValidationError("model.arch must be \"lenet\" or \"mlp\"");
    c.model.arch = arch == "lenet" ? config::Architecture::lenet : config::Architecture::mlp;
    if (auto h = r.counts("model.hidden"))
        c.model.hidden.assign(h->begin(), h->end());
    c.model.name = r.string("model.name").value_or(arch == "lenet" ? "LeNet" : "mlp");
    c.train.epochs = r.count("train.epochs").value_or(c.train.epochs);
    c.train.learning_rate = r.number("train.learning_rate").value_or(c.train.learning_rate);
    c.train.batch_size = r.count("train.batch_size").value_or(c.train.batch_size);
    c.train.augmentation.crop_padding = r.count("train.crop_padding").value_or(0);
    c.train.augmentation.horizontal_flip = r.boolean("train.horizontal_flip").value_or(false);
    c.schedule.iterations = r.count("prune.iterations").value_or(c.schedule.iterations);
    c.schedule.fraction_per_iteration = r.number("prune.fraction").value_or(c.schedule.fraction_per_iteration);
    if (auto t = r.string("prune.technique")) {
        const auto tq = parse_technique(*t);
        if (!tq)
            throw ValidationError("unknown pruning technique '" + *t + "'");
        c.technique = *tq;
    }
    if (auto t = r.string("prune.treatment")) {
        const auto tr = parse_treatment(*t);
        if (!tr)
            throw ValidationError("unknown weight treatment '" + *t + "'");
        c.treatment = *tr;
    }
    c.seed = r.count("prune.seed").value_or(0);
    r.finish();
    c.train.validate();
    c.schedule.validate();
    return c;
}

struct CohortResult {
    std::vector<cohort::WriterRecord> writers;
    double accuracy_before = 0.0;
    double accuracy_after = 0.0;
    double sparsity_after = 0.0;
    json fits;  // per response, per feature: groups + full
};

inline json to_json(const cohort::GroupFits& f) {
    const auto one = [](const cohort::GroupFit& g) {
        return json{{"group", g.group},
                    {"intercept", g.intercept},
                    {"slope", g.slope},
                    {"slope_std_error", detail::number_or_null(g.slope_std_error)},
                    {"n", g.n}};
    };
    json groups = json::array();
    for (const auto& g : f.groups)
        groups.push_back(one(g));
    return {{"groups", groups}, {"full", f.full ? one(*f.full) : json(nullptr)}, {"warnings", f.warnings}};
}

inline json cohort_fits(const std::vector<cohort::WriterRecord>& writers) {
    using cohort::Feature;
    using cohort::Response;
    const std::pair<const char*, Feature> features[] = {{"mean_tilt", Feature::mean_tilt},
                                                        {"mean_abs_tilt", Feature::mean_abs_tilt},
                                                        {"mean_activation", Feature::mean_activation},
                                                        {"mean_euclid", Feature::mean_euclid}};
    const std::pair<const char*, Response> responses[] = {{"accuracy_before", Response::accuracy_before},
                                                          {"accuracy_after", Response::accuracy_after},
                                                          {"percent_change", Response::percent_change}};
    json out = json::object();
    for (const auto& [rname, resp] : responses)
        for (const auto& [fname, feat] : features)
            out[rname][fname] = to_json(cohort::group_linear_fit(writers, feat, resp));
    return out;
}

/// Trains on the training cohort, prunes along the schedule and compares
/// per-writer accuracy on the test cohort before and after.
inline CohortResult run_cohort(const CohortConfig& c) {
    dataset::LabeledDataset train, test;
    if (!c.train_images.empty()) {
        train = dataset::load_idx(c.train_images, c.train_labels);
        test = dataset::load_idx(c.test_images, c.test_labels);
        test.metadata = dataset::load_metadata_csv(c.test_metadata, test.size());
        train.num_classes = test.num_classes = std::max(train.num_classes, test.num_classes);
    } else {
        train = dataset::synthesize_writers(c.spec, c.train_seed, c.template_seed, 0);
        std::size_t n_writers = 0;
        for (const auto& g : c.spec.groups)
            n_writers += g.writers;
        test = dataset::synthesize_writers(c.spec, c.test_seed, c.template_seed,
                                           static_cast<std::int64_t>(n_writers));
    }
    config::ExperimentConfig shape_cfg;
    shape_cfg.model = c.model;
    auto net = experiment::make_network(shape_cfg, train, c.seed);
    Rng rng = Rng(c.seed).split("cohort-train");
    netcore::train(net, train, c.train, rng);
    const auto before = netcore::evaluate(net, test);
    Rng prune_rng = Rng(c.seed).split("cohort-prune");
    pruning::iterate(net, train, test, c.technique, c.treatment, c.schedule, c.train, prune_rng);
    const auto after = netcore::evaluate(net, test);

    CohortResult res;
    res.writers = cohort::writer_records(test, before, after, cohort::class_means(train));
    res.accuracy_before = metrics::total_accuracy(before, test.labels);
    res.accuracy_after = metrics::total_accuracy(after, test.labels);
    res.sparsity_after = pruning::sparsity_of(net);
    res.fits = cohort_fits(res.writers);
    return res;
}

}  // namespace prunefair::reports
