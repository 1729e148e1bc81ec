#pragma once

// Class-accuracy model: design matrix over experiment records, OLS fit with
// classic standard errors, one-tailed coefficient tests and fit diagnostics.
//
// Terms, in column order (categorical baselines dropped):
//   Intercept
//   dataset[T.*], model[T.*], weight_treatment[T.*], pruning_technique[T.*]
//   weight_treatment[T.*]:pruning_technique[T.*]
//   exp(sparsity), exp(sparsity):dataset[T.*], exp(sparsity):pruning_technique[T.*]
//   sparsity
//   accuracy0, accuracy0:weight_treatment[T.*], accuracy0:pruning_technique[T.*]
//   accuracy0_quartile, imbalance, class_entropy
//   exp(sparsity):accuracy0, accuracy0:accuracy0_quartile

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "prunefair/errors.hpp"

namespace prunefair::regression {

struct ExperimentRecord {
    double accuracy = 0.0;
    double sparsity = 0.0;
    double accuracy0 = 0.0;
    int accuracy0_quartile = 1;
    double imbalance = 0.0;
    double class_entropy = 0.0;
    std::string dataset;
    std::string model;
    std::string treatment;
    std::string technique;
};

/// Levels of one categorical variable in registration order. The first level
/// present in the data is the baseline.
struct Vocabulary {
    std::string name;
    std::vector<std::string> levels;
};

struct Registry {
    Vocabulary dataset{"dataset",
                       {"cifar-10", "cifar-100", "emnist", "fashionmnist", "kmnist", "mnist", "svhn"}};
    Vocabulary model{"model", {"alexnet", "LeNet", "resnet18", "vgg11"}};
    Vocabulary treatment{"weight_treatment", {"finetune", "rewind"}};
    Vocabulary technique{"pruning_technique",
                         {"global_unstructured", "l1_structured", "l1_unstructured",
                          "l2_structured", "linfty_structured", "random_structured",
                          "random_unstructured"}};
};

struct DesignMatrix {
    std::vector<std::string> columns;
    Eigen::MatrixXd rows;
    std::map<std::string, std::string> baselines;  // categorical name -> baseline level

    std::ptrdiff_t column_index(std::string_view name) const {
        const auto it = std::find(columns.begin(), columns.end(), name);
        return it == columns.end() ? -1 : it - columns.begin();
    }
};

namespace detail {

/// Levels present in `values`, registry order first, unknown levels after in
/// order of appearance.
inline std::vector<std::string> present_levels(const Vocabulary& vocab,
                                               const std::vector<std::string>& values) {
    std::vector<std::string> out;
    for (const auto& level : vocab.levels)
        if (std::find(values.begin(), values.end(), level) != values.end())
            out.push_back(level);
    for (const auto& v : values)
        if (std::find(out.begin(), out.end(), v) == out.end())
            out.push_back(v);
    return out;
}

struct Dummy {
    std::string name;  // e.g. "pruning_technique[T.l1_structured]"
    std::string level;
};

inline std::vector<Dummy> dummies(const Vocabulary& vocab, const std::vector<std::string>& levels) {
    std::vector<Dummy> out;
    for (std::size_t i = 1; i < levels.size(); ++i)
        out.push_back({vocab.name + "[T." + levels[i] + "]", levels[i]});
    return out;
}

using Term = std::function<double(const ExperimentRecord&)>;

}  // namespace detail

/// Finds the first column that is (numerically) a linear combination of the
/// columns before it. Returns the offending column followed by the earlier
/// columns it depends on, or an empty vector for full column rank.
inline std::vector<std::string> find_collinear(const DesignMatrix& X) {
    const auto n = X.rows.rows();
    const auto p = X.rows.cols();
    if (n < p)
        return {X.columns.empty() ? std::string("(none)") : X.columns.back()};
    std::vector<Eigen::VectorXd> basis;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < p; ++j) {
        Eigen::VectorXd v = X.rows.col(j);
        const double norm0 = v.norm();
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : basis)
                v -= q.dot(v) * q;
        const double norm = v.norm();
        if (norm0 == 0.0 || norm <= 1e-9 * norm0) {
            std::vector<std::string> out{X.columns[static_cast<std::size_t>(j)]};
            if (norm0 == 0.0 || kept.empty())
                return out;
            Eigen::MatrixXd prev(n, static_cast<Eigen::Index>(kept.size()));
            for (std::size_t i = 0; i < kept.size(); ++i)
                prev.col(static_cast<Eigen::Index>(i)) = X.rows.col(kept[i]);
            const Eigen::VectorXd coef = prev.colPivHouseholderQr().solve(X.rows.col(j));
            for (std::size_t i = 0; i < kept.size(); ++i)
                if (std::abs(coef(static_cast<Eigen::Index>(i))) > 1e-8)
                    out.push_back(X.columns[static_cast<std::size_t>(kept[i])]);
            return out;
        }
        basis.push_back(v / norm);
        kept.push_back(j);
    }
    return {};
}

inline void require_full_rank(const DesignMatrix& X) {
    if (X.rows.rows() < X.rows.cols())
        throw RankDeficiency("design matrix has " + std::to_string(X.rows.rows()) + " rows but " +
                                 std::to_string(X.rows.cols()) + " columns",
                             {});
    const auto bad = find_collinear(X);
    if (bad.empty())
        return;
    std::string msg = "rank-deficient design matrix: column '" + bad.front() + "'";
    if (bad.size() == 1) {
        msg += " is zero or collinear with earlier columns";
    } else {
        msg += " is collinear with";
        for (std::size_t i = 1; i < bad.size(); ++i)
            msg += (i == 1 ? " '" : ", '") + bad[i] + "'";
    }
    throw RankDeficiency(msg, bad);
}

/// Expands records into the model's design matrix and checks its rank.
inline DesignMatrix build_design_matrix(std::span<const ExperimentRecord> records,
                                        const Registry& registry = {}) {
    if (records.empty())
        throw RankDeficiency("no experiment records to build a design matrix from", {});

    std::vector<std::string> ds, md, tr, tq;
    for (const auto& r : records) {
        ds.push_back(r.dataset);
        md.push_back(r.model);
        tr.push_back(r.treatment);
        tq.push_back(r.technique);
    }
    const auto ds_levels = detail::present_levels(registry.dataset, ds);
    const auto md_levels = detail::present_levels(registry.model, md);
    const auto tr_levels = detail::present_levels(registry.treatment, tr);
    const auto tq_levels = detail::present_levels(registry.technique, tq);
    const auto d_ds = detail::dummies(registry.dataset, ds_levels);
    const auto d_md = detail::dummies(registry.model, md_levels);
    const auto d_tr = detail::dummies(registry.treatment, tr_levels);
    const auto d_tq = detail::dummies(registry.technique, tq_levels);

    std::vector<std::pair<std::string, detail::Term>> terms;
    const auto add = [&](std::string name, detail::Term f) { terms.emplace_back(std::move(name), std::move(f)); };
    const auto ind = [](std::string ExperimentRecord::*field, std::string level) {
        return [field, level](const ExperimentRecord& r) { return r.*field == level ? 1.0 : 0.0; };
    };
    const auto expo = [](const ExperimentRecord& r) { return std::exp(r.sparsity); };

    add("Intercept", [](const ExperimentRecord&) { return 1.0; });
    for (const auto& d : d_ds)
        add(d.name, ind(&ExperimentRecord::dataset, d.level));
    for (const auto& d : d_md)
        add(d.name, ind(&ExperimentRecord::model, d.level));
    for (const auto& d : d_tr)
        add(d.name, ind(&ExperimentRecord::treatment, d.level));
    for (const auto& d : d_tq)
        add(d.name, ind(&ExperimentRecord::technique, d.level));
    for (const auto& a : d_tr)
        for (const auto& b : d_tq) {
            auto fa = ind(&ExperimentRecord::treatment, a.level);
            auto fb = ind(&ExperimentRecord::technique, b.level);
            add(a.name + ":" + b.name, [fa, fb](const ExperimentRecord& r) { return fa(r) * fb(r); });
        }
    add("exp(sparsity)", expo);
    for (const auto& d : d_ds) {
        auto f = ind(&ExperimentRecord::dataset, d.level);
        add("exp(sparsity):" + d.name, [f, expo](const ExperimentRecord& r) { return expo(r) * f(r); });
    }
    for (const auto& d : d_tq) {
        auto f = ind(&ExperimentRecord::technique, d.level);
        add("exp(sparsity):" + d.name, [f, expo](const ExperimentRecord& r) { return expo(r) * f(r); });
    }
    add("sparsity", [](const ExperimentRecord& r) { return r.sparsity; });
    add("accuracy0", [](const ExperimentRecord& r) { return r.accuracy0; });
    for (const auto& d : d_tr) {
        auto f = ind(&ExperimentRecord::treatment, d.level);
        add("accuracy0:" + d.name, [f](const ExperimentRecord& r) { return r.accuracy0 * f(r); });
    }
    for (const auto& d : d_tq) {
        auto f = ind(&ExperimentRecord::technique, d.level);
        add("accuracy0:" + d.name, [f](const ExperimentRecord& r) { return r.accuracy0 * f(r); });
    }
    add("accuracy0_quartile", [](const ExperimentRecord& r) { return double(r.accuracy0_quartile); });
    add("imbalance", [](const ExperimentRecord& r) { return r.imbalance; });
    add("class_entropy", [](const ExperimentRecord& r) { return r.class_entropy; });
    add("exp(sparsity):accuracy0",
        [expo](const ExperimentRecord& r) { return expo(r) * r.accuracy0; });
    add("accuracy0:accuracy0_quartile",
        [](const ExperimentRecord& r) { return r.accuracy0 * double(r.accuracy0_quartile); });

    DesignMatrix X;
    X.rows.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(terms.size()));
    for (std::size_t j = 0; j < terms.size(); ++j) {
        X.columns.push_back(terms[j].first);
        for (std::size_t i = 0; i < records.size(); ++i)
            X.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                terms[j].second(records[i]);
    }
    X.baselines[registry.dataset.name] = ds_levels.front();
    X.baselines[registry.model.name] = md_levels.front();
    X.baselines[registry.treatment.name] = tr_levels.front();
    X.baselines[registry.technique.name] = tq_levels.front();
    require_full_rank(X);
    return X;
}

struct OlsFit {
    std::vector<std::string> columns;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd std_errors;
    Eigen::VectorXd t_stats;
    Eigen::VectorXd p_two_tailed;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    double r_squared = 0.0;
    double adj_r_squared = 0.0;
    double sigma2 = 0.0;
    std::size_t n_obs = 0;
    std::size_t df_model = 0;  // columns excluding the intercept
    std::size_t df_resid = 0;

    std::ptrdiff_t index(std::string_view term) const {
        const auto it = std::find(columns.begin(), columns.end(), term);
        return it == columns.end() ? -1 : it - columns.begin();
    }
};

/// Upper tail P(T > t) of Student's t with `df` degrees of freedom.
inline double student_t_upper_tail(double t, double df) {
    if (!std::isfinite(t))
        return t > 0 ? 0.0 : 1.0;
    boost::math::students_t dist(df);
    return boost::math::cdf(boost::math::complement(dist, t));
}

/// Least squares via Householder QR. Standard errors assume spherical
/// errors: Var(beta) = sigma^2 (X^T X)^-1 with sigma^2 = RSS / (n - p).
inline OlsFit fit_ols(const DesignMatrix& X, const Eigen::VectorXd& y) {
    const auto n = X.rows.rows();
    const auto p = X.rows.cols();
    if (y.size() != n)
        throw DimensionError("target has " + std::to_string(y.size()) + " values, design has " +
                             std::to_string(n) + " rows");
    require_full_rank(X);

    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(X.rows);
    OlsFit fit;
    fit.columns = X.columns;
    fit.coefficients = qr.solve(y);
    fit.fitted = X.rows * fit.coefficients;
    fit.residuals = y - fit.fitted;
    fit.n_obs = static_cast<std::size_t>(n);
    fit.df_resid = static_cast<std::size_t>(n - p);
    const bool has_intercept = X.column_index("Intercept") >= 0;
    fit.df_model = static_cast<std::size_t>(p) - (has_intercept ? 1 : 0);

    const double rss = fit.residuals.squaredNorm();
    const double tss = has_intercept ? (y.array() - y.mean()).matrix().squaredNorm() : y.squaredNorm();
    fit.r_squared = tss > 0 ? 1.0 - rss / tss : 1.0;
    const double dn = static_cast<double>(n);
    fit.adj_r_squared = fit.df_resid > 0
                            ? 1.0 - (1.0 - fit.r_squared) * (dn - (has_intercept ? 1.0 : 0.0)) /
                                        static_cast<double>(fit.df_resid)
                            : std::nan("");

    const Eigen::MatrixXd R =
        qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd R_inv =
        R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    fit.sigma2 = fit.df_resid > 0 ? rss / static_cast<double>(fit.df_resid) : std::nan("");
    fit.std_errors = (R_inv.rowwise().squaredNorm() * fit.sigma2).cwiseSqrt();
    fit.t_stats = fit.coefficients.cwiseQuotient(fit.std_errors);
    fit.p_two_tailed.resize(p);
    for (Eigen::Index j = 0; j < p; ++j)
        fit.p_two_tailed(j) =
            fit.df_resid > 0
                ? 2.0 * student_t_upper_tail(std::abs(fit.t_stats(j)), static_cast<double>(fit.df_resid))
                : std::nan("");
    return fit;
}

enum class Tail { greater, less };

struct TestResult {
    double t = 0.0;
    double p = 0.0;
};

/// One-tailed t-test of H0: beta = 0 against beta > 0 (greater) or beta < 0
/// (less), with the fit's residual degrees of freedom.
inline TestResult one_tailed_test(const OlsFit& fit, std::string_view term, Tail tail) {
    const auto j = fit.index(term);
    if (j < 0)
        throw ValidationError("unknown term '" + std::string(term) + "'");
    TestResult r;
    r.t = fit.coefficients(j) == 0.0 ? 0.0 : fit.t_stats(j);
    const double df = static_cast<double>(fit.df_resid);
    r.p = tail == Tail::greater ? student_t_upper_tail(r.t, df) : student_t_upper_tail(-r.t, df);
    return r;
}

struct Diagnostics {
    static constexpr std::size_t kResidualBins = 50;
    static constexpr double kResidualLo = -1.0;
    static constexpr double kResidualHi = 1.0;
    static constexpr std::size_t kTargetBins = 20;

    std::vector<std::size_t> residual_counts;  // kResidualBins bins on [lo, hi)
    std::size_t residual_underflow = 0;
    std::size_t residual_overflow = 0;
    /// predicted_vs_target[t][p]: share of rows in target bin t whose
    /// prediction falls in bin p (both binned on [0, 1]). Rows sum to 1 for
    /// non-empty target bins.
    std::vector<std::vector<double>> predicted_vs_target;
    std::vector<std::size_t> target_bin_counts;
    std::vector<double> mean_prediction;  // per target bin; NaN when empty
    double r_squared = 0.0;
    double adj_r_squared = 0.0;

    /// Bin index of a residual; 0 itself falls in the bin starting at 0.
    static std::ptrdiff_t residual_bin(double r) {
        const double width = (kResidualHi - kResidualLo) / kResidualBins;
        // Rounding noise around an exact fit should not straddle the bin edge at 0.
        if (std::abs(r) < 1e-12)
            r = 0.0;
        return static_cast<std::ptrdiff_t>(std::floor((r - kResidualLo) / width));
    }
};

inline Diagnostics diagnostics(const OlsFit& fit, const Eigen::VectorXd& y) {
    if (y.size() != fit.fitted.size())
        throw DimensionError("target length does not match the fit");
    Diagnostics d;
    d.r_squared = fit.r_squared;
    d.adj_r_squared = fit.adj_r_squared;
    d.residual_counts.assign(Diagnostics::kResidualBins, 0);
    for (Eigen::Index i = 0; i < fit.residuals.size(); ++i) {
        const auto b = Diagnostics::residual_bin(fit.residuals(i));
        if (b < 0)
            ++d.residual_underflow;
        else if (b >= static_cast<std::ptrdiff_t>(Diagnostics::kResidualBins))
            ++d.residual_overflow;
        else
            ++d.residual_counts[static_cast<std::size_t>(b)];
    }
    const std::size_t nb = Diagnostics::kTargetBins;
    const auto bin01 = [nb](double v) {
        const auto b = static_cast<std::ptrdiff_t>(std::floor(v * static_cast<double>(nb)));
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(nb) - 1));
    };
    d.predicted_vs_target.assign(nb, std::vector<double>(nb, 0.0));
    d.target_bin_counts.assign(nb, 0);
    std::vector<double> pred_sum(nb, 0.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const std::size_t tb = bin01(y(i));
        d.predicted_vs_target[tb][bin01(fit.fitted(i))] += 1.0;
        ++d.target_bin_counts[tb];
        pred_sum[tb] += fit.fitted(i);
    }
    d.mean_prediction.assign(nb, std::nan(""));
    for (std::size_t t = 0; t < nb; ++t) {
        if (d.target_bin_counts[t] == 0)
            continue;
        const double n = static_cast<double>(d.target_bin_counts[t]);
        for (double& v : d.predicted_vs_target[t])
            v /= n;
        d.mean_prediction[t] = pred_sum[t] / n;
    }
    return d;
}

}  // namespace prunefair::regression
