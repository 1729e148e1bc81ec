#pragma once

// Per-writer and per-group analysis of unpruned vs pruned models: writer
// accuracies, image features (tilt, mean activation, distance to the class
// mean), percent change and per-group linear fits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "prunefair/dataset.hpp"
#include "prunefair/errors.hpp"

namespace prunefair::cohort {

/// Slope of the least-squares line of column on row through the pixels
/// brighter than half the image maximum. 0 is vertical; positive means the
/// top of the stroke leans left. Empty when fewer than two pixels are active
/// or they all sit in one row.
inline std::optional<double> tilt(std::span<const double> image, std::size_t rows,
                                  std::size_t cols) {
    if (image.size() != rows * cols)
        throw DimensionError("image size does not match " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    if (image.empty())
        return std::nullopt;
    const double peak = *std::max_element(image.begin(), image.end());
    if (!(peak > 0.0))
        return std::nullopt;
    const double threshold = 0.5 * peak;
    double n = 0, sr = 0, sc = 0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            if (image[r * cols + c] > threshold) {
                n += 1;
                sr += static_cast<double>(r);
                sc += static_cast<double>(c);
            }
    if (n < 2)
        return std::nullopt;
    const double mr = sr / n, mc = sc / n;
    double srr = 0, src = 0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            if (image[r * cols + c] > threshold) {
                const double dr = static_cast<double>(r) - mr;
                srr += dr * dr;
                src += dr * (static_cast<double>(c) - mc);
            }
    if (srr == 0.0)
        return std::nullopt;
    return src / srr;
}

inline double mean_activation(std::span<const double> image) {
    if (image.empty())
        return 0.0;
    double s = 0.0;
    for (double v : image)
        s += v;
    return s / static_cast<double>(image.size());
}

/// Per-class mean image (normalized pixels), computed on a training split.
/// Classes without examples have an empty mean.
inline std::vector<std::vector<double>> class_means(const dataset::LabeledDataset& train) {
    std::vector<std::vector<double>> means(train.num_classes);
    std::vector<std::size_t> counts(train.num_classes, 0);
    std::vector<double> img(train.dim());
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto c = static_cast<std::size_t>(train.labels[i]);
        if (means[c].empty())
            means[c].assign(train.dim(), 0.0);
        train.normalized(i, img);
        for (std::size_t k = 0; k < img.size(); ++k)
            means[c][k] += img[k];
        ++counts[c];
    }
    for (std::size_t c = 0; c < means.size(); ++c)
        for (double& v : means[c])
            v /= static_cast<double>(counts[c]);
    return means;
}

inline double euclid_to_class_mean(std::span<const double> image, int label,
                                   const std::vector<std::vector<double>>& means) {
    if (label < 0 || static_cast<std::size_t>(label) >= means.size() ||
        means[static_cast<std::size_t>(label)].empty())
        throw ValidationError("no class mean for label " + std::to_string(label));
    const auto& m = means[static_cast<std::size_t>(label)];
    if (m.size() != image.size())
        throw DimensionError("class mean and image differ in size");
    double s = 0.0;
    for (std::size_t k = 0; k < image.size(); ++k) {
        const double d = image[k] - m[k];
        s += d * d;
    }
    return std::sqrt(s);
}

/// (after - before) / before; empty when before is zero.
inline std::optional<double> percent_change(double before, double after) {
    if (before == 0.0)
        return std::nullopt;
    return (after - before) / before;
}

struct ImageFeatureAverages {
    double mean_tilt = 0.0;
    double mean_abs_tilt = 0.0;
    double mean_activation = 0.0;
    double mean_euclid_to_class_mean = 0.0;
    std::size_t tilt_samples = 0;  // images with a defined tilt
};

struct WriterRecord {
    std::int64_t writer_id = 0;
    std::string group;
    std::size_t n_examples = 0;
    double accuracy_before = 0.0;
    double accuracy_after = 0.0;
    ImageFeatureAverages features;

    std::optional<double> pct_change() const {
        return percent_change(accuracy_before, accuracy_after);
    }
};

struct WriterAccuracy {
    std::int64_t writer_id = 0;
    std::string group;
    std::size_t n_examples = 0;
    std::size_t correct = 0;

    double accuracy() const {
        return static_cast<double>(correct) / static_cast<double>(n_examples);
    }
};

/// Fraction correct per writer, ordered by writer id.
inline std::vector<WriterAccuracy> per_writer_accuracy(std::span<const int> predictions,
                                                       std::span<const int> labels,
                                                       std::span<const dataset::ExampleMeta> meta) {
    if (predictions.size() != labels.size() || meta.size() != labels.size())
        throw DimensionError("predictions, labels and metadata must have equal length");
    std::map<std::int64_t, WriterAccuracy> by_writer;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& w = by_writer[meta[i].writer_id];
        w.writer_id = meta[i].writer_id;
        w.group = meta[i].group;
        ++w.n_examples;
        w.correct += predictions[i] == labels[i];
    }
    std::vector<WriterAccuracy> out;
    for (auto& [id, w] : by_writer)
        out.push_back(std::move(w));
    return out;
}

/// Merges writer accuracies of the unpruned and pruned model on `eval` and
/// attaches per-writer image feature averages. Class means come from the
/// training split.
inline std::vector<WriterRecord> writer_records(const dataset::LabeledDataset& eval,
                                                std::span<const int> predictions_before,
                                                std::span<const int> predictions_after,
                                                const std::vector<std::vector<double>>& means) {
    if (!eval.has_metadata())
        throw ValidationError("cohort analysis needs per-example writer metadata");
    const auto before = per_writer_accuracy(predictions_before, eval.labels, eval.metadata);
    const auto after = per_writer_accuracy(predictions_after, eval.labels, eval.metadata);
    std::map<std::int64_t, WriterRecord> recs;
    for (std::size_t i = 0; i < before.size(); ++i) {
        auto& r = recs[before[i].writer_id];
        r.writer_id = before[i].writer_id;
        r.group = before[i].group;
        r.n_examples = before[i].n_examples;
        r.accuracy_before = before[i].accuracy();
        r.accuracy_after = after[i].accuracy();
    }
    std::vector<double> img(eval.dim());
    for (std::size_t i = 0; i < eval.size(); ++i) {
        auto& f = recs[eval.metadata[i].writer_id].features;
        eval.normalized(i, img);
        if (const auto t = tilt(img, eval.rows, eval.cols)) {
            f.mean_tilt += *t;
            f.mean_abs_tilt += std::abs(*t);
            ++f.tilt_samples;
        }
        f.mean_activation += mean_activation(img);
        f.mean_euclid_to_class_mean += euclid_to_class_mean(img, eval.labels[i], means);
    }
    std::vector<WriterRecord> out;
    for (auto& [id, r] : recs) {
        auto& f = r.features;
        const double n = static_cast<double>(r.n_examples);
        if (f.tilt_samples > 0) {
            f.mean_tilt /= static_cast<double>(f.tilt_samples);
            f.mean_abs_tilt /= static_cast<double>(f.tilt_samples);
        }
        f.mean_activation /= n;
        f.mean_euclid_to_class_mean /= n;
        out.push_back(std::move(r));
    }
    return out;
}

enum class Feature { mean_tilt, mean_abs_tilt, mean_activation, mean_euclid };
enum class Response { accuracy_before, accuracy_after, percent_change };

inline double feature_value(const WriterRecord& r, Feature f) {
    switch (f) {
        case Feature::mean_tilt: return r.features.mean_tilt;
        case Feature::mean_abs_tilt: return r.features.mean_abs_tilt;
        case Feature::mean_activation: return r.features.mean_activation;
        case Feature::mean_euclid: return r.features.mean_euclid_to_class_mean;
    }
    return 0.0;
}

inline std::optional<double> response_value(const WriterRecord& r, Response y) {
    switch (y) {
        case Response::accuracy_before: return r.accuracy_before;
        case Response::accuracy_after: return r.accuracy_after;
        case Response::percent_change: return r.pct_change();
    }
    return std::nullopt;
}

struct GroupFit {
    std::string group;  // "full" for the all-writer fit
    double intercept = 0.0;
    double slope = 0.0;
    double slope_std_error = 0.0;  // NaN with fewer than 3 points
    std::size_t n = 0;
};

struct GroupFits {
    std::vector<GroupFit> groups;  // sorted by group name
    std::optional<GroupFit> full;
    std::vector<std::string> warnings;
};

/// Simple least-squares line y = intercept + slope * x. Empty when fewer
/// than two points or zero x variance.
inline std::optional<GroupFit> fit_line(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n)
        return std::nullopt;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0)
        return std::nullopt;
    GroupFit g;
    g.n = n;
    g.slope = sxy / sxx;
    g.intercept = my - g.slope * mx;
    if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = y[i] - g.intercept - g.slope * x[i];
            rss += e * e;
        }
        g.slope_std_error = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    } else {
        g.slope_std_error = std::nan("");
    }
    return g;
}

/// One line per group plus one over all writers. Writers with an undefined
/// response are dropped; degenerate groups are skipped with a warning.
inline GroupFits group_linear_fit(std::span<const WriterRecord> records, Feature x, Response y) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_group;
    std::vector<double> all_x, all_y;
    for (const auto& r : records) {
        const auto v = response_value(r, y);
        if (!v)
            continue;
        auto& [gx, gy] = by_group[r.group];
        gx.push_back(feature_value(r, x));
        gy.push_back(*v);
        all_x.push_back(gx.back());
        all_y.push_back(*v);
    }
    GroupFits out;
    for (auto& [name, xy] : by_group) {
        if (auto g = fit_line(xy.first, xy.second)) {
            g->group = name;
            out.groups.push_back(*g);
        } else {
            out.warnings.push_back("group '" + name + "' skipped: fewer than 2 writers or no x variance");
        }
    }
    if (auto g = fit_line(all_x, all_y)) {
        g->group = "full";
        out.full = *g;
    } else {
        out.warnings.push_back("full fit skipped: fewer than 2 writers or no x variance");
    }
    return out;
}

/// Header: writer_id,group,n,acc_before,acc_after,pct_change,mean_tilt,
/// mean_abs_tilt,mean_activation,mean_euclid
inline void write_writer_csv(std::ostream& out, std::span<const WriterRecord> records) {
    out << "writer_id,group,n,acc_before,acc_after,pct_change,mean_tilt,mean_abs_tilt,"
           "mean_activation,mean_euclid\n";
    const auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : records) {
        const auto pc = r.pct_change();
        out << r.writer_id << ',' << r.group << ',' << r.n_examples << ',' << num(r.accuracy_before)
            << ',' << num(r.accuracy_after) << ',' << (pc ? num(*pc) : std::string("nan")) << ','
            << num(r.features.mean_tilt) << ',' << num(r.features.mean_abs_tilt) << ','
            << num(r.features.mean_activation) << ',' << num(r.features.mean_euclid_to_class_mean)
            << '\n';
    }
}

}  // namespace prunefair::cohort
