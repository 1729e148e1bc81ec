#pragma once

// Grid orchestration: one pruning trajectory per (technique, treatment,
// seed) cell, per-cell result files keyed by a content hash, a manifest, and
// the assembled experiment CSV.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunefair/config.hpp"
#include "prunefair/dataset.hpp"
#include "prunefair/errors.hpp"
#include "prunefair/metrics.hpp"
#include "prunefair/netcore.hpp"
#include "prunefair/pruning.hpp"
#include "prunefair/rng.hpp"
#include "prunefair/types.hpp"

namespace prunefair::experiment {

namespace fs = std::filesystem;
using config::ExperimentConfig;

// ---------------------------------------------------------------------------
// Experiment CSV

inline constexpr const char* kCsvHeader =
    "dataset,model,technique,treatment,seed,iteration,sparsity,class,accuracy,accuracy0,imbalance,"
    "class_entropy,total_accuracy";

/// One class of one operating point. Undefined accuracies are NaN.
struct Row {
    std::string dataset;
    std::string model;
    std::string technique;
    std::string treatment;
    std::uint64_t seed = 0;
    std::size_t iteration = 0;
    double sparsity = 0.0;
    int cls = 0;
    double accuracy = 0.0;
    double accuracy0 = 0.0;
    double imbalance = 0.0;
    double class_entropy = 0.0;
    double total_accuracy = 0.0;

    friend bool operator==(const Row& a, const Row& b) {
        const auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return a.dataset == b.dataset && a.model == b.model && a.technique == b.technique &&
               a.treatment == b.treatment && a.seed == b.seed && a.iteration == b.iteration &&
               same(a.sparsity, b.sparsity) && a.cls == b.cls && same(a.accuracy, b.accuracy) &&
               same(a.accuracy0, b.accuracy0) && same(a.imbalance, b.imbalance) &&
               same(a.class_entropy, b.class_entropy) && same(a.total_accuracy, b.total_accuracy);
    }
};

/// %.17g, with "nan" for NaN so every double survives a text round trip.
inline std::string format_double(double v) {
    if (std::isnan(v))
        return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_row(const Row& r) {
    std::string s;
    s.reserve(160);
    s += r.dataset + ',' + r.model + ',' + r.technique + ',' + r.treatment + ',';
    s += std::to_string(r.seed) + ',' + std::to_string(r.iteration) + ',';
    s += format_double(r.sparsity) + ',' + std::to_string(r.cls) + ',';
    s += format_double(r.accuracy) + ',' + format_double(r.accuracy0) + ',';
    s += format_double(r.imbalance) + ',' + format_double(r.class_entropy) + ',';
    s += format_double(r.total_accuracy);
    return s;
}

inline void write_csv(std::ostream& out, const std::vector<Row>& rows) {
    out << kCsvHeader << '\n';
    for (const auto& r : rows)
        out << format_row(r) << '\n';
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos)
            return out;
        start = comma + 1;
    }
}

}  // namespace detail

/// Parses an experiment CSV. Schema violations raise ParseError carrying the
/// 1-based line number.
inline std::vector<Row> parse_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    const auto fail = [&](const std::string& why) {
        return ParseError("experiment CSV line " + std::to_string(line_no) + ": " + why, line_no);
    };
    if (!std::getline(in, line)) {
        line_no = 1;
        throw fail("missing header");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != kCsvHeader)
        throw fail(std::string("header must be '") + kCsvHeader + "'");

    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto f = detail::split_fields(line);
        if (f.size() != 13)
            throw fail("expected 13 fields, found " + std::to_string(f.size()));
        const auto real = [&](std::size_t i, const char* name) {
            char* end = nullptr;
            const double v = std::strtod(f[i].c_str(), &end);
            if (f[i].empty() || *end != '\0')
                throw fail(std::string("field '") + name + "' is not a number: '" + f[i] + "'");
            return v;
        };
        const auto integer = [&](std::size_t i, const char* name) {
            char* end = nullptr;
            const unsigned long long v = std::strtoull(f[i].c_str(), &end, 10);
            if (f[i].empty() || *end != '\0' || f[i][0] == '-')
                throw fail(std::string("field '") + name + "' is not a non-negative integer: '" + f[i] + "'");
            return v;
        };
        Row r;
        r.dataset = f[0];
        r.model = f[1];
        r.technique = f[2];
        r.treatment = f[3];
        for (std::size_t i = 0; i < 4; ++i)
            if (f[i].empty())
                throw fail("empty categorical field");
        if (!parse_technique(r.technique))
            throw fail("unknown technique '" + r.technique + "'");
        if (!parse_treatment(r.treatment))
            throw fail("unknown treatment '" + r.treatment + "'");
        r.seed = integer(4, "seed");
        r.iteration = integer(5, "iteration");
        r.sparsity = real(6, "sparsity");
        r.cls = static_cast<int>(integer(7, "class"));
        r.accuracy = real(8, "accuracy");
        r.accuracy0 = real(9, "accuracy0");
        r.imbalance = real(10, "imbalance");
        r.class_entropy = real(11, "class_entropy");
        r.total_accuracy = real(12, "total_accuracy");
        if (!(r.sparsity >= 0.0 && r.sparsity <= 1.0))
            throw fail("sparsity outside [0, 1]");
        for (double a : {r.accuracy, r.accuracy0, r.total_accuracy})
            if (!std::isnan(a) && !(a >= 0.0 && a <= 1.0))
                throw fail("accuracy outside [0, 1]");
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<Row> load_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open " + path.string());
    return parse_csv(in);
}

// ---------------------------------------------------------------------------
// Data and models

struct PreparedData {
    dataset::LabeledDataset train;  // training part of the seeded split
    dataset::LabeledDataset test;   // evaluation set
    dataset::ClassStats stats;      // from `train`
};

/// Training pool and test set, independent of the experiment seed.
inline std::pair<dataset::LabeledDataset, dataset::LabeledDataset> load_pool(const ExperimentConfig& cfg) {
    const auto& d = cfg.data;
    if (d.source == config::DataSource::idx) {
        auto pool = dataset::load_idx(d.train_images, d.train_labels);
        if (!d.test_images.empty()) {
            auto test = dataset::load_idx(d.test_images, d.test_labels);
            test.num_classes = pool.num_classes = std::max(pool.num_classes, test.num_classes);
            return {std::move(pool), std::move(test)};
        }
        auto [rest, test] = dataset::split(pool, {d.test_fraction, d.split_seed});
        return {std::move(rest), std::move(test)};
    }
    const auto full = dataset::synthesize(d.synth, d.data_seed);
    auto [rest, test] = dataset::split(full, {d.test_fraction, d.split_seed});
    return {std::move(rest), std::move(test)};
}

/// Applies the seed-controlled train/validation split to a pool.
inline PreparedData prepare(const dataset::LabeledDataset& pool, const dataset::LabeledDataset& test,
                            const ExperimentConfig& cfg, std::uint64_t seed) {
    PreparedData p;
    p.train = dataset::split(pool, {cfg.data.validation_fraction, seed}).first;
    p.test = test;
    p.stats = dataset::class_stats(p.train);
    return p;
}

inline netcore::Network make_network(const ExperimentConfig& cfg, const dataset::LabeledDataset& data,
                                     std::uint64_t seed) {
    const netcore::Shape3 shape{data.channels, data.rows, data.cols};
    if (cfg.model.arch == config::Architecture::lenet)
        return netcore::Network::lenet(shape, data.num_classes, seed);
    return netcore::Network::mlp(shape, cfg.model.hidden, data.num_classes, seed);
}

/// The trained, unpruned network every cell with this seed starts from.
inline netcore::Network train_base(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed) {
    auto net = make_network(cfg, data.train, seed);
    Rng rng = Rng(seed).split("base-train");
    netcore::train(net, data.train, cfg.train, rng);
    return net;
}

inline std::vector<Row> trajectory_rows(const ExperimentConfig& cfg, const PreparedData& data,
                                        const pruning::Trajectory& traj, std::uint64_t seed) {
    std::vector<Row> rows;
    const auto& base = traj.points.front();
    for (const auto& p : traj.points) {
        for (std::size_t c = 0; c < p.per_class_accuracy.size(); ++c) {
            Row r;
            r.dataset = cfg.data.name;
            r.model = cfg.model.name;
            r.technique = std::string(to_string(p.technique));
            r.treatment = std::string(to_string(p.treatment));
            r.seed = seed;
            r.iteration = p.iteration;
            r.sparsity = p.sparsity;
            r.cls = static_cast<int>(c);
            r.accuracy = p.per_class_accuracy[c].value_or(std::nan(""));
            r.accuracy0 = base.per_class_accuracy[c].value_or(std::nan(""));
            r.imbalance = data.stats.imbalance[c];
            r.class_entropy = data.stats.entropy[c];
            r.total_accuracy = p.total_accuracy;
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

/// Prunes a copy of `base` along one cell's schedule. The cell's RNG stream is
/// derived from (seed, technique, treatment).
inline std::vector<Row> run_cell(const ExperimentConfig& cfg, const PreparedData& data,
                                 const netcore::Network& base, PruneTechnique tech, WeightTreatment treatment,
                                 std::uint64_t seed) {
    netcore::Network net = base;
    Rng rng = Rng(seed).split(std::string("cell/") + std::string(to_string(tech)) + "/" +
                              std::string(to_string(treatment)));
    const auto traj = pruning::iterate(net, data.train, data.test, tech, treatment, cfg.schedule, cfg.train, rng);
    return trajectory_rows(cfg, data, traj, seed);
}

// ---------------------------------------------------------------------------
// Grid

struct CellId {
    PruneTechnique technique;
    WeightTreatment treatment;
    std::uint64_t seed;
};

struct CellStatus {
    CellId id;
    std::string hash;
    bool completed = false;
    bool cached = false;  // result reused from an earlier run
    std::string error;
    double seconds = 0.0;
    fs::path artifact;  // per-cell CSV; present iff completed
};

struct RunManifest {
    std::string config_hash;
    fs::path output_dir;
    fs::path experiment_csv;
    std::string started;
    std::string finished;
    std::vector<CellStatus> cells;

    std::size_t completed() const {
        return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(),
                                                      [](const CellStatus& c) { return c.completed; }));
    }
    std::size_t computed() const {
        return static_cast<std::size_t>(std::count_if(
            cells.begin(), cells.end(), [](const CellStatus& c) { return c.completed && !c.cached; }));
    }
    std::size_t failed() const { return cells.size() - completed(); }
};

struct RunOptions {
    std::size_t jobs = 1;
    std::ostream* log = nullptr;
    /// Called at the start of every computed cell; an exception fails that cell.
    std::function<void(const CellId&)> before_cell;
};

namespace detail {

inline std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Writes via a temporary file and rename so readers never see partial files.
inline void write_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw ValidationError("cannot write " + tmp.string());
        out << text;
        if (!out)
            throw ValidationError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Runs task(i) for i in [0, n) on up to `jobs` threads.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i)
            task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++)
                task(i);
        });
}

}  // namespace detail

inline nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : m.cells) {
        nlohmann::json j = {{"technique", to_string(c.id.technique)},
                            {"treatment", to_string(c.id.treatment)},
                            {"seed", c.id.seed},
                            {"cell_hash", c.hash},
                            {"status", c.completed ? "completed" : "failed"},
                            {"cached", c.cached},
                            {"seconds", c.seconds}};
        if (c.completed)
            j["artifact"] = fs::relative(c.artifact, m.output_dir).generic_string();
        else
            j["error"] = c.error;
        cells.push_back(std::move(j));
    }
    return {{"config_hash", m.config_hash},
            {"started", m.started},
            {"finished", m.finished},
            {"experiment_csv", fs::relative(m.experiment_csv, m.output_dir).generic_string()},
            {"completed", m.completed()},
            {"failed", m.failed()},
            {"cells", std::move(cells)}};
}

/// Runs every cell of the grid whose result file is missing, then rewrites
/// `experiments.csv` from the completed cells in canonical order (techniques,
/// then treatments, then seeds, each in config order) and `manifest.json`.
/// A failing cell is recorded and does not stop the others.
inline RunManifest run_grid(const ExperimentConfig& cfg, const fs::path& out_dir, const RunOptions& opts = {}) {
    cfg.validate();
    RunManifest m;
    m.config_hash = config::config_hash(cfg);
    m.output_dir = out_dir;
    m.started = detail::utc_now();
    const fs::path cell_dir = out_dir / "cells";
    fs::create_directories(cell_dir);

    for (auto t : cfg.techniques)
        for (auto w : cfg.treatments)
            for (auto s : cfg.seeds) {
                CellStatus st;
                st.id = {t, w, s};
                st.hash = config::cell_hash(cfg, t, w, s);
                st.artifact = cell_dir / (st.hash + ".csv");
                st.cached = st.completed = fs::exists(st.artifact);
                m.cells.push_back(std::move(st));
            }

    std::mutex log_mutex;
    const auto log = [&](const std::string& msg) {
        if (!opts.log)
            return;
        std::lock_guard lock(log_mutex);
        *opts.log << msg << '\n';
    };

    std::vector<std::uint64_t> pending_seeds;
    for (const auto& c : m.cells)
        if (!c.completed && std::find(pending_seeds.begin(), pending_seeds.end(), c.id.seed) == pending_seeds.end())
            pending_seeds.push_back(c.id.seed);

    if (!pending_seeds.empty()) {
        const auto [pool, test] = experiment::load_pool(cfg);
        struct SeedState {
            std::optional<PreparedData> data;
            std::optional<netcore::Network> base;
            std::string error;
        };
        std::map<std::uint64_t, SeedState> seeds;
        for (auto s : pending_seeds)
            seeds[s];
        detail::parallel_for(pending_seeds.size(), opts.jobs, [&](std::size_t i) {
            auto& st = seeds.at(pending_seeds[i]);
            try {
                st.data = prepare(pool, test, cfg, pending_seeds[i]);
                st.base = train_base(cfg, *st.data, pending_seeds[i]);
                log("seed " + std::to_string(pending_seeds[i]) + ": base network trained");
            } catch (const std::exception& e) {
                st.error = std::string("base training failed: ") + e.what();
            }
        });

        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < m.cells.size(); ++i)
            if (!m.cells[i].completed)
                todo.push_back(i);
        detail::parallel_for(todo.size(), opts.jobs, [&](std::size_t k) {
            auto& cell = m.cells[todo[k]];
            const auto& st = seeds.at(cell.id.seed);
            const auto t0 = std::chrono::steady_clock::now();
            try {
                if (!st.base)
                    throw Error(st.error);
                if (opts.before_cell)
                    opts.before_cell(cell.id);
                const auto rows = run_cell(cfg, *st.data, *st.base, cell.id.technique, cell.id.treatment, cell.id.seed);
                std::ostringstream os;
                write_csv(os, rows);
                detail::write_atomic(cell.artifact, os.str());
                cell.completed = true;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log(std::string(cell.completed ? "done   " : "FAILED ") + std::string(to_string(cell.id.technique)) +
                " " + std::string(to_string(cell.id.treatment)) + " seed " + std::to_string(cell.id.seed) +
                (cell.completed ? "" : ": " + cell.error));
        });
    }

    std::string csv = std::string(kCsvHeader) + '\n';
    for (const auto& c : m.cells) {
        if (!c.completed)
            continue;
        const std::string text = detail::read_all(c.artifact);
        const auto body = text.find('\n');
        if (body != std::string::npos)
            csv += text.substr(body + 1);
    }
    m.experiment_csv = out_dir / "experiments.csv";
    detail::write_atomic(m.experiment_csv, csv);
    m.finished = detail::utc_now();
    detail::write_atomic(out_dir / "manifest.json", to_json(m).dump(2) + "\n");
    return m;
}

/// Output root: explicit flag, then the config, then PRUNEFAIR_OUT, then
/// "prunefair_out" in the working directory.
inline fs::path output_root(const std::optional<fs::path>& flag, const ExperimentConfig& cfg) {
    if (flag)
        return *flag;
    if (cfg.output)
        return *cfg.output;
    if (const char* env = std::getenv("PRUNEFAIR_OUT"); env && *env)
        return env;
    return "prunefair_out";
}

}  // namespace prunefair::experiment
