// prunefair: run pruning grids and emit regression, selection, curve and
// cohort reports.
//
// Exit codes: 0 success, 2 validation or parse error, 3 empty feasible set,
// 4 numerical failure (rank deficiency, divergence, undefined values, or any
// failed grid cell).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prunefair/config.hpp"
#include "prunefair/errors.hpp"
#include "prunefair/experiment.hpp"
#include "prunefair/reports.hpp"

namespace fs = std::filesystem;
using namespace prunefair;

namespace {

enum Exit { kOk = 0, kValidation = 2, kInfeasible = 3, kNumerical = 4 };

void emit(const std::string& text, const std::optional<fs::path>& out) {
    if (!out) {
        std::cout << text;
        return;
    }
    if (out->has_parent_path())
        fs::create_directories(out->parent_path());
    std::ofstream f(*out, std::ios::trunc);
    if (!f)
        throw ValidationError("cannot write " + out->string());
    f << text;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

std::map<std::string, double> parse_weights(const std::string& text) {
    std::map<std::string, double> w;
    for (const auto& item : split_list(text)) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ValidationError("weight '" + item + "' must look like name=value");
        char* end = nullptr;
        const std::string num = item.substr(eq + 1);
        const double v = std::strtod(num.c_str(), &end);
        if (num.empty() || *end != '\0')
            throw ValidationError("weight value '" + num + "' is not a number");
        w[item.substr(0, eq)] = v;
    }
    return w;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    for (const auto& item : split_list(text)) {
        char* end = nullptr;
        const auto v = std::strtoull(item.c_str(), &end, 10);
        if (*end != '\0' || item[0] == '-')
            throw ValidationError("seed '" + item + "' is not a non-negative integer");
        seeds.push_back(v);
    }
    if (seeds.empty())
        throw ValidationError("--seed-list is empty");
    return seeds;
}

/// Explicit CSV path, or experiments.csv under the config's output root.
fs::path input_csv(const std::string& input, const std::string& config_path) {
    if (!input.empty())
        return input;
    if (config_path.empty())
        throw ValidationError("give an experiment CSV or --config");
    const auto cfg = config::load_config(config_path);
    return experiment::output_root(std::nullopt, cfg) / "experiments.csv";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fairness-aware pruning audit toolkit"};
    app.require_subcommand(1);

    std::string config_path, out, input, weights, seed_list, objectives = "sparsity,unfairness", metric = "max_min";
    std::size_t jobs = 1;
    double min_accuracy = 0.98;

    auto* run = app.add_subcommand("run", "Run the experiment grid");
    run->add_option("--config", config_path, "Experiment config file")->required();
    run->add_option("--jobs", jobs, "Concurrent grid cells")->check(CLI::PositiveNumber);
    run->add_option("--out", out, "Output directory");

    auto* fit = app.add_subcommand("fit", "Fit the class-accuracy regression");
    fit->add_option("csv", input, "Experiment CSV");
    fit->add_option("--config", config_path, "Locate the CSV through a config's output root");
    fit->add_option("--out", out, "Write the JSON summary here instead of stdout");

    auto* select = app.add_subcommand("select", "Select an operating point and export the frontier");
    select->add_option("csv", input, "Experiment CSV");
    select->add_option("--config", config_path, "Locate the CSV through a config's output root");
    select->add_option("--out", out, "Write the frontier JSON here instead of stdout");
    select->add_option("--min-accuracy", min_accuracy, "Total-accuracy constraint");
    select->add_option("--metric", metric, "Unfairness metric")->check(CLI::IsMember({"max_min", "mean_min"}));
    select->add_option("--weights", weights, "Value-function weights, e.g. sparsity=1,unfairness=100");
    select->add_option("--objectives", objectives, "Comma list from sparsity, unfairness, accuracy");
    select->add_option("--seed-list", seed_list, "Comma list of seeds to average over");

    auto* curves = app.add_subcommand("curves", "Per-class accuracy-sparsity series");
    curves->add_option("csv", input, "Experiment CSV");
    curves->add_option("--config", config_path, "Locate the CSV through a config's output root");
    curves->add_option("--out", out, "Write the JSON here instead of stdout");

    auto* cohort = app.add_subcommand("cohort", "Per-writer analysis before and after pruning");
    cohort->add_option("--config", config_path, "Cohort config file")->required();
    cohort->add_option("--out", out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    const std::optional<fs::path> out_path = out.empty() ? std::nullopt : std::optional<fs::path>(out);
    try {
        if (*run) {
            const auto cfg = config::load_config(config_path);
            const auto root = experiment::output_root(out_path, cfg);
            experiment::RunOptions opts;
            opts.jobs = jobs;
            opts.log = &std::cerr;
            const auto m = experiment::run_grid(cfg, root, opts);
            std::cout << "config " << m.config_hash << ": " << m.completed() << " of " << m.cells.size()
                      << " cells completed (" << m.computed() << " computed), " << m.failed() << " failed\n"
                      << "results: " << m.experiment_csv.string() << '\n';
            return m.failed() == 0 ? kOk : kNumerical;
        }
        if (*fit) {
            const auto rows = experiment::load_csv(input_csv(input, config_path));
            const auto rep = reports::fit_report(rows);
            emit(rep.document.dump(2) + "\n", out_path);
            return kOk;
        }
        if (*select) {
            const auto rows = experiment::load_csv(input_csv(input, config_path));
            reports::SelectOptions opts;
            opts.min_accuracy = min_accuracy;
            opts.metric = *metrics::parse_metric(metric);
            opts.objectives = split_list(objectives);
            opts.weights = parse_weights(weights);
            if (!seed_list.empty())
                opts.seed_list = parse_seeds(seed_list);
            const auto rep = reports::select_report(rows, opts);
            emit(rep.document.dump(2) + "\n", out_path);
            if (!rep.outcome) {
                std::cerr << "error: no candidate reaches total accuracy " << min_accuracy << '\n';
                return kInfeasible;
            }
            return kOk;
        }
        if (*curves) {
            const auto rows = experiment::load_csv(input_csv(input, config_path));
            emit(reports::curves_report(rows).dump(2) + "\n", out_path);
            return kOk;
        }
        if (*cohort) {
            std::ifstream in(config_path);
            if (!in)
                throw ValidationError("cannot open config " + config_path);
            const auto cfg = reports::parse_cohort_config(in, fs::path(config_path).parent_path());
            fs::path root = out_path ? *out_path : cfg.output ? *cfg.output : fs::path("prunefair_out");
            if (!out_path && !cfg.output)
                if (const char* env = std::getenv("PRUNEFAIR_OUT"); env && *env)
                    root = env;
            fs::create_directories(root);
            const auto res = reports::run_cohort(cfg);
            std::ofstream csv(root / "writers.csv", std::ios::trunc);
            cohort::write_writer_csv(csv, res.writers);
            nlohmann::json doc = {{"accuracy_before", res.accuracy_before},
                                  {"accuracy_after", res.accuracy_after},
                                  {"sparsity_after", res.sparsity_after},
                                  {"writers", res.writers.size()},
                                  {"fits", res.fits}};
            emit(doc.dump(2) + "\n", root / "cohort_fits.json");
            std::cout << "accuracy " << res.accuracy_before << " -> " << res.accuracy_after << " at sparsity "
                      << res.sparsity_after << "; " << res.writers.size() << " writers\n";
            return kOk;
        }
    } catch (const EmptyFeasibleSet& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInfeasible;
    } catch (const RankDeficiency& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    } catch (const TrainingDivergence& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    } catch (const UndefinedValue& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    }
    return kOk;
}
