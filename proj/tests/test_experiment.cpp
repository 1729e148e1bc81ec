#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "prunefair/config.hpp"
#include "prunefair/experiment.hpp"
#include "prunefair/reports.hpp"

using namespace prunefair;
namespace fs = std::filesystem;
using experiment::Row;

namespace {

const char* kTinyConfig = R"(# tiny grid
[dataset]
name = "mnist"
rows = 8
cols = 8
class_counts = [20, 20, 20]
noise = 0.05
shift = 0.5
data_seed = 1

[model]
arch = "mlp"
hidden = [6]

[train]
epochs = 1
batch_size = 8
learning_rate = 0.05
crop_padding = 0

[prune]
iterations = 20
fraction = 0.2

[grid]
techniques = ["global_unstructured", "random_unstructured"]
treatments = ["finetune", "rewind"]
seeds = [0, 1]
)";

/// kTinyConfig with the first occurrence of `from` replaced.
std::string tiny_with(const std::string& from, const std::string& to) {
    std::string s = kTinyConfig;
    s.replace(s.find(from), from.size(), to);
    return s;
}

config::ExperimentConfig parse(const std::string& text) {
    std::istringstream in(text);
    return config::parse_config(in);
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("prunefair_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
}

Row row(std::string tech, std::string treat, std::uint64_t seed, std::size_t it, double sparsity, int cls,
        double acc, double total) {
    Row r;
    r.dataset = "mnist";
    r.model = "LeNet";
    r.technique = std::move(tech);
    r.treatment = std::move(treat);
    r.seed = seed;
    r.iteration = it;
    r.sparsity = sparsity;
    r.cls = cls;
    r.accuracy = acc;
    r.accuracy0 = acc;
    r.imbalance = 0.0;
    r.class_entropy = 4.0;
    r.total_accuracy = total;
    return r;
}

/// Runs the CLI with `args`; returns its exit status.
int cli(const std::string& args, const fs::path& stdout_file = "/dev/null") {
    const std::string cmd = std::string(PRUNEFAIR_CLI_PATH) + " " + args + " > " + stdout_file.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, ParsesTinyGrid) {
    const auto cfg = parse(kTinyConfig);
    EXPECT_EQ(cfg.techniques.size(), 2u);
    EXPECT_EQ(cfg.treatments.size(), 2u);
    EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{0, 1}));
    EXPECT_EQ(cfg.model.arch, config::Architecture::mlp);
    EXPECT_EQ(cfg.model.hidden, (std::vector<std::size_t>{6}));
    EXPECT_EQ(cfg.train.epochs, 1u);
    EXPECT_EQ(cfg.data.synth.classes.size(), 3u);
    EXPECT_EQ(cfg.data.synth.classes[2].count, 20u);
    EXPECT_EQ(cfg.schedule.iterations, 20u);
}

TEST(Config, ErrorsCarryLineNumbers) {
    const auto line_of_error = [](const std::string& text) -> std::size_t {
        try {
            parse(text);
        } catch (const ParseError& e) {
            return e.position();
        }
        return 0;
    };
    EXPECT_EQ(line_of_error("[train]\nepochs = 2\nlearning_rate = fast\n"), 3u);
    EXPECT_EQ(line_of_error("[train]\nepochs 2\n"), 2u);
    EXPECT_EQ(line_of_error("[train]\nepochs = 2\nepochs = 3\n"), 3u);
    EXPECT_EQ(line_of_error(std::string(kTinyConfig) + "colour = \"red\"\n"), 29u);
    EXPECT_EQ(line_of_error(tiny_with("random_unstructured", "l3_unstructured")), 26u);
    EXPECT_EQ(line_of_error(tiny_with("epochs = 1", "epochs = -1")), 16u);
    EXPECT_EQ(line_of_error(tiny_with("hidden = [6]", "hidden = [6, [2]]")), 13u);
    EXPECT_EQ(line_of_error("[dataset]\nname = \"open\n"), 2u);
}

TEST(Config, ValidationErrors) {
    EXPECT_THROW(parse(tiny_with("seeds = [0, 1]", "seeds = []")), ValidationError);
    EXPECT_THROW(parse("[dataset]\nsource = \"idx\"\ntrain_images = \"/nonexistent/x\"\n"
                       "train_labels = \"/nonexistent/y\"\n[grid]\ntechniques = [\"l1_structured\"]\n"
                       "treatments = [\"rewind\"]\nseeds = [0]\n"),
                 ValidationError);
    EXPECT_THROW(parse(tiny_with("seeds = [0, 1]", "seeds = [1, 1]")), ValidationError);
    EXPECT_THROW(parse(tiny_with("learning_rate = 0.05", "learning_rate = -0.05")), ValidationError);
    EXPECT_THROW(parse(tiny_with("fraction = 0.2", "fraction = 1.0")), ValidationError);
}

TEST(Config, HashIgnoresFormattingAndOutput) {
    const auto base = config::config_hash(parse(kTinyConfig));
    std::string reformatted = kTinyConfig;
    reformatted.replace(reformatted.find("[model]"), 7, "# a comment\n[model]");
    reformatted.replace(reformatted.find("epochs = 1"), 10, "epochs   =   1   # one pass");
    EXPECT_EQ(config::config_hash(parse(reformatted)), base);
    EXPECT_EQ(config::config_hash(parse(std::string("[experiment]\noutput = \"elsewhere\"\n") + kTinyConfig)), base);

    EXPECT_NE(config::config_hash(parse(tiny_with("learning_rate = 0.05", "learning_rate = 0.051"))), base);
    EXPECT_NE(config::config_hash(parse(tiny_with("seeds = [0, 1]", "seeds = [0, 2]"))), base);
}

// ---------------------------------------------------------------------------
// CSV

TEST(Csv, RoundTripIsLossless) {
    std::vector<Row> rows = {row("l1_structured", "rewind", 5, 3, 0.48799999999999999, 2, 1.0 / 3.0, 0.1 + 0.2),
                             row("global_unstructured", "finetune", 0, 0, 0.0, 0, std::nan(""), 0.9)};
    rows[0].imbalance = -0.046093749999999989;
    rows[0].class_entropy = 4.7072904030971161;
    std::ostringstream os;
    experiment::write_csv(os, rows);
    std::istringstream in(os.str());
    const auto back = experiment::parse_csv(in);
    EXPECT_EQ(back, rows);
    EXPECT_NE(os.str().find(",nan,"), std::string::npos);
}

TEST(Csv, SchemaViolationsNameTheLine) {
    const std::string header = std::string(experiment::kCsvHeader) + "\n";
    const std::string good = "mnist,LeNet,l1_structured,rewind,0,1,0.2,0,0.9,0.95,0.01,4.2,0.9\n";
    const auto line_of_error = [](const std::string& text) -> std::size_t {
        std::istringstream in(text);
        try {
            experiment::parse_csv(in);
        } catch (const ParseError& e) {
            return e.position();
        }
        return 0;
    };
    EXPECT_EQ(line_of_error(""), 1u);
    EXPECT_EQ(line_of_error("dataset,model\n"), 1u);
    EXPECT_EQ(line_of_error(header + good + "mnist,LeNet,l1_structured,rewind,0,1,0.2,0,0.9\n"), 3u);
    EXPECT_EQ(line_of_error(header + good + good + "mnist,LeNet,l1_structured,rewind,0,1,0.2,0,high,0.95,0.01,4.2,0.9\n"), 4u);
    EXPECT_EQ(line_of_error(header + "mnist,LeNet,l7_structured,rewind,0,1,0.2,0,0.9,0.95,0.01,4.2,0.9\n"), 2u);
    EXPECT_EQ(line_of_error(header + "mnist,LeNet,l1_structured,rewind,-1,1,0.2,0,0.9,0.95,0.01,4.2,0.9\n"), 2u);
    EXPECT_EQ(line_of_error(header + "mnist,LeNet,l1_structured,rewind,0,1,1.5,0,0.9,0.95,0.01,4.2,0.9\n"), 2u);
    EXPECT_EQ(line_of_error(header + good), 0u);
}

// ---------------------------------------------------------------------------
// Grid

class Grid : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new fs::path(fresh_dir("grid"));
        manifest_ = new experiment::RunManifest(experiment::run_grid(parse(kTinyConfig), *dir_ / "a"));
    }
    static void TearDownTestSuite() {
        fs::remove_all(*dir_);
        delete dir_;
        delete manifest_;
    }
    static fs::path* dir_;
    static experiment::RunManifest* manifest_;
};
fs::path* Grid::dir_ = nullptr;
experiment::RunManifest* Grid::manifest_ = nullptr;

TEST_F(Grid, EightTrajectoriesOfTwentyOnePoints) {
    ASSERT_EQ(manifest_->cells.size(), 8u);
    EXPECT_EQ(manifest_->completed(), 8u);
    EXPECT_EQ(manifest_->computed(), 8u);
    const auto rows = experiment::load_csv(manifest_->experiment_csv);
    EXPECT_EQ(rows.size(), 8u * 21u * 3u);
    std::map<std::tuple<std::string, std::string, std::uint64_t>, std::set<std::size_t>> iterations;
    for (const auto& r : rows)
        iterations[{r.technique, r.treatment, r.seed}].insert(r.iteration);
    EXPECT_EQ(iterations.size(), 8u);
    for (const auto& [k, its] : iterations)
        EXPECT_EQ(its.size(), 21u);
}

TEST_F(Grid, ManifestListsArtifactsForCompletedCells) {
    const auto j = nlohmann::json::parse(slurp(*dir_ / "a" / "manifest.json"));
    EXPECT_EQ(j["config_hash"], config::config_hash(parse(kTinyConfig)));
    ASSERT_EQ(j["cells"].size(), 8u);
    for (const auto& c : j["cells"]) {
        EXPECT_EQ(c["status"], "completed");
        EXPECT_TRUE(fs::exists(*dir_ / "a" / c["artifact"].get<std::string>()));
    }
}

TEST_F(Grid, RerunComputesNothingAndKeepsBytes) {
    const std::string before = slurp(manifest_->experiment_csv);
    bool called = false;
    experiment::RunOptions opts;
    opts.before_cell = [&](const experiment::CellId&) { called = true; };
    const auto again = experiment::run_grid(parse(kTinyConfig), *dir_ / "a", opts);
    EXPECT_FALSE(called);
    EXPECT_EQ(again.computed(), 0u);
    EXPECT_EQ(again.completed(), 8u);
    EXPECT_EQ(slurp(again.experiment_csv), before);
}

TEST_F(Grid, ParallelRunIsByteIdentical) {
    experiment::RunOptions opts;
    opts.jobs = 3;
    const auto par = experiment::run_grid(parse(kTinyConfig), *dir_ / "parallel", opts);
    EXPECT_EQ(par.computed(), 8u);
    EXPECT_EQ(slurp(par.experiment_csv), slurp(manifest_->experiment_csv));
}

TEST_F(Grid, FailingCellIsIsolated) {
    experiment::RunOptions opts;
    opts.before_cell = [](const experiment::CellId& id) {
        if (id.technique == PruneTechnique::random_unstructured && id.treatment == WeightTreatment::rewind &&
            id.seed == 1)
            throw TrainingDivergence(7, 3);
    };
    const auto m = experiment::run_grid(parse(kTinyConfig), *dir_ / "failing", opts);
    EXPECT_EQ(m.completed(), 7u);
    EXPECT_EQ(m.failed(), 1u);
    const auto j = nlohmann::json::parse(slurp(*dir_ / "failing" / "manifest.json"));
    std::size_t failed = 0;
    for (const auto& c : j["cells"])
        if (c["status"] == "failed") {
            ++failed;
            EXPECT_NE(c["error"].get<std::string>().find("diverged"), std::string::npos);
            EXPECT_FALSE(c.contains("artifact"));
        }
    EXPECT_EQ(failed, 1u);
    EXPECT_EQ(experiment::load_csv(m.experiment_csv).size(), 7u * 21u * 3u);

    // The next run picks up only the failed cell.
    const auto healed = experiment::run_grid(parse(kTinyConfig), *dir_ / "failing");
    EXPECT_EQ(healed.computed(), 1u);
    EXPECT_EQ(slurp(healed.experiment_csv), slurp(manifest_->experiment_csv));
}

TEST_F(Grid, AddingASeedReusesExistingCells) {
    fs::copy(*dir_ / "a", *dir_ / "grown", fs::copy_options::recursive);
    const auto m = experiment::run_grid(parse(tiny_with("seeds = [0, 1]", "seeds = [0, 1, 2]")), *dir_ / "grown");
    EXPECT_EQ(m.computed(), 4u);
    EXPECT_EQ(m.completed(), 12u);
}

TEST_F(Grid, CurvesHaveOneSeriesPerClass) {
    const auto rows = experiment::load_csv(manifest_->experiment_csv);
    const auto series = reports::curves(rows);
    EXPECT_EQ(series.size(), 8u * 3u);
    for (const auto& s : series) {
        ASSERT_EQ(s.points.size(), 21u);
        EXPECT_EQ(s.points.front().sparsity, 0.0);
        for (std::size_t i = 1; i < s.points.size(); ++i)
            EXPECT_GT(s.points[i].sparsity, s.points[i - 1].sparsity);
    }
}

TEST_F(Grid, SparsityMatchesScheduleOracle) {
    // MLP with 64*6 + 6*3 = 402 prunable weights; global unstructured removes
    // round(0.2 * remaining) per iteration.
    std::size_t remaining = 402;
    std::vector<double> expected = {0.0};
    for (int i = 0; i < 20; ++i) {
        remaining -= static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(remaining)));
        expected.push_back(1.0 - static_cast<double>(remaining) / 402.0);
    }
    for (const auto& r : experiment::load_csv(manifest_->experiment_csv)) {
        if (r.technique == "global_unstructured") {
            EXPECT_NEAR(r.sparsity, expected[r.iteration], 1e-15);
        }
    }
}

// ---------------------------------------------------------------------------
// Reports

TEST(FitReport, PlantedModelRecovered) {
    Rng rng(21);
    std::vector<Row> rows;
    for (int i = 0; i < 400; ++i) {
        Row r = row(rng.uniform() < 0.5 ? "global_unstructured" : "l1_structured",
                    rng.uniform() < 0.5 ? "finetune" : "rewind", 0, 1 + rng.below(20), rng.uniform(0.0, 0.99),
                    static_cast<int>(rng.below(10)), 0.0, 0.5);
        r.accuracy0 = rng.uniform(0.5, 1.0);
        r.imbalance = rng.uniform(-0.05, 0.05);
        r.class_entropy = rng.uniform(3.0, 5.0);
        r.accuracy = 0.2 - 0.05 * std::exp(r.sparsity) + 0.1 * r.sparsity + 0.5 * r.accuracy0 + 1.2 * r.imbalance -
                     0.02 * r.class_entropy + (r.treatment == "rewind" ? 0.03 : 0.0);
        rows.push_back(r);
    }
    const auto rep = reports::fit_report(rows);
    const std::map<std::string, double> planted = {{"Intercept", 0.2},      {"exp(sparsity)", -0.05},
                                                   {"sparsity", 0.1},       {"accuracy0", 0.5},
                                                   {"imbalance", 1.2},      {"class_entropy", -0.02},
                                                   {"weight_treatment[T.rewind]", 0.03}};
    for (std::size_t j = 0; j < rep.fit.columns.size(); ++j) {
        const auto it = planted.find(rep.fit.columns[j]);
        EXPECT_NEAR(rep.fit.coefficients(static_cast<Eigen::Index>(j)), it == planted.end() ? 0.0 : it->second,
                    1e-10)
            << rep.fit.columns[j];
    }
    EXPECT_EQ(rep.document["terms"].size(), rep.fit.columns.size());
    EXPECT_EQ(rep.document["hypothesis_tests"][0]["term"], "imbalance");
}

TEST(FitReport, SingleRowIsRankDeficient) {
    std::vector<Row> rows = {row("l1_structured", "rewind", 0, 1, 0.2, 0, 0.9, 0.9)};
    EXPECT_THROW(reports::fit_report(rows), RankDeficiency);
}

TEST(FitReport, UnprunedRowsAreNotRegressionRecords) {
    std::vector<Row> rows = {row("l1_structured", "rewind", 0, 0, 0.0, 0, 0.9, 0.9),
                             row("l1_structured", "rewind", 0, 1, 0.2, 0, 0.8, 0.8)};
    rows[1].accuracy0 = 0.9;
    const auto recs = reports::to_records(rows);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].accuracy, 0.8);
    EXPECT_EQ(recs[0].accuracy0, 0.9);
}

TEST(SelectReport, BelowConstraintIsInfeasible) {
    std::vector<Row> rows = {row("l1_structured", "rewind", 0, 1, 0.2, 0, 0.9, 0.9),
                             row("l1_structured", "rewind", 0, 1, 0.2, 1, 0.9, 0.9)};
    const auto rep = reports::select_report(rows, {});
    EXPECT_FALSE(rep.outcome.has_value());
    EXPECT_TRUE(rep.document["selection"]["chosen_index"].is_null());
    EXPECT_FALSE(rep.document["candidates"][0]["on_frontier"].get<bool>());
}

TEST(SelectReport, SingleFeasibleCandidateIsChosen) {
    std::vector<Row> rows = {row("l1_structured", "rewind", 0, 1, 0.2, 0, 0.99, 0.985),
                             row("l1_structured", "rewind", 0, 1, 0.2, 1, 0.98, 0.985)};
    const auto rep = reports::select_report(rows, {});
    ASSERT_TRUE(rep.outcome.has_value());
    EXPECT_EQ(rep.outcome->chosen, 0u);
    EXPECT_TRUE(rep.document["candidates"][0]["on_frontier"].get<bool>());
    EXPECT_EQ(rep.document["selection"]["chosen_index"], 0);
}

TEST(SelectReport, ThreeCandidatesMatchDirectScalarization) {
    // Two classes so max-min unfairness is |a0 - a1|.
    // A: sparsity 0.68, unfairness 0.001; B: 0.90, 0.010; C: 0.50, 0.020 (dominated by A).
    std::vector<Row> rows;
    const auto add = [&](const char* tech, std::size_t it, double sp, double a0, double a1) {
        rows.push_back(row(tech, "rewind", 0, it, sp, 0, a0, (a0 + a1) / 2));
        rows.push_back(row(tech, "rewind", 0, it, sp, 1, a1, (a0 + a1) / 2));
    };
    add("l1_unstructured", 5, 0.68, 0.9905, 0.9895);
    add("global_unstructured", 10, 0.90, 0.995, 0.985);
    add("random_unstructured", 3, 0.50, 0.995, 0.975);
    reports::SelectOptions opts;
    opts.weights = {{"sparsity", 1.0}, {"unfairness", 100.0}};
    const auto rep = reports::select_report(rows, opts);
    ASSERT_TRUE(rep.outcome.has_value());
    // u(A) = 0.68 - 0.1 = 0.58, u(B) = 0.90 - 1.0 = -0.10, C is off the frontier.
    const double uA = 0.68 - 100.0 * std::abs(0.9905 - 0.9895);
    const double uB = 0.90 - 100.0 * std::abs(0.995 - 0.985);
    EXPECT_GT(uA, uB);
    EXPECT_EQ(rep.outcome->chosen, 0u);
    const auto& c = rep.document["candidates"];
    EXPECT_TRUE(c[0]["on_frontier"].get<bool>());
    EXPECT_TRUE(c[1]["on_frontier"].get<bool>());
    EXPECT_FALSE(c[2]["on_frontier"].get<bool>());

    opts.weights = {{"sparsity", 1.0}, {"unfairness", 0.0}};
    EXPECT_EQ(reports::select_report(rows, opts).outcome->chosen, 1u);
}

TEST(SelectReport, SeedAveraging) {
    std::vector<Row> rows = {row("l1_unstructured", "rewind", 0, 2, 0.36, 0, 1.0, 0.99),
                             row("l1_unstructured", "rewind", 0, 2, 0.36, 1, 0.98, 0.99),
                             row("l1_unstructured", "rewind", 1, 2, 0.36, 0, 0.96, 0.97),
                             row("l1_unstructured", "rewind", 1, 2, 0.36, 1, 0.98, 0.97)};
    const auto cands = reports::seed_average(rows);
    ASSERT_EQ(cands.size(), 1u);
    EXPECT_EQ(cands[0].n_seeds, 2u);
    EXPECT_NEAR(cands[0].point.total_accuracy, 0.98, 1e-15);
    EXPECT_NEAR(*cands[0].point.per_class_accuracy[0], 0.98, 1e-15);
    // Average of per-seed gaps (0.02 and 0.02), not the gap of the averages (0).
    EXPECT_NEAR(cands[0].point.unfairness.at(metrics::FairnessMetric::max_min_gap), 0.02, 1e-15);
    const auto only_seed1 = reports::seed_average(rows, std::vector<std::uint64_t>{1});
    EXPECT_NEAR(only_seed1[0].point.total_accuracy, 0.97, 1e-15);
}

TEST(SelectReport, FrontierDocumentSchema) {
    std::vector<Row> rows = {row("l1_structured", "rewind", 0, 1, 0.2, 0, 0.99, 0.985),
                             row("l1_structured", "rewind", 0, 1, 0.2, 1, 0.98, 0.985)};
    reports::SelectOptions opts;
    opts.objectives = {"sparsity", "unfairness", "accuracy"};
    opts.metric = metrics::FairnessMetric::mean_min_gap;
    const auto doc = reports::select_report(rows, opts).document;
    for (const char* key : {"objectives", "constraint", "candidates", "selection"})
        EXPECT_TRUE(doc.contains(key)) << key;
    ASSERT_EQ(doc["objectives"].size(), 3u);
    EXPECT_EQ(doc["objectives"][1]["direction"], "minimize");
    EXPECT_EQ(doc["objectives"][2]["direction"], "maximize");
    EXPECT_EQ(doc["constraint"]["min_accuracy"], 0.98);
    const auto& c = doc["candidates"][0];
    for (const char* key : {"technique", "treatment", "sparsity", "total_accuracy", "unfairness",
                            "per_class_accuracy", "on_frontier"})
        EXPECT_TRUE(c.contains(key)) << key;
    EXPECT_TRUE(c["unfairness"].contains("max_min"));
    EXPECT_TRUE(c["unfairness"].contains("mean_min"));
    EXPECT_EQ(doc["selection"]["weights"].size(), 3u);
    EXPECT_THROW(reports::select_report(rows, {.objectives = {"sparsity", "speed"}}), ValidationError);
}

// ---------------------------------------------------------------------------
// Command line

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fresh_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_rows(const std::string& name, const std::vector<Row>& rows) {
        std::ostringstream os;
        experiment::write_csv(os, rows);
        write_text(dir_ / name, os.str());
        return dir_ / name;
    }

    fs::path dir_;
};

TEST_F(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(cli("--help"), 0);
    EXPECT_EQ(cli(""), 2);
    EXPECT_EQ(cli("run"), 2);
    EXPECT_EQ(cli("select --metric median x.csv"), 2);
    EXPECT_EQ(cli("fit " + (dir_ / "missing.csv").string()), 2);
}

TEST_F(Cli, RunThenReports) {
    write_text(dir_ / "grid.toml", kTinyConfig);
    EXPECT_EQ(cli("run --config " + (dir_ / "grid.toml").string() + " --jobs 2 --out " + (dir_ / "out").string()), 0);
    const auto csv = dir_ / "out" / "experiments.csv";
    ASSERT_TRUE(fs::exists(csv));
    EXPECT_EQ(experiment::load_csv(csv).size(), 8u * 21u * 3u);
    EXPECT_EQ(cli("curves " + csv.string() + " --out " + (dir_ / "curves.json").string()), 0);
    EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "curves.json"))["series"].size(), 24u);
    const int sel = cli("select " + csv.string() + " --min-accuracy 0 --weights sparsity=1,unfairness=100 --out " +
                        (dir_ / "frontier.json").string());
    EXPECT_EQ(sel, 0);
    const auto doc = nlohmann::json::parse(slurp(dir_ / "frontier.json"));
    EXPECT_EQ(doc["candidates"].size(), 2u * 2u * 21u);
    EXPECT_TRUE(doc["candidates"][doc["selection"]["chosen_index"].get<std::size_t>()]["on_frontier"].get<bool>());
}

TEST_F(Cli, OutputRootFromEnvironment) {
    write_text(dir_ / "grid.toml", kTinyConfig);
    const std::string cmd = "PRUNEFAIR_OUT=" + (dir_ / "env_out").string() + " " + PRUNEFAIR_CLI_PATH +
                            " run --config " + (dir_ / "grid.toml").string() + " >/dev/null 2>&1";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(dir_ / "env_out" / "experiments.csv"));
}

TEST_F(Cli, ExitCodes) {
    const auto infeasible = write_rows("low.csv", {row("l1_structured", "rewind", 0, 1, 0.2, 0, 0.9, 0.9),
                                                   row("l1_structured", "rewind", 0, 1, 0.2, 1, 0.9, 0.9)});
    EXPECT_EQ(cli("select " + infeasible.string()), 3);
    EXPECT_EQ(cli("select " + infeasible.string() + " --min-accuracy 0.5"), 0);
    EXPECT_EQ(cli("select " + infeasible.string() + " --weights speed=1"), 2);
    EXPECT_EQ(cli("fit " + infeasible.string()), 4);
    write_text(dir_ / "bad.csv", std::string(experiment::kCsvHeader) + "\nmnist,LeNet\n");
    EXPECT_EQ(cli("fit " + (dir_ / "bad.csv").string()), 2);
    write_text(dir_ / "bad.toml", "[train]\nepochs = many\n");
    EXPECT_EQ(cli("run --config " + (dir_ / "bad.toml").string()), 2);
}

TEST_F(Cli, CohortWritesWriterTable) {
    write_text(dir_ / "cohort.toml", R"([dataset]
rows = 12
cols = 12
classes = 3
[cohort]
groups = ["hsf0", "hsf4"]
writers = [3, 3]
tilt_mean = [0.0, 0.4]
min_digits = 10
max_digits = 12
[model]
arch = "mlp"
hidden = [8]
[train]
epochs = 1
[prune]
iterations = 2
)");
    EXPECT_EQ(cli("cohort --config " + (dir_ / "cohort.toml").string() + " --out " + (dir_ / "c").string()), 0);
    std::ifstream in(dir_ / "c" / "writers.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "writer_id,group,n,acc_before,acc_after,pct_change,mean_tilt,mean_abs_tilt,mean_activation,"
                      "mean_euclid");
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);)
        ++lines;
    EXPECT_EQ(lines, 6u);
    const auto fits = nlohmann::json::parse(slurp(dir_ / "c" / "cohort_fits.json"));
    EXPECT_TRUE(fits["fits"]["accuracy_after"]["mean_abs_tilt"].contains("groups"));
}
