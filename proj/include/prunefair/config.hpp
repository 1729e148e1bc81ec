#pragma once

// Experiment configuration: a small TOML subset ([section] headers and
// key = value lines with strings, numbers, booleans and flat arrays) and the
// typed ExperimentConfig built from it.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "prunefair/dataset.hpp"
#include "prunefair/errors.hpp"
#include "prunefair/netcore.hpp"
#include "prunefair/pruning.hpp"
#include "prunefair/rng.hpp"
#include "prunefair/types.hpp"

namespace prunefair::config {

using Scalar = std::variant<std::string, double, bool>;

struct Value {
    std::vector<Scalar> items;  // one item for scalars
    bool is_array = false;
    std::size_t line = 0;
};

/// Flat "section.key" -> value table.
using Table = std::map<std::string, Value>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Drops a trailing '#' comment that is not inside a string.
inline std::string strip_comment(const std::string& s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\'))
            in_string = !in_string;
        else if (s[i] == '#' && !in_string)
            return s.substr(0, i);
    }
    return s;
}

inline Scalar parse_scalar(const std::string& text, std::size_t line) {
    const auto fail = [&](const std::string& why) -> ParseError {
        return ParseError("config line " + std::to_string(line) + ": " + why, line);
    };
    if (text.empty())
        throw fail("missing value");
    if (text.front() == '"') {
        if (text.size() < 2 || text.back() != '"')
            throw fail("unterminated string");
        std::string out;
        for (std::size_t i = 1; i + 1 < text.size(); ++i) {
            if (text[i] == '\\' && i + 2 < text.size()) {
                ++i;
                out += text[i] == 'n' ? '\n' : text[i] == 't' ? '\t' : text[i];
            } else if (text[i] == '"') {
                throw fail("unescaped quote inside string");
            } else {
                out += text[i];
            }
        }
        return out;
    }
    if (text == "true")
        return true;
    if (text == "false")
        return false;
    std::string digits;
    for (char ch : text)
        if (ch != '_')
            digits += ch;
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(digits, &used);
    } catch (const std::logic_error&) {
        throw fail("cannot parse value '" + text + "'");
    }
    if (used != digits.size())
        throw fail("cannot parse value '" + text + "'");
    return v;
}

inline std::vector<std::string> split_array(const std::string& body, std::size_t line) {
    std::vector<std::string> out;
    std::string cur;
    bool in_string = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
        const char ch = body[i];
        if (ch == '"' && (i == 0 || body[i - 1] != '\\'))
            in_string = !in_string;
        if (ch == ',' && !in_string) {
            out.push_back(trim(cur));
            cur.clear();
        } else if ((ch == '[' || ch == ']') && !in_string) {
            throw ParseError("config line " + std::to_string(line) + ": nested arrays are not supported",
                             line);
        } else {
            cur += ch;
        }
    }
    if (in_string)
        throw ParseError("config line " + std::to_string(line) + ": unterminated string", line);
    if (!trim(cur).empty())
        out.push_back(trim(cur));
    else if (!out.empty())
        throw ParseError("config line " + std::to_string(line) + ": trailing comma in array", line);
    return out;
}

}  // namespace detail

/// Parses the key/value text. Keys are "section.key"; keys before any
/// section header live in the "" section and are stored without a dot.
inline Table parse_table(std::istream& in) {
    Table table;
    std::string section;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string text = detail::trim(detail::strip_comment(raw));
        if (text.empty())
            continue;
        if (text.front() == '[') {
            if (text.back() != ']' || text.size() < 3)
                throw ParseError("config line " + std::to_string(line) + ": malformed section header",
                                 line);
            section = detail::trim(text.substr(1, text.size() - 2));
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line) + ": expected key = value", line);
        const std::string key = detail::trim(text.substr(0, eq));
        const std::string rhs = detail::trim(text.substr(eq + 1));
        if (key.empty() || key.find_first_of(" \t\"") != std::string::npos)
            throw ParseError("config line " + std::to_string(line) + ": invalid key '" + key + "'", line);
        Value v;
        v.line = line;
        if (!rhs.empty() && rhs.front() == '[') {
            if (rhs.back() != ']')
                throw ParseError("config line " + std::to_string(line) + ": unterminated array", line);
            v.is_array = true;
            for (const auto& item : detail::split_array(rhs.substr(1, rhs.size() - 2), line))
                v.items.push_back(detail::parse_scalar(item, line));
        } else {
            v.items.push_back(detail::parse_scalar(rhs, line));
        }
        const std::string full = section.empty() ? key : section + "." + key;
        if (!table.emplace(full, std::move(v)).second)
            throw ParseError("config line " + std::to_string(line) + ": duplicate key '" + full + "'", line);
    }
    return table;
}

/// Typed, consuming view over a Table. Every key must be read exactly once
/// through the accessors; leftovers are reported as unknown keys.
class Reader {
public:
    explicit Reader(Table table) : table_(std::move(table)) {}

    std::optional<std::string> string(const std::string& key) {
        auto v = take(key);
        if (!v)
            return std::nullopt;
        return scalar_as<std::string>(key, *v, "a string");
    }

    std::optional<double> number(const std::string& key) {
        auto v = take(key);
        if (!v)
            return std::nullopt;
        return scalar_as<double>(key, *v, "a number");
    }

    std::optional<std::uint64_t> count(const std::string& key) {
        const auto d = number(key);
        if (!d)
            return std::nullopt;
        return to_count(key, *d);
    }

    std::optional<bool> boolean(const std::string& key) {
        auto v = take(key);
        if (!v)
            return std::nullopt;
        return scalar_as<bool>(key, *v, "true or false");
    }

    std::optional<std::vector<double>> numbers(const std::string& key) {
        auto v = take(key);
        if (!v)
            return std::nullopt;
        std::vector<double> out;
        for (const auto& s : v->items) {
            if (!std::holds_alternative<double>(s))
                throw bad(key, *v, "an array of numbers");
            out.push_back(std::get<double>(s));
        }
        return out;
    }

    std::optional<std::vector<std::uint64_t>> counts(const std::string& key) {
        const auto ds = numbers(key);
        if (!ds)
            return std::nullopt;
        std::vector<std::uint64_t> out;
        for (double d : *ds)
            out.push_back(to_count(key, d));
        return out;
    }

    std::optional<std::vector<std::string>> strings(const std::string& key) {
        auto v = take(key);
        if (!v)
            return std::nullopt;
        std::vector<std::string> out;
        for (const auto& s : v->items) {
            if (!std::holds_alternative<std::string>(s))
                throw bad(key, *v, "an array of strings");
            out.push_back(std::get<std::string>(s));
        }
        return out;
    }

    std::size_t line_of(const std::string& key) const {
        const auto it = lines_.find(key);
        return it == lines_.end() ? 0 : it->second;
    }

    void finish() const {
        if (!table_.empty()) {
            const auto& [key, v] = *table_.begin();
            throw ParseError("config line " + std::to_string(v.line) + ": unknown key '" + key + "'",
                             v.line);
        }
    }

private:
    std::optional<Value> take(const std::string& key) {
        const auto it = table_.find(key);
        if (it == table_.end())
            return std::nullopt;
        Value v = std::move(it->second);
        table_.erase(it);
        lines_[key] = v.line;
        return v;
    }

    static ParseError bad(const std::string& key, const Value& v, const std::string& expected) {
        return ParseError("config line " + std::to_string(v.line) + ": '" + key + "' must be " + expected,
                          v.line);
    }

    template <typename T>
    static T scalar_as(const std::string& key, const Value& v, const std::string& expected) {
        if (v.is_array || v.items.size() != 1 || !std::holds_alternative<T>(v.items[0]))
            throw bad(key, v, expected);
        return std::get<T>(v.items[0]);
    }

    std::uint64_t to_count(const std::string& key, double d) const {
        if (!(d >= 0) || d != std::floor(d) || d > 9.007199254740992e15)
            throw ParseError("config line " + std::to_string(line_of(key)) + ": '" + key +
                                 "' must hold non-negative integers",
                             line_of(key));
        return static_cast<std::uint64_t>(d);
    }

    Table table_;
    std::map<std::string, std::size_t> lines_;
};

// ---------------------------------------------------------------------------
// Typed configuration

enum class DataSource { synthetic, idx };
enum class Architecture { lenet, mlp };

struct DatasetConfig {
    DataSource source = DataSource::synthetic;
    std::string name = "mnist";  // categorical level in the experiment CSV
    double validation_fraction = 0.2;  // held out of training; split seeded by the experiment seed
    double test_fraction = 0.2;        // carved off when no separate test set exists
    std::uint64_t split_seed = 0;      // seeds the test carve-out
    // synthetic
    dataset::SynthSpec synth;
    std::uint64_t data_seed = 0;
    // idx
    std::filesystem::path train_images, train_labels, test_images, test_labels;
};

struct ModelConfig {
    Architecture arch = Architecture::lenet;
    std::vector<std::size_t> hidden = {64};  // mlp only
    std::string name = "LeNet";
};

struct ExperimentConfig {
    DatasetConfig data;
    ModelConfig model;
    netcore::TrainConfig train;
    pruning::PruneSchedule schedule;
    std::vector<PruneTechnique> techniques;
    std::vector<WeightTreatment> treatments;
    std::vector<std::uint64_t> seeds;
    std::optional<std::filesystem::path> output;  // not part of the hash

    void validate() const {
        if (techniques.empty())
            throw ValidationError("grid.techniques must not be empty");
        if (treatments.empty())
            throw ValidationError("grid.treatments must not be empty");
        if (seeds.empty())
            throw ValidationError("grid.seeds must not be empty");
        train.validate();
        schedule.validate();
        if (!(data.validation_fraction > 0.0 && data.validation_fraction < 1.0))
            throw ValidationError("dataset.validation_fraction must lie in (0, 1)");
        if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0))
            throw ValidationError("dataset.test_fraction must lie in (0, 1)");
        if (data.source == DataSource::idx) {
            for (const auto* p : {&data.train_images, &data.train_labels})
                if (p->empty() || !std::filesystem::exists(*p))
                    throw ValidationError("dataset file '" + p->string() + "' does not exist");
            if (data.test_images.empty() != data.test_labels.empty())
                throw ValidationError("dataset.test_images and dataset.test_labels go together");
            for (const auto* p : {&data.test_images, &data.test_labels})
                if (!p->empty() && !std::filesystem::exists(*p))
                    throw ValidationError("dataset file '" + p->string() + "' does not exist");
        } else {
            if (data.synth.classes.size() < 2)
                throw ValidationError("dataset.class_counts needs at least two classes");
        }
        if (model.arch == Architecture::lenet && data.source == DataSource::synthetic &&
            (data.synth.rows < 12 || data.synth.cols < 12))
            throw ValidationError("lenet needs images of at least 12x12 pixels");
    }
};

namespace detail {

template <typename T>
std::vector<T> unique_in_order(const std::vector<T>& v, const std::string& key) {
    std::vector<T> out;
    for (const auto& x : v) {
        if (std::find(out.begin(), out.end(), x) != out.end())
            throw ValidationError(key + " lists a value twice");
        out.push_back(x);
    }
    return out;
}

/// Broadcasts a per-class array, or a single value, over `n` classes.
inline std::vector<double> per_class(Reader& r, const std::string& key, std::size_t n, double fallback) {
    auto v = r.numbers(key);
    if (!v)
        return std::vector<double>(n, fallback);
    if (v->size() == 1)
        return std::vector<double>(n, (*v)[0]);
    if (v->size() != n)
        throw ParseError("config line " + std::to_string(r.line_of(key)) + ": '" + key + "' needs " +
                             std::to_string(n) + " entries (one per class)",
                         r.line_of(key));
    return *v;
}

}  // namespace detail

/// Builds the typed config. Relative dataset and output paths resolve against
/// `base_dir` (normally the config file's directory).
inline ExperimentConfig from_table(Table table, const std::filesystem::path& base_dir = {}) {
    Reader r(std::move(table));
    ExperimentConfig cfg;
    const auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };

    if (auto out = r.string("experiment.output"))
        cfg.output = resolve(*out);

    auto& d = cfg.data;
    const auto source = r.string("dataset.source").value_or("synthetic");
    if (source == "synthetic")
        d.source = DataSource::synthetic;
    else if (source == "idx")
        d.source = DataSource::idx;
    else
        throw ParseError("config line " + std::to_string(r.line_of("dataset.source")) +
                             ": dataset.source must be \"synthetic\" or \"idx\"",
                         r.line_of("dataset.source"));
    d.name = r.string("dataset.name").value_or(d.name);
    d.validation_fraction = r.number("dataset.validation_fraction").value_or(d.validation_fraction);
    d.test_fraction = r.number("dataset.test_fraction").value_or(d.test_fraction);
    d.split_seed = r.count("dataset.split_seed").value_or(0);
    if (d.source == DataSource::idx) {
        for (auto [key, dst] : {std::pair{"dataset.train_images", &d.train_images},
                                std::pair{"dataset.train_labels", &d.train_labels},
                                std::pair{"dataset.test_images", &d.test_images},
                                std::pair{"dataset.test_labels", &d.test_labels}})
            if (auto p = r.string(key))
                *dst = resolve(*p);
    } else {
        d.data_seed = r.count("dataset.data_seed").value_or(0);
        d.synth.rows = r.count("dataset.rows").value_or(d.synth.rows);
        d.synth.cols = r.count("dataset.cols").value_or(d.synth.cols);
        d.synth.strokes_per_class = r.count("dataset.strokes_per_class").value_or(d.synth.strokes_per_class);
        d.synth.thickness = r.number("dataset.thickness").value_or(d.synth.thickness);
        const auto counts = r.counts("dataset.class_counts");
        if (!counts)
            throw ValidationError("synthetic datasets need dataset.class_counts");
        const std::size_t n = counts->size();
        const auto noise = detail::per_class(r, "dataset.noise", n, 0.1);
        const auto shift = detail::per_class(r, "dataset.shift", n, 1.0);
        const auto tilt_spread = detail::per_class(r, "dataset.tilt_spread", n, 0.1);
        const auto thick_spread = detail::per_class(r, "dataset.thickness_spread", n, 0.3);
        for (std::size_t c = 0; c < n; ++c) {
            dataset::ClassSpec cls;
            cls.count = (*counts)[c];
            cls.noise = noise[c];
            cls.shift = shift[c];
            cls.tilt_spread = tilt_spread[c];
            cls.thickness_spread = thick_spread[c];
            d.synth.classes.push_back(cls);
        }
    }

    const auto arch = r.string("model.arch").value_or("lenet");
    if (arch == "lenet")
        cfg.model.arch = Architecture::lenet;
    else if (arch == "mlp")
        cfg.model.arch = Architecture::mlp;
    else
        throw ParseError("config line " + std::to_string(r.line_of("model.arch")) +
                             ": model.arch must be \"lenet\" or \"mlp\"",
                         r.line_of("model.arch"));
    if (auto h = r.counts("model.hidden"))
        cfg.model.hidden.assign(h->begin(), h->end());
    cfg.model.name = r.string("model.name").value_or(cfg.model.arch == Architecture::lenet ? "LeNet" : "mlp");

    auto& t = cfg.train;
    t.epochs = r.count("train.epochs").value_or(t.epochs);
    t.learning_rate = r.number("train.learning_rate").value_or(t.learning_rate);
    t.batch_size = r.count("train.batch_size").value_or(t.batch_size);
    t.augmentation.crop_padding = r.count("train.crop_padding").value_or(2);
    t.augmentation.horizontal_flip = r.boolean("train.horizontal_flip").value_or(false);

    cfg.schedule.iterations = r.count("prune.iterations").value_or(cfg.schedule.iterations);
    cfg.schedule.fraction_per_iteration =
        r.number("prune.fraction").value_or(cfg.schedule.fraction_per_iteration);

    for (const auto& name : r.strings("grid.techniques").value_or(std::vector<std::string>{})) {
        const auto tq = parse_technique(name);
        if (!tq)
            throw ParseError("config line " + std::to_string(r.line_of("grid.techniques")) +
                                 ": unknown pruning technique '" + name + "'",
                             r.line_of("grid.techniques"));
        cfg.techniques.push_back(*tq);
    }
    for (const auto& name : r.strings("grid.treatments").value_or(std::vector<std::string>{})) {
        const auto tr = parse_treatment(name);
        if (!tr)
            throw ParseError("config line " + std::to_string(r.line_of("grid.treatments")) +
                                 ": unknown weight treatment '" + name + "'",
                             r.line_of("grid.treatments"));
        cfg.treatments.push_back(*tr);
    }
    cfg.seeds = r.counts("grid.seeds").value_or(std::vector<std::uint64_t>{});
    r.finish();

    cfg.techniques = detail::unique_in_order(cfg.techniques, "grid.techniques");
    cfg.treatments = detail::unique_in_order(cfg.treatments, "grid.treatments");
    cfg.seeds = detail::unique_in_order(cfg.seeds, "grid.seeds");
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
    return from_table(parse_table(in), base_dir);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open config " + path.string());
    return parse_config(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Hashing

namespace detail {

inline void put(std::ostringstream& os, const char* key, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << key << '=' << buf << ';';
}

inline void put(std::ostringstream& os, const char* key, std::uint64_t v) { os << key << '=' << v << ';'; }

inline void put(std::ostringstream& os, const char* key, const std::string& v) {
    os << key << '=' << v.size() << ':' << v << ';';
}

}  // namespace detail

/// Canonical text of everything that influences a single grid cell's
/// results. The grid lists and the output location are excluded.
inline std::string cell_basis(const ExperimentConfig& c) {
    std::ostringstream os;
    using detail::put;
    put(os, "source", std::uint64_t(c.data.source == DataSource::idx));
    put(os, "dataset", c.data.name);
    put(os, "vfrac", c.data.validation_fraction);
    put(os, "tfrac", c.data.test_fraction);
    put(os, "split_seed", c.data.split_seed);
    if (c.data.source == DataSource::idx) {
        put(os, "train_images", c.data.train_images.lexically_normal().string());
        put(os, "train_labels", c.data.train_labels.lexically_normal().string());
        put(os, "test_images", c.data.test_images.lexically_normal().string());
        put(os, "test_labels", c.data.test_labels.lexically_normal().string());
    } else {
        const auto& s = c.data.synth;
        put(os, "data_seed", c.data.data_seed);
        put(os, "rows", std::uint64_t(s.rows));
        put(os, "cols", std::uint64_t(s.cols));
        put(os, "strokes", std::uint64_t(s.strokes_per_class));
        put(os, "thickness", s.thickness);
        for (const auto& cls : s.classes) {
            put(os, "count", std::uint64_t(cls.count));
            put(os, "noise", cls.noise);
            put(os, "shift", cls.shift);
            put(os, "tilt_spread", cls.tilt_spread);
            put(os, "thickness_spread", cls.thickness_spread);
        }
    }
    put(os, "arch", std::uint64_t(c.model.arch == Architecture::mlp));
    if (c.model.arch == Architecture::mlp)
        for (auto h : c.model.hidden)
            put(os, "hidden", std::uint64_t(h));
    put(os, "model", c.model.name);
    put(os, "epochs", std::uint64_t(c.train.epochs));
    put(os, "lr", c.train.learning_rate);
    put(os, "batch", std::uint64_t(c.train.batch_size));
    put(os, "crop", std::uint64_t(c.train.augmentation.crop_padding));
    put(os, "flip", std::uint64_t(c.train.augmentation.horizontal_flip));
    put(os, "iterations", std::uint64_t(c.schedule.iterations));
    put(os, "fraction", c.schedule.fraction_per_iteration);
    return os.str();
}

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Hash of every semantically meaningful field, the grid lists included.
inline std::string config_hash(const ExperimentConfig& c) {
    std::ostringstream os;
    os << cell_basis(c);
    for (auto t : c.techniques)
        os << "technique=" << to_string(t) << ';';
    for (auto t : c.treatments)
        os << "treatment=" << to_string(t) << ';';
    for (auto s : c.seeds)
        os << "seed=" << s << ';';
    return hex64(prunefair::detail::fnv1a(os.str()));
}

/// Identifies one trajectory; stable while the cell's inputs are unchanged.
inline std::string cell_hash(const ExperimentConfig& c, PruneTechnique t, WeightTreatment w,
                             std::uint64_t seed) {
    const std::string key = cell_basis(c) + "cell=" + std::string(to_string(t)) + "/" +
                            std::string(to_string(w)) + "/" + std::to_string(seed);
    return hex64(prunefair::detail::fnv1a(key));
}

}  // namespace prunefair::config
