#pragma once

// Labeled image datasets: IDX loading, metadata sidecars, seeded splits,
// class statistics (representation, imbalance, entropy) and synthetic
// stroke-image generators for desk-scale experiments.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "prunefair/errors.hpp"
#include "prunefair/rng.hpp"

namespace prunefair::dataset {

struct ExampleMeta {
    std::int64_t writer_id = 0;
    std::string group;

    friend bool operator==(const ExampleMeta&, const ExampleMeta&) = default;
};

/// Byte images with integer labels. Pixels are stored at their original byte
/// level; `normalized` maps them to [0, 1].
struct LabeledDataset {
    std::size_t channels = 1;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t num_classes = 0;
    std::vector<std::uint8_t> pixels;  // size() * dim(), row-major per image
    std::vector<int> labels;
    std::vector<ExampleMeta> metadata;  // empty, or one entry per example

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    std::size_t dim() const noexcept { return channels * rows * cols; }
    bool has_metadata() const noexcept { return !metadata.empty(); }

    std::span<const std::uint8_t> image(std::size_t i) const {
        return std::span<const std::uint8_t>(pixels).subspan(i * dim(), dim());
    }

    void normalized(std::size_t i, std::span<double> out) const {
        const auto img = image(i);
        for (std::size_t k = 0; k < img.size(); ++k)
            out[k] = img[k] / 255.0;
    }

    std::vector<double> normalized(std::size_t i) const {
        std::vector<double> out(dim());
        normalized(i, out);
        return out;
    }

    /// Throws DimensionError when the invariants are broken.
    void validate() const {
        if (pixels.size() != size() * dim())
            throw DimensionError("dataset has " + std::to_string(pixels.size()) +
                                 " pixel bytes, expected " + std::to_string(size() * dim()));
        if (!metadata.empty() && metadata.size() != size())
            throw DimensionError("metadata length " + std::to_string(metadata.size()) +
                                 " differs from example count " + std::to_string(size()));
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
                throw DimensionError("label " + std::to_string(labels[i]) + " of example " +
                                     std::to_string(i) + " outside [0, " +
                                     std::to_string(num_classes) + ")");
    }

    LabeledDataset subset(std::span<const std::size_t> indices) const {
        LabeledDataset out;
        out.channels = channels;
        out.rows = rows;
        out.cols = cols;
        out.num_classes = num_classes;
        out.pixels.reserve(indices.size() * dim());
        out.labels.reserve(indices.size());
        for (std::size_t i : indices) {
            const auto img = image(i);
            out.pixels.insert(out.pixels.end(), img.begin(), img.end());
            out.labels.push_back(labels[i]);
            if (has_metadata())
                out.metadata.push_back(metadata[i]);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// IDX format

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                               const char* what) {
    if (offset + 4 > bytes.size())
        throw ParseError(std::string("truncated IDX header: missing ") + what + " at offset " +
                             std::to_string(offset),
                         offset);
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ValidationError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline std::string hex32(std::uint32_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s = "0x";
    for (int shift = 28; shift >= 0; shift -= 4)
        s += digits[(v >> shift) & 0xF];
    return s;
}

}  // namespace detail

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels;
};

inline IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
    const auto magic = detail::read_be32(bytes, 0, "magic number");
    if (magic != kIdxImageMagic)
        throw ParseError("expected image magic 0x00000803 at offset 0, found " +
                             detail::hex32(magic),
                         0);
    IdxImages out;
    out.count = detail::read_be32(bytes, 4, "image count");
    out.rows = detail::read_be32(bytes, 8, "row count");
    out.cols = detail::read_be32(bytes, 12, "column count");
    const std::size_t need = out.count * out.rows * out.cols;
    if (bytes.size() - 16 < need)
        throw ParseError("truncated image data at offset " + std::to_string(bytes.size()) +
                             ": expected " + std::to_string(need) + " pixel bytes after offset 16",
                         bytes.size());
    out.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
    return out;
}

inline std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
    const auto magic = detail::read_be32(bytes, 0, "magic number");
    if (magic != kIdxLabelMagic)
        throw ParseError("expected label magic 0x00000801 at offset 0, found " +
                             detail::hex32(magic),
                         0);
    const std::size_t count = detail::read_be32(bytes, 4, "label count");
    if (bytes.size() - 8 < count)
        throw ParseError("truncated label data at offset " + std::to_string(bytes.size()) +
                             ": expected " + std::to_string(count) + " label bytes after offset 8",
                         bytes.size());
    return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

/// Builds a dataset from in-memory IDX image and label files.
inline LabeledDataset parse_idx(std::span<const std::uint8_t> image_bytes,
                                std::span<const std::uint8_t> label_bytes,
                                std::optional<std::size_t> num_classes = std::nullopt) {
    auto images = parse_idx_images(image_bytes);
    auto labels = parse_idx_labels(label_bytes);
    if (images.count != labels.size())
        throw ParseError("image/label count mismatch: " + std::to_string(images.count) +
                             " images (offset 4 of image file) vs " +
                             std::to_string(labels.size()) + " labels (offset 4 of label file)",
                         4);
    LabeledDataset ds;
    ds.rows = images.rows;
    ds.cols = images.cols;
    ds.pixels = std::move(images.pixels);
    ds.labels = std::move(labels);
    std::size_t max_label = 0;
    for (int l : ds.labels)
        max_label = std::max<std::size_t>(max_label, static_cast<std::size_t>(l));
    ds.num_classes = num_classes.value_or(ds.labels.empty() ? 0 : max_label + 1);
    ds.validate();
    return ds;
}

inline LabeledDataset load_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path,
                               std::optional<std::size_t> num_classes = std::nullopt) {
    const auto images = detail::read_file(images_path);
    const auto labels = detail::read_file(labels_path);
    return parse_idx(images, labels, num_classes);
}

inline std::vector<std::uint8_t> encode_idx_images(const LabeledDataset& ds) {
    if (ds.channels != 1)
        throw ValidationError("IDX images support a single channel");
    std::vector<std::uint8_t> out;
    out.reserve(16 + ds.pixels.size());
    detail::write_be32(out, kIdxImageMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(ds.size()));
    detail::write_be32(out, static_cast<std::uint32_t>(ds.rows));
    detail::write_be32(out, static_cast<std::uint32_t>(ds.cols));
    out.insert(out.end(), ds.pixels.begin(), ds.pixels.end());
    return out;
}

inline std::vector<std::uint8_t> encode_idx_labels(const LabeledDataset& ds) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + ds.size());
    detail::write_be32(out, kIdxLabelMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(ds.size()));
    for (int l : ds.labels)
        out.push_back(static_cast<std::uint8_t>(l));
    return out;
}

inline void write_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
    detail::write_file(images_path, encode_idx_images(ds));
    detail::write_file(labels_path, encode_idx_labels(ds));
}

// ---------------------------------------------------------------------------
// Metadata sidecar: CSV with header `index,writer_id,group`.

inline std::vector<ExampleMeta> parse_metadata_csv(std::istream& in, std::size_t expected) {
    std::vector<ExampleMeta> meta(expected);
    std::vector<bool> seen(expected, false);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line))
        throw ParseError("metadata CSV is empty", 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != "index,writer_id,group")
        throw ParseError("metadata CSV line 1: expected header 'index,writer_id,group'", 1);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string::npos)
            throw ParseError("metadata CSV line " + std::to_string(line_no) +
                                 ": expected 3 fields",
                             line_no);
        std::size_t index = 0;
        std::int64_t writer = 0;
        try {
            std::size_t used = 0;
            index = std::stoul(line.substr(0, c1), &used);
            if (used != c1)
                throw std::invalid_argument("index");
            const auto wtext = line.substr(c1 + 1, c2 - c1 - 1);
            writer = std::stoll(wtext, &used);
            if (used != wtext.size())
                throw std::invalid_argument("writer");
        } catch (const std::logic_error&) {
            throw ParseError("metadata CSV line " + std::to_string(line_no) +
                                 ": non-integer index or writer_id",
                             line_no);
        }
        if (index >= expected || seen[index])
            throw ParseError("metadata CSV line " + std::to_string(line_no) + ": index " +
                                 std::to_string(index) + " out of range or repeated",
                             line_no);
        seen[index] = true;
        meta[index] = ExampleMeta{writer, line.substr(c2 + 1)};
    }
    for (std::size_t i = 0; i < expected; ++i)
        if (!seen[i])
            throw ParseError("metadata CSV has no row for example " + std::to_string(i), line_no);
    return meta;
}

inline std::vector<ExampleMeta> load_metadata_csv(const std::filesystem::path& path,
                                                  std::size_t expected) {
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open " + path.string());
    return parse_metadata_csv(in, expected);
}

inline void write_metadata_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw ValidationError("cannot write " + path.string());
    out << "index,writer_id,group\n";
    for (std::size_t i = 0; i < ds.metadata.size(); ++i)
        out << i << ',' << ds.metadata[i].writer_id << ',' << ds.metadata[i].group << '\n';
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
    double validation_fraction = 0.2;
    std::uint64_t seed = 0;
};

/// Seeded disjoint train/validation partition. Both parts keep the original
/// example order.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data,
                                                       const SplitSpec& spec) {
    if (data.size() < 2)
        throw ValidationError("split needs at least 2 examples");
    if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0))
        throw ValidationError("validation fraction must lie in (0, 1)");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng(spec.seed).split("split");
    rng.shuffle(std::span<std::size_t>(order));
    auto n_val = static_cast<std::size_t>(
        std::llround(spec.validation_fraction * static_cast<double>(data.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
    return {data.subset(train), data.subset(val)};
}

// ---------------------------------------------------------------------------
// Class statistics

inline std::vector<std::size_t> class_counts(const LabeledDataset& data) {
    std::vector<std::size_t> counts(data.num_classes, 0);
    for (int l : data.labels)
        ++counts.at(static_cast<std::size_t>(l));
    return counts;
}

/// n_c: fraction of examples belonging to each class.
inline std::vector<double> class_fractions(const LabeledDataset& data) {
    if (data.empty())
        throw ValidationError("class fractions of an empty dataset");
    const auto counts = class_counts(data);
    std::vector<double> n(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c)
        n[c] = static_cast<double>(counts[c]) / static_cast<double>(data.size());
    return n;
}

/// r_c = n_c - mean(n); positive means over-represented.
inline std::vector<double> class_imbalance_from_fractions(std::span<const double> n) {
    const double mean = std::accumulate(n.begin(), n.end(), 0.0) / static_cast<double>(n.size());
    std::vector<double> r(n.size());
    for (std::size_t c = 0; c < n.size(); ++c)
        r[c] = n[c] - mean;
    return r;
}

inline std::vector<double> class_imbalance(const LabeledDataset& train) {
    const auto n = class_fractions(train);
    return class_imbalance_from_fractions(n);
}

/// Shannon entropy (bits) of the byte-level histogram of one image.
inline double image_entropy(std::span<const std::uint8_t> image) {
    if (image.empty())
        return 0.0;
    std::array<std::size_t, 256> hist{};
    for (auto v : image)
        ++hist[v];
    const double total = static_cast<double>(image.size());
    double h = 0.0;
    for (std::size_t count : hist) {
        if (count == 0)
            continue;
        const double p = static_cast<double>(count) / total;
        h -= p * std::log2(p);
    }
    return h;
}

enum class EntropyNormalization {
    per_image,    // average over the N_c images of the class
    class_count,  // literal 1/C prefactor on the sum over images
};

/// H_c: average per-image Shannon entropy of class c.
inline double class_entropy(const LabeledDataset& train, int c,
                            EntropyNormalization mode = EntropyNormalization::per_image) {
    double sum = 0.0;
    std::size_t n_c = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train.labels[i] != c)
            continue;
        sum += image_entropy(train.image(i));
        ++n_c;
    }
    if (n_c == 0)
        throw ValidationError("class " + std::to_string(c) + " has no examples");
    const double denom = mode == EntropyNormalization::per_image
                             ? static_cast<double>(n_c)
                             : static_cast<double>(train.num_classes);
    return sum / denom;
}

struct ClassStats {
    std::vector<std::size_t> counts;  // N_c
    std::vector<double> fractions;    // n_c
    std::vector<double> imbalance;    // r_c
    std::vector<double> entropy;      // H_c in bits; NaN for empty classes
};

inline ClassStats class_stats(const LabeledDataset& train,
                              EntropyNormalization mode = EntropyNormalization::per_image) {
    ClassStats s;
    s.counts = class_counts(train);
    s.fractions = class_fractions(train);
    s.imbalance = class_imbalance_from_fractions(s.fractions);
    s.entropy.resize(train.num_classes);
    for (std::size_t c = 0; c < train.num_classes; ++c)
        s.entropy[c] = s.counts[c] == 0
                           ? std::nan("")
                           : class_entropy(train, static_cast<int>(c), mode);
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic stroke images

/// Line segment in template coordinates: x and y in [-1, 1], y pointing down.
struct Stroke {
    double x0, y0, x1, y1;
};

struct ClassSpec {
    std::size_t count = 0;
    double noise = 0.0;          // amplitude of uniform per-pixel noise, in [0, 1] units
    double shift = 0.0;          // max per-example translation in pixels
    double tilt = 0.0;           // shear (column offset per row) applied to the template
    double tilt_spread = 0.0;    // per-example tilt jitter, uniform in +-spread
    double thickness = 0.0;      // stroke width in pixels; 0 uses SynthSpec::thickness
    double thickness_spread = 0.0;
    std::vector<Stroke> strokes;  // empty: generated from the seed
};

struct SynthSpec {
    std::size_t rows = 16;
    std::size_t cols = 16;
    std::size_t strokes_per_class = 3;
    double thickness = 2.0;
    std::vector<ClassSpec> classes;
};

/// Rasterizes strokes sheared by `tilt` and translated by (dx, dy) pixels.
/// Intensity falls off linearly over one pixel at the stroke edge.
inline void render_strokes(std::span<const Stroke> strokes, std::size_t rows, std::size_t cols,
                           double tilt, double thickness, double dx, double dy,
                           std::span<double> out) {
    const double cy = (static_cast<double>(rows) - 1.0) / 2.0 + dy;
    const double cx = (static_cast<double>(cols) - 1.0) / 2.0 + dx;
    const double half = 0.4 * static_cast<double>(std::min(rows, cols));
    struct Seg {
        double r0, c0, r1, c1;
    };
    std::vector<Seg> segs;
    segs.reserve(strokes.size());
    for (const auto& s : strokes)
        segs.push_back({cy + half * s.y0, cx + half * (s.x0 + tilt * s.y0), cy + half * s.y1,
                        cx + half * (s.x1 + tilt * s.y1)});
    const double radius = thickness / 2.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            double best = 1e300;
            const double pr = static_cast<double>(r);
            const double pc = static_cast<double>(c);
            for (const auto& g : segs) {
                const double vr = g.r1 - g.r0;
                const double vc = g.c1 - g.c0;
                const double len2 = vr * vr + vc * vc;
                double t = len2 > 0 ? ((pr - g.r0) * vr + (pc - g.c0) * vc) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double er = pr - (g.r0 + t * vr);
                const double ec = pc - (g.c0 + t * vc);
                best = std::min(best, er * er + ec * ec);
            }
            out[r * cols + c] = std::clamp(radius + 0.5 - std::sqrt(best), 0.0, 1.0);
        }
    }
}

inline std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::vector<Stroke> random_strokes(Rng& rng, std::size_t n) {
    std::vector<Stroke> strokes(n);
    for (auto& s : strokes)
        s = Stroke{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    return strokes;
}

/// Class templates resolved from a SynthSpec: explicit strokes where given,
/// otherwise seeded random strokes.
inline std::vector<std::vector<Stroke>> class_templates(const SynthSpec& spec, std::uint64_t seed) {
    std::vector<std::vector<Stroke>> out;
    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
        if (!spec.classes[c].strokes.empty()) {
            out.push_back(spec.classes[c].strokes);
        } else {
            Rng rng = Rng(seed).split("template").split(c);
            out.push_back(random_strokes(rng, spec.strokes_per_class));
        }
    }
    return out;
}

inline void render_example(const std::vector<Stroke>& strokes, const SynthSpec& spec,
                           const ClassSpec& cls, double tilt, double thickness, Rng& rng,
                           std::span<double> scratch, std::vector<std::uint8_t>& pixels) {
    const double dx = cls.shift > 0 ? rng.uniform(-cls.shift, cls.shift) : 0.0;
    const double dy = cls.shift > 0 ? rng.uniform(-cls.shift, cls.shift) : 0.0;
    render_strokes(strokes, spec.rows, spec.cols, tilt, thickness, dx, dy, scratch);
    for (double v : scratch) {
        const double noisy = cls.noise > 0 ? v + cls.noise * rng.uniform(-1, 1) : v;
        pixels.push_back(quantize(noisy));
    }
}

/// Deterministic stroke-image dataset. Examples are emitted class by class,
/// then shuffled with the same seed.
inline LabeledDataset synthesize(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.classes.empty())
        throw ValidationError("synthetic spec needs at least one class");
    if (spec.rows == 0 || spec.cols == 0)
        throw ValidationError("synthetic image size must be positive");
    for (std::size_t c = 0; c < spec.classes.size(); ++c)
        if (spec.classes[c].count == 0)
            throw ValidationError("class " + std::to_string(c) + " has a nonpositive count");

    const auto templates = class_templates(spec, seed);
    LabeledDataset ds;
    ds.rows = spec.rows;
    ds.cols = spec.cols;
    ds.num_classes = spec.classes.size();
    std::vector<double> scratch(spec.rows * spec.cols);
    Rng rng = Rng(seed).split("examples");
    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
        const auto& cls = spec.classes[c];
        const double base_thickness = cls.thickness > 0 ? cls.thickness : spec.thickness;
        for (std::size_t i = 0; i < cls.count; ++i) {
            const double tilt =
                cls.tilt + (cls.tilt_spread > 0 ? rng.uniform(-cls.tilt_spread, cls.tilt_spread) : 0.0);
            const double thick =
                base_thickness + (cls.thickness_spread > 0
                                      ? rng.uniform(-cls.thickness_spread, cls.thickness_spread)
                                      : 0.0);
            render_example(templates[c], spec, cls, tilt, std::max(thick, 0.0), rng, scratch,
                           ds.pixels);
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(seed).split("order").shuffle(std::span<std::size_t>(order));
    return ds.subset(order);
}

// ---------------------------------------------------------------------------
// Synthetic writer cohorts

struct WriterGroupSpec {
    std::string name;
    std::size_t writers = 0;
    double tilt_mean = 0.0;    // mean of the per-writer tilt
    double tilt_spread = 0.0;  // std deviation of the per-writer tilt
};

struct CohortSpec {
    SynthSpec base;  // image size, templates and per-class noise; class counts ignored
    std::vector<WriterGroupSpec> groups;
    std::size_t min_digits = 34;
    std::size_t max_digits = 134;
    double per_image_tilt_jitter = 0.05;
    double thickness_spread = 0.3;  // per-writer thickness offset, uniform in +-spread
};

/// Writers draw every class template with a personal tilt and thickness.
/// Writer ids are consecutive from `first_writer_id` in group order.
/// `template_seed` fixes the class templates so train and test cohorts
/// generated with different seeds share the same classes.
inline LabeledDataset synthesize_writers(const CohortSpec& spec, std::uint64_t seed,
                                         std::uint64_t template_seed,
                                         std::int64_t first_writer_id = 0) {
    const std::size_t n_classes = spec.base.classes.size();
    if (n_classes == 0)
        throw ValidationError("cohort spec needs at least one class");
    if (spec.min_digits == 0 || spec.max_digits < spec.min_digits)
        throw ValidationError("cohort digit range must satisfy 1 <= min <= max");
    const auto templates = class_templates(spec.base, template_seed);
    LabeledDataset ds;
    ds.rows = spec.base.rows;
    ds.cols = spec.base.cols;
    ds.num_classes = n_classes;
    std::vector<double> scratch(ds.rows * ds.cols);
    Rng rng = Rng(seed).split("writers");
    std::int64_t writer = first_writer_id;
    for (const auto& group : spec.groups) {
        for (std::size_t w = 0; w < group.writers; ++w, ++writer) {
            const double tilt = rng.normal(group.tilt_mean, group.tilt_spread);
            const double thick =
                spec.base.thickness +
                (spec.thickness_spread > 0 ? rng.uniform(-spec.thickness_spread, spec.thickness_spread)
                                           : 0.0);
            const std::size_t n =
                spec.min_digits + rng.below(spec.max_digits - spec.min_digits + 1);
            for (std::size_t i = 0; i < n; ++i) {
                const auto c = static_cast<std::size_t>(rng.below(n_classes));
                const auto& cls = spec.base.classes[c];
                const double t =
                    tilt + (spec.per_image_tilt_jitter > 0
                                ? rng.uniform(-spec.per_image_tilt_jitter, spec.per_image_tilt_jitter)
                                : 0.0);
                render_example(templates[c], spec.base, cls, t, std::max(thick, 0.0), rng, scratch,
                               ds.pixels);
                ds.labels.push_back(static_cast<int>(c));
                ds.metadata.push_back(ExampleMeta{writer, group.name});
            }
        }
    }
    return ds;
}

}  // namespace prunefair::dataset
