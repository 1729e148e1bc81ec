#pragma once

// Minimal deterministic classifier: dense / conv2d / maxpool2x2 / relu layers,
// softmax cross-entropy SGD with masked gradients, and weight snapshots for
// rewinding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "prunefair/dataset.hpp"
#include "prunefair/errors.hpp"
#include "prunefair/rng.hpp"
#include "prunefair/tensor.hpp"

namespace prunefair::netcore {

enum class LayerKind { dense, conv2d, maxpool2x2, relu };

inline std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::maxpool2x2: return "maxpool2x2";
        case LayerKind::relu: return "relu";
    }
    return "?";
}

struct Shape3 {
    std::size_t channels = 1;
    std::size_t rows = 1;
    std::size_t cols = 1;

    constexpr std::size_t size() const noexcept { return channels * rows * cols; }
    friend constexpr bool operator==(const Shape3&, const Shape3&) = default;
};

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t units = 0;   // dense outputs or conv output channels
    std::size_t kernel = 0;  // conv kernel size

    static LayerSpec dense(std::size_t units) { return {LayerKind::dense, units, 0}; }
    static LayerSpec conv(std::size_t channels, std::size_t kernel) {
        return {LayerKind::conv2d, channels, kernel};
    }
    static LayerSpec pool() { return {LayerKind::maxpool2x2, 0, 0}; }
    static LayerSpec relu() { return {LayerKind::relu, 0, 0}; }
};

/// One layer. Dense weights are (out, in); conv weights are
/// (out_channels, in_channels, k, k). `mask` has the weights' shape and the
/// effective weight is weights * mask.
struct Layer {
    LayerKind kind = LayerKind::relu;
    Shape3 in;
    Shape3 out;
    std::size_t kernel = 0;
    Tensor weights;
    Tensor bias;
    Tensor mask;

    bool prunable() const noexcept {
        return kind == LayerKind::dense || kind == LayerKind::conv2d;
    }

    /// Number of slices along the input axis (dense columns or conv input
    /// channels).
    std::size_t input_slices() const noexcept {
        return kind == LayerKind::dense ? in.size() : in.channels;
    }

    /// Flat weight indices belonging to input slice `s`.
    template <typename Fn>
    void for_each_in_slice(std::size_t s, Fn&& fn) const {
        if (kind == LayerKind::dense) {
            const std::size_t n_in = in.size();
            for (std::size_t o = 0; o < out.size(); ++o)
                fn(o * n_in + s);
        } else {
            const std::size_t kk = kernel * kernel;
            for (std::size_t oc = 0; oc < out.channels; ++oc) {
                const std::size_t base = (oc * in.channels + s) * kk;
                for (std::size_t k = 0; k < kk; ++k)
                    fn(base + k);
            }
        }
    }
};

struct WeightSnapshot {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    friend bool operator==(const WeightSnapshot&, const WeightSnapshot&) = default;
};

class Network {
public:
    Network() = default;

    /// Builds the layer stack and initializes weights and biases uniformly in
    /// +-1/sqrt(fan_in) from `seed`. The initialization is recorded as the
    /// rewind snapshot.
    Network(Shape3 input, std::span<const LayerSpec> specs, std::uint64_t seed)
        : input_(input), seed_(seed) {
        Shape3 cur = input;
        Rng rng = Rng(seed).split("init");
        for (const auto& spec : specs) {
            Layer layer;
            layer.kind = spec.kind;
            layer.in = cur;
            switch (spec.kind) {
                case LayerKind::dense: {
                    if (spec.units == 0)
                        throw ValidationError("dense layer needs at least one unit");
                    layer.out = Shape3{spec.units, 1, 1};
                    layer.weights = Tensor({spec.units, cur.size()});
                    layer.bias = Tensor({spec.units});
                    init_uniform(layer, cur.size(), rng);
                    break;
                }
                case LayerKind::conv2d: {
                    if (spec.units == 0 || spec.kernel == 0 || spec.kernel > cur.rows ||
                        spec.kernel > cur.cols)
                        throw ValidationError("conv layer kernel " + std::to_string(spec.kernel) +
                                              " does not fit input " + std::to_string(cur.rows) +
                                              "x" + std::to_string(cur.cols));
                    layer.kernel = spec.kernel;
                    layer.out = Shape3{spec.units, cur.rows - spec.kernel + 1,
                                       cur.cols - spec.kernel + 1};
                    layer.weights = Tensor({spec.units, cur.channels, spec.kernel, spec.kernel});
                    layer.bias = Tensor({spec.units});
                    init_uniform(layer, cur.channels * spec.kernel * spec.kernel, rng);
                    break;
                }
                case LayerKind::maxpool2x2:
                    if (cur.rows < 2 || cur.cols < 2)
                        throw ValidationError("maxpool2x2 on an input smaller than 2x2");
                    layer.out = Shape3{cur.channels, cur.rows / 2, cur.cols / 2};
                    break;
                case LayerKind::relu:
                    layer.out = cur;
                    break;
            }
            if (layer.prunable())
                layer.mask = Tensor(layer.weights.shape, 1.0);
            cur = layer.out;
            layers_.push_back(std::move(layer));
        }
        if (layers_.empty())
            throw ValidationError("network needs at least one layer");
        initial_ = take_snapshot();
    }

    /// Reference LeNet: two 3x3 conv-relu-maxpool blocks (6 and 16 maps),
    /// then dense 120 -> 84 -> classes with ReLU between.
    static Network lenet(Shape3 input, std::size_t classes, std::uint64_t seed) {
        const std::vector<LayerSpec> specs = {
            LayerSpec::conv(6, 3),   LayerSpec::relu(),  LayerSpec::pool(),
            LayerSpec::conv(16, 3),  LayerSpec::relu(),  LayerSpec::pool(),
            LayerSpec::dense(120),   LayerSpec::relu(),  LayerSpec::dense(84),
            LayerSpec::relu(),       LayerSpec::dense(classes)};
        return Network(input, specs, seed);
    }

    static Network mlp(Shape3 input, std::span<const std::size_t> hidden, std::size_t classes,
                       std::uint64_t seed) {
        std::vector<LayerSpec> specs;
        for (std::size_t h : hidden) {
            specs.push_back(LayerSpec::dense(h));
            specs.push_back(LayerSpec::relu());
        }
        specs.push_back(LayerSpec::dense(classes));
        return Network(input, specs, seed);
    }

    std::vector<Layer>& layers() noexcept { return layers_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    Shape3 input_shape() const noexcept { return input_; }
    std::size_t num_classes() const noexcept { return layers_.back().out.size(); }
    std::uint64_t seed() const noexcept { return seed_; }

    const WeightSnapshot& initial_snapshot() const noexcept { return initial_; }

    /// Re-records the current weights as the rewind point (for hand-built nets).
    void reset_initial_snapshot() { initial_ = take_snapshot(); }

    std::size_t prunable_weight_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers_)
            if (l.prunable())
                n += l.weights.size();
        return n;
    }

    WeightSnapshot take_snapshot() const {
        WeightSnapshot s;
        for (const auto& l : layers_) {
            s.weights.push_back(l.weights);
            s.biases.push_back(l.bias);
        }
        return s;
    }

private:
    static void init_uniform(Layer& layer, std::size_t fan_in, Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& w : layer.weights.values)
            w = rng.uniform(-bound, bound);
        for (double& b : layer.bias.values)
            b = rng.uniform(-bound, bound);
    }

    std::vector<Layer> layers_;
    Shape3 input_;
    WeightSnapshot initial_;
    std::uint64_t seed_ = 0;
};

inline WeightSnapshot snapshot(const Network& net) { return net.take_snapshot(); }

/// Sets every unmasked weight to its snapshot value and every masked weight
/// to zero. Biases are restored from the snapshot.
inline void restore_unmasked(Network& net, const WeightSnapshot& snap) {
    auto& layers = net.layers();
    if (snap.weights.size() != layers.size() || snap.biases.size() != layers.size())
        throw DimensionError("snapshot has " + std::to_string(snap.weights.size()) +
                             " layers, network has " + std::to_string(layers.size()));
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        if (snap.weights[i].shape != l.weights.shape || snap.biases[i].shape != l.bias.shape)
            throw DimensionError("snapshot shape mismatch at layer " + std::to_string(i));
        if (!l.prunable())
            continue;
        for (std::size_t k = 0; k < l.weights.size(); ++k)
            l.weights[k] = l.mask[k] != 0.0 ? snap.weights[i][k] : 0.0;
        l.bias = snap.biases[i];
    }
}

struct Augmentation {
    std::size_t crop_padding = 0;  // random crop after zero padding by this many pixels
    bool horizontal_flip = false;  // mirror columns with probability 1/2
};

struct TrainConfig {
    std::size_t epochs = 30;
    double learning_rate = 0.01;
    std::size_t batch_size = 32;
    Augmentation augmentation;

    void validate() const {
        if (epochs < 1)
            throw ValidationError("epochs must be >= 1");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ValidationError("learning rate must be finite and non-negative");
        if (batch_size < 1)
            throw ValidationError("batch size must be >= 1");
    }
};

/// Per-layer gradients with the weights' and biases' shapes.
struct Gradients {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
};

namespace detail {

/// Activation and gradient buffers for one example.
struct Workspace {
    std::vector<std::vector<double>> acts;   // acts[i] is the input of layer i
    std::vector<std::vector<double>> grads;  // d loss / d acts[i]
    std::vector<std::vector<std::uint32_t>> argmax;
    std::vector<std::vector<double>> effective;  // weights * mask per layer

    explicit Workspace(const Network& net) {
        const auto& layers = net.layers();
        acts.resize(layers.size() + 1);
        grads.resize(layers.size() + 1);
        argmax.resize(layers.size());
        effective.resize(layers.size());
        acts[0].resize(net.input_shape().size());
        grads[0].resize(net.input_shape().size());
        for (std::size_t i = 0; i < layers.size(); ++i) {
            acts[i + 1].resize(layers[i].out.size());
            grads[i + 1].resize(layers[i].out.size());
            if (layers[i].kind == LayerKind::maxpool2x2)
                argmax[i].resize(layers[i].out.size());
        }
        refresh(net);
    }

    void refresh(const Network& net) {
        const auto& layers = net.layers();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (!layers[i].prunable())
                continue;
            auto& eff = effective[i];
            eff.resize(layers[i].weights.size());
            for (std::size_t k = 0; k < eff.size(); ++k)
                eff[k] = layers[i].weights[k] * layers[i].mask[k];
        }
    }

    std::span<const double> logits() const { return acts.back(); }
};

inline void forward_one(const Network& net, Workspace& ws) {
    const auto& layers = net.layers();
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const Layer& l = layers[li];
        const double* x = ws.acts[li].data();
        double* y = ws.acts[li + 1].data();
        switch (l.kind) {
            case LayerKind::dense: {
                const std::size_t n_in = l.in.size();
                const double* w = ws.effective[li].data();
                for (std::size_t o = 0; o < l.out.size(); ++o) {
                    const double* row = w + o * n_in;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < n_in; ++i)
                        acc += row[i] * x[i];
                    y[o] = acc + l.bias[o];
                }
                break;
            }
            case LayerKind::conv2d: {
                const std::size_t k = l.kernel, ic_n = l.in.channels;
                const std::size_t ir = l.in.rows, icol = l.in.cols;
                const std::size_t orow = l.out.rows, ocol = l.out.cols;
                const double* w = ws.effective[li].data();
                for (std::size_t oc = 0; oc < l.out.channels; ++oc) {
                    double* plane = y + oc * orow * ocol;
                    std::fill(plane, plane + orow * ocol, l.bias[oc]);
                    for (std::size_t ic = 0; ic < ic_n; ++ic) {
                        const double* in_plane = x + ic * ir * icol;
                        for (std::size_t kr = 0; kr < k; ++kr) {
                            for (std::size_t kc = 0; kc < k; ++kc) {
                                const double wv = w[((oc * ic_n + ic) * k + kr) * k + kc];
                                if (wv == 0.0)
                                    continue;
                                for (std::size_t r = 0; r < orow; ++r) {
                                    const double* src = in_plane + (r + kr) * icol + kc;
                                    double* dst = plane + r * ocol;
                                    for (std::size_t c = 0; c < ocol; ++c)
                                        dst[c] += wv * src[c];
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::maxpool2x2: {
                const std::size_t icol = l.in.cols, ir = l.in.rows;
                auto& am = ws.argmax[li];
                for (std::size_t ch = 0; ch < l.out.channels; ++ch) {
                    for (std::size_t r = 0; r < l.out.rows; ++r) {
                        for (std::size_t c = 0; c < l.out.cols; ++c) {
                            std::size_t best = (ch * ir + 2 * r) * icol + 2 * c;
                            for (std::size_t dr = 0; dr < 2; ++dr)
                                for (std::size_t dc = 0; dc < 2; ++dc) {
                                    const std::size_t idx = (ch * ir + 2 * r + dr) * icol + 2 * c + dc;
                                    if (x[idx] > x[best])
                                        best = idx;
                                }
                            const std::size_t o = (ch * l.out.rows + r) * l.out.cols + c;
                            y[o] = x[best];
                            am[o] = static_cast<std::uint32_t>(best);
                        }
                    }
                }
                break;
            }
            case LayerKind::relu:
                for (std::size_t i = 0; i < l.in.size(); ++i)
                    y[i] = x[i] > 0.0 ? x[i] : 0.0;
                break;
        }
    }
}

/// Accumulates parameter gradients given d loss / d logits in ws.grads.back().
/// Gradients of masked weights are left at zero.
inline void backward_one(const Network& net, Workspace& ws, Gradients& g) {
    const auto& layers = net.layers();
    for (std::size_t li = layers.size(); li-- > 0;) {
        const Layer& l = layers[li];
        const double* x = ws.acts[li].data();
        const double* gy = ws.grads[li + 1].data();
        double* gx = ws.grads[li].data();
        const bool need_gx = li > 0;
        switch (l.kind) {
            case LayerKind::dense: {
                const std::size_t n_in = l.in.size();
                const double* w = ws.effective[li].data();
                const double* m = l.mask.values.data();
                double* gw = g.weights[li].values.data();
                double* gb = g.biases[li].values.data();
                if (need_gx)
                    std::fill(gx, gx + n_in, 0.0);
                for (std::size_t o = 0; o < l.out.size(); ++o) {
                    const double go = gy[o];
                    gb[o] += go;
                    if (go == 0.0)
                        continue;
                    double* gw_row = gw + o * n_in;
                    const double* m_row = m + o * n_in;
                    for (std::size_t i = 0; i < n_in; ++i)
                        gw_row[i] += go * x[i] * m_row[i];
                    if (need_gx) {
                        const double* w_row = w + o * n_in;
                        for (std::size_t i = 0; i < n_in; ++i)
                            gx[i] += w_row[i] * go;
                    }
                }
                break;
            }
            case LayerKind::conv2d: {
                const std::size_t k = l.kernel, ic_n = l.in.channels;
                const std::size_t ir = l.in.rows, icol = l.in.cols;
                const std::size_t orow = l.out.rows, ocol = l.out.cols;
                const double* w = ws.effective[li].data();
                const double* m = l.mask.values.data();
                double* gw = g.weights[li].values.data();
                double* gb = g.biases[li].values.data();
                if (need_gx)
                    std::fill(gx, gx + l.in.size(), 0.0);
                for (std::size_t oc = 0; oc < l.out.channels; ++oc) {
                    const double* gplane = gy + oc * orow * ocol;
                    double bsum = 0.0;
                    for (std::size_t i = 0; i < orow * ocol; ++i)
                        bsum += gplane[i];
                    gb[oc] += bsum;
                    for (std::size_t ic = 0; ic < ic_n; ++ic) {
                        const double* in_plane = x + ic * ir * icol;
                        double* gin_plane = need_gx ? gx + ic * ir * icol : nullptr;
                        for (std::size_t kr = 0; kr < k; ++kr) {
                            for (std::size_t kc = 0; kc < k; ++kc) {
                                const std::size_t widx = ((oc * ic_n + ic) * k + kr) * k + kc;
                                if (m[widx] == 0.0)
                                    continue;
                                const double wv = w[widx];
                                double acc = 0.0;
                                for (std::size_t r = 0; r < orow; ++r) {
                                    const double* src = in_plane + (r + kr) * icol + kc;
                                    const double* gr = gplane + r * ocol;
                                    for (std::size_t c = 0; c < ocol; ++c)
                                        acc += gr[c] * src[c];
                                }
                                gw[widx] += acc * m[widx];
                                if (gin_plane && wv != 0.0) {
                                    for (std::size_t r = 0; r < orow; ++r) {
                                        double* dst = gin_plane + (r + kr) * icol + kc;
                                        const double* gr = gplane + r * ocol;
                                        for (std::size_t c = 0; c < ocol; ++c)
                                            dst[c] += wv * gr[c];
                                    }
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::maxpool2x2: {
                if (!need_gx)
                    break;
                std::fill(gx, gx + l.in.size(), 0.0);
                const auto& am = ws.argmax[li];
                for (std::size_t o = 0; o < l.out.size(); ++o)
                    gx[am[o]] += gy[o];
                break;
            }
            case LayerKind::relu:
                if (!need_gx)
                    break;
                for (std::size_t i = 0; i < l.in.size(); ++i)
                    gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
                break;
        }
    }
}

/// Softmax cross-entropy of the logits in ws; writes d loss / d logits.
inline double softmax_xent(Workspace& ws, int label) {
    const auto& z = ws.acts.back();
    auto& dz = ws.grads.back();
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        dz[j] = std::exp(z[j] - zmax);
        sum += dz[j];
    }
    for (double& v : dz)
        v /= sum;
    dz[static_cast<std::size_t>(label)] -= 1.0;
    return std::log(sum) + zmax - z[static_cast<std::size_t>(label)];
}

inline Gradients zero_gradients(const Network& net) {
    Gradients g;
    for (const auto& l : net.layers()) {
        g.weights.emplace_back(l.weights.shape.empty() ? Tensor() : Tensor(l.weights.shape));
        g.biases.emplace_back(l.bias.shape.empty() ? Tensor() : Tensor(l.bias.shape));
    }
    return g;
}

inline void check_batch(const Network& net, const Tensor& batch) {
    const std::size_t d = net.input_shape().size();
    if (batch.shape.size() < 2 || batch.values.size() != batch.shape[0] * d)
        throw DimensionError("batch shape " + Tensor::shape_string(batch.shape) +
                             " does not match network input of size " + std::to_string(d));
}

inline void check_dataset(const Network& net, const dataset::LabeledDataset& data) {
    if (data.dim() != net.input_shape().size())
        throw DimensionError("dataset images have " + std::to_string(data.dim()) +
                             " values, network expects " +
                             std::to_string(net.input_shape().size()));
}

inline void augment(std::span<double> x, const Shape3& shape, const Augmentation& aug, Rng& rng,
                    std::vector<double>& scratch) {
    if (aug.crop_padding == 0 && !aug.horizontal_flip)
        return;
    const auto pad = static_cast<long>(aug.crop_padding);
    const long dy = pad ? static_cast<long>(rng.below(2 * aug.crop_padding + 1)) - pad : 0;
    const long dx = pad ? static_cast<long>(rng.below(2 * aug.crop_padding + 1)) - pad : 0;
    const bool flip = aug.horizontal_flip && rng.below(2) == 1;
    if (dy == 0 && dx == 0 && !flip)
        return;
    scratch.assign(x.begin(), x.end());
    const long rows = static_cast<long>(shape.rows), cols = static_cast<long>(shape.cols);
    for (std::size_t ch = 0; ch < shape.channels; ++ch) {
        const double* src = scratch.data() + ch * shape.rows * shape.cols;
        double* dst = x.data() + ch * shape.rows * shape.cols;
        for (long r = 0; r < rows; ++r) {
            for (long c = 0; c < cols; ++c) {
                const long sr = r + dy;
                long sc = c + dx;
                if (flip)
                    sc = cols - 1 - sc;
                dst[r * cols + c] = (sr >= 0 && sr < rows && sc >= 0 && sc < cols)
                                        ? src[sr * cols + sc]
                                        : 0.0;
            }
        }
    }
}

}  // namespace detail

/// Logits for a batch shaped (B, ...) whose trailing dims hold one input.
inline Tensor forward(const Network& net, const Tensor& batch) {
    detail::check_batch(net, batch);
    const std::size_t n = batch.shape[0], d = net.input_shape().size(), c = net.num_classes();
    detail::Workspace ws(net);
    Tensor out({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(batch.values.begin() + static_cast<std::ptrdiff_t>(i * d), d, ws.acts[0].begin());
        detail::forward_one(net, ws);
        std::copy(ws.acts.back().begin(), ws.acts.back().end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(i * c));
    }
    return out;
}

/// Index of the largest logit; ties go to the lowest class index.
inline int argmax(std::span<const double> logits) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j)
        if (logits[j] > logits[best])
            best = j;
    return static_cast<int>(best);
}

inline std::vector<int> predict(const Network& net, const Tensor& batch) {
    const Tensor logits = forward(net, batch);
    const std::size_t c = net.num_classes();
    std::vector<int> labels(batch.shape[0]);
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = argmax(std::span<const double>(logits.values).subspan(i * c, c));
    return labels;
}

/// Predicted label per example, in dataset order.
inline std::vector<int> evaluate(const Network& net, const dataset::LabeledDataset& data) {
    detail::check_dataset(net, data);
    detail::Workspace ws(net);
    std::vector<int> labels(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data.normalized(i, ws.acts[0]);
        detail::forward_one(net, ws);
        labels[i] = argmax(ws.logits());
    }
    return labels;
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to every weight and bias.
inline double loss_and_gradients(const Network& net, const Tensor& batch,
                                 std::span<const int> labels, Gradients& grads) {
    detail::check_batch(net, batch);
    const std::size_t n = batch.shape[0], d = net.input_shape().size();
    if (labels.size() != n)
        throw DimensionError("label count does not match batch size");
    detail::Workspace ws(net);
    grads = detail::zero_gradients(net);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(batch.values.begin() + static_cast<std::ptrdiff_t>(i * d), d, ws.acts[0].begin());
        detail::forward_one(net, ws);
        loss += detail::softmax_xent(ws, labels[i]);
        detail::backward_one(net, ws, grads);
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& t : grads.weights)
        for (double& v : t.values)
            v *= inv;
    for (auto& t : grads.biases)
        for (double& v : t.values)
            v *= inv;
    return loss * inv;
}

/// Plain minibatch SGD on softmax cross-entropy. The example order is
/// reshuffled every epoch from `rng`; the last partial batch is kept.
/// Masked weights receive no update.
inline void train(Network& net, const dataset::LabeledDataset& data, const TrainConfig& cfg,
                  Rng& rng) {
    cfg.validate();
    if (data.empty())
        throw ValidationError("cannot train on an empty dataset");
    detail::check_dataset(net, data);
    for (int l : data.labels)
        if (l < 0 || static_cast<std::size_t>(l) >= net.num_classes())
            throw ValidationError("label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(net.num_classes()) + ")");

    detail::Workspace ws(net);
    Gradients grads = detail::zero_gradients(net);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> scratch;
    std::size_t step = 0;
    auto& layers = net.layers();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            for (auto& t : grads.weights)
                std::fill(t.values.begin(), t.values.end(), 0.0);
            for (auto& t : grads.biases)
                std::fill(t.values.begin(), t.values.end(), 0.0);
            double loss = 0.0;
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t idx = order[b];
                data.normalized(idx, ws.acts[0]);
                detail::augment(ws.acts[0], net.input_shape(), cfg.augmentation, rng, scratch);
                detail::forward_one(net, ws);
                loss += detail::softmax_xent(ws, data.labels[idx]);
                detail::backward_one(net, ws, grads);
            }
            if (!std::isfinite(loss))
                throw TrainingDivergence(step);
            const double scale = cfg.learning_rate / static_cast<double>(end - start);
            for (std::size_t li = 0; li < layers.size(); ++li) {
                auto& l = layers[li];
                if (!l.prunable())
                    continue;
                for (std::size_t k = 0; k < l.weights.size(); ++k)
                    l.weights[k] -= scale * grads.weights[li][k] * l.mask[k];
                for (std::size_t k = 0; k < l.bias.size(); ++k)
                    l.bias[k] -= scale * grads.biases[li][k];
            }
            ws.refresh(net);
        }
    }
}

}  // namespace prunefair::netcore
