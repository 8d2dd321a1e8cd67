#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swcert/errors.hpp"
#include "swcert/rng.hpp"
#include "swcert/smoothing.hpp"
#include "swcert/stream.hpp"

namespace swcert {

enum class Architecture { Linear, MLP1 };

inline const char* to_string(Architecture a) { return a == Architecture::Linear ? "linear" : "mlp1"; }

inline Architecture parse_architecture(const std::string& s) {
    if (s == "linear") return Architecture::Linear;
    if (s == "mlp1" || s == "mlp") return Architecture::MLP1;
    throw std::domain_error("unknown architecture '" + s + "'");
}

/// Window classifier over the flattened, front-zero-padded window (w * dim inputs).
///
/// Linear: logits = W1 x + b1, W1 is classes x inputs.
/// MLP1:   h = tanh(W1 x + b1), logits = W2 h + b2, W1 is hidden x inputs.
struct ModelParams {
    Architecture arch = Architecture::Linear;
    std::size_t dim = 0;
    std::size_t window = 0;
    int num_classes = 0;
    std::size_t hidden = 0;
    std::vector<double> w1, b1, w2, b2;

    std::size_t input_size() const { return dim * window; }
    std::size_t first_width() const { return arch == Architecture::Linear ? num_classes : hidden; }

    void validate() const {
        if (dim == 0 || window == 0 || num_classes < 1) throw std::domain_error("ModelParams: empty shape");
        if (arch == Architecture::MLP1 && hidden == 0) throw std::domain_error("ModelParams: MLP1 needs hidden > 0");
        const std::size_t c = static_cast<std::size_t>(num_classes);
        const bool ok = w1.size() == first_width() * input_size() && b1.size() == first_width() &&
                        (arch == Architecture::Linear ? w2.empty() && b2.empty()
                                                      : w2.size() == c * hidden && b2.size() == c);
        if (!ok) throw std::domain_error("ModelParams: tensor sizes do not match the architecture");
        for (const auto* t : {&w1, &b1, &w2, &b2})
            for (double v : *t)
                if (!std::isfinite(v)) throw std::domain_error("ModelParams: non-finite parameter");
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Zero-initialised parameters of the requested shape.
inline ModelParams zero_model(Architecture arch, std::size_t dim, std::size_t window, int num_classes,
                              std::size_t hidden = 0) {
    ModelParams m{arch, dim, window, num_classes, arch == Architecture::Linear ? 0 : hidden, {}, {}, {}, {}};
    m.w1.assign(m.first_width() * m.input_size(), 0.0);
    m.b1.assign(m.first_width(), 0.0);
    if (arch == Architecture::MLP1) {
        m.w2.assign(static_cast<std::size_t>(num_classes) * hidden, 0.0);
        m.b2.assign(num_classes, 0.0);
    }
    m.validate();
    return m;
}

/// Glorot-normal weights, zero biases.
inline ModelParams random_model(Architecture arch, std::size_t dim, std::size_t window, int num_classes,
                                std::size_t hidden, std::uint64_t seed) {
    ModelParams m = zero_model(arch, dim, window, num_classes, hidden);
    Engine rng = substream(seed, StreamTag::Init);
    const auto fill = [&](std::vector<double>& w, std::size_t fan_in, std::size_t fan_out) {
        std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
        for (double& v : w) v = n(rng);
    };
    fill(m.w1, m.input_size(), m.first_width());
    if (arch == Architecture::MLP1) fill(m.w2, hidden, num_classes);
    return m;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Flattens a window of s <= w items into w * dim values, zero-padding the front.
inline std::vector<double> flatten_window(const ModelParams& m, std::span<const Feature> window) {
    if (window.empty() || window.size() > m.window)
        throw std::domain_error("forward: window length must be in [1, w]");
    std::vector<double> x(m.input_size(), 0.0);
    const std::size_t offset = (m.window - window.size()) * m.dim;
    for (std::size_t k = 0; k < window.size(); ++k) {
        if (window[k].size() != m.dim) throw std::domain_error("forward: item dimension mismatch");
        std::copy(window[k].begin(), window[k].end(), x.begin() + static_cast<std::ptrdiff_t>(offset + k * m.dim));
    }
    return x;
}

namespace detail {

// out[r] = b[r] + sum_c W[r, c] x[c]
inline void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                   std::span<double> out) {
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < out.size(); ++r) {
        double acc = b[r];
        const double* row = w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
}

struct Activations {
    std::vector<double> hidden;  // tanh outputs (MLP1 only)
    std::vector<double> logits;
};

inline Activations forward_flat(const ModelParams& m, std::span<const double> x) {
    Activations a;
    if (m.arch == Architecture::Linear) {
        a.logits.resize(m.num_classes);
        affine(m.w1, m.b1, x, a.logits);
        return a;
    }
    a.hidden.resize(m.hidden);
    affine(m.w1, m.b1, x, a.hidden);
    for (double& h : a.hidden) h = std::tanh(h);
    a.logits.resize(m.num_classes);
    affine(m.w2, m.b2, a.hidden, a.logits);
    return a;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) z += (p[k] = std::exp(logits[k] - mx));
    for (double& v : p) v /= z;
    return p;
}

struct ParamGrad {
    std::vector<double> w1, b1, w2, b2;

    explicit ParamGrad(const ModelParams& m)
        : w1(m.w1.size(), 0.0), b1(m.b1.size(), 0.0), w2(m.w2.size(), 0.0), b2(m.b2.size(), 0.0) {}
};

/// Cross-entropy of `target` at input x. Accumulates dL/dx into grad_x and
/// dL/dtheta into grad_params when they are non-null.
inline double loss_backward(const ModelParams& m, std::span<const double> x, int target, std::span<double> grad_x,
                            ParamGrad* grad_params) {
    const Activations a = forward_flat(m, x);
    const double mx = *std::max_element(a.logits.begin(), a.logits.end());
    double z = 0.0;
    for (double l : a.logits) z += std::exp(l - mx);
    const double loss = mx + std::log(z) - a.logits[target];

    std::vector<double> dlogits = softmax(a.logits);
    dlogits[target] -= 1.0;

    const std::size_t in = m.input_size();
    std::vector<double> dfirst;  // gradient at the pre-activation of the first layer
    if (m.arch == Architecture::Linear) {
        dfirst = std::move(dlogits);
    } else {
        dfirst.assign(m.hidden, 0.0);
        for (std::size_t c = 0; c < static_cast<std::size_t>(m.num_classes); ++c) {
            const double g = dlogits[c];
            const double* row = m.w2.data() + c * m.hidden;
            for (std::size_t h = 0; h < m.hidden; ++h) dfirst[h] += g * row[h];
            if (grad_params) {
                grad_params->b2[c] += g;
                double* grow = grad_params->w2.data() + c * m.hidden;
                for (std::size_t h = 0; h < m.hidden; ++h) grow[h] += g * a.hidden[h];
            }
        }
        for (std::size_t h = 0; h < m.hidden; ++h) dfirst[h] *= 1.0 - a.hidden[h] * a.hidden[h];
    }

    for (std::size_t r = 0; r < dfirst.size(); ++r) {
        const double g = dfirst[r];
        const double* row = m.w1.data() + r * in;
        if (!grad_x.empty())
            for (std::size_t c = 0; c < in; ++c) grad_x[c] += g * row[c];
        if (grad_params) {
            grad_params->b1[r] += g;
            double* grow = grad_params->w1.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) grow[c] += g * x[c];
        }
    }
    return loss;
}

}  // namespace detail

/// Class scores (logits) for a window.
inline std::vector<double> forward(const ModelParams& m, std::span<const Feature> window) {
    return detail::forward_flat(m, flatten_window(m, window)).logits;
}

inline std::vector<double> forward(const ModelParams& m, const WindowView& window) { return forward(m, window.items); }

/// Index of the largest score; ties go to the smallest class id.
inline int argmax(std::span<const double> scores) {
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

inline int predict(const ModelParams& m, std::span<const Feature> window) { return argmax(forward(m, window)); }

inline double cross_entropy(std::span<const double> logits, int target) {
    if (target < 0 || static_cast<std::size_t>(target) >= logits.size())
        throw std::domain_error("cross_entropy: target out of range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    return mx + std::log(z) - logits[target];
}

struct LossGradient {
    double loss = 0.0;
    std::vector<Feature> gradient;  ///< same shape as the window passed in
};

/// Cross-entropy against `target` and its gradient with respect to the window items.
inline LossGradient input_gradient(const ModelParams& m, std::span<const Feature> window, int target) {
    if (target < 0 || target >= m.num_classes) throw std::domain_error("input_gradient: target out of range");
    const std::vector<double> x = flatten_window(m, window);
    std::vector<double> gx(x.size(), 0.0);
    LossGradient out;
    out.loss = detail::loss_backward(m, x, target, gx, nullptr);
    const std::size_t offset = (m.window - window.size()) * m.dim;
    out.gradient.resize(window.size());
    for (std::size_t k = 0; k < window.size(); ++k)
        out.gradient[k].assign(gx.begin() + static_cast<std::ptrdiff_t>(offset + k * m.dim),
                               gx.begin() + static_cast<std::ptrdiff_t>(offset + (k + 1) * m.dim));
    return out;
}

// ---------------------------------------------------------------------------
// Performance functions
// ---------------------------------------------------------------------------

/// Maps (scores, label) to a value in [0, 1]; custom scorers are clamped.
class PerformanceFn {
public:
    using Scorer = std::function<double(std::span<const double> scores, int label)>;

    static PerformanceFn zero_one() { return PerformanceFn(); }
    static PerformanceFn custom(Scorer scorer) { return PerformanceFn(std::move(scorer)); }

    double operator()(std::span<const double> scores, int label) const {
        if (!scorer_) return argmax(scores) == label ? 1.0 : 0.0;
        const double v = scorer_(scores, label);
        return std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    }

    bool is_zero_one() const { return !scorer_; }

private:
    PerformanceFn() = default;
    explicit PerformanceFn(Scorer s) : scorer_(std::move(s)) {}

    Scorer scorer_;
};

inline double zero_one_performance(const ModelParams& m, std::span<const Feature> window, int y) {
    return predict(m, window) == y ? 1.0 : 0.0;
}

/// Clean average performance Z over a stream, with window ground truth from window_label.
inline double stream_performance(const ModelParams& m, const LabeledStream& stream,
                                 const PerformanceFn& perf = PerformanceFn::zero_one()) {
    double total = 0.0;
    for (std::size_t i = 1; i <= stream.size(); ++i)
        total += perf(forward(m, window_at(stream, i, m.window)), window_label(stream, i, m.window));
    return total / static_cast<double>(stream.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch = 32;
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double noise_sigma = 0.0;      ///< Gaussian augmentation std-dev; 0 disables
    std::size_t hidden = 32;       ///< MLP1 width
    bool cosine_schedule = true;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ModelParams model;
    double initial_loss = 0.0;  ///< mean clean-window loss before the first update
    double final_loss = 0.0;    ///< mean clean-window loss after the last epoch
};

namespace detail {

inline double mean_window_loss(const ModelParams& m, const std::vector<std::vector<double>>& xs,
                               const std::vector<int>& ys) {
    double total = 0.0;
    for (std::size_t n = 0; n < xs.size(); ++n) total += cross_entropy(forward_flat(m, xs[n]).logits, ys[n]);
    return total / static_cast<double>(xs.size());
}

}  // namespace detail

/// Mini-batch SGD with momentum, weight decay and optional Gaussian noise
/// augmentation over every window of the training stream.
inline TrainResult train_sgd_with_history(const LabeledStream& train, std::size_t w, Architecture arch,
                                          const TrainConfig& cfg) {
    if (w < 1) throw std::domain_error("train_sgd: window size must be at least 1");
    if (train.size() < w) throw std::domain_error("train_sgd: training stream shorter than the window");
    if (cfg.batch < 1 || cfg.epochs < 1) throw std::domain_error("train_sgd: epochs and batch must be positive");

    TrainResult result{random_model(arch, train.dim(), w, train.num_classes(), cfg.hidden, cfg.seed), 0.0, 0.0};
    ModelParams& m = result.model;

    const std::size_t n = train.size();
    std::vector<std::vector<double>> xs(n);
    std::vector<int> ys(n);
    std::vector<std::size_t> item_offset(n);  // first padded slot occupied by a real item
    for (std::size_t i = 1; i <= n; ++i) {
        xs[i - 1] = flatten_window(m, window_at(train, i, w).items);
        ys[i - 1] = window_label(train, i, w);
        item_offset[i - 1] = (w - window_length(i, w)) * train.dim();
    }
    result.initial_loss = detail::mean_window_loss(m, xs, ys);

    detail::ParamGrad velocity(m);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batches_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const std::size_t total_steps = cfg.epochs * batches_per_epoch;
    std::size_t step = 0;

    const auto update = [&](std::vector<double>& theta, std::vector<double>& grad, std::vector<double>& vel,
                            double scale, double lr) {
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double g = grad[k] * scale + cfg.weight_decay * theta[k];
            vel[k] = cfg.momentum * vel[k] + g;
            theta[k] -= lr * vel[k];
        }
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Engine shuffle_rng = substream(cfg.seed, StreamTag::Training, epoch, 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < n; start += cfg.batch, ++step) {
            const std::size_t stop = std::min(n, start + cfg.batch);
            detail::ParamGrad grad(m);
            double batch_loss = 0.0;
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t idx = order[b];
                std::vector<double> x = xs[idx];
                if (cfg.noise_sigma > 0.0) {
                    Engine noise_rng = substream(cfg.seed, StreamTag::Training, epoch + 1, idx + 1);
                    std::normal_distribution<double> nd(0.0, cfg.noise_sigma);
                    for (std::size_t k = item_offset[idx]; k < x.size(); ++k) x[k] += nd(noise_rng);
                }
                batch_loss += detail::loss_backward(m, x, ys[idx], {}, &grad);
            }
            if (!std::isfinite(batch_loss))
                throw training_error("train_sgd: non-finite loss at epoch " + std::to_string(epoch));

            double lr = cfg.learning_rate;
            if (cfg.cosine_schedule)
                lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                            static_cast<double>(total_steps)));
            const double scale = 1.0 / static_cast<double>(stop - start);
            update(m.w1, grad.w1, velocity.w1, scale, lr);
            update(m.b1, grad.b1, velocity.b1, scale, lr);
            update(m.w2, grad.w2, velocity.w2, scale, lr);
            update(m.b2, grad.b2, velocity.b2, scale, lr);
        }
    }
    result.final_loss = detail::mean_window_loss(m, xs, ys);
    if (!std::isfinite(result.final_loss)) throw training_error("train_sgd: non-finite final loss");
    m.validate();
    return result;
}

inline ModelParams train_sgd(const LabeledStream& train, std::size_t w, Architecture arch, const TrainConfig& cfg) {
    return train_sgd_with_history(train, w, arch, cfg).model;
}

// ---------------------------------------------------------------------------
// Parameter files
// ---------------------------------------------------------------------------
//
// Text format, whitespace separated:
//   swcert-model 1
//   arch <linear|mlp1>
//   dim <D> window <w> classes <C> hidden <H>
//   w1 <count> v...    b1 <count> v...    w2 <count> v...    b2 <count> v...
// Values are written with 17 significant digits so a save/load cycle is exact.

inline void save_model(std::ostream& out, const ModelParams& m) {
    out << "swcert-model 1\n"
        << "arch " << to_string(m.arch) << '\n'
        << "dim " << m.dim << " window " << m.window << " classes " << m.num_classes << " hidden " << m.hidden << '\n';
    const auto tensor = [&](const char* name, const std::vector<double>& t) {
        out << name << ' ' << t.size();
        for (double v : t) out << ' ' << detail::format_double(v);
        out << '\n';
    };
    tensor("w1", m.w1);
    tensor("b1", m.b1);
    tensor("w2", m.w2);
    tensor("b2", m.b2);
}

inline ModelParams load_model(std::istream& in) {
    const auto expect = [&](const std::string& word) {
        std::string got;
        if (!(in >> got) || got != word) throw validation_error("model file: expected '" + word + "', found '" + got + "'");
    };
    expect("swcert-model");
    int version = 0;
    if (!(in >> version) || version != 1) throw validation_error("model file: unsupported version");
    ModelParams m;
    std::string arch;
    expect("arch");
    in >> arch;
    m.arch = parse_architecture(arch);
    expect("dim");
    in >> m.dim;
    expect("window");
    in >> m.window;
    expect("classes");
    in >> m.num_classes;
    expect("hidden");
    in >> m.hidden;
    const auto tensor = [&](const char* name, std::vector<double>& t) {
        expect(name);
        std::size_t count = 0;
        if (!(in >> count)) throw validation_error(std::string("model file: bad size for ") + name);
        t.resize(count);
        for (double& v : t) {
            std::string tok;
            in >> tok;
            v = detail::parse_double(tok, 0);
        }
    };
    tensor("w1", m.w1);
    tensor("b1", m.b1);
    tensor("w2", m.w2);
    tensor("b2", m.b2);
    if (!in) throw validation_error("model file: truncated");
    m.validate();
    return m;
}

}  // namespace swcert
