#pragma once

// Independent reference computations: quadrature for total variation, exact
// enumeration of smoothed performance on small discrete instances, and
// finite-difference gradients. Nothing here shares a code path with the
// quantities it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swcert/certificate.hpp"
#include "swcert/errors.hpp"
#include "swcert/model.hpp"
#include "swcert/rng.hpp"
#include "swcert/smoothing.hpp"

namespace swcert::oracle {

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

namespace detail {

inline double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                           double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance `tol`.
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-10) {
    if (a == b) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, 50);
}

inline double normal_pdf(double x, double mean, double sigma) {
    const double z = (x - mean) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

// ---------------------------------------------------------------------------
// Total variation
// ---------------------------------------------------------------------------

/// TV between two univariate normals N(0, sigma^2) and N(delta, sigma^2) by
/// integrating half the absolute density difference.
inline double gaussian_tv_1d(double delta, double sigma) {
    delta = std::abs(delta);
    if (delta == 0.0) return 0.0;
    const auto f = [&](double x) { return 0.5 * std::abs(normal_pdf(x, 0.0, sigma) - normal_pdf(x, delta, sigma)); };
    const double lo = -12.0 * sigma, hi = delta + 12.0 * sigma, mid = 0.5 * delta;
    // The integrand has a kink where the densities cross.
    return integrate(f, lo, mid, 1e-11) + integrate(f, mid, hi, 1e-11);
}

/// TV between the smoothing distributions centred at x and x2.
/// Gaussian reduces to one dimension by isotropy; the uniform box uses the
/// exact product-overlap formula.
inline double numeric_tv(const SmoothingSpec& spec, std::span<const double> x, std::span<const double> x2) {
    if (x.size() != x2.size()) throw std::domain_error("numeric_tv: dimension mismatch");
    if (auto g = spec.as_gaussian()) return std::min(1.0, gaussian_tv_1d(distance(Metric::L2, x, x2), g->sigma));
    if (auto u = spec.as_uniform()) {
        double overlap = 1.0;
        for (std::size_t k = 0; k < x.size(); ++k) overlap *= std::max(0.0, 1.0 - std::abs(x[k] - x2[k]) / u->b);
        return 1.0 - overlap;
    }
    throw unsupported_operation("numeric_tv: empirical smoothing has no reference density");
}

/// TV between two discrete distributions (kernel rows).
inline double numeric_tv(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::domain_error("numeric_tv: support size mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) acc += std::abs(p[k] - q[k]);
    return 0.5 * acc;
}

// ---------------------------------------------------------------------------
// Discrete instances
// ---------------------------------------------------------------------------

/// Finite stream world: items are symbols 0..m-1. kernel[x][x~] = P(x~ | x).
/// perf[i-1] is the table of f_i over window tuples of length s_i = min(i, w),
/// indexed by the tuple read oldest-first as a base-m number.
struct DiscreteInstance {
    std::size_t m = 2;
    std::size_t w = 1;
    std::vector<std::vector<double>> kernel;
    std::vector<std::vector<double>> dist;
    std::vector<std::vector<double>> perf;

    std::size_t t() const { return perf.size(); }

    void validate() const {
        if (m < 1 || w < 1 || perf.empty()) throw std::domain_error("DiscreteInstance: empty instance");
        if (kernel.size() != m || dist.size() != m) throw std::domain_error("DiscreteInstance: matrix size mismatch");
        for (std::size_t a = 0; a < m; ++a) {
            if (kernel[a].size() != m || dist[a].size() != m)
                throw std::domain_error("DiscreteInstance: matrix size mismatch");
            double row = 0.0;
            for (double v : kernel[a]) {
                if (v < 0.0) throw std::domain_error("DiscreteInstance: negative kernel entry");
                row += v;
            }
            if (std::abs(row - 1.0) > 1e-12) throw std::domain_error("DiscreteInstance: kernel row does not sum to 1");
            if (dist[a][a] != 0.0) throw std::domain_error("DiscreteInstance: nonzero distance diagonal");
            for (std::size_t b = 0; b < m; ++b)
                if (dist[a][b] < 0.0 || dist[a][b] != dist[b][a])
                    throw std::domain_error("DiscreteInstance: distance must be symmetric and nonnegative");
        }
        for (std::size_t i = 1; i <= t(); ++i) {
            std::size_t expected = 1;
            for (std::size_t k = 0; k < std::min(i, w); ++k) expected *= m;
            if (perf[i - 1].size() != expected) throw std::domain_error("DiscreteInstance: performance table size");
            for (double v : perf[i - 1])
                if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("DiscreteInstance: performance outside [0, 1]");
        }
    }
};

/// A window of symbols, oldest first.
using SymbolWindow = std::vector<int>;

inline std::size_t table_index(std::span<const int> window, std::size_t m) {
    std::size_t idx = 0;
    for (int x : window) idx = idx * m + static_cast<std::size_t>(x);
    return idx;
}

inline std::vector<SymbolWindow> clean_windows(std::span<const int> stream, std::size_t w) {
    std::vector<SymbolWindow> out;
    for (std::size_t i = 1; i <= stream.size(); ++i) {
        const std::size_t s = std::min(i, w);
        out.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(i - s),
                         stream.begin() + static_cast<std::ptrdiff_t>(i));
    }
    return out;
}

struct ExactPerformance {
    double z = 0.0;
    std::vector<double> per_step;
};

/// f~_i for one window: sum over every noisy outcome of the window, weighted
/// by the kernel probabilities.
inline double exact_step_perf(const DiscreteInstance& inst, std::size_t i, std::span<const int> window) {
    const std::size_t s = window.size();
    std::size_t outcomes = 1;
    for (std::size_t k = 0; k < s; ++k) outcomes *= inst.m;
    const auto& table = inst.perf.at(i - 1);
    if (table.size() != outcomes) throw std::domain_error("exact_step_perf: window length does not match step");
    double total = 0.0;
    std::vector<int> noisy(s, 0);
    for (std::size_t code = 0; code < outcomes; ++code) {
        std::size_t rest = code;
        double weight = 1.0;
        for (std::size_t k = s; k-- > 0;) {
            noisy[k] = static_cast<int>(rest % inst.m);
            rest /= inst.m;
            weight *= inst.kernel[window[k]][noisy[k]];
        }
        if (weight != 0.0) total += weight * table[code];
    }
    return total;
}

/// Exact Z~ for a sequence of windows (one per step). Windows may be the
/// clean ones or adversarial ones of either threat model.
inline ExactPerformance exact_smoothed_perf(const DiscreteInstance& inst, std::span<const SymbolWindow> windows) {
    std::size_t outcomes = 1;
    for (std::size_t k = 0; k < inst.w; ++k) {
        outcomes *= inst.m;
        if (outcomes > 100000) throw size_error("exact_smoothed_perf: m^w exceeds 1e5 outcomes");
    }
    if (windows.size() != inst.t()) throw std::domain_error("exact_smoothed_perf: need one window per step");
    ExactPerformance out;
    for (std::size_t i = 1; i <= windows.size(); ++i) {
        if (windows[i - 1].size() != std::min(i, inst.w)) throw std::domain_error("exact_smoothed_perf: window length");
        out.per_step.push_back(exact_step_perf(inst, i, windows[i - 1]));
        out.z += out.per_step.back();
    }
    out.z /= static_cast<double>(windows.size());
    return out;
}

inline ExactPerformance exact_smoothed_stream_perf(const DiscreteInstance& inst, std::span<const int> stream) {
    const auto windows = clean_windows(stream, inst.w);
    return exact_smoothed_perf(inst, windows);
}

struct MonteCarloEstimate {
    double z = 0.0;
    double stderr_ = 0.0;
};

/// Monte Carlo Z~ on a discrete instance: one noisy symbol per stream item and
/// repetition, reused across every window containing the item.
inline MonteCarloEstimate monte_carlo_smoothed_stream_perf(const DiscreteInstance& inst, std::span<const int> stream,
                                                           std::size_t reps, std::uint64_t seed) {
    if (reps < 2) throw std::domain_error("monte_carlo_smoothed_stream_perf: need at least two repetitions");
    std::vector<double> zs(reps, 0.0);
    std::vector<int> noisy(stream.size());
    for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < stream.size(); ++i) {
            Engine rng = substream(seed, StreamTag::Oracle, i, r);
            std::discrete_distribution<int> pick(inst.kernel[stream[i]].begin(), inst.kernel[stream[i]].end());
            noisy[i] = pick(rng);
        }
        for (std::size_t i = 1; i <= stream.size(); ++i) {
            const std::size_t s = std::min(i, inst.w);
            const std::span<const int> win(noisy.data() + (i - s), s);
            zs[r] += inst.perf[i - 1][table_index(win, inst.m)];
        }
        zs[r] /= static_cast<double>(stream.size());
    }
    MonteCarloEstimate est;
    for (double z : zs) est.z += z;
    est.z /= static_cast<double>(reps);
    double var = 0.0;
    for (double z : zs) var += (z - est.z) * (z - est.z);
    var /= static_cast<double>(reps - 1);
    est.stderr_ = std::sqrt(var / static_cast<double>(reps));
    return est;
}

/// Tightest valid psi for the instance's kernel: the concave upper envelope of
/// (d(x, x'), TV(K[x], K[x'])) over all symbol pairs.
inline PsiEnvelope tightest_discrete_psi(const DiscreteInstance& inst) {
    std::vector<Knot> samples;
    for (std::size_t a = 0; a < inst.m; ++a)
        for (std::size_t b = 0; b < inst.m; ++b)
            if (a != b) samples.push_back({inst.dist[a][b], numeric_tv(inst.kernel[a], inst.kernel[b])});
    if (samples.empty()) samples.push_back({1.0, 0.0});
    if (samples.size() == 1) samples.push_back(samples.front());
    return concave_upper_envelope(samples);
}

// ---------------------------------------------------------------------------
// Bound verification
// ---------------------------------------------------------------------------

/// Adversarial side of a verification: either a replacement stream
/// (attack-once) or one adversarial window per step (per-window).
struct DiscreteAdversary {
    ThreatModel mode = ThreatModel::OncePerItem;
    std::vector<int> stream;
    std::vector<SymbolWindow> windows;

    std::vector<SymbolWindow> adversarial_windows(std::size_t w) const {
        return mode == ThreatModel::OncePerItem ? clean_windows(stream, w) : windows;
    }
};

struct StepCheck {
    double lhs = 0.0;  ///< |f~_i(clean) - f~_i(adversarial)|
    double rhs = 0.0;  ///< sum of psi over the window's perturbation distances
    bool holds = false;
};

struct LemmaReport {
    std::vector<StepCheck> steps;
    double overall_lhs = 0.0;      ///< |Z~ - Z~'|
    double realized_epsilon = 0.0; ///< average distance under the threat model's normalisation
    double overall_rhs = 0.0;      ///< w * psi(realized_epsilon)
    bool overall_holds = false;

    bool holds() const {
        return overall_holds && std::all_of(steps.begin(), steps.end(), [](const StepCheck& c) { return c.holds; });
    }
};

/// Checks the per-step bound and the overall w * psi(eps) bound by exact
/// enumeration. `psi` must be concave (guaranteed by PsiEnvelope) and must
/// dominate the kernel's pairwise TV for the check to be meaningful.
inline LemmaReport verify_lemma_bounds(const DiscreteInstance& inst, std::span<const int> clean,
                                       const DiscreteAdversary& adv, const PsiEnvelope& psi, double slack = 1e-12) {
    inst.validate();
    if (clean.size() != inst.t()) throw std::domain_error("verify_lemma_bounds: stream length differs from t");
    const auto clean_w = clean_windows(clean, inst.w);
    const auto adv_w = adv.adversarial_windows(inst.w);
    if (adv_w.size() != inst.t()) throw std::domain_error("verify_lemma_bounds: adversary covers the wrong number of steps");
    if (adv.mode == ThreatModel::OncePerItem && adv.stream.size() != clean.size())
        throw std::domain_error("verify_lemma_bounds: adversarial stream length differs");

    const ExactPerformance z_clean = exact_smoothed_perf(inst, clean_w);
    const ExactPerformance z_adv = exact_smoothed_perf(inst, adv_w);

    LemmaReport report;
    double total_distance = 0.0;
    for (std::size_t i = 1; i <= inst.t(); ++i) {
        StepCheck c;
        c.lhs = std::abs(z_clean.per_step[i - 1] - z_adv.per_step[i - 1]);
        for (std::size_t k = 0; k < clean_w[i - 1].size(); ++k)
            c.rhs += psi(inst.dist[clean_w[i - 1][k]][adv_w[i - 1][k]]);
        c.holds = c.lhs <= c.rhs + slack;
        report.steps.push_back(c);
        if (adv.mode == ThreatModel::PerWindow)
            for (std::size_t k = 0; k < clean_w[i - 1].size(); ++k)
                total_distance += inst.dist[clean_w[i - 1][k]][adv_w[i - 1][k]];
    }
    if (adv.mode == ThreatModel::OncePerItem) {
        for (std::size_t i = 0; i < clean.size(); ++i) total_distance += inst.dist[clean[i]][adv.stream[i]];
        report.realized_epsilon = total_distance / static_cast<double>(inst.t());
    } else {
        report.realized_epsilon = total_distance / static_cast<double>(inst.w * inst.t());
    }
    report.overall_lhs = std::abs(z_clean.z - z_adv.z);
    report.overall_rhs = static_cast<double>(inst.w) * psi(report.realized_epsilon);
    report.overall_holds = report.overall_lhs <= report.overall_rhs + slack;
    return report;
}

/// Same check with psi given as raw knots; non-concave knots are rejected.
inline LemmaReport verify_lemma_bounds(const DiscreteInstance& inst, std::span<const int> clean,
                                       const DiscreteAdversary& adv, std::vector<Knot> psi_knots) {
    return verify_lemma_bounds(inst, clean, adv, PsiEnvelope(std::move(psi_knots)));
}

/// A random valid instance with m <= max_m, t <= max_t, w <= max_w, together
/// with a clean stream and an adversary of the requested mode.
struct RandomCase {
    DiscreteInstance instance;
    std::vector<int> clean;
    DiscreteAdversary adversary;
};

inline RandomCase random_case(Engine& rng, ThreatModel mode, std::size_t max_m = 5, std::size_t max_t = 6,
                              std::size_t max_w = 3) {
    std::uniform_int_distribution<std::size_t> pick_m(2, max_m), pick_t(1, max_t), pick_w(1, max_w);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RandomCase rc;
    DiscreteInstance& inst = rc.instance;
    inst.m = pick_m(rng);
    inst.w = pick_w(rng);
    const std::size_t t = pick_t(rng);

    // Kernels: mix a random row with a point mass so TVs spread over [0, 1].
    inst.kernel.assign(inst.m, std::vector<double>(inst.m, 0.0));
    for (std::size_t a = 0; a < inst.m; ++a) {
        const double peak = unit(rng);
        double sum = 0.0;
        for (double& v : inst.kernel[a]) sum += (v = unit(rng));
        for (double& v : inst.kernel[a]) v = (1.0 - peak) * v / sum;
        inst.kernel[a][a] += peak;
        sum = 0.0;
        for (double v : inst.kernel[a]) sum += v;
        for (double& v : inst.kernel[a]) v /= sum;
    }
    inst.dist.assign(inst.m, std::vector<double>(inst.m, 0.0));
    for (std::size_t a = 0; a < inst.m; ++a)
        for (std::size_t b = a + 1; b < inst.m; ++b) inst.dist[a][b] = inst.dist[b][a] = 0.1 + 2.0 * unit(rng);

    inst.perf.resize(t);
    for (std::size_t i = 1; i <= t; ++i) {
        std::size_t size = 1;
        for (std::size_t k = 0; k < std::min(i, inst.w); ++k) size *= inst.m;
        inst.perf[i - 1].resize(size);
        const bool binary = unit(rng) < 0.5;
        for (double& v : inst.perf[i - 1]) v = binary ? (unit(rng) < 0.5 ? 0.0 : 1.0) : unit(rng);
    }

    std::uniform_int_distribution<int> symbol(0, static_cast<int>(inst.m) - 1);
    rc.clean.resize(t);
    for (int& x : rc.clean) x = symbol(rng);

    rc.adversary.mode = mode;
    const double p_change = unit(rng);
    const auto maybe_change = [&](int x) { return unit(rng) < p_change ? symbol(rng) : x; };
    if (mode == ThreatModel::OncePerItem) {
        rc.adversary.stream = rc.clean;
        for (int& x : rc.adversary.stream) x = maybe_change(x);
    } else {
        rc.adversary.windows = clean_windows(rc.clean, inst.w);
        for (auto& win : rc.adversary.windows)
            for (int& x : win) x = maybe_change(x);
    }
    inst.validate();
    return rc;
}

// ---------------------------------------------------------------------------
// Gradient checks
// ---------------------------------------------------------------------------

struct GradientComparison {
    std::vector<double> analytic;
    std::vector<double> numeric;
    double relative_error = 0.0;  ///< ||analytic - numeric|| / max(||analytic||, ||numeric||)
};

/// Central differences of the cross-entropy loss over every window coordinate.
inline GradientComparison compare_gradients(const ModelParams& m, std::span<const Feature> window, int label,
                                            double h = 1e-5) {
    GradientComparison out;
    for (const auto& g : input_gradient(m, window, label).gradient) out.analytic.insert(out.analytic.end(), g.begin(), g.end());
    std::vector<Feature> probe(window.begin(), window.end());
    for (std::size_t s = 0; s < probe.size(); ++s)
        for (std::size_t c = 0; c < probe[s].size(); ++c) {
            const double orig = probe[s][c];
            probe[s][c] = orig + h;
            const double up = cross_entropy(forward(m, probe), label);
            probe[s][c] = orig - h;
            const double down = cross_entropy(forward(m, probe), label);
            probe[s][c] = orig;
            out.numeric.push_back((up - down) / (2.0 * h));
        }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < out.analytic.size(); ++k) {
        diff += (out.analytic[k] - out.numeric[k]) * (out.analytic[k] - out.numeric[k]);
        na += out.analytic[k] * out.analytic[k];
        nn += out.numeric[k] * out.numeric[k];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nn));
    out.relative_error = denom > 0.0 ? std::sqrt(diff) / denom : 0.0;
    return out;
}

inline double finite_diff_check(const ModelParams& m, std::span<const Feature> window, int label, double h = 1e-5) {
    return compare_gradients(m, window, label, h).relative_error;
}

}  // namespace swcert::oracle
