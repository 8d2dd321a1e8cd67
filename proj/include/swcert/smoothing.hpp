#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "swcert/errors.hpp"
#include "swcert/rng.hpp"
#include "swcert/special_functions.hpp"

namespace swcert {

/// One stream item: a fixed-dimension real feature vector.
using Feature = std::vector<double>;

enum class Metric { L2, L1 };

inline const char* to_string(Metric m) { return m == Metric::L2 ? "l2" : "l1"; }

inline double distance(Metric metric, std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::domain_error("distance: dimension mismatch");
    double acc = 0.0;
    if (metric == Metric::L2) {
        for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
        return std::sqrt(acc);
    }
    for (std::size_t k = 0; k < a.size(); ++k) acc += std::abs(a[k] - b[k]);
    return acc;
}

// ---------------------------------------------------------------------------
// Piecewise-linear psi functions
// ---------------------------------------------------------------------------

struct Knot {
    double distance;
    double value;

    friend bool operator==(const Knot&, const Knot&) = default;
};

/// Concave, nondecreasing, piecewise-linear upper bound on total variation as
/// a function of distance. Starts at (0, 0); held constant past the last knot.
class PsiEnvelope {
public:
    explicit PsiEnvelope(std::vector<Knot> knots, bool clamped_input = false)
        : knots_(std::move(knots)), clamped_input_(clamped_input) {
        validate();
    }

    double operator()(double d) const {
        if (!(d >= 0.0)) throw std::domain_error("psi: distance must be nonnegative");
        if (d >= knots_.back().distance) return knots_.back().value;
        const auto hi = std::upper_bound(knots_.begin(), knots_.end(), d,
                                         [](double v, const Knot& k) { return v < k.distance; });
        const auto lo = hi - 1;
        const double frac = (d - lo->distance) / (hi->distance - lo->distance);
        return lo->value + frac * (hi->value - lo->value);
    }

    std::span<const Knot> knots() const { return knots_; }

    /// Set when an input estimate above 1 was clamped during construction.
    bool clamped_input() const { return clamped_input_; }

private:
    void validate() const {
        constexpr double slack = 1e-12;
        if (knots_.empty()) throw std::domain_error("PsiEnvelope: no knots");
        if (knots_.front().distance != 0.0 || knots_.front().value != 0.0)
            throw std::domain_error("PsiEnvelope: first knot must be (0, 0)");
        double prev_slope = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < knots_.size(); ++i) {
            const Knot& k = knots_[i];
            if (!std::isfinite(k.distance) || !std::isfinite(k.value) || k.value < 0.0 || k.value > 1.0)
                throw std::domain_error("PsiEnvelope: knot values must lie in [0, 1]");
            if (i == 0) continue;
            const Knot& p = knots_[i - 1];
            if (!(k.distance > p.distance))
                throw std::domain_error("PsiEnvelope: distances must be strictly increasing");
            const double slope = (k.value - p.value) / (k.distance - p.distance);
            if (slope < -slack) throw std::domain_error("PsiEnvelope: not nondecreasing");
            if (slope > prev_slope + slack) throw std::domain_error("PsiEnvelope: not concave");
            prev_slope = slope;
        }
    }

    std::vector<Knot> knots_;
    bool clamped_input_;
};

/// Least concave nondecreasing majorant of (distance, tv-estimate) samples,
/// anchored at the origin. Estimates above 1 are clamped and flagged.
inline PsiEnvelope concave_upper_envelope(std::span<const Knot> samples) {
    if (samples.empty()) throw std::domain_error("concave_upper_envelope: no samples");

    bool clamped = false;
    std::vector<Knot> pts;
    pts.reserve(samples.size() + 1);
    pts.push_back({0.0, 0.0});
    for (const Knot& s : samples) {
        if (!std::isfinite(s.distance) || s.distance < 0.0)
            throw std::domain_error("concave_upper_envelope: distances must be finite and nonnegative");
        if (!std::isfinite(s.value) || s.value < 0.0)
            throw std::domain_error("concave_upper_envelope: estimates must be nonnegative");
        double v = s.value;
        if (v > 1.0) {
            v = 1.0;
            clamped = true;
        }
        if (s.distance == 0.0 && v > 0.0)
            throw std::domain_error("concave_upper_envelope: positive estimate at zero distance");
        pts.push_back({s.distance, v});
    }

    std::sort(pts.begin(), pts.end(), [](const Knot& a, const Knot& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.value > b.value);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Knot& a, const Knot& b) { return a.distance == b.distance; }),
              pts.end());

    // Past the leftmost maximum the majorant is flat, so only the prefix up to
    // it takes part in the hull.
    const auto peak = std::max_element(pts.begin(), pts.end(),
                                       [](const Knot& a, const Knot& b) { return a.value < b.value; });
    if (peak->value == 0.0) return PsiEnvelope({{0.0, 0.0}}, clamped);
    pts.erase(peak + 1, pts.end());

    std::vector<Knot> hull;
    for (const Knot& p : pts) {
        while (hull.size() >= 2) {
            const Knot& a = hull[hull.size() - 2];
            const Knot& b = hull.back();
            // Drop b unless it sits strictly above the chord a -> p.
            if ((b.value - a.value) * (p.distance - b.distance) <= (p.value - b.value) * (b.distance - a.distance))
                hull.pop_back();
            else
                break;
        }
        hull.push_back(p);
    }
    return PsiEnvelope(std::move(hull), clamped);
}

// ---------------------------------------------------------------------------
// Smoothing distributions
// ---------------------------------------------------------------------------

/// Fills `noise` with one additive draw.
using NoiseSampler = std::function<void(std::span<double> noise, Engine& rng)>;

struct GaussianIso {
    double sigma;
};

struct UniformBox {
    double b;
};

struct Empirical {
    PsiEnvelope envelope;
    std::string sampler_id;
    NoiseSampler sampler;
};

class SmoothingSpec {
public:
    using Kind = std::variant<GaussianIso, UniformBox, Empirical>;

    static SmoothingSpec gaussian(double sigma, Metric metric = Metric::L2) {
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::domain_error("gaussian smoothing: sigma must be positive");
        if (metric != Metric::L2) throw std::domain_error("gaussian smoothing pairs with the l2 metric");
        return SmoothingSpec(GaussianIso{sigma}, metric);
    }

    static SmoothingSpec uniform_box(double b, Metric metric = Metric::L1) {
        if (!(b > 0.0) || !std::isfinite(b)) throw std::domain_error("uniform smoothing: b must be positive");
        if (metric != Metric::L1) throw std::domain_error("uniform box smoothing pairs with the l1 metric");
        return SmoothingSpec(UniformBox{b}, metric);
    }

    static SmoothingSpec empirical(PsiEnvelope envelope, Metric metric, std::string sampler_id = {},
                                   NoiseSampler sampler = {}) {
        return SmoothingSpec(Empirical{std::move(envelope), std::move(sampler_id), std::move(sampler)}, metric);
    }

    const Kind& kind() const { return kind_; }
    Metric metric() const { return metric_; }

    const GaussianIso* as_gaussian() const { return std::get_if<GaussianIso>(&kind_); }
    const UniformBox* as_uniform() const { return std::get_if<UniformBox>(&kind_); }
    const Empirical* as_empirical() const { return std::get_if<Empirical>(&kind_); }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        if (auto g = as_gaussian()) os << "gaussian(sigma=" << g->sigma << ")";
        else if (auto u = as_uniform()) os << "uniform(b=" << u->b << ")";
        else os << "empirical(" << as_empirical()->sampler_id << ")";
        return os.str();
    }

private:
    SmoothingSpec(Kind kind, Metric metric) : kind_(std::move(kind)), metric_(metric) {}

    Kind kind_;
    Metric metric_;
};

inline double distance(const SmoothingSpec& spec, std::span<const double> a, std::span<const double> b) {
    return distance(spec.metric(), a, b);
}

/// Total-variation bound between the smoothing distributions of two points
/// at distance d.
inline double psi(const SmoothingSpec& spec, double d) {
    if (!(d >= 0.0)) throw std::domain_error("psi: distance must be nonnegative");
    double v;
    if (auto g = spec.as_gaussian())
        v = std::isinf(d) ? 1.0 : erf_approx(d / (2.0 * std::numbers::sqrt2 * g->sigma));
    else if (auto u = spec.as_uniform())
        v = d / u->b;
    else
        v = spec.as_empirical()->envelope(d);
    return std::clamp(v, 0.0, 1.0);
}

/// Writes one additive noise draw into `noise`.
inline void draw_noise(const SmoothingSpec& spec, std::span<double> noise, Engine& rng) {
    if (auto g = spec.as_gaussian()) {
        std::normal_distribution<double> n(0.0, g->sigma);
        for (double& v : noise) v = n(rng);
    } else if (auto u = spec.as_uniform()) {
        std::uniform_real_distribution<double> n(-0.5 * u->b, 0.5 * u->b);
        for (double& v : noise) v = n(rng);
    } else {
        const Empirical& e = *spec.as_empirical();
        if (!e.sampler)
            throw unsupported_operation("sample_noise: no sampler registered for empirical spec '" + e.sampler_id + "'");
        e.sampler(noise, rng);
    }
}

/// One draw from the smoothing distribution centred at `item`.
inline Feature sample_noise(const SmoothingSpec& spec, std::span<const double> item, Engine& rng) {
    if (item.empty()) throw std::domain_error("sample_noise: empty item");
    Feature out(item.size());
    draw_noise(spec, out, rng);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += item[k];
    return out;
}

}  // namespace swcert
