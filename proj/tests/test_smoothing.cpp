#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "reference.hpp"
#include "swcert/smoothing.hpp"

using namespace swcert;

TEST(Distance, Metrics) {
    const std::vector<double> a{1.0, -2.0, 0.5}, b{4.0, 2.0, 0.5};
    EXPECT_DOUBLE_EQ(distance(Metric::L2, a, b), 5.0);
    EXPECT_DOUBLE_EQ(distance(Metric::L1, a, b), 7.0);
    EXPECT_THROW(distance(Metric::L2, a, std::vector<double>{1.0}), std::domain_error);
}

TEST(Spec, RejectsMismatchedMetric) {
    EXPECT_THROW(SmoothingSpec::gaussian(1.0, Metric::L1), std::domain_error);
    EXPECT_THROW(SmoothingSpec::uniform_box(1.0, Metric::L2), std::domain_error);
    EXPECT_THROW(SmoothingSpec::gaussian(0.0), std::domain_error);
    EXPECT_THROW(SmoothingSpec::uniform_box(-1.0), std::domain_error);
}

TEST(Psi, GaussianValues) {
    const auto g = SmoothingSpec::gaussian(1.0);
    EXPECT_EQ(psi(g, 0.0), 0.0);
    EXPECT_NEAR(psi(g, 2.0 * std::numbers::sqrt2), ref::erf(1.0), 1e-7);
    EXPECT_NEAR(psi(g, 2.0 * std::numbers::sqrt2), 0.842701, 1e-5);
}

TEST(Psi, UniformValues) {
    EXPECT_EQ(psi(SmoothingSpec::uniform_box(2.0), 1.0), 0.5);
    EXPECT_EQ(psi(SmoothingSpec::uniform_box(2.0), 5.0), 1.0);
}

TEST(Psi, RejectsNegativeDistance) {
    EXPECT_THROW(psi(SmoothingSpec::gaussian(1.0), -1e-9), std::domain_error);
}

TEST(Psi, GaussianMatchesExactTotalVariation) {
    for (double sigma : {0.5, 1.0, 2.0})
        for (int k = 0; k <= 24; ++k) {
            const double d = 6.0 * sigma * k / 24.0;
            EXPECT_NEAR(psi(SmoothingSpec::gaussian(sigma), d), ref::gaussian_tv(d, sigma), 1e-7);
        }
}

TEST(Psi, MonotoneConcaveBounded) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 10.0), lam(0.0, 1.0);
    std::vector<SmoothingSpec> specs{SmoothingSpec::gaussian(0.7), SmoothingSpec::uniform_box(3.0),
                                     SmoothingSpec::empirical(PsiEnvelope({{0, 0}, {1, 0.6}, {3, 0.9}}), Metric::L2)};
    for (const auto& s : specs)
        for (int trial = 0; trial < 2000; ++trial) {
            double d1 = u(rng), d2 = u(rng);
            if (d1 > d2) std::swap(d1, d2);
            const double l = lam(rng);
            EXPECT_LE(psi(s, d1), psi(s, d2));
            EXPECT_GE(psi(s, l * d1 + (1 - l) * d2), l * psi(s, d1) + (1 - l) * psi(s, d2) - 1e-9);
            EXPECT_LE(psi(s, d2), 1.0);
        }
}

TEST(Envelope, InterpolatesAndHolds) {
    PsiEnvelope e({{0, 0}, {1, 0.5}, {2, 0.8}});
    EXPECT_DOUBLE_EQ(e(0.5), 0.25);
    EXPECT_DOUBLE_EQ(e(1.5), 0.65);
    EXPECT_DOUBLE_EQ(e(2.0), 0.8);
    EXPECT_DOUBLE_EQ(e(100.0), 0.8);
}

TEST(Envelope, ValidatesKnots) {
    EXPECT_THROW(PsiEnvelope({{0, 0.1}, {1, 0.5}}), std::domain_error);
    EXPECT_THROW(PsiEnvelope({{0, 0}, {1, 0.2}, {2, 0.9}}), std::domain_error);
    EXPECT_THROW(PsiEnvelope({{0, 0}, {1, 0.5}, {2, 0.4}}), std::domain_error);
    EXPECT_THROW(PsiEnvelope({{0, 0}, {1, 1.5}}), std::domain_error);
    EXPECT_THROW(PsiEnvelope({{0, 0}, {1, 0.5}, {1, 0.6}}), std::domain_error);
}

TEST(ConcaveEnvelope, AlreadyConcave) {
    const std::vector<Knot> s{{0, 0}, {1, 0.5}, {2, 0.8}};
    const auto e = concave_upper_envelope(s);
    ASSERT_EQ(e.knots().size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(e.knots()[k], s[k]);
    EXPECT_FALSE(e.clamped_input());
}

TEST(ConcaveEnvelope, TwoPoints) {
    const std::vector<Knot> s{{0, 0}, {2, 1}};
    const auto e = concave_upper_envelope(s);
    ASSERT_EQ(e.knots().size(), 2u);
    EXPECT_EQ(e.knots()[1], (Knot{2, 1}));
}

TEST(ConcaveEnvelope, AnchorInsertedAndClamped) {
    const std::vector<Knot> s{{1, 0.4}, {3, 1.2}};
    const auto e = concave_upper_envelope(s);
    EXPECT_EQ(e.knots().front(), (Knot{0, 0}));
    EXPECT_TRUE(e.clamped_input());
    EXPECT_DOUBLE_EQ(e(3.0), 1.0);
}

TEST(ConcaveEnvelope, RejectsEmpty) {
    EXPECT_THROW(concave_upper_envelope(std::vector<Knot>{}), std::domain_error);
}

namespace {

// Brute force: a sample is a hull vertex only if no chord between two other
// samples (including the origin) passes strictly above it, and no sample at a
// smaller distance has a larger value.
bool dominated_by_chord(const std::vector<Knot>& pts, std::size_t k) {
    for (std::size_t a = 0; a < pts.size(); ++a)
        for (std::size_t b = 0; b < pts.size(); ++b) {
            if (a == k || b == k) continue;
            if (!(pts[a].distance < pts[k].distance && pts[k].distance < pts[b].distance)) continue;
            const double lam = (pts[k].distance - pts[a].distance) / (pts[b].distance - pts[a].distance);
            if ((1 - lam) * pts[a].value + lam * pts[b].value > pts[k].value + 1e-12) return true;
        }
    for (std::size_t a = 0; a < pts.size(); ++a)
        if (pts[a].distance < pts[k].distance && pts[a].value >= pts[k].value && a != k) return true;
    return false;
}

}  // namespace

TEST(ConcaveEnvelope, ExcludesPointUnderChord) {
    const std::vector<Knot> s{{0, 0}, {1, 0.2}, {2, 0.9}, {3, 0.95}};
    const auto e = concave_upper_envelope(s);
    for (const auto& k : e.knots()) EXPECT_NE(k, (Knot{1, 0.2}));
    for (std::size_t k = 1; k < s.size(); ++k) {
        const bool vertex = std::any_of(e.knots().begin(), e.knots().end(), [&](const Knot& n) { return n == s[k]; });
        EXPECT_EQ(vertex, !dominated_by_chord(s, k)) << "sample " << k;
        EXPECT_GE(e(s[k].distance), s[k].value - 1e-12);
    }
}

TEST(ConcaveEnvelope, RandomSamplesDominatedAndConcave) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(0.0, 5.0), v(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Knot> s(2 + trial % 9);
        for (auto& k : s) k = {d(rng), v(rng)};
        s.front().distance += 1e-3;
        const auto e = concave_upper_envelope(s);
        for (const auto& k : s) EXPECT_GE(e(k.distance), k.value - 1e-12);
        const auto kn = e.knots();
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k < kn.size(); ++k) {
            const double slope = (kn[k].value - kn[k - 1].value) / (kn[k].distance - kn[k - 1].distance);
            EXPECT_GE(slope, -1e-12);
            EXPECT_LE(slope, prev + 1e-12);
            prev = slope;
        }
    }
}

TEST(Sampling, VanishingNoise) {
    const auto g = SmoothingSpec::gaussian(1e-12);
    Engine rng = substream(1, StreamTag::SmoothingNoise);
    const std::vector<double> x{0.5, -3.0, 7.25};
    const auto y = sample_noise(g, x, rng);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(y[k], x[k], 1e-9);
}

TEST(Sampling, GaussianMean) {
    const auto g = SmoothingSpec::gaussian(1.0);
    Engine rng = substream(2, StreamTag::SmoothingNoise);
    const std::vector<double> x{1.0, -2.0};
    std::vector<double> mean(2, 0.0);
    const int n = 100000;
    for (int k = 0; k < n; ++k) {
        const auto y = sample_noise(g, x, rng);
        mean[0] += y[0] / n;
        mean[1] += y[1] / n;
    }
    EXPECT_NEAR(mean[0], 1.0, 0.02);
    EXPECT_NEAR(mean[1], -2.0, 0.02);
}

TEST(Sampling, UniformSupport) {
    const auto u = SmoothingSpec::uniform_box(2.0);
    Engine rng = substream(3, StreamTag::SmoothingNoise);
    const std::vector<double> x{0.0};
    double lo = 1, hi = -1;
    for (int k = 0; k < 20000; ++k) {
        const double y = sample_noise(u, x, rng)[0];
        lo = std::min(lo, y);
        hi = std::max(hi, y);
    }
    EXPECT_GE(lo, -1.0);
    EXPECT_LE(hi, 1.0);
    EXPECT_LT(lo, -0.99);
    EXPECT_GT(hi, 0.99);
}

TEST(Sampling, Deterministic) {
    const auto g = SmoothingSpec::gaussian(0.3);
    const std::vector<double> x{1, 2, 3};
    Engine a = substream(9, StreamTag::SmoothingNoise, 4, 5), b = substream(9, StreamTag::SmoothingNoise, 4, 5);
    EXPECT_EQ(sample_noise(g, x, a), sample_noise(g, x, b));
    Engine c = substream(9, StreamTag::SmoothingNoise, 4, 6);
    Engine d = substream(9, StreamTag::SmoothingNoise, 4, 5);
    EXPECT_NE(sample_noise(g, x, c), sample_noise(g, x, d));
}

TEST(Sampling, EmpiricalWithoutSampler) {
    const auto e = SmoothingSpec::empirical(PsiEnvelope({{0, 0}, {1, 1}}), Metric::L2, "lab");
    Engine rng = substream(0, StreamTag::SmoothingNoise);
    EXPECT_THROW(sample_noise(e, std::vector<double>{1.0}, rng), unsupported_operation);
}

TEST(Sampling, EmpiricalWithSampler) {
    const auto e = SmoothingSpec::empirical(PsiEnvelope({{0, 0}, {1, 1}}), Metric::L2, "const",
                                            [](std::span<double> n, Engine&) {
                                                for (double& v : n) v = 0.25;
                                            });
    Engine rng = substream(0, StreamTag::SmoothingNoise);
    EXPECT_EQ(sample_noise(e, std::vector<double>{1.0, 2.0}, rng), (std::vector<double>{1.25, 2.25}));
    EXPECT_DOUBLE_EQ(psi(e, 0.5), 0.5);
}
