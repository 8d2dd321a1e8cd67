#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "reference.hpp"
#include "swcert/oracle.hpp"

using namespace swcert;
using namespace swcert::oracle;

TEST(NumericTv, Gaussian) {
    const auto g = SmoothingSpec::gaussian(1.0);
    const std::vector<double> x{0.3, -1.0};
    EXPECT_EQ(numeric_tv(g, x, x), 0.0);
    const std::vector<double> y{0.3 + 2.0 * std::numbers::sqrt2, -1.0};
    EXPECT_NEAR(numeric_tv(g, x, y), ref::erf(1.0), 1e-6);
    EXPECT_NEAR(numeric_tv(g, x, y), 0.842701, 1e-4);
}

TEST(NumericTv, GaussianAgreesWithPsi) {
    for (double sigma : {0.5, 1.0, 2.0})
        for (int k = 0; k <= 24; ++k) {
            const double d = 6.0 * sigma * k / 24.0;
            const double tv = gaussian_tv_1d(d, sigma);
            EXPECT_NEAR(psi(SmoothingSpec::gaussian(sigma), d), tv, 1e-6);
            EXPECT_NEAR(tv, ref::gaussian_tv(d, sigma), 1e-6);
        }
}

TEST(NumericTv, UniformBoxIsBoundedByPsi) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    const auto u = SmoothingSpec::uniform_box(2.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> a(3), b(3);
        for (double& v : a) v = n(rng);
        for (double& v : b) v = n(rng);
        EXPECT_LE(numeric_tv(u, a, b), psi(u, distance(u, a, b)) + 1e-12);
    }
    // One coordinate moved by delta: TV is exactly delta / b.
    EXPECT_NEAR(numeric_tv(u, std::vector<double>{0.0, 0.0}, std::vector<double>{0.5, 0.0}), 0.25, 1e-15);
}

TEST(NumericTv, DiscreteAndUnsupported) {
    EXPECT_EQ(numeric_tv(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}), 1.0);
    EXPECT_NEAR(numeric_tv(std::vector<double>{0.5, 0.5}, std::vector<double>{0.8, 0.2}), 0.3, 1e-15);
    const auto e = SmoothingSpec::empirical(PsiEnvelope({{0, 0}, {1, 1}}), Metric::L2);
    EXPECT_THROW(numeric_tv(e, std::vector<double>{0.0}, std::vector<double>{1.0}), unsupported_operation);
}

namespace {

DiscreteInstance small_instance(std::vector<std::vector<double>> kernel, std::size_t w, std::size_t t,
                                std::uint64_t seed) {
    DiscreteInstance inst;
    inst.m = kernel.size();
    inst.w = w;
    inst.kernel = std::move(kernel);
    inst.dist.assign(inst.m, std::vector<double>(inst.m, 1.0));
    for (std::size_t a = 0; a < inst.m; ++a) inst.dist[a][a] = 0.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 1; i <= t; ++i) {
        std::size_t size = 1;
        for (std::size_t k = 0; k < std::min(i, w); ++k) size *= inst.m;
        inst.perf.emplace_back(size);
        for (double& v : inst.perf.back()) v = u(rng);
    }
    inst.validate();
    return inst;
}

}  // namespace

TEST(Exact, IdentityKernelGivesCleanPerformance) {
    const auto inst = small_instance({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 2, 4, 1);
    const std::vector<int> stream{2, 0, 1, 1};
    const auto r = exact_smoothed_stream_perf(inst, stream);
    const auto windows = clean_windows(stream, 2);
    for (std::size_t i = 1; i <= 4; ++i)
        EXPECT_EQ(r.per_step[i - 1], inst.perf[i - 1][table_index(windows[i - 1], 3)]);
}

TEST(Exact, UniformKernelIgnoresStream) {
    const double third = 1.0 / 3.0;
    const auto inst = small_instance({{third, third, third}, {third, third, third}, {third, third, third}}, 3, 5, 2);
    const auto a = exact_smoothed_stream_perf(inst, std::vector<int>{0, 0, 0, 0, 0});
    const auto b = exact_smoothed_stream_perf(inst, std::vector<int>{2, 1, 0, 1, 2});
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a.per_step[i], b.per_step[i], 1e-15);
}

TEST(Exact, MatchesMonteCarlo) {
    Engine rng = substream(3, StreamTag::Oracle);
    for (int trial = 0; trial < 5; ++trial) {
        const auto rc = random_case(rng, ThreatModel::OncePerItem);
        const auto exact = exact_smoothed_stream_perf(rc.instance, rc.clean);
        const auto mc = monte_carlo_smoothed_stream_perf(rc.instance, rc.clean, 100000, 10 + trial);
        EXPECT_LE(std::abs(exact.z - mc.z), 3.0 * mc.stderr_ + 1e-12) << "trial " << trial;
    }
}

TEST(Exact, SizeAndShapeErrors) {
    DiscreteInstance inst;
    inst.m = 400;
    inst.w = 2;
    inst.perf = {std::vector<double>(400, 0.0)};
    EXPECT_THROW(exact_smoothed_stream_perf(inst, std::vector<int>{0}), size_error);
    const auto ok = small_instance({{1, 0}, {0, 1}}, 1, 2, 1);
    EXPECT_THROW(exact_smoothed_stream_perf(ok, std::vector<int>{0}), std::domain_error);
}

TEST(TightPsi, EnvelopeDominatesPairwiseTv) {
    Engine rng = substream(4, StreamTag::Oracle);
    for (int trial = 0; trial < 50; ++trial) {
        const auto rc = random_case(rng, ThreatModel::PerWindow);
        const auto psi = tightest_discrete_psi(rc.instance);
        for (std::size_t a = 0; a < rc.instance.m; ++a)
            for (std::size_t b = 0; b < rc.instance.m; ++b)
                EXPECT_GE(psi(rc.instance.dist[a][b]) + 1e-12,
                          numeric_tv(rc.instance.kernel[a], rc.instance.kernel[b]));
    }
}

TEST(Lemma, IdenticalStreamsHaveZeroGap) {
    Engine rng = substream(5, StreamTag::Oracle);
    auto rc = random_case(rng, ThreatModel::OncePerItem);
    rc.adversary.stream = rc.clean;
    const auto r = verify_lemma_bounds(rc.instance, rc.clean, rc.adversary, tightest_discrete_psi(rc.instance));
    EXPECT_EQ(r.overall_lhs, 0.0);
    for (const auto& s : r.steps) EXPECT_EQ(s.lhs, 0.0);
    EXPECT_TRUE(r.holds());
}

TEST(Lemma, RandomInstancesHaveNoViolations) {
    Engine rng = substream(6, StreamTag::Oracle);
    int checked = 0;
    for (auto mode : {ThreatModel::OncePerItem, ThreatModel::PerWindow})
        for (int trial = 0; trial < 100; ++trial) {
            const auto rc = random_case(rng, mode);
            const auto r = verify_lemma_bounds(rc.instance, rc.clean, rc.adversary, tightest_discrete_psi(rc.instance));
            EXPECT_TRUE(r.holds()) << to_string(mode) << " trial " << trial << " lhs " << r.overall_lhs << " rhs "
                                   << r.overall_rhs;
            ++checked;
        }
    EXPECT_EQ(checked, 200);
}

TEST(Lemma, TightAtOneStep) {
    // f = indicator of the event where K[x] exceeds K[x']; its expectation
    // difference is exactly TV(K[x], K[x']).
    DiscreteInstance inst;
    inst.m = 4;
    inst.w = 1;
    inst.kernel = {{0.4, 0.3, 0.2, 0.1}, {0.1, 0.2, 0.3, 0.4}, {0.25, 0.25, 0.25, 0.25}, {0.7, 0.1, 0.1, 0.1}};
    inst.dist = {{0, 1, 2, 3}, {1, 0, 1, 2}, {2, 1, 0, 1}, {3, 2, 1, 0}};
    const int x = 0, xp = 1;
    std::vector<double> f(4);
    for (std::size_t k = 0; k < 4; ++k) f[k] = inst.kernel[x][k] > inst.kernel[xp][k] ? 1.0 : 0.0;
    inst.perf = {f};
    DiscreteAdversary adv;
    adv.stream = {xp};
    const std::vector<int> clean{x};
    const auto r = verify_lemma_bounds(inst, clean, adv, tightest_discrete_psi(inst));
    EXPECT_NEAR(r.steps[0].lhs, numeric_tv(inst.kernel[x], inst.kernel[xp]), 1e-15);
    EXPECT_TRUE(r.holds());
}

TEST(Lemma, RejectsNonConcavePsi) {
    Engine rng = substream(7, StreamTag::Oracle);
    const auto rc = random_case(rng, ThreatModel::OncePerItem);
    EXPECT_THROW(verify_lemma_bounds(rc.instance, rc.clean, rc.adversary, std::vector<Knot>{{0, 0}, {1, 0.1}, {2, 0.9}}),
                 std::domain_error);
}

TEST(Lemma, DetectsInvalidPsi) {
    // A psi far below the kernel TV must produce a violation somewhere.
    Engine rng = substream(8, StreamTag::Oracle);
    bool violated = false;
    for (int trial = 0; trial < 50 && !violated; ++trial) {
        const auto rc = random_case(rng, ThreatModel::OncePerItem);
        violated = !verify_lemma_bounds(rc.instance, rc.clean, rc.adversary, PsiEnvelope({{0, 0}, {100, 1e-3}})).holds();
    }
    EXPECT_TRUE(violated);
}

TEST(FiniteDiff, LinearIsExact) {
    const auto m = random_model(Architecture::Linear, 3, 2, 3, 0, 4);
    const std::vector<Feature> win{{0.1, -0.5, 2.0}, {1.0, 0.0, -1.0}};
    EXPECT_LE(finite_diff_check(m, win, 1), 1e-8);
}

TEST(FiniteDiff, RandomMlp) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = random_model(Architecture::MLP1, 2, 3, 3, 10, 50 + trial);
        std::vector<Feature> win(3, Feature(2));
        for (auto& f : win)
            for (double& v : f) v = n(rng);
        EXPECT_LE(finite_diff_check(m, win, trial % 3), 1e-4);
    }
}

TEST(FiniteDiff, ZeroWindowSymmetry) {
    // Zero input, zero biases, hidden layer tanh: the logits are all zero and the
    // gradient for class y is sum_r (1/C - 1[r=y]) * d logit_r / dx, evaluated
    // identically by both methods.
    auto m = random_model(Architecture::MLP1, 2, 2, 2, 4, 3);
    const std::vector<Feature> zero(2, Feature(2, 0.0));
    const auto a = compare_gradients(m, zero, 0), b = compare_gradients(m, zero, 1);
    for (std::size_t k = 0; k < a.analytic.size(); ++k) {
        EXPECT_NEAR(a.analytic[k], -b.analytic[k], 1e-12);
        EXPECT_NEAR(a.numeric[k], -b.numeric[k], 1e-9);
    }
    EXPECT_LE(a.relative_error, 1e-4);
}
