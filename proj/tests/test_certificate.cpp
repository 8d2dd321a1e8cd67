#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <gtest/gtest.h>

#include "reference.hpp"
#include "swcert/certificate.hpp"
#include "swcert/oracle.hpp"

using namespace swcert;

TEST(TheoremBound, Values) {
    const auto g = SmoothingSpec::gaussian(1.0);
    for (std::size_t w : {1u, 3u, 10u}) EXPECT_EQ(theorem_bound(w, g, 0.0), 0.0);
    EXPECT_GT(2.0 * ref::erf(1.0), 1.0);
    EXPECT_EQ(theorem_bound(2, g, 2.0 * std::numbers::sqrt2), 1.0);
    EXPECT_EQ(theorem_bound(1, SmoothingSpec::uniform_box(4.0), 1.0), 0.25);
    EXPECT_NEAR(theorem_bound(1, g, 1.0), ref::erf(1.0 / (2.0 * std::numbers::sqrt2)), 1e-7);
}

TEST(TheoremBound, Errors) {
    EXPECT_THROW(theorem_bound(1, SmoothingSpec::gaussian(1.0), -0.1), std::domain_error);
    EXPECT_THROW(theorem_bound(0, SmoothingSpec::gaussian(1.0), 0.1), std::domain_error);
}

TEST(TheoremBound, MonotoneInWindowAndEps) {
    const auto g = SmoothingSpec::gaussian(0.8);
    for (int e = 0; e < 40; ++e)
        for (std::size_t w = 1; w < 8; ++w) {
            const double eps = 0.1 * e;
            EXPECT_LE(theorem_bound(w, g, eps), theorem_bound(w + 1, g, eps));
            EXPECT_LE(theorem_bound(w, g, eps), theorem_bound(w, g, eps + 0.1));
        }
}

TEST(TheoremBound, SigmaScalingIsExact) {
    for (double sigma : {0.25, 0.5, 2.0, 4.0})
        for (int e = 0; e <= 30; ++e) {
            const double eps = 0.1 * e;
            EXPECT_EQ(theorem_bound(2, SmoothingSpec::gaussian(sigma), eps),
                      theorem_bound(2, SmoothingSpec::gaussian(1.0), eps / sigma))
                << "sigma=" << sigma << " eps=" << eps;
        }
}

TEST(CertifiedLower, Arithmetic) {
    const auto u = SmoothingSpec::uniform_box(10.0);
    EXPECT_NEAR(certified_lower_bound(0.9, 0.0, 1, u, 3.0).certified_lower, 0.6, 1e-15);
    EXPECT_EQ(certified_lower_bound(0.2, 0.0, 1, u, 5.0).certified_lower, 0.0);
    const auto r = certified_lower_bound(0.9, 0.01, 2, u, 1.0, ThreatModel::PerWindow);
    EXPECT_EQ(r.stderr_, 0.01);
    EXPECT_NEAR(r.certified_lower_adjusted, 0.9 - 0.03 - 0.2, 1e-15);
    EXPECT_EQ(r.threat, ThreatModel::PerWindow);
    EXPECT_THROW(certified_lower_bound(1.2, 0.0, 1, u, 1.0), std::domain_error);
}

TEST(CertifiedLower, CurveOrderedByWindow) {
    const auto g = SmoothingSpec::gaussian(1.0);
    std::vector<double> grid;
    for (int k = 1; k <= 30; ++k) grid.push_back(0.1 * k);
    const auto c1 = certificate_curve(0.95, 0.0, 1, g, grid);
    const auto c2 = certificate_curve(0.95, 0.0, 2, g, grid);
    const auto c4 = certificate_curve(0.95, 0.0, 4, g, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        EXPECT_GE(c1[k].certified_lower, c2[k].certified_lower);
        EXPECT_GE(c2[k].certified_lower, c4[k].certified_lower);
        EXPECT_LE(c1[k].certified_lower, 0.95);
        EXPECT_GT(c1[k].bound, c1[k].bound / 2.0);
    }
}

TEST(CertifiedLower, MatchesExactEnumerationOnDiscreteInstance) {
    // Toy instance: 2 symbols, kernel keeps the symbol w.p. 0.8.
    oracle::DiscreteInstance inst;
    inst.m = 2;
    inst.w = 2;
    inst.kernel = {{0.8, 0.2}, {0.2, 0.8}};
    inst.dist = {{0.0, 1.0}, {1.0, 0.0}};
    inst.perf = {{1.0, 0.0}, {1.0, 0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}};
    const std::vector<int> clean{0, 0, 0};
    const auto exact = oracle::exact_smoothed_stream_perf(inst, clean);
    // f~_1 = 0.8, f~_2 = f~_3 = 0.64.
    EXPECT_NEAR(exact.z, (0.8 + 0.64 + 0.64) / 3.0, 1e-15);
    const auto psi = oracle::tightest_discrete_psi(inst);
    const auto spec = SmoothingSpec::empirical(psi, Metric::L1, "toy");
    const double eps = 0.5;
    const double certified = certified_lower_bound(exact.z, 0.0, inst.w, spec, eps).certified_lower;
    EXPECT_NEAR(certified, std::max(0.0, exact.z - 2.0 * 0.6 * 0.5), 1e-15);
}

TEST(BestCurve, PointwiseMaximum) {
    const std::vector<double> grid{0.0, 0.5, 1.0, 2.0};
    const std::vector<SmoothedCandidate> cands{{SmoothingSpec::gaussian(0.25), 0.99},
                                               {SmoothingSpec::gaussian(1.0), 0.9}};
    const auto best = best_certified_curve(cands, 1, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double a = certified_lower_bound(0.99, 0, 1, cands[0].spec, grid[k]).certified_lower;
        const double b = certified_lower_bound(0.9, 0, 1, cands[1].spec, grid[k]).certified_lower;
        EXPECT_EQ(best[k], std::max(a, b));
    }
    EXPECT_EQ(best[0], 0.99);
    EXPECT_THROW(best_certified_curve(std::vector<SmoothedCandidate>{}, 1, grid), std::domain_error);
}

TEST(Cohen, Values) {
    EXPECT_NEAR(cohen_drop_bound(0.9, 0.0, 1.0), 0.0, 1e-12);
    // Oracle: quantile by bisection, CDF by quadrature.
    const double q = ref::normal_quantile(0.9);
    const double want = 0.9 - ref::normal_cdf(q - 1.0);
    EXPECT_NEAR(want, 0.28914, 1e-4);
    EXPECT_NEAR(cohen_drop_bound(0.9, 1.0, 1.0), want, 1e-7);
}

TEST(Cohen, MonotoneAndErrors) {
    for (double p : {0.55, 0.9, 0.999})
        for (int k = 0; k < 50; ++k)
            EXPECT_LE(cohen_drop_bound(p, 0.1 * k, 1.0), cohen_drop_bound(p, 0.1 * (k + 1), 1.0));
    EXPECT_THROW(cohen_drop_bound(0.0, 1.0, 1.0), std::domain_error);
    EXPECT_THROW(cohen_drop_bound(1.0, 1.0, 1.0), std::domain_error);
    EXPECT_THROW(cohen_drop_bound(0.5, -1.0, 1.0), std::domain_error);
    EXPECT_THROW(cohen_drop_bound(0.5, 1.0, 0.0), std::domain_error);
}

TEST(Comparison, CohenBelowOursAndGapSmall) {
    const std::vector<double> p{0.9};
    const std::vector<double> eps{2.0, 0.5, 1.0};
    const auto table = bound_comparison_table(1.0, p, eps);
    ASSERT_EQ(table.size(), 3u);
    EXPECT_EQ(table[0].eps, 0.5);
    EXPECT_EQ(table[2].eps, 2.0);
    for (const auto& row : table) {
        const double ours = ref::erf(row.eps / (2.0 * std::numbers::sqrt2));
        const double cohen = 0.9 - ref::normal_cdf(ref::normal_quantile(0.9) - row.eps);
        EXPECT_LE(cohen, ours);
        EXPECT_LE(row.cohen[0], row.ours);
        EXPECT_NEAR(row.ours, ours, 1e-7);
    }
}

TEST(Comparison, GapOnZeroToTwo) {
    // Oracle maxima of ours - cohen over eps in [0, 2]: 0.0961 (p=0.9),
    // 0.1748 (p=0.95), 0.3529 (p=0.99). The gap crosses 0.25 near p = 0.974
    // and tends to erf(1/sqrt 2) as p -> 1.
    const std::vector<double> p{0.9, 0.95, 0.97, 0.99};
    std::vector<double> eps;
    for (int k = 0; k <= 200; ++k) eps.push_back(0.01 * k);
    const auto table = bound_comparison_table(1.0, p, eps);
    for (std::size_t j = 0; j < p.size(); ++j) {
        double worst_ref = 0.0, worst = 0.0;
        for (std::size_t k = 0; k < eps.size(); ++k) {
            const double e = eps[k];
            worst_ref = std::max(worst_ref, ref::erf(e / (2.0 * std::numbers::sqrt2)) -
                                                (p[j] - ref::normal_cdf(ref::normal_quantile(p[j]) - e)));
            worst = std::max(worst, table[k].ours - table[k].cohen[j]);
        }
        EXPECT_NEAR(worst, worst_ref, 1e-6) << "p=" << p[j];
        if (p[j] <= 0.97)
            EXPECT_LE(worst, 0.25) << "p=" << p[j];
        else
            EXPECT_GT(worst, 0.25) << "p=" << p[j];
    }
}

TEST(Comparison, ZeroEpsAndScaling) {
    const std::vector<double> p{0.6, 0.75, 0.9, 0.99};
    std::vector<double> eps, half;
    for (int k = 0; k < 25; ++k) {
        eps.push_back(3.0 * k / 24.0);
        half.push_back(eps.back() / 2.0);
    }
    const auto t1 = bound_comparison_table(1.0, p, half);
    const auto t2 = bound_comparison_table(2.0, p, eps);
    for (double c : t2[0].cohen) EXPECT_EQ(c, 0.0);
    EXPECT_EQ(t2[0].ours, 0.0);
    for (std::size_t k = 0; k < eps.size(); ++k) {
        EXPECT_EQ(t2[k].ours, t1[k].ours);
        for (std::size_t j = 0; j < p.size(); ++j) EXPECT_EQ(t2[k].cohen[j], t1[k].cohen[j]);
    }
    EXPECT_THROW(bound_comparison_table(1.0, std::vector<double>{}, eps), std::domain_error);
}

TEST(Serialisation, CsvColumnsAndReport) {
    const auto g = SmoothingSpec::gaussian(1.0);
    const std::vector<double> grid{0.0, 0.5};
    const auto rows = certificate_curve(0.8, 0.01, 2, g, grid);
    std::ostringstream csv;
    write_certificate_csv(csv, rows);
    std::istringstream in(csv.str());
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header, kCertificateColumns);
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
    }
    EXPECT_EQ(n, 2);
    std::ostringstream rep;
    write_certificate_report(rep, g, rows);
    EXPECT_NE(rep.str().find("gaussian"), std::string::npos);
}
