#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swcert/smoothing.hpp"
#include "swcert/special_functions.hpp"
#include "swcert/stream.hpp"

namespace swcert {

/// Which average-budget constraint epsilon refers to.
enum class ThreatModel {
    OncePerItem,  ///< each item replaced once; mean of d(x_i, x_i') over the stream
    PerWindow,    ///< each item re-perturbed in every window; mean over w * t slots
};

inline const char* to_string(ThreatModel m) { return m == ThreatModel::OncePerItem ? "once" : "per-window"; }

inline ThreatModel parse_threat_model(const std::string& s) {
    if (s == "once" || s == "once-per-item") return ThreatModel::OncePerItem;
    if (s == "per-window" || s == "window") return ThreatModel::PerWindow;
    throw std::domain_error("unknown threat model '" + s + "'");
}

/// Largest possible drop of average smoothed performance, min(1, w * psi(eps)).
/// The same expression covers both threat models.
inline double theorem_bound(std::size_t w, const SmoothingSpec& spec, double eps) {
    if (w < 1) throw std::domain_error("theorem_bound: window size must be at least 1");
    if (!(eps >= 0.0)) throw std::domain_error("theorem_bound: epsilon must be nonnegative");
    return std::min(1.0, static_cast<double>(w) * psi(spec, eps));
}

struct CertificateReport {
    std::size_t w = 1;
    double epsilon = 0.0;
    ThreatModel threat = ThreatModel::OncePerItem;
    double psi_at_eps = 0.0;
    double bound = 0.0;
    double z_tilde_hat = 0.0;
    double stderr_ = 0.0;
    double certified_lower = 0.0;           ///< max(0, z_tilde_hat - bound)
    double certified_lower_adjusted = 0.0;  ///< max(0, z_tilde_hat - 3 stderr - bound)
};

inline CertificateReport certified_lower_bound(double z_tilde_hat, double stderr_, std::size_t w,
                                               const SmoothingSpec& spec, double eps,
                                               ThreatModel threat = ThreatModel::OncePerItem) {
    if (!(z_tilde_hat >= 0.0 && z_tilde_hat <= 1.0))
        throw std::domain_error("certified_lower_bound: performance estimate must lie in [0, 1]");
    if (!(stderr_ >= 0.0)) throw std::domain_error("certified_lower_bound: standard error must be nonnegative");
    CertificateReport r;
    r.w = w;
    r.epsilon = eps;
    r.threat = threat;
    r.bound = theorem_bound(w, spec, eps);
    r.psi_at_eps = psi(spec, eps);
    r.z_tilde_hat = z_tilde_hat;
    r.stderr_ = stderr_;
    r.certified_lower = std::max(0.0, z_tilde_hat - r.bound);
    r.certified_lower_adjusted = std::max(0.0, z_tilde_hat - 3.0 * stderr_ - r.bound);
    return r;
}

inline std::vector<CertificateReport> certificate_curve(double z_tilde_hat, double stderr_, std::size_t w,
                                                        const SmoothingSpec& spec, std::span<const double> eps_grid,
                                                        ThreatModel threat = ThreatModel::OncePerItem) {
    std::vector<CertificateReport> out;
    out.reserve(eps_grid.size());
    for (double e : eps_grid) out.push_back(certified_lower_bound(z_tilde_hat, stderr_, w, spec, e, threat));
    return out;
}

/// Smoothed model candidate for best_certified_curve: its spec and clean estimate.
struct SmoothedCandidate {
    SmoothingSpec spec;
    double z_tilde_hat;
};

/// Pointwise maximum over candidates of the certified lower bound.
inline std::vector<double> best_certified_curve(std::span<const SmoothedCandidate> candidates, std::size_t w,
                                                std::span<const double> eps_grid) {
    if (candidates.empty()) throw std::domain_error("best_certified_curve: no candidates");
    std::vector<double> best(eps_grid.size(), 0.0);
    for (const auto& c : candidates)
        for (std::size_t k = 0; k < eps_grid.size(); ++k)
            best[k] = std::max(best[k], certified_lower_bound(c.z_tilde_hat, 0.0, w, c.spec, eps_grid[k]).certified_lower);
    return best;
}

/// Static l2 certificate for Gaussian smoothing: p - Phi(Phi^-1(p) - eps / sigma), within [0, p].
inline double cohen_drop_bound(double p, double eps, double sigma) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("cohen_drop_bound: p must lie strictly inside (0, 1)");
    if (!(eps >= 0.0)) throw std::domain_error("cohen_drop_bound: epsilon must be nonnegative");
    if (!(sigma > 0.0)) throw std::domain_error("cohen_drop_bound: sigma must be positive");
    return std::clamp(p - std_normal_cdf(std_normal_quantile(p) - eps / sigma), 0.0, p);
}

struct BoundComparisonRow {
    double eps;
    double ours;                 ///< erf(eps / (2 sqrt 2 sigma)), the w = 1 bound
    std::vector<double> cohen;   ///< one entry per p in the grid
};

inline std::vector<BoundComparisonRow> bound_comparison_table(double sigma, std::span<const double> p_grid,
                                                              std::span<const double> eps_grid) {
    if (p_grid.empty() || eps_grid.empty()) throw std::domain_error("bound_comparison_table: empty grid");
    const SmoothingSpec spec = SmoothingSpec::gaussian(sigma);
    std::vector<double> eps(eps_grid.begin(), eps_grid.end());
    std::sort(eps.begin(), eps.end());
    std::vector<BoundComparisonRow> rows;
    rows.reserve(eps.size());
    for (double e : eps) {
        BoundComparisonRow row{e, theorem_bound(1, spec, e), {}};
        for (double p : p_grid) row.cohen.push_back(cohen_drop_bound(p, e, sigma));
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Serialisation
// ---------------------------------------------------------------------------

/// Column order of write_certificate_csv; stable across versions.
inline constexpr const char* kCertificateColumns =
    "eps,threat,w,psi,bound,z_tilde,z_tilde_stderr,certified_lower,certified_lower_adjusted";

inline void write_certificate_csv(std::ostream& out, std::span<const CertificateReport> rows) {
    out << kCertificateColumns << '\n';
    for (const auto& r : rows)
        out << detail::format_double(r.epsilon) << ',' << to_string(r.threat) << ',' << r.w << ','
            << detail::format_double(r.psi_at_eps) << ',' << detail::format_double(r.bound) << ','
            << detail::format_double(r.z_tilde_hat) << ',' << detail::format_double(r.stderr_) << ','
            << detail::format_double(r.certified_lower) << ',' << detail::format_double(r.certified_lower_adjusted)
            << '\n';
}

inline void write_certificate_report(std::ostream& out, const SmoothingSpec& spec,
                                     std::span<const CertificateReport> rows) {
    out << "certificate report\n"
        << "  smoothing: " << spec.describe() << " metric=" << to_string(spec.metric()) << '\n';
    if (!rows.empty())
        out << "  window: " << rows.front().w << "  threat model: " << to_string(rows.front().threat) << '\n'
            << "  clean smoothed performance: " << rows.front().z_tilde_hat << " +/- " << rows.front().stderr_ << '\n';
    for (const auto& r : rows)
        out << "  eps=" << r.epsilon << "  bound=" << r.bound << "  certified>=" << r.certified_lower
            << "  (3-stderr: " << r.certified_lower_adjusted << ")\n";
}

}  // namespace swcert
