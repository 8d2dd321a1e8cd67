#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "swcert/certificate.hpp"
#include "swcert/errors.hpp"
#include "swcert/model.hpp"
#include "swcert/rng.hpp"
#include "swcert/smoothing.hpp"
#include "swcert/stream.hpp"

namespace swcert {

inline constexpr double kBudgetSlack = 1e-9;

// ---------------------------------------------------------------------------
// Budget ledger
// ---------------------------------------------------------------------------

/// Running account of perturbation distances. OncePerItem records one
/// distance per step; PerWindow records one distance per window slot, and the
/// average is normalised by w * t so slots that never materialise count as 0.
class BudgetLedger {
public:
    BudgetLedger(ThreatModel mode, std::size_t w, double epsilon) : mode_(mode), w_(w), epsilon_(epsilon) {
        if (w < 1) throw std::domain_error("BudgetLedger: window size must be at least 1");
        if (!(epsilon >= 0.0)) throw std::domain_error("BudgetLedger: epsilon must be nonnegative");
    }

    ThreatModel mode() const { return mode_; }
    std::size_t w() const { return w_; }
    double epsilon() const { return epsilon_; }
    std::size_t steps() const { return entries_.size(); }
    double spent() const { return spent_; }

    /// Normaliser per step: 1 for OncePerItem, w for PerWindow.
    double slots_per_step() const { return mode_ == ThreatModel::OncePerItem ? 1.0 : static_cast<double>(w_); }

    /// Total distance the next step may consume while keeping the prefix average within epsilon.
    double budget_for_next_step() const {
        return static_cast<double>(steps() + 1) * slots_per_step() * epsilon_ - spent_;
    }

    void record_step(std::vector<double> distances) {
        if (mode_ == ThreatModel::OncePerItem && distances.size() != 1)
            throw std::domain_error("BudgetLedger: attack-once steps record exactly one distance");
        if (mode_ == ThreatModel::PerWindow && (distances.empty() || distances.size() > w_))
            throw std::domain_error("BudgetLedger: per-window steps record 1..w distances");
        for (double d : distances)
            if (!(d >= 0.0)) throw std::domain_error("BudgetLedger: distances must be nonnegative");
        spent_ += std::accumulate(distances.begin(), distances.end(), 0.0);
        entries_.push_back(std::move(distances));
        worst_prefix_ = std::max(worst_prefix_, average());
    }

    double average() const {
        return steps() == 0 ? 0.0 : spent_ / (slots_per_step() * static_cast<double>(steps()));
    }
    double worst_prefix_average() const { return worst_prefix_; }

    const std::vector<std::vector<double>>& entries() const { return entries_; }

private:
    ThreatModel mode_;
    std::size_t w_;
    double epsilon_;
    double spent_ = 0.0;
    double worst_prefix_ = 0.0;
    std::vector<std::vector<double>> entries_;
};

// ---------------------------------------------------------------------------
// PGD
// ---------------------------------------------------------------------------

enum class Projection {
    JointL2,  ///< l2 ball on the concatenated perturbation of all mutable slots
    SlotSum,  ///< sum over slots of per-slot l2 norms (the per-window budget geometry)
};

struct PgdOptions {
    std::size_t steps = 100;
    double step_factor = 2.0;  ///< step size = step_factor * radius / steps
    Projection projection = Projection::JointL2;
};

namespace detail {

/// Euclidean projection of a nonnegative vector onto {v >= 0, sum v <= radius}.
inline std::vector<double> project_simplex(std::span<const double> v, double radius) {
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        cum += sorted[k];
        const double t = (cum - radius) / static_cast<double>(k + 1);
        if (sorted[k] - t > 0.0) theta = t;
    }
    std::vector<double> out(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = std::max(0.0, v[k] - theta);
    return out;
}

inline double slot_norm(const Feature& d) {
    double s = 0.0;
    for (double v : d) s += v * v;
    return std::sqrt(s);
}

inline void project(std::vector<Feature>& delta, double radius, Projection projection) {
    if (projection == Projection::JointL2 || delta.size() == 1) {
        double sq = 0.0;
        for (const auto& d : delta)
            for (double v : d) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > radius) {
            const double scale = norm > 0.0 ? radius / norm : 0.0;
            for (auto& d : delta)
                for (double& v : d) v *= scale;
        }
        return;
    }
    std::vector<double> norms(delta.size());
    for (std::size_t k = 0; k < delta.size(); ++k) norms[k] = slot_norm(delta[k]);
    if (std::accumulate(norms.begin(), norms.end(), 0.0) <= radius) return;
    const std::vector<double> target = project_simplex(norms, radius);
    for (std::size_t k = 0; k < delta.size(); ++k) {
        const double scale = norms[k] > 0.0 ? target[k] / norms[k] : 0.0;
        for (double& v : delta[k]) v *= scale;
    }
}

}  // namespace detail

/// Objective for pgd_l2: returns the value at `window` and, when grad is
/// non-null, writes d(value)/d(window) shaped like the window.
template <class F>
concept WindowObjective = requires(F f, std::span<const Feature> w, std::vector<Feature>* g) {
    { f(w, g) } -> std::convertible_to<double>;
};

/// Projected normalised-gradient descent that minimises `objective` over
/// perturbations of the slots listed in `mutable_slots`, constrained to the
/// ball of `radius`. Returns the lowest-objective iterate seen (the start
/// point if nothing improves on it).
template <WindowObjective Objective>
std::vector<Feature> pgd_l2(Objective&& objective, std::span<const Feature> window,
                            std::span<const std::size_t> mutable_slots, double radius, const PgdOptions& opt = {}) {
    if (!(radius >= 0.0)) throw std::domain_error("pgd_l2: radius must be nonnegative");
    for (std::size_t s : mutable_slots)
        if (s >= window.size()) throw std::domain_error("pgd_l2: mutable slot outside the window");

    std::vector<Feature> best(window.begin(), window.end());
    if (radius == 0.0 || mutable_slots.empty() || opt.steps == 0) return best;

    const double step = opt.step_factor * radius / static_cast<double>(opt.steps);
    std::vector<Feature> current = best;
    std::vector<Feature> delta(mutable_slots.size(), Feature(window.front().size(), 0.0));
    std::vector<Feature> grad;
    double best_value = objective(std::span<const Feature>(current), &grad);

    for (std::size_t it = 0; it < opt.steps; ++it) {
        double gnorm = 0.0;
        for (std::size_t s : mutable_slots)
            for (double g : grad[s]) gnorm += g * g;
        gnorm = std::sqrt(gnorm);
        if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;

        for (std::size_t k = 0; k < mutable_slots.size(); ++k) {
            const Feature& g = grad[mutable_slots[k]];
            for (std::size_t c = 0; c < g.size(); ++c) delta[k][c] -= step * g[c] / gnorm;
        }
        detail::project(delta, radius, opt.projection);
        for (std::size_t k = 0; k < mutable_slots.size(); ++k) {
            const std::size_t s = mutable_slots[k];
            for (std::size_t c = 0; c < delta[k].size(); ++c) current[s][c] = window[s][c] + delta[k][c];
        }

        const double value = objective(std::span<const Feature>(current), &grad);
        if (value < best_value) {
            best_value = value;
            best = current;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Attack targets
// ---------------------------------------------------------------------------

struct AttackConfig {
    double epsilon = 0.0;
    std::size_t alpha = 15;          ///< grid resolution for the per-step radius search
    std::size_t pgd_steps = 100;
    double pgd_step_factor = 2.0;    ///< PGD step = factor * radius / pgd_steps
    std::size_t smoothing_draws = 8; ///< attacker-side noise draws against smoothed targets
    std::uint64_t seed = 0;

    void validate() const {
        if (!(epsilon >= 0.0)) throw std::domain_error("AttackConfig: epsilon must be nonnegative");
        if (alpha < 1) throw std::domain_error("AttackConfig: alpha must be at least 1");
        if (pgd_steps < 1) throw std::domain_error("AttackConfig: pgd_steps must be at least 1");
        if (!(pgd_step_factor > 0.0)) throw std::domain_error("AttackConfig: pgd_step_factor must be positive");
        if (smoothing_draws < 1) throw std::domain_error("AttackConfig: smoothing_draws must be at least 1");
    }
};

/// The model as deployed, seen from the attacker. An undefended target is the
/// raw classifier. A smoothed target is approximated by a fixed set of noise
/// draws per step; the attacker's f_j is the fraction of draws classified
/// correctly and the window counts as broken when that fraction drops below 1/2.
class AttackTarget {
public:
    static AttackTarget undefended(const ModelParams& m) { return AttackTarget(m, std::nullopt, 0, 0); }

    static AttackTarget smoothed(const ModelParams& m, const SmoothingSpec& spec, std::size_t draws,
                                 std::uint64_t seed) {
        if (draws < 1) throw std::domain_error("AttackTarget: need at least one noise draw");
        return AttackTarget(m, spec, draws, seed);
    }

    const ModelParams& model() const { return *model_; }
    bool is_smoothed() const { return spec_.has_value(); }

    /// Attacker's view of step `step` for a window of `slots` items with ground truth `label`.
    class StepView {
    public:
        /// Attacker-side performance in [0, 1].
        double performance(std::span<const Feature> window) const {
            if (noise_.empty()) return zero_one_performance(*model_, window, label_);
            double hits = 0.0;
            std::vector<Feature> noisy(window.begin(), window.end());
            for (const auto& draw : noise_) {
                add(window, draw, noisy);
                hits += zero_one_performance(*model_, noisy, label_);
            }
            return hits / static_cast<double>(noise_.size());
        }

        bool broken(std::span<const Feature> window) const {
            const double f = performance(window);
            return noise_.empty() ? f == 0.0 : f < 0.5;
        }

        /// Negative cross-entropy of the true label (averaged over draws); PGD minimises it.
        double operator()(std::span<const Feature> window, std::vector<Feature>* grad) const {
            if (noise_.empty()) {
                LossGradient lg = input_gradient(*model_, window, label_);
                if (grad) {
                    *grad = std::move(lg.gradient);
                    for (auto& g : *grad)
                        for (double& v : g) v = -v;
                }
                return -lg.loss;
            }
            std::vector<Feature> noisy(window.begin(), window.end());
            double total = 0.0;
            if (grad) grad->assign(window.size(), Feature(window.front().size(), 0.0));
            const double inv = 1.0 / static_cast<double>(noise_.size());
            for (const auto& draw : noise_) {
                add(window, draw, noisy);
                const LossGradient lg = input_gradient(*model_, noisy, label_);
                total -= lg.loss * inv;
                if (grad)
                    for (std::size_t s = 0; s < window.size(); ++s)
                        for (std::size_t c = 0; c < lg.gradient[s].size(); ++c) (*grad)[s][c] -= lg.gradient[s][c] * inv;
            }
            return total;
        }

        int label() const { return label_; }

    private:
        friend class AttackTarget;
        StepView(const ModelParams* m, int label, std::vector<std::vector<Feature>> noise)
            : model_(m), label_(label), noise_(std::move(noise)) {}

        static void add(std::span<const Feature> window, const std::vector<Feature>& draw, std::vector<Feature>& out) {
            for (std::size_t s = 0; s < window.size(); ++s)
                for (std::size_t c = 0; c < window[s].size(); ++c) out[s][c] = window[s][c] + draw[s][c];
        }

        const ModelParams* model_;
        int label_;
        std::vector<std::vector<Feature>> noise_;  // draws x slots x dim
    };

    StepView at_step(std::size_t step, std::size_t slots, int label) const {
        std::vector<std::vector<Feature>> noise;
        if (spec_) {
            noise.resize(draws_);
            for (std::size_t k = 0; k < draws_; ++k) {
                Engine rng = substream(seed_, StreamTag::AttackNoise, step, k);
                noise[k].assign(slots, Feature(model_->dim));
                for (auto& slot : noise[k]) draw_noise(*spec_, slot, rng);
            }
        }
        return StepView(model_, label, std::move(noise));
    }

private:
    AttackTarget(const ModelParams& m, std::optional<SmoothingSpec> spec, std::size_t draws, std::uint64_t seed)
        : model_(&m), spec_(std::move(spec)), draws_(draws), seed_(seed) {}

    const ModelParams* model_;
    std::optional<SmoothingSpec> spec_;
    std::size_t draws_;
    std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// Everything an attack did, enough to replay and audit it.
///
/// OncePerItem: `items[i]` is x_{i+1}'. PerWindow: `windows[j]` is W_{j+1}',
/// oldest item first, so slot k of window j holds a perturbation of item
/// j + 1 - s + k.
struct AttackTrace {
    ThreatModel mode = ThreatModel::OncePerItem;
    double epsilon = 0.0;
    std::size_t w = 1;
    Metric metric = Metric::L2;
    std::uint64_t seed = 0;
    std::size_t alpha = 0;
    std::size_t pgd_steps = 0;
    bool smoothed_target = false;

    std::vector<Feature> items;
    std::vector<std::vector<Feature>> windows;
    std::vector<int> labels;               ///< per-step ground truth of the clean stream
    std::vector<double> f_before;          ///< attacker-side f_j before the step's perturbation
    std::vector<double> f_after;           ///< attacker-side f_j on the final adversarial window
    std::vector<double> radius;            ///< accepted grid radius (0 when not attacked)
    std::vector<std::vector<double>> distances;  ///< ledger entries per step

    std::size_t steps() const { return f_after.size(); }

    /// The adversarial window the model sees at 1-based step j.
    std::vector<Feature> window(std::size_t j) const {
        if (mode == ThreatModel::PerWindow) return windows.at(j - 1);
        const std::size_t s = window_length(j, w);
        return {items.begin() + static_cast<std::ptrdiff_t>(j - s), items.begin() + static_cast<std::ptrdiff_t>(j)};
    }

    /// Mean of f_after: attacked performance as seen by the attacker's target.
    double attacked_performance() const {
        if (f_after.empty()) return 0.0;
        return std::accumulate(f_after.begin(), f_after.end(), 0.0) / static_cast<double>(f_after.size());
    }
};

struct StepOutcome {
    double f_before = 0.0;
    double f_after = 0.0;
    double radius = 0.0;
    std::vector<Feature> window;    ///< adversarial window at this step
    std::vector<double> distances;  ///< ledger entry for this step
};

/// Bounded-memory online attacker. Feed clean items one at a time; the
/// ledger and the last w (perturbed) items carry across calls, so arbitrarily
/// long streams can be processed chunk by chunk.
class StreamingAttacker {
public:
    StreamingAttacker(ThreatModel mode, const AttackTarget& target, std::size_t w, Metric metric,
                      const AttackConfig& cfg)
        : mode_(mode), target_(&target), w_(w), metric_(metric), cfg_(cfg), ledger_(mode, w, cfg.epsilon) {
        cfg_.validate();
        if (target.model().window != w) throw std::domain_error("attack: model window size differs from w");
    }

    const BudgetLedger& ledger() const { return ledger_; }

    StepOutcome step(const Feature& clean_item, int label) {
        const std::size_t j = ledger_.steps() + 1;
        clean_.push_back(clean_item);
        perturbed_.push_back(clean_item);
        if (clean_.size() > w_) {
            clean_.pop_front();
            perturbed_.pop_front();
        }
        const std::size_t s = clean_.size();

        std::vector<Feature> window(mode_ == ThreatModel::OncePerItem ? perturbed_.begin() : clean_.begin(),
                                    mode_ == ThreatModel::OncePerItem ? perturbed_.end() : clean_.end());
        const auto view = target_->at_step(j, s, label);

        StepOutcome out;
        out.f_before = view.performance(window);
        out.f_after = out.f_before;
        out.distances.assign(mode_ == ThreatModel::OncePerItem ? 1 : s, 0.0);
        out.window = window;

        const double budget = ledger_.budget_for_next_step();
        if (out.f_before > 0.0 && budget > 0.0 && !view.broken(window)) {
            std::vector<std::size_t> slots;
            if (mode_ == ThreatModel::OncePerItem) {
                slots.push_back(s - 1);
            } else {
                slots.resize(s);
                std::iota(slots.begin(), slots.end(), std::size_t{0});
            }
            const PgdOptions opt{cfg_.pgd_steps, cfg_.pgd_step_factor,
                                 mode_ == ThreatModel::OncePerItem ? Projection::JointL2 : Projection::SlotSum};
            for (std::size_t i = 1; i <= cfg_.alpha; ++i) {
                const double r = static_cast<double>(i) / static_cast<double>(cfg_.alpha) * budget;
                std::vector<Feature> cand = pgd_l2(view, window, slots, r, opt);
                if (!view.broken(cand)) continue;
                std::vector<double> dists(out.distances.size());
                for (std::size_t k = 0; k < slots.size(); ++k)
                    dists[k] = distance(metric_, cand[slots[k]], window[slots[k]]);
                // PGD ends on the sphere; allow rounding in the recomputed norm.
                if (std::accumulate(dists.begin(), dists.end(), 0.0) > budget + 1e-12) continue;
                out.radius = r;
                out.distances = std::move(dists);
                out.f_after = view.performance(cand);
                out.window = std::move(cand);
                if (mode_ == ThreatModel::OncePerItem) perturbed_.back() = out.window.back();
                break;
            }
        }
        ledger_.record_step(out.distances);
        return out;
    }

private:
    ThreatModel mode_;
    const AttackTarget* target_;
    std::size_t w_;
    Metric metric_;
    AttackConfig cfg_;
    BudgetLedger ledger_;
    std::deque<Feature> clean_;
    std::deque<Feature> perturbed_;
};

namespace detail {

inline AttackTrace run_attack(ThreatModel mode, const LabeledStream& stream, const AttackTarget& target,
                              std::size_t w, Metric metric, const AttackConfig& cfg) {
    StreamingAttacker attacker(mode, target, w, metric, cfg);
    AttackTrace trace;
    trace.mode = mode;
    trace.epsilon = cfg.epsilon;
    trace.w = w;
    trace.metric = metric;
    trace.seed = cfg.seed;
    trace.alpha = cfg.alpha;
    trace.pgd_steps = cfg.pgd_steps;
    trace.smoothed_target = target.is_smoothed();
    for (std::size_t j = 1; j <= stream.size(); ++j) {
        const int y = window_label(stream, j, w);
        StepOutcome o = attacker.step(stream.item(j), y);
        trace.labels.push_back(y);
        trace.f_before.push_back(o.f_before);
        trace.f_after.push_back(o.f_after);
        trace.radius.push_back(o.radius);
        if (mode == ThreatModel::OncePerItem)
            trace.items.push_back(o.window.back());
        else
            trace.windows.push_back(std::move(o.window));
        trace.distances.push_back(std::move(o.distances));
    }
    return trace;
}

}  // namespace detail

/// Greedy attack-once adversary: at step j only x_j may move, earlier items
/// stay as already perturbed. The per-step budget j * eps - spent is searched
/// on the grid (i / alpha) * budget, smallest successful radius first.
inline AttackTrace greedy_once_attack(const LabeledStream& stream, const AttackTarget& target, std::size_t w,
                                      const AttackConfig& cfg, Metric metric = Metric::L2) {
    return detail::run_attack(ThreatModel::OncePerItem, stream, target, w, metric, cfg);
}

/// Per-window adversary: every window is attacked afresh, all of its slots
/// jointly, with the budget tracked over w * j slots.
inline AttackTrace per_window_attack(const LabeledStream& stream, const AttackTarget& target, std::size_t w,
                                     const AttackConfig& cfg, Metric metric = Metric::L2) {
    return detail::run_attack(ThreatModel::PerWindow, stream, target, w, metric, cfg);
}

// ---------------------------------------------------------------------------
// Audit
// ---------------------------------------------------------------------------

struct BudgetAudit {
    bool compliant = false;          ///< final average <= eps + 1e-9
    bool prefix_compliant = false;   ///< every prefix average <= eps + 1e-9
    double average = 0.0;
    double worst_prefix_average = 0.0;
};

/// Recomputes every distance from the clean stream and the trace's raw
/// perturbed items; the trace's own ledger entries are not consulted.
inline BudgetAudit validate_trace_budget(const AttackTrace& trace, const LabeledStream& clean) {
    const std::size_t t = clean.size();
    if (trace.w < 1) throw validation_error("trace: window size must be at least 1");
    if (trace.mode == ThreatModel::OncePerItem) {
        if (trace.items.size() != t) throw validation_error("trace: perturbed item count differs from stream length");
    } else if (trace.windows.size() != t) {
        throw validation_error("trace: window count differs from stream length");
    }

    const double per_step = trace.mode == ThreatModel::OncePerItem ? 1.0 : static_cast<double>(trace.w);
    BudgetAudit audit;
    double spent = 0.0;
    for (std::size_t j = 1; j <= t; ++j) {
        if (trace.mode == ThreatModel::OncePerItem) {
            if (trace.items[j - 1].size() != clean.dim()) throw validation_error("trace: item dimension mismatch");
            spent += distance(trace.metric, trace.items[j - 1], clean.item(j));
        } else {
            const auto& win = trace.windows[j - 1];
            const std::size_t s = window_length(j, trace.w);
            if (win.size() != s)
                throw validation_error("trace: window " + std::to_string(j) + " has " + std::to_string(win.size()) +
                                       " items, expected " + std::to_string(s));
            for (std::size_t k = 0; k < s; ++k) {
                if (win[k].size() != clean.dim()) throw validation_error("trace: item dimension mismatch");
                spent += distance(trace.metric, win[k], clean.item(j - s + 1 + k));
            }
        }
        const double avg = spent / (per_step * static_cast<double>(j));
        audit.worst_prefix_average = std::max(audit.worst_prefix_average, avg);
        audit.average = avg;
    }
    audit.compliant = audit.average <= trace.epsilon + kBudgetSlack;
    audit.prefix_compliant = audit.worst_prefix_average <= trace.epsilon + kBudgetSlack;
    return audit;
}

/// Recomputes the attacker-side outcomes of a trace. Equal to trace.f_after
/// when the same target (model, spec, draws, seed) is supplied.
inline std::vector<double> replay_trace(const AttackTrace& trace, const AttackTarget& target) {
    std::vector<double> out;
    out.reserve(trace.steps());
    for (std::size_t j = 1; j <= trace.steps(); ++j) {
        const std::vector<Feature> win = trace.window(j);
        out.push_back(target.at_step(j, win.size(), trace.labels[j - 1]).performance(win));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------
//
// <prefix>.csv   perturbed items in the stream CSV format. OncePerItem: one row
//                per step. PerWindow: the items of W_1', W_2', ... back to back.
// <prefix>.json  mode, epsilon, w, metric, seed, alpha, pgd_steps, target,
//                window_sizes, labels, f_before, f_after, radius, distances.

inline void write_trace(const AttackTrace& trace, const std::string& prefix) {
    std::size_t dim = 0;
    if (!trace.items.empty()) dim = trace.items.front().size();
    else if (!trace.windows.empty()) dim = trace.windows.front().front().size();
    {
        std::ofstream csv(prefix + ".csv");
        if (!csv) throw std::runtime_error("write_trace: cannot open '" + prefix + ".csv'");
        write_csv_header(csv, dim);
        if (trace.mode == ThreatModel::OncePerItem) {
            for (std::size_t i = 0; i < trace.items.size(); ++i)
                write_csv_row(csv, trace.items[i], trace.labels.empty() ? 0 : trace.labels[i]);
        } else {
            for (std::size_t j = 0; j < trace.windows.size(); ++j)
                for (const auto& f : trace.windows[j]) write_csv_row(csv, f, trace.labels[j]);
        }
        if (!csv) throw std::runtime_error("write_trace: write failed for '" + prefix + ".csv'");
    }
    nlohmann::json meta;
    meta["format"] = "swcert-trace-1";
    meta["mode"] = to_string(trace.mode);
    meta["epsilon"] = trace.epsilon;
    meta["w"] = trace.w;
    meta["dim"] = dim;
    meta["metric"] = to_string(trace.metric);
    meta["seed"] = trace.seed;
    meta["alpha"] = trace.alpha;
    meta["pgd_steps"] = trace.pgd_steps;
    meta["target"] = trace.smoothed_target ? "smoothed" : "undefended";
    std::vector<std::size_t> sizes;
    for (const auto& win : trace.windows) sizes.push_back(win.size());
    meta["window_sizes"] = sizes;
    meta["labels"] = trace.labels;
    meta["f_before"] = trace.f_before;
    meta["f_after"] = trace.f_after;
    meta["radius"] = trace.radius;
    meta["distances"] = trace.distances;
    std::ofstream js(prefix + ".json");
    if (!js) throw std::runtime_error("write_trace: cannot open '" + prefix + ".json'");
    js << meta.dump(1) << '\n';
}

inline AttackTrace read_trace(const std::string& prefix) {
    std::ifstream js(prefix + ".json");
    if (!js) throw std::runtime_error("read_trace: cannot open '" + prefix + ".json'");
    nlohmann::json meta;
    try {
        js >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("read_trace: bad metadata: ") + e.what());
    }
    AttackTrace t;
    try {
        t.mode = parse_threat_model(meta.at("mode").get<std::string>());
        t.epsilon = meta.at("epsilon").get<double>();
        t.w = meta.at("w").get<std::size_t>();
        t.metric = meta.at("metric").get<std::string>() == "l1" ? Metric::L1 : Metric::L2;
        t.seed = meta.at("seed").get<std::uint64_t>();
        t.alpha = meta.at("alpha").get<std::size_t>();
        t.pgd_steps = meta.at("pgd_steps").get<std::size_t>();
        t.smoothed_target = meta.at("target").get<std::string>() == "smoothed";
        t.labels = meta.at("labels").get<std::vector<int>>();
        t.f_before = meta.at("f_before").get<std::vector<double>>();
        t.f_after = meta.at("f_after").get<std::vector<double>>();
        t.radius = meta.at("radius").get<std::vector<double>>();
        t.distances = meta.at("distances").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("read_trace: bad metadata: ") + e.what());
    }
    const std::size_t dim = meta.at("dim").get<std::size_t>();
    std::ifstream csv(prefix + ".csv");
    if (!csv) throw std::runtime_error("read_trace: cannot open '" + prefix + ".csv'");
    const LabeledStream rows = read_csv_stream(csv, dim);
    if (t.mode == ThreatModel::OncePerItem) {
        t.items = rows.items();
    } else {
        const auto sizes = meta.at("window_sizes").get<std::vector<std::size_t>>();
        std::size_t at = 0;
        for (std::size_t s : sizes) {
            if (at + s > rows.size()) throw validation_error("read_trace: window sizes exceed item rows");
            t.windows.emplace_back(rows.items().begin() + static_cast<std::ptrdiff_t>(at),
                                   rows.items().begin() + static_cast<std::ptrdiff_t>(at + s));
            at += s;
        }
        if (at != rows.size()) throw validation_error("read_trace: unused item rows");
    }
    return t;
}

}  // namespace swcert
