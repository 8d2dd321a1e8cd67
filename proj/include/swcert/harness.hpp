#pragma once

// Experiment orchestration: Monte Carlo estimates of smoothed performance,
// certificate curves, attack runs and result files.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "swcert/adversary.hpp"
#include "swcert/certificate.hpp"
#include "swcert/errors.hpp"
#include "swcert/model.hpp"
#include "swcert/rng.hpp"
#include "swcert/smoothing.hpp"
#include "swcert/stream.hpp"

namespace swcert {

// ---------------------------------------------------------------------------
// Parallel loop
// ---------------------------------------------------------------------------

/// Runs fn(0..n-1) on up to `threads` workers. Callers write results into
/// per-index slots so the outcome does not depend on scheduling. The first
/// exception thrown by any worker is rethrown.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::min(threads == 0 ? std::size_t{1} : threads, n);
    if (threads <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < n; k = next++) {
                try {
                    fn(k);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Smoothed evaluation
// ---------------------------------------------------------------------------

enum class NoiseReuse {
    PerItemOnce,     ///< one draw per stream item, shared by every window that contains it
    FreshPerWindow,  ///< independent draws per (window, slot)
};

inline const char* to_string(NoiseReuse r) { return r == NoiseReuse::PerItemOnce ? "per-item" : "per-window"; }

inline NoiseReuse parse_noise_reuse(const std::string& s) {
    if (s == "per-item" || s == "once") return NoiseReuse::PerItemOnce;
    if (s == "per-window" || s == "fresh") return NoiseReuse::FreshPerWindow;
    throw std::domain_error("unknown noise reuse policy '" + s + "'");
}

struct SmoothedEstimate {
    double z = 0.0;
    double stderr_ = 0.0;           ///< across-repetition standard error of z
    std::vector<double> per_step;   ///< estimates of f~_i
};

/// The clean windows of a stream, front-truncated to min(i, w) items.
inline std::vector<std::vector<Feature>> stream_windows(const LabeledStream& stream, std::size_t w) {
    std::vector<std::vector<Feature>> out;
    out.reserve(stream.size());
    for (std::size_t i = 1; i <= stream.size(); ++i) {
        const WindowView v = window_at(stream, i, w);
        out.emplace_back(v.items.begin(), v.items.end());
    }
    return out;
}

inline std::vector<int> stream_window_labels(const LabeledStream& stream, std::size_t w) {
    std::vector<int> out;
    out.reserve(stream.size());
    for (std::size_t i = 1; i <= stream.size(); ++i) out.push_back(window_label(stream, i, w));
    return out;
}

/// Monte Carlo Z~ over an arbitrary sequence of windows (clean or
/// adversarial). Window j must hold the items j - s + 1 .. j in that order;
/// under PerItemOnce the draw for item i is reused wherever item i appears,
/// including in differently perturbed copies of it.
inline SmoothedEstimate evaluate_smoothed_windows(const ModelParams& m, const std::vector<std::vector<Feature>>& windows,
                                                  std::span<const int> labels, const SmoothingSpec& spec,
                                                  std::size_t mc_reps, NoiseReuse policy, std::uint64_t seed,
                                                  std::size_t threads = 1,
                                                  const PerformanceFn& perf = PerformanceFn::zero_one()) {
    if (mc_reps < 1) throw std::domain_error("evaluate_smoothed: mc_reps must be at least 1");
    if (windows.size() != labels.size()) throw std::domain_error("evaluate_smoothed: one label per window required");
    if (windows.empty()) throw std::domain_error("evaluate_smoothed: empty stream");
    const std::size_t t = windows.size();
    for (std::size_t j = 1; j <= t; ++j)
        if (windows[j - 1].size() != window_length(j, m.window))
            throw std::domain_error("evaluate_smoothed: window " + std::to_string(j) + " has the wrong length");

    std::vector<std::vector<double>> f(mc_reps, std::vector<double>(t, 0.0));
    parallel_for(mc_reps, threads, [&](std::size_t r) {
        std::vector<Feature> item_noise;
        if (policy == NoiseReuse::PerItemOnce) {
            item_noise.assign(t, Feature(m.dim, 0.0));
            for (std::size_t i = 0; i < t; ++i) {
                Engine rng = substream(seed, StreamTag::SmoothingNoise, i + 1, r);
                draw_noise(spec, item_noise[i], rng);
            }
        }
        Feature slot_noise(m.dim, 0.0);
        for (std::size_t j = 1; j <= t; ++j) {
            std::vector<Feature> noisy = windows[j - 1];
            const std::size_t s = noisy.size();
            Engine rng = substream(seed, StreamTag::WindowNoise, j, r);
            for (std::size_t k = 0; k < s; ++k) {
                const Feature* noise = &slot_noise;
                if (policy == NoiseReuse::PerItemOnce)
                    noise = &item_noise[j - s + k];
                else
                    draw_noise(spec, slot_noise, rng);
                for (std::size_t c = 0; c < m.dim; ++c) noisy[k][c] += (*noise)[c];
            }
            f[r][j - 1] = perf(forward(m, noisy), labels[j - 1]);
        }
    });

    SmoothedEstimate est;
    est.per_step.assign(t, 0.0);
    std::vector<double> z_rep(mc_reps, 0.0);
    for (std::size_t r = 0; r < mc_reps; ++r) {
        for (std::size_t j = 0; j < t; ++j) {
            z_rep[r] += f[r][j];
            est.per_step[j] += f[r][j];
        }
        z_rep[r] /= static_cast<double>(t);
        est.z += z_rep[r];
    }
    for (double& v : est.per_step) v /= static_cast<double>(mc_reps);
    est.z /= static_cast<double>(mc_reps);
    if (mc_reps > 1) {
        double var = 0.0;
        for (double z : z_rep) var += (z - est.z) * (z - est.z);
        var /= static_cast<double>(mc_reps - 1);
        est.stderr_ = std::sqrt(var / static_cast<double>(mc_reps));
    }
    est.z = std::clamp(est.z, 0.0, 1.0);
    return est;
}

inline SmoothedEstimate evaluate_smoothed_stream(const LabeledStream& stream, const ModelParams& m, std::size_t w,
                                                 const SmoothingSpec& spec, std::size_t mc_reps, NoiseReuse policy,
                                                 std::uint64_t seed, std::size_t threads = 1) {
    if (m.window != w) throw std::domain_error("evaluate_smoothed_stream: model window size differs from w");
    const auto labels = stream_window_labels(stream, w);
    return evaluate_smoothed_windows(m, stream_windows(stream, w), labels, spec, mc_reps, policy, seed, threads);
}

/// Unsmoothed performance over a sequence of windows.
inline double windows_performance(const ModelParams& m, const std::vector<std::vector<Feature>>& windows,
                                  std::span<const int> labels) {
    double total = 0.0;
    for (std::size_t j = 0; j < windows.size(); ++j) total += zero_one_performance(m, windows[j], labels[j]);
    return windows.empty() ? 0.0 : total / static_cast<double>(windows.size());
}

inline std::vector<std::vector<Feature>> trace_windows(const AttackTrace& trace) {
    std::vector<std::vector<Feature>> out;
    out.reserve(trace.steps());
    for (std::size_t j = 1; j <= trace.steps(); ++j) out.push_back(trace.window(j));
    return out;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SmoothingConfig {
    std::string kind = "gaussian";  ///< gaussian | uniform
    double sigma = 1.0;             ///< gaussian std-dev
    double b = 1.0;                 ///< uniform box half-width

    SmoothingSpec build() const {
        if (kind == "gaussian") return SmoothingSpec::gaussian(sigma);
        if (kind == "uniform") return SmoothingSpec::uniform_box(b);
        throw std::domain_error("unknown smoothing kind '" + kind + "'");
    }
};

struct ExperimentConfig {
    // Stream: a CSV path, or the synthetic generator when empty.
    std::string stream_csv;
    std::size_t csv_dim = 0;  ///< 0 infers D from the f<k> header columns
    std::string label_column = "label";
    SyntheticConfig synthetic;

    std::size_t w = 2;
    SmoothingConfig smoothing;
    std::vector<double> eps_grid{0.0, 0.25, 0.5, 1.0};
    ThreatModel threat = ThreatModel::OncePerItem;
    AttackConfig attack;
    std::size_t mc_reps = 200;
    NoiseReuse reuse = NoiseReuse::PerItemOnce;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    // Model: loaded from model_path, otherwise trained on a training stream.
    std::string model_path;
    Architecture arch = Architecture::MLP1;
    TrainConfig train;
    double train_noise_sigma = 1.0;  ///< Gaussian augmentation during training

    bool write_traces = false;
    std::size_t threads = 0;  ///< 0 picks hardware concurrency; never affects results

    void validate() const {
        if (w < 1) throw std::domain_error("config: w must be at least 1");
        if (mc_reps < 1) throw std::domain_error("config: mc_reps must be at least 1");
        if (eps_grid.empty()) throw std::domain_error("config: eps grid is empty");
        for (std::size_t k = 0; k < eps_grid.size(); ++k) {
            if (!(eps_grid[k] >= 0.0)) throw std::domain_error("config: eps grid must be nonnegative");
            if (k > 0 && !(eps_grid[k] > eps_grid[k - 1]))
                throw std::domain_error("config: eps grid must be strictly ascending");
        }
        if (!(train_noise_sigma >= 0.0)) throw std::domain_error("config: train noise must be nonnegative");
        attack.validate();
        (void)smoothing.build();
    }

    std::size_t worker_count() const {
        if (threads > 0) return threads;
        return std::max<std::size_t>(1, std::thread::hardware_concurrency());
    }
};

/// Canonical JSON of every field that can change results (threads and the
/// output directory are excluded). Keys are emitted in sorted order.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["stream_csv"] = c.stream_csv;
    j["csv_dim"] = c.csv_dim;
    j["label_column"] = c.label_column;
    j["synthetic"] = {{"num_classes", c.synthetic.num_classes}, {"dim", c.synthetic.dim},
                      {"length", c.synthetic.length},           {"min_segment", c.synthetic.min_segment},
                      {"max_segment", c.synthetic.max_segment}, {"separation", c.synthetic.separation},
                      {"noise", c.synthetic.noise},             {"seed", c.synthetic.seed}};
    j["w"] = c.w;
    j["smoothing"] = {{"kind", c.smoothing.kind}, {"sigma", c.smoothing.sigma}, {"b", c.smoothing.b}};
    j["eps_grid"] = c.eps_grid;
    j["threat"] = to_string(c.threat);
    j["attack"] = {{"alpha", c.attack.alpha},
                   {"pgd_steps", c.attack.pgd_steps},
                   {"pgd_step_factor", c.attack.pgd_step_factor},
                   {"smoothing_draws", c.attack.smoothing_draws}};
    j["mc_reps"] = c.mc_reps;
    j["reuse"] = to_string(c.reuse);
    j["seed"] = c.seed;
    j["model_path"] = c.model_path;
    j["arch"] = to_string(c.arch);
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch", c.train.batch},
                  {"learning_rate", c.train.learning_rate},
                  {"momentum", c.train.momentum},
                  {"weight_decay", c.train.weight_decay},
                  {"hidden", c.train.hidden},
                  {"cosine_schedule", c.train.cosine_schedule}};
    j["train_noise_sigma"] = c.train_noise_sigma;
    return j;
}

/// Applies the fields present in `j` on top of `c`. Unknown keys are rejected.
inline void apply_config_json(ExperimentConfig& c, const nlohmann::json& j) {
    static const std::vector<std::string> known{
        "stream_csv", "csv_dim", "label_column", "synthetic", "w",          "smoothing",  "eps_grid",
        "threat",     "attack",  "mc_reps",      "reuse",     "seed",       "model_path", "arch",
        "train",      "train_noise_sigma",       "output_dir", "write_traces", "threads"};
    if (!j.is_object()) throw validation_error("config: top level must be an object");
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw validation_error("config: unknown key '" + key + "'");
    try {
        const auto get = [&](const nlohmann::json& obj, const char* key, auto& field) {
            if (obj.contains(key)) field = obj.at(key).get<std::decay_t<decltype(field)>>();
        };
        get(j, "stream_csv", c.stream_csv);
        get(j, "csv_dim", c.csv_dim);
        get(j, "label_column", c.label_column);
        if (j.contains("synthetic")) {
            const auto& s = j.at("synthetic");
            get(s, "num_classes", c.synthetic.num_classes);
            get(s, "dim", c.synthetic.dim);
            get(s, "length", c.synthetic.length);
            get(s, "min_segment", c.synthetic.min_segment);
            get(s, "max_segment", c.synthetic.max_segment);
            get(s, "separation", c.synthetic.separation);
            get(s, "noise", c.synthetic.noise);
            get(s, "seed", c.synthetic.seed);
        }
        get(j, "w", c.w);
        if (j.contains("smoothing")) {
            const auto& s = j.at("smoothing");
            get(s, "kind", c.smoothing.kind);
            get(s, "sigma", c.smoothing.sigma);
            get(s, "b", c.smoothing.b);
        }
        get(j, "eps_grid", c.eps_grid);
        if (j.contains("threat")) c.threat = parse_threat_model(j.at("threat").get<std::string>());
        if (j.contains("attack")) {
            const auto& a = j.at("attack");
            get(a, "alpha", c.attack.alpha);
            get(a, "pgd_steps", c.attack.pgd_steps);
            get(a, "pgd_step_factor", c.attack.pgd_step_factor);
            get(a, "smoothing_draws", c.attack.smoothing_draws);
        }
        get(j, "mc_reps", c.mc_reps);
        if (j.contains("reuse")) c.reuse = parse_noise_reuse(j.at("reuse").get<std::string>());
        get(j, "seed", c.seed);
        get(j, "model_path", c.model_path);
        if (j.contains("arch")) c.arch = parse_architecture(j.at("arch").get<std::string>());
        if (j.contains("train")) {
            const auto& t = j.at("train");
            get(t, "epochs", c.train.epochs);
            get(t, "batch", c.train.batch);
            get(t, "learning_rate", c.train.learning_rate);
            get(t, "momentum", c.train.momentum);
            get(t, "weight_decay", c.train.weight_decay);
            get(t, "hidden", c.train.hidden);
            get(t, "cosine_schedule", c.train.cosine_schedule);
        }
        get(j, "train_noise_sigma", c.train_noise_sigma);
        get(j, "output_dir", c.output_dir);
        get(j, "write_traces", c.write_traces);
        get(j, "threads", c.threads);
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("config: ") + e.what());
    }
}

inline ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("config '" + path + "': " + e.what());
    }
    apply_config_json(base, j);
    return base;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config_to_json(c).dump())));
    return buf;
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

/// Number of f<k> columns in a CSV header.
inline std::size_t infer_csv_dim(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::domain_error("load_csv_stream: empty file");
    std::size_t dim = 0;
    for (auto cell : detail::split_csv_line(line))
        if (cell == "f" + std::to_string(dim)) ++dim;
    if (dim == 0) throw parse_error("no feature columns f0, f1, ...", 1);
    return dim;
}

inline LabeledStream load_experiment_stream(const ExperimentConfig& c) {
    if (c.stream_csv.empty()) return generate_synthetic_stream(c.synthetic);
    const std::size_t dim = c.csv_dim > 0 ? c.csv_dim : infer_csv_dim(c.stream_csv);
    return load_csv_stream(c.stream_csv, dim, c.label_column);
}

/// Training data: for synthetic sources a second stream from the same
/// generator with a shifted seed; for CSV sources the evaluation stream itself.
inline LabeledStream load_training_stream(const ExperimentConfig& c) {
    if (!c.stream_csv.empty()) return load_experiment_stream(c);
    SyntheticConfig s = c.synthetic;
    s.seed = c.synthetic.seed + 0x9e3779b97f4a7c15ULL;
    return generate_synthetic_stream(s);
}

inline ModelParams prepare_model(const ExperimentConfig& c) {
    if (!c.model_path.empty()) {
        std::ifstream in(c.model_path);
        if (!in) throw std::runtime_error("cannot open model '" + c.model_path + "'");
        ModelParams m = load_model(in);
        if (m.window != c.w)
            throw std::domain_error("model window size " + std::to_string(m.window) + " differs from w=" +
                                    std::to_string(c.w));
        return m;
    }
    TrainConfig tc = c.train;
    tc.noise_sigma = c.train_noise_sigma;
    tc.seed = c.seed;
    return train_sgd(load_training_stream(c), c.w, c.arch, tc);
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct ResultRow {
    double eps = 0.0;
    double clean_z = 0.0;
    double z_tilde = 0.0;
    double z_tilde_stderr = 0.0;
    double certified_lower = 0.0;
    double attacked_z = std::numeric_limits<double>::quiet_NaN();        ///< undefended model
    double attacked_z_tilde = std::numeric_limits<double>::quiet_NaN();  ///< smoothed model
    double attacked_z_tilde_stderr = std::numeric_limits<double>::quiet_NaN();

    // Audit of the traces behind the attacked columns (not part of results.csv).
    double ledger_average_undefended = std::numeric_limits<double>::quiet_NaN();
    double ledger_average_smoothed = std::numeric_limits<double>::quiet_NaN();
    double worst_prefix_average = std::numeric_limits<double>::quiet_NaN();
    bool budget_compliant = true;

    bool attacked() const { return !std::isnan(attacked_z); }
};

struct RunResult {
    ThreatModel threat = ThreatModel::OncePerItem;
    std::size_t w = 1;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<ResultRow> rows;
    std::vector<AttackTrace> traces;  ///< undefended then smoothed trace per eps, in grid order

    bool budget_compliant() const {
        return std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.budget_compliant; });
    }
};

inline constexpr const char* kResultColumns =
    "eps,clean_z,z_tilde,z_tilde_stderr,certified_lower,attacked_z,attacked_z_tilde,attacked_z_tilde_stderr";
inline constexpr const char* kAuditColumns =
    "eps,ledger_average_undefended,ledger_average_smoothed,worst_prefix_average,compliant";

struct CleanEvaluation {
    double clean_z = 0.0;
    SmoothedEstimate smoothed;
};

inline CleanEvaluation evaluate_clean(const LabeledStream& stream, const ModelParams& m, const ExperimentConfig& c) {
    CleanEvaluation ev;
    ev.clean_z = stream_performance(m, stream);
    ev.smoothed = evaluate_smoothed_stream(stream, m, c.w, c.smoothing.build(), c.mc_reps, c.reuse, c.seed,
                                           c.worker_count());
    return ev;
}

inline RunResult run_certify_experiment(const ExperimentConfig& c, const LabeledStream& stream, const ModelParams& m,
                                        const CleanEvaluation& clean) {
    c.validate();
    const SmoothingSpec spec = c.smoothing.build();
    RunResult result;
    result.threat = c.threat;
    result.w = c.w;
    result.config_hash = config_hash(c);
    result.seed = c.seed;
    (void)stream;
    (void)m;
    for (double eps : c.eps_grid) {
        const CertificateReport rep =
            certified_lower_bound(clean.smoothed.z, clean.smoothed.stderr_, c.w, spec, eps, c.threat);
        ResultRow row;
        row.eps = eps;
        row.clean_z = clean.clean_z;
        row.z_tilde = clean.smoothed.z;
        row.z_tilde_stderr = clean.smoothed.stderr_;
        row.certified_lower = rep.certified_lower;
        result.rows.push_back(row);
    }
    return result;
}

inline RunResult run_certify_experiment(const ExperimentConfig& c, const LabeledStream& stream, const ModelParams& m) {
    return run_certify_experiment(c, stream, m, evaluate_clean(stream, m, c));
}

inline RunResult run_certify_experiment(const ExperimentConfig& c) {
    const LabeledStream stream = load_experiment_stream(c);
    const ModelParams m = prepare_model(c);
    return run_certify_experiment(c, stream, m);
}

/// Certificate rows plus, at every eps, the configured adversary run against
/// the undefended model and against the smoothed model. Every trace is
/// audited by independent recomputation.
inline RunResult run_attack_experiment(const ExperimentConfig& c, const LabeledStream& stream, const ModelParams& m,
                                       const CleanEvaluation& clean) {
    RunResult result = run_certify_experiment(c, stream, m, clean);
    const SmoothingSpec spec = c.smoothing.build();
    const auto labels = stream_window_labels(stream, c.w);
    const std::size_t n = c.eps_grid.size();
    const std::size_t workers = c.worker_count();
    const std::size_t outer = std::min(workers, n);
    const std::size_t inner = std::max<std::size_t>(1, workers / std::max<std::size_t>(1, outer));

    const AttackTarget undefended = AttackTarget::undefended(m);
    const AttackTarget smoothed = AttackTarget::smoothed(m, spec, c.attack.smoothing_draws, c.seed);
    result.traces.resize(2 * n);

    parallel_for(n, outer, [&](std::size_t k) {
        AttackConfig ac = c.attack;
        ac.epsilon = c.eps_grid[k];
        ac.seed = c.seed;
        ResultRow& row = result.rows[k];

        AttackTrace tu = detail::run_attack(c.threat, stream, undefended, c.w, spec.metric(), ac);
        AttackTrace ts = detail::run_attack(c.threat, stream, smoothed, c.w, spec.metric(), ac);
        const BudgetAudit au = validate_trace_budget(tu, stream);
        const BudgetAudit as = validate_trace_budget(ts, stream);

        row.attacked_z = windows_performance(m, trace_windows(tu), labels);
        const SmoothedEstimate est =
            evaluate_smoothed_windows(m, trace_windows(ts), labels, spec, c.mc_reps, c.reuse, c.seed, inner);
        row.attacked_z_tilde = est.z;
        row.attacked_z_tilde_stderr = est.stderr_;
        row.ledger_average_undefended = au.average;
        row.ledger_average_smoothed = as.average;
        row.worst_prefix_average = std::max(au.worst_prefix_average, as.worst_prefix_average);
        row.budget_compliant = au.compliant && au.prefix_compliant && as.compliant && as.prefix_compliant;
        result.traces[2 * k] = std::move(tu);
        result.traces[2 * k + 1] = std::move(ts);
    });
    return result;
}

inline RunResult run_attack_experiment(const ExperimentConfig& c, const LabeledStream& stream, const ModelParams& m) {
    return run_attack_experiment(c, stream, m, evaluate_clean(stream, m, c));
}

inline RunResult run_attack_experiment(const ExperimentConfig& c) {
    const LabeledStream stream = load_experiment_stream(c);
    const ModelParams m = prepare_model(c);
    return run_attack_experiment(c, stream, m);
}

// ---------------------------------------------------------------------------
// Result files
// ---------------------------------------------------------------------------

inline void write_results_csv(std::ostream& out, const RunResult& r) {
    out << kResultColumns << '\n';
    for (const auto& row : r.rows)
        out << detail::format_double(row.eps) << ',' << detail::format_double(row.clean_z) << ','
            << detail::format_double(row.z_tilde) << ',' << detail::format_double(row.z_tilde_stderr) << ','
            << detail::format_double(row.certified_lower) << ',' << detail::format_double(row.attacked_z) << ','
            << detail::format_double(row.attacked_z_tilde) << ','
            << detail::format_double(row.attacked_z_tilde_stderr) << '\n';
}

inline void write_audit_csv(std::ostream& out, const RunResult& r) {
    out << kAuditColumns << '\n';
    for (const auto& row : r.rows)
        out << detail::format_double(row.eps) << ',' << detail::format_double(row.ledger_average_undefended) << ','
            << detail::format_double(row.ledger_average_smoothed) << ','
            << detail::format_double(row.worst_prefix_average) << ',' << (row.budget_compliant ? 1 : 0) << '\n';
}

/// Parses a results CSV written by write_results_csv. "nan" cells are accepted.
inline std::vector<ResultRow> read_results_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::domain_error("results: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kResultColumns) throw parse_error("unexpected results header", 1);
    std::vector<ResultRow> rows;
    std::size_t row_no = 1;
    const auto cell = [&](std::string_view s) {
        if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
        return detail::parse_double(s, row_no);
    };
    while (std::getline(in, line)) {
        ++row_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 8)
            throw parse_error("expected 8 cells, found " + std::to_string(cells.size()), row_no);
        ResultRow r;
        r.eps = cell(cells[0]);
        r.clean_z = cell(cells[1]);
        r.z_tilde = cell(cells[2]);
        r.z_tilde_stderr = cell(cells[3]);
        r.certified_lower = cell(cells[4]);
        r.attacked_z = cell(cells[5]);
        r.attacked_z_tilde = cell(cells[6]);
        r.attacked_z_tilde_stderr = cell(cells[7]);
        rows.push_back(r);
    }
    return rows;
}

inline std::string results_csv_string(const RunResult& r) {
    std::ostringstream out;
    write_results_csv(out, r);
    return out.str();
}

struct EmittedFiles {
    std::filesystem::path results;
    std::filesystem::path audit;
    std::filesystem::path manifest;
    std::vector<std::filesystem::path> plot_data;
    std::vector<std::filesystem::path> traces;
};

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
    return out;
}

inline void check_written(std::ofstream& out, const std::filesystem::path& p) {
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + p.string() + "'");
}

}  // namespace detail

/// Writes <dir>/<stem>.csv, <stem>_audit.csv, one <stem>_<curve>.dat per
/// curve ("eps value" lines), <stem>_manifest.json and, when requested, the
/// attack traces.
inline EmittedFiles emit_results(const RunResult& r, const ExperimentConfig& c, const std::string& stem = "results",
                                 bool plot_data = true) {
    namespace fs = std::filesystem;
    const fs::path dir(c.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());

    EmittedFiles files;
    files.results = dir / (stem + ".csv");
    {
        auto out = detail::open_output(files.results);
        write_results_csv(out, r);
        detail::check_written(out, files.results);
    }
    const bool attacked = !r.rows.empty() && r.rows.front().attacked();
    if (attacked) {
        files.audit = dir / (stem + "_audit.csv");
        auto out = detail::open_output(files.audit);
        write_audit_csv(out, r);
        detail::check_written(out, files.audit);
    }
    if (plot_data) {
        struct Curve {
            const char* name;
            double ResultRow::* field;
        };
        std::vector<Curve> curves{{"z_tilde", &ResultRow::z_tilde}, {"certified_lower", &ResultRow::certified_lower}};
        if (attacked) {
            curves.push_back({"attacked_z", &ResultRow::attacked_z});
            curves.push_back({"attacked_z_tilde", &ResultRow::attacked_z_tilde});
        }
        for (const auto& curve : curves) {
            const fs::path p = dir / (stem + "_" + curve.name + ".dat");
            auto out = detail::open_output(p);
            out << "# eps " << curve.name << '\n';
            for (const auto& row : r.rows)
                out << detail::format_double(row.eps) << ' ' << detail::format_double(row.*curve.field) << '\n';
            detail::check_written(out, p);
            files.plot_data.push_back(p);
        }
    }
    if (c.write_traces) {
        for (std::size_t k = 0; k < r.traces.size(); ++k) {
            const auto& tr = r.traces[k];
            const fs::path prefix = dir / (stem + "_trace_" + std::to_string(k / 2) + "_" +
                                           (tr.smoothed_target ? "smoothed" : "undefended"));
            write_trace(tr, prefix.string());
            files.traces.push_back(prefix);
        }
    }
    nlohmann::json manifest;
    manifest["format"] = "swcert-run-1";
    manifest["config"] = config_to_json(c);
    manifest["config_hash"] = r.config_hash;
    manifest["seed"] = r.seed;
    manifest["threat"] = to_string(r.threat);
    manifest["w"] = r.w;
    manifest["mc_reps"] = c.mc_reps;
    manifest["results"] = files.results.filename().string();
    manifest["columns"] = kResultColumns;
    manifest["budget_compliant"] = r.budget_compliant();
    files.manifest = dir / (stem + "_manifest.json");
    auto out = detail::open_output(files.manifest);
    out << manifest.dump(2) << '\n';
    detail::check_written(out, files.manifest);
    return files;
}

}  // namespace swcert
