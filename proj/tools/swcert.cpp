// swcert command line: gen, train, certify, attack, simulate, verify.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "swcert/swcert.hpp"

namespace {

using namespace swcert;

// Flag values that override the config file when given.
struct Overrides {
    std::string config;
    std::optional<std::string> stream_csv, smoothing, threat, reuse, out, model, arch;
    std::optional<std::size_t> w, mc_reps, alpha, pgd_steps, threads, length, dim, epochs;
    std::optional<int> classes;
    std::optional<double> sigma, b, train_sigma;
    std::optional<std::uint64_t> seed, data_seed;
    std::vector<double> eps;
    bool write_traces = false;
};

void add_experiment_options(CLI::App& sub, Overrides& o) {
    sub.add_option("--config", o.config, "JSON config file; flags override its fields")->check(CLI::ExistingFile);
    sub.add_option("--stream", o.stream_csv, "input stream CSV (default: synthetic generator)");
    sub.add_option("--w", o.w, "window size")->check(CLI::PositiveNumber);
    sub.add_option("--smoothing", o.smoothing, "gaussian | uniform")->check(CLI::IsMember({"gaussian", "uniform"}));
    sub.add_option("--sigma", o.sigma, "gaussian noise std-dev");
    sub.add_option("--b", o.b, "uniform box width");
    sub.add_option("--eps", o.eps, "eps grid, ascending")->delimiter(',');
    sub.add_option("--threat", o.threat, "once | per-window | both")
        ->check(CLI::IsMember({"once", "per-window", "both"}));
    sub.add_option("--mc-reps", o.mc_reps, "Monte Carlo repetitions for the smoothed estimate");
    sub.add_option("--reuse", o.reuse, "noise reuse: per-item | per-window")
        ->check(CLI::IsMember({"per-item", "per-window", "once", "fresh"}));
    sub.add_option("--seed", o.seed, "master seed");
    sub.add_option("--out", o.out, "output directory");
    sub.add_option("--model", o.model, "load the model from this file instead of training");
    sub.add_option("--arch", o.arch, "linear | mlp1")->check(CLI::IsMember({"linear", "mlp1"}));
    sub.add_option("--epochs", o.epochs, "training epochs");
    sub.add_option("--train-sigma", o.train_sigma, "gaussian augmentation during training");
    sub.add_option("--alpha", o.alpha, "radius grid resolution of the attack");
    sub.add_option("--pgd-steps", o.pgd_steps, "PGD iterations per candidate radius");
    sub.add_option("--threads", o.threads, "worker threads (0 = all cores)");
    sub.add_option("--length", o.length, "synthetic stream length");
    sub.add_option("--dim", o.dim, "synthetic feature dimension");
    sub.add_option("--classes", o.classes, "synthetic class count");
    sub.add_option("--data-seed", o.data_seed, "synthetic generator seed");
    sub.add_flag("--write-traces", o.write_traces, "write attack traces");
}

template <class T>
void set_if(const std::optional<T>& v, T& field) {
    if (v) field = *v;
}

// Builds the config and the list of threat models to run ("both" expands).
ExperimentConfig build_config(const Overrides& o, std::vector<ThreatModel>* threats = nullptr) {
    ExperimentConfig c;
    if (!o.config.empty()) c = load_config_file(o.config);
    set_if(o.stream_csv, c.stream_csv);
    set_if(o.w, c.w);
    set_if(o.smoothing, c.smoothing.kind);
    set_if(o.sigma, c.smoothing.sigma);
    set_if(o.b, c.smoothing.b);
    if (!o.eps.empty()) c.eps_grid = o.eps;
    set_if(o.mc_reps, c.mc_reps);
    if (o.reuse) c.reuse = parse_noise_reuse(*o.reuse);
    set_if(o.seed, c.seed);
    set_if(o.out, c.output_dir);
    set_if(o.model, c.model_path);
    if (o.arch) c.arch = parse_architecture(*o.arch);
    set_if(o.epochs, c.train.epochs);
    set_if(o.train_sigma, c.train_noise_sigma);
    set_if(o.alpha, c.attack.alpha);
    set_if(o.pgd_steps, c.attack.pgd_steps);
    set_if(o.threads, c.threads);
    set_if(o.length, c.synthetic.length);
    set_if(o.dim, c.synthetic.dim);
    set_if(o.classes, c.synthetic.num_classes);
    set_if(o.data_seed, c.synthetic.seed);
    if (o.write_traces) c.write_traces = true;
    if (threats) {
        threats->clear();
        if (o.threat && *o.threat == "both") {
            *threats = {ThreatModel::OncePerItem, ThreatModel::PerWindow};
        } else {
            if (o.threat) c.threat = parse_threat_model(*o.threat);
            threats->push_back(c.threat);
        }
    } else if (o.threat) {
        c.threat = parse_threat_model(*o.threat);
    }
    c.validate();
    return c;
}

void print_rows(const RunResult& r) {
    std::printf("threat=%s w=%zu config=%s\n", to_string(r.threat), r.w, r.config_hash.c_str());
    std::printf("%8s %8s %8s %9s %10s %10s %10s\n", "eps", "clean_z", "z_tilde", "certified", "attacked_z",
                "attacked~", "compliant");
    for (const auto& row : r.rows)
        std::printf("%8.4f %8.4f %8.4f %9.4f %10.4f %10.4f %10s\n", row.eps, row.clean_z, row.z_tilde,
                    row.certified_lower, row.attacked_z, row.attacked_z_tilde, row.budget_compliant ? "yes" : "NO");
}

std::string stem_for(const std::vector<ThreatModel>& threats, ThreatModel t) {
    return threats.size() > 1 ? std::string("results_") + to_string(t) : "results";
}

// Runs certify (attack = false) or certify + attack for every threat model.
int run_experiments(const Overrides& o, bool attack) {
    std::vector<ThreatModel> threats;
    ExperimentConfig c = build_config(o, &threats);
    const LabeledStream stream = load_experiment_stream(c);
    const ModelParams m = prepare_model(c);
    if (m.dim != stream.dim()) throw validation_error("model dimension differs from the stream");
    const CleanEvaluation clean = evaluate_clean(stream, m, c);
    bool compliant = true;
    for (ThreatModel t : threats) {
        c.threat = t;
        const RunResult r =
            attack ? run_attack_experiment(c, stream, m, clean) : run_certify_experiment(c, stream, m, clean);
        const EmittedFiles files = emit_results(r, c, stem_for(threats, t));
        print_rows(r);
        std::printf("wrote %s\n", files.results.string().c_str());
        compliant = compliant && r.budget_compliant();
    }
    if (!compliant) {
        std::fprintf(stderr, "error: an attack trace exceeded its budget\n");
        return 1;
    }
    return 0;
}

int cmd_gen(const Overrides& o, const std::string& output) {
    const ExperimentConfig c = build_config(o);
    const LabeledStream s = generate_synthetic_stream(c.synthetic);
    emit_csv_stream(s, output);
    std::printf("wrote %zu items (D=%zu, %d classes) to %s\n", s.size(), s.dim(), s.num_classes(), output.c_str());
    return 0;
}

int cmd_train(const Overrides& o, std::string output) {
    ExperimentConfig c = build_config(o);
    c.model_path.clear();
    const LabeledStream train = load_training_stream(c);
    TrainConfig tc = c.train;
    tc.noise_sigma = c.train_noise_sigma;
    tc.seed = c.seed;
    const TrainResult r = train_sgd_with_history(train, c.w, c.arch, tc);
    if (output.empty()) {
        std::filesystem::create_directories(c.output_dir);
        output = (std::filesystem::path(c.output_dir) / "model.txt").string();
    }
    std::ofstream out(output);
    if (!out) throw std::runtime_error("cannot write '" + output + "'");
    save_model(out, r.model);
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + output + "'");
    std::printf("loss %.6f -> %.6f, clean Z on the evaluation stream %.4f\n", r.initial_loss, r.final_loss,
                stream_performance(r.model, load_experiment_stream(c)));
    std::printf("wrote %s\n", output.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

nlohmann::json dump_case(const oracle::RandomCase& rc, const oracle::LemmaReport& rep) {
    nlohmann::json j;
    j["m"] = rc.instance.m;
    j["w"] = rc.instance.w;
    j["kernel"] = rc.instance.kernel;
    j["dist"] = rc.instance.dist;
    j["perf"] = rc.instance.perf;
    j["clean"] = rc.clean;
    j["mode"] = to_string(rc.adversary.mode);
    j["adversary_stream"] = rc.adversary.stream;
    j["adversary_windows"] = rc.adversary.windows;
    j["overall_lhs"] = rep.overall_lhs;
    j["overall_rhs"] = rep.overall_rhs;
    j["realized_epsilon"] = rep.realized_epsilon;
    return j;
}

int cmd_verify(std::size_t cases, std::uint64_t seed, const std::string& out_dir) {
    nlohmann::json failures = nlohmann::json::array();
    int failed_checks = 0;
    const auto report = [&](const char* name, std::size_t bad, std::size_t total) {
        std::printf("%s %-34s %zu/%zu\n", bad == 0 ? "PASS" : "FAIL", name, total - bad, total);
        if (bad) ++failed_checks;
    };

    // Averaged TV bound on random discrete instances, both threat models.
    for (ThreatModel mode : {ThreatModel::OncePerItem, ThreatModel::PerWindow}) {
        Engine rng = substream(seed, StreamTag::Oracle, mode == ThreatModel::OncePerItem ? 0 : 1);
        std::size_t bad = 0;
        for (std::size_t k = 0; k < cases; ++k) {
            const auto rc = oracle::random_case(rng, mode);
            const auto rep =
                oracle::verify_lemma_bounds(rc.instance, rc.clean, rc.adversary, oracle::tightest_discrete_psi(rc.instance));
            if (!rep.holds()) {
                ++bad;
                failures.push_back(dump_case(rc, rep));
            }
        }
        report(mode == ThreatModel::OncePerItem ? "tv-bound once" : "tv-bound per-window", bad, cases);
    }

    // Closed-form gaussian psi against quadrature.
    {
        std::size_t bad = 0, total = 0;
        for (double sigma : {0.5, 1.0, 2.0})
            for (int k = 0; k <= 24; ++k, ++total) {
                const double d = 6.0 * sigma * k / 24.0;
                const double a = psi(SmoothingSpec::gaussian(sigma), d), b = oracle::gaussian_tv_1d(d, sigma);
                if (std::abs(a - b) > 1e-3) {
                    ++bad;
                    failures.push_back({{"check", "gaussian-psi"}, {"sigma", sigma}, {"d", d}, {"psi", a}, {"tv", b}});
                }
            }
        report("gaussian psi vs quadrature", bad, total);
    }

    // Analytic input gradients against central differences.
    {
        Engine rng = substream(seed, StreamTag::Oracle, 2);
        std::normal_distribution<double> n(0.0, 1.0);
        std::size_t bad = 0, total = 0;
        for (auto arch : {Architecture::Linear, Architecture::MLP1})
            for (std::size_t k = 0; k < cases; ++k, ++total) {
                const std::size_t dim = 1 + k % 4, w = 1 + k % 3;
                const int classes = 2 + static_cast<int>(k % 3);
                const auto m = random_model(arch, dim, w, classes, 6, seed + k);
                std::vector<Feature> win(1 + k % w, Feature(dim));
                for (auto& f : win)
                    for (double& v : f) v = n(rng);
                const double err = oracle::finite_diff_check(m, win, static_cast<int>(k % classes));
                if (!(err <= 1e-4)) {
                    ++bad;
                    failures.push_back({{"check", "gradient"}, {"arch", to_string(arch)}, {"case", k}, {"error", err}});
                }
            }
        report("input gradients vs differences", bad, total);
    }

    // Exact enumeration against Monte Carlo.
    {
        Engine rng = substream(seed, StreamTag::Oracle, 3);
        const std::size_t total = std::min<std::size_t>(cases, 20);
        std::size_t bad = 0;
        for (std::size_t k = 0; k < total; ++k) {
            const auto rc = oracle::random_case(rng, ThreatModel::OncePerItem);
            const auto exact = oracle::exact_smoothed_stream_perf(rc.instance, rc.clean);
            const auto mc = oracle::monte_carlo_smoothed_stream_perf(rc.instance, rc.clean, 20000, seed + k);
            // 4 standard errors keeps the false-alarm rate negligible over many cases.
            if (std::abs(exact.z - mc.z) > 4.0 * mc.stderr_ + 1e-12) {
                ++bad;
                failures.push_back({{"check", "exact-vs-mc"}, {"case", k}, {"exact", exact.z}, {"mc", mc.z},
                                    {"stderr", mc.stderr_}});
            }
        }
        report("exact enumeration vs monte carlo", bad, total);
    }

    if (!failures.empty()) {
        std::filesystem::create_directories(out_dir);
        const auto path = std::filesystem::path(out_dir) / "verify_counterexamples.json";
        std::ofstream out(path);
        out << failures.dump(2) << '\n';
        std::printf("counterexamples written to %s\n", path.string().c_str());
    }
    return failed_checks == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"swcert: certificates and attacks for sliding-window stream predictors"};
    app.require_subcommand(1);

    Overrides o;
    std::string gen_output = "stream.csv", model_output;
    std::size_t verify_cases = 200;
    std::uint64_t verify_seed = 0;
    std::string verify_out = "out";

    auto* gen = app.add_subcommand("gen", "write a synthetic stream CSV");
    add_experiment_options(*gen, o);
    gen->add_option("-o,--output", gen_output, "output CSV path");

    auto* train = app.add_subcommand("train", "train a model and save it");
    add_experiment_options(*train, o);
    train->add_option("-o,--output", model_output, "model file (default <out>/model.txt)");

    auto* certify = app.add_subcommand("certify", "estimate the smoothed performance and certify it");
    add_experiment_options(*certify, o);
    auto* attack = app.add_subcommand("attack", "certify, then attack the undefended and smoothed models");
    add_experiment_options(*attack, o);
    auto* simulate = app.add_subcommand("simulate", "train, certify and attack end to end");
    add_experiment_options(*simulate, o);

    auto* verify = app.add_subcommand("verify", "run the brute-force oracle suite");
    verify->add_option("--cases", verify_cases, "random cases per check")->check(CLI::PositiveNumber);
    verify->add_option("--seed", verify_seed, "seed for the random cases");
    verify->add_option("--out", verify_out, "directory for counterexample dumps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_gen(o, gen_output);
        if (*train) return cmd_train(o, model_output);
        if (*certify) return run_experiments(o, false);
        if (*attack) return run_experiments(o, true);
        if (*simulate) {
            if (!o.model) {
                Overrides t = o;
                t.threat.reset();
                const ExperimentConfig c = build_config(t);
                std::filesystem::create_directories(c.output_dir);
                const std::string path = (std::filesystem::path(c.output_dir) / "model.txt").string();
                if (const int rc = cmd_train(t, path); rc != 0) return rc;
                o.model = path;
            }
            return run_experiments(o, true);
        }
        if (*verify) return cmd_verify(verify_cases, verify_seed, verify_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
