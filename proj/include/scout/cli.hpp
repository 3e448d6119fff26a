#pragma once
// Command layer behind the `scout` executable. Every command writes to the
// given streams and returns a process exit code:
//   0 success, 1 validation error, 2 runtime error, 3 diagnostic failure.

#include "scout/config.hpp"
#include "scout/diagnostics.hpp"
#include "scout/harness.hpp"
#include "scout/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace scout::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2, kDiagnosticFailure = 3 };

struct RunOutcome {
    OracleInfo oracle;
    std::vector<RunSummary> runs;
    AggregateReport report;
};

inline std::string seed_csv_name(std::uint64_t seed) { return "seed_" + std::to_string(seed) + ".csv"; }

/// Runs every seed of a validated config and writes its files into cfg.out_dir.
inline RunOutcome execute_run(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

    RunOutcome res;
    res.oracle = resolve_oracle(cfg);
    res.runs = run_seeds(cfg, res.oracle, [&](const EpisodeResult& ep) {
        std::ostringstream csv;
        write_records_csv(csv, cfg, ep.summary.seed, ep.records);
        write_text_file(dir / seed_csv_name(ep.summary.seed), csv.str());
    });
    res.report = aggregate(res.runs);
    write_text_file(dir / "aggregate.json", aggregate_json(cfg, res.oracle, res.runs, res.report).dump(2) + "\n");
    write_text_file(dir / "config.txt", emit_config(cfg));
    return res;
}

inline void print_outcome(std::ostream& out, const ExperimentConfig& cfg, const RunOutcome& r) {
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "d=%d alpha=%g T=%lld runs=%zu p_star=%.6f mean_test_rate=%.6f mean_excess=%.1f slope=%.3f "
                  "safety_violations=%zu",
                  cfg.d, cfg.alpha, static_cast<long long>(cfg.horizon), r.report.runs, r.oracle.p_star,
                  r.report.mean_final_test_rate, r.report.mean_final_excess, r.report.slope,
                  r.report.safety_violations);
    out << buf << "\n";
}

inline int cmd_run(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    const auto res = execute_run(cfg);
    print_outcome(out, cfg, res);
    out << "wrote " << cfg.out_dir << "\n";
    return kOk;
}

struct SweepCell {
    int d = 2;
    double alpha = 0.1;
};

inline std::string cell_name(const SweepCell& c) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "d%d_alpha%g", c.d, c.alpha);
    return buf;
}

/// One aggregate report per cell, each in its own subdirectory of cfg.out_dir.
inline int cmd_sweep(const ExperimentConfig& base, const std::vector<SweepCell>& cells, std::ostream& out) {
    if (cells.empty()) throw ValidationError("cells", "sweep has no cells");
    std::vector<ExperimentConfig> cfgs;
    for (const auto& c : cells) {
        ExperimentConfig cfg = base;
        cfg.d = c.d;
        cfg.alpha = c.alpha;
        cfg.out_dir = (std::filesystem::path(base.out_dir) / cell_name(c)).string();
        cfg.validate();
        cfgs.push_back(std::move(cfg));
    }
    nlohmann::ordered_json index;
    index["format_version"] = kFormatVersion;
    index["cells"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto res = execute_run(cfgs[i]);
        print_outcome(out, cfgs[i], res);
        index["cells"].push_back({{"d", cells[i].d},
                                  {"alpha", cells[i].alpha},
                                  {"dir", cell_name(cells[i])},
                                  {"p_star", res.oracle.p_star},
                                  {"mean_test_rate", res.report.mean_final_test_rate},
                                  {"safety_violations", res.report.safety_violations}});
    }
    std::filesystem::create_directories(base.out_dir);
    write_text_file(std::filesystem::path(base.out_dir) / "sweep.json", index.dump(2) + "\n");
    out << "wrote " << base.out_dir << "\n";
    return kOk;
}

inline int cmd_oracle(double alpha, int d, std::size_t mc_samples, std::uint64_t seed, std::ostream& out) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha", "must be in (0, 0.5)");
    if (d < 1) throw ValidationError("d", "must be >= 1");
    if (mc_samples == 0) throw ValidationError("mc_samples", "must be positive");
    const auto o = oracle_tau_p_star(alpha, d);
    const double m = 1.0 / unit_ball_volume(d);
    char buf[128];
    auto line = [&](const char* key, double v) {
        std::snprintf(buf, sizeof buf, "%-22s %.9g\n", key, v);
        out << buf;
    };
    out << "d                      " << d << "\n";
    line("alpha", alpha);
    line("tau_star", o.tau_star);
    line("p_star", o.p_star);
    line("p_star_quadrature", o.p_star_quadrature);
    line("p_err_at_zero", o.p_err_at_zero);
    line("density_min", m);
    if (o.p_star > 0.0) line("lambda0_lower_bound", lambda0_lower_bound(o.tau_star, d, m, o.p_star));
    else out << "lambda0_lower_bound    n/a (empty slab)\n";

    Vector e1(d, 0.0);
    e1[0] = 1.0;
    RngStream rng(seed, 3);
    const auto mc = monte_carlo_tau_p_star(GroundTruth(e1, ContextDistribution::uniform_ball(d)), alpha, mc_samples, rng);
    out << "mc_samples             " << mc_samples << "\n";
    line("mc_tau_star", mc.tau_star);
    line("mc_p_star", mc.p_star);
    line("delta_tau", mc.tau_star - o.tau_star);
    line("delta_p", mc.p_star - o.p_star);
    return kOk;
}

inline int cmd_diagnostics(std::size_t samples, std::ostream& out) {
    const auto checks = run_diagnostics(samples);
    bool ok = true;
    char buf[256];
    for (const auto& c : checks) {
        std::snprintf(buf, sizeof buf, "%s %-34s value=%.9g reference=%.9g tol=%g%s\n", c.passed ? "PASS" : "FAIL",
                      c.name.c_str(), c.value, c.reference, c.tolerance, c.relative ? " (relative)" : "");
        out << buf;
        ok = ok && c.passed;
    }
    return ok ? kOk : kDiagnosticFailure;
}

inline int cmd_validate_config(const ExperimentConfig& cfg, std::ostream& out) {
    cfg.validate();
    out << emit_config(cfg);
    return kOk;
}

namespace detail {

/// Parses "d:alpha".
inline SweepCell parse_cell(const std::string& s) {
    const auto pos = s.find(':');
    if (pos == std::string::npos) throw ValidationError("cell", "expected d:alpha, got '" + s + "'");
    SweepCell c;
    c.d = scout::detail::parse_int<int>("cell", scout::detail::trim(std::string_view(s).substr(0, pos)));
    c.alpha = scout::detail::parse_double("cell", scout::detail::trim(std::string_view(s).substr(pos + 1)));
    return c;
}

}  // namespace detail

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"SCOUT safe sequential testing: simulations and oracles", "scout"};
    app.require_subcommand(1);

    // Experiment flags, recorded in order and layered over the config file.
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    auto add_experiment_flags = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Config file (key = value lines)");
        auto setting = [&](const char* flag, const char* key, const char* help) {
            sub->add_option_function<std::string>(
                flag, [&overrides, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
        };
        setting("--seed", "seed", "Single run seed");
        setting("--seeds", "seeds", "Seed range A..B or list a,b,c");
        setting("--alpha", "alpha", "Target misclassification rate");
        setting("--delta", "delta", "Failure probability");
        setting("--dim", "d", "Context dimension");
        setting("--horizon", "T", "Number of rounds");
        setting("--mode", "mode", "rigorous or practical");
        setting("--out", "out", "Output directory");
        setting("--cb", "c_b", "Scale on the confidence radius");
    };

    auto* run = app.add_subcommand("run", "Simulate every seed and write CSV traces plus an aggregate JSON");
    add_experiment_flags(run);

    auto* sweep = app.add_subcommand("sweep", "Run a grid of (d, alpha) cells");
    add_experiment_flags(sweep);
    std::string alphas, dims;
    std::vector<std::string> cells;
    sweep->add_option("--alphas", alphas, "Comma-separated alpha values");
    sweep->add_option("--dims", dims, "Comma-separated dimensions");
    sweep->add_option("--cell", cells, "Explicit cell d:alpha (repeatable)");

    auto* oracle = app.add_subcommand("oracle", "Print tau*, p* and the lambda0 bound for the uniform ball");
    double oracle_alpha = 0.1;
    int oracle_d = 2;
    std::size_t mc_samples = kMonteCarloOracleSamples;
    std::uint64_t oracle_seed = kOracleStreamSeed;
    oracle->add_option("--alpha", oracle_alpha, "Target misclassification rate")->required();
    oracle->add_option("--dim", oracle_d, "Context dimension");
    oracle->add_option("--mc-samples", mc_samples, "Monte-Carlo cross-check sample size");
    oracle->add_option("--seed", oracle_seed, "Monte-Carlo seed");

    auto* diag = app.add_subcommand("diagnostics", "Run the numeric validation checks");
    std::size_t diag_samples = 1'000'000;
    diag->add_option("--samples", diag_samples, "Monte-Carlo samples per check");

    auto* validate = app.add_subcommand("validate-config", "Resolve and print a config");
    add_experiment_flags(validate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidation;
    }

    try {
        auto build_config = [&]() {
            ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : read_config_file(config_path);
            for (const auto& [k, v] : overrides) apply_setting(cfg, k, v);
            cfg.validate();
            return cfg;
        };
        if (*run) return cmd_run(build_config(), out);
        if (*validate) return cmd_validate_config(build_config(), out);
        if (*sweep) {
            const ExperimentConfig cfg = build_config();
            std::vector<SweepCell> grid;
            for (const auto& c : cells) grid.push_back(detail::parse_cell(c));
            if (!alphas.empty() || !dims.empty() || grid.empty()) {
                const auto as = alphas.empty() ? std::vector<double>{0.05, 0.1} : scout::detail::parse_list("alphas", alphas);
                std::vector<int> ds{2, 8};
                if (!dims.empty()) {
                    ds.clear();
                    for (auto part : scout::detail::split(dims, ','))
                        ds.push_back(scout::detail::parse_int<int>("dims", part));
                }
                for (int d : ds)
                    for (double a : as) grid.push_back({d, a});
            }
            return cmd_sweep(cfg, grid, out);
        }
        if (*oracle) return cmd_oracle(oracle_alpha, oracle_d, mc_samples, oracle_seed, out);
        if (*diag) return cmd_diagnostics(diag_samples, out);
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const ConfigParseError& e) {
        err << "config error: " << e.what() << "\n";
        return kValidation;
    } catch (const ConfigFileError& e) {
        err << "config error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kValidation;
}

}  // namespace scout::cli
