#pragma once
// Episode runner, per-run summaries, safety checks and cross-seed aggregation.

#include "scout/calibrator.hpp"
#include "scout/environment.hpp"
#include "scout/errors.hpp"
#include "scout/policies.hpp"
#include "scout/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace scout {

enum class DistributionKind { UniformBall, Radial };

struct ExperimentConfig {
    int d = 2;
    std::int64_t horizon = 1000;
    double alpha = 0.1;
    double delta = 0.05;
    Mode mode = Mode::Practical;
    DistributionKind distribution = DistributionKind::UniformBall;
    RadialProfile radial;                 // used when distribution == Radial
    std::optional<Vector> theta_star;     // unset: uniform on the sphere from the seed
    std::vector<std::uint64_t> seeds{1};
    std::optional<RefitSchedule> refit;   // unset: mode default
    std::optional<double> c_b;            // unset: mode default
    std::optional<double> slack_scale;    // unset: mode default
    std::optional<bool> projection;       // unset: mode default
    double kappa = 6.0;
    double eps_min = 1e-4;
    int curve_points = 200;
    bool track_pessimism = false;         // compare against the alpha_t-level oracle each round
    std::string out_dir = "out";

    double delta_prime() const { return delta / 7.0; }

    ScoutConfig scout_config() const {
        ScoutConfig s = mode == Mode::Rigorous ? ScoutConfig::rigorous(alpha, delta_prime())
                                               : ScoutConfig::practical(alpha, delta_prime());
        s.kappa = kappa;
        s.eps_min = eps_min;
        if (refit) s.refit = *refit;
        if (c_b) s.c_b = *c_b;
        if (slack_scale) s.slack_scale = *slack_scale;
        if (projection) s.projection = *projection;
        return s;
    }

    /// Copy with every mode-dependent default made explicit.
    ExperimentConfig resolved() const {
        ExperimentConfig r = *this;
        const ScoutConfig s = scout_config();
        r.refit = s.refit;
        r.c_b = s.c_b;
        r.slack_scale = s.slack_scale;
        r.projection = s.projection;
        return r;
    }

    ContextDistribution context_distribution() const {
        return distribution == DistributionKind::UniformBall ? ContextDistribution::uniform_ball(d)
                                                             : ContextDistribution::radial(d, radial);
    }

    void validate() const {
        if (d < 1) throw ValidationError("d", "must be >= 1");
        if (horizon < 2) throw ValidationError("T", "must be >= 2");
        if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha", "must be in (0, 0.5)");
        if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("delta", "must be in (0, 1)");
        if (seeds.empty()) throw ValidationError("seeds", "seed list is empty");
        if (!(kappa > 0.0)) throw ValidationError("kappa", "must be positive");
        if (!(eps_min > 0.0 && eps_min <= 1.0)) throw ValidationError("eps_min", "must be in (0, 1]");
        if (c_b && !(*c_b > 0.0 && *c_b <= 1.0)) throw ValidationError("c_b", "must be in (0, 1]");
        if (slack_scale && !(*slack_scale >= 0.0 && *slack_scale <= 1.0))
            throw ValidationError("slack_scale", "must be in [0, 1]");
        if (curve_points < 2) throw ValidationError("curve_points", "must be >= 2");
        if (theta_star && theta_star->size() != static_cast<std::size_t>(d))
            throw ValidationError("theta_star", "dimension does not match d");
        if (theta_star && !(norm2(*theta_star) > 0.0)) throw ValidationError("theta_star", "must be nonzero");
        if (distribution == DistributionKind::Radial) {
            try {
                (void)ContextDistribution::radial(d, radial);
            } catch (const DomainError& e) {
                throw ValidationError("radial", e.what());
            }
        }
        if (track_pessimism && distribution != DistributionKind::UniformBall)
            throw ValidationError("track_pessimism", "requires the uniform-ball distribution");
    }
};

// ---------------------------------------------------------------------------
// Records and summaries
// ---------------------------------------------------------------------------

struct RoundRecord {
    std::int64_t t = 0;
    int z = 0;
    int y = 0;
    int y_hat = 0;           // emitted prediction (equals y when tested)
    double score = 0.0;      // <x, theta> under the policy parameter
    double tau_t = std::numeric_limits<double>::infinity();  // threshold before per-context width
    double b_t = 0.0;        // radius in use (c_B * B_t)
    double lambda_min = 0.0;
    std::int64_t n_theta = 0;
    std::int64_t n_p = 0;
    std::int64_t cum_tests = 0;
    std::int64_t cum_errors = 0;
    // Same-stream baselines, kept in memory only.
    int oracle_z = 0;
    std::int64_t oracle_cum_tests = 0;
    std::int64_t oracle_cum_errors = 0;
    int pessimism_violation = 0;                 // alpha_t-oracle tested, SCOUT did not
    std::int64_t oracle_alpha_t_cum_errors = 0;  // alpha_t-level oracle
};

struct SafetyResult {
    bool satisfied = true;
    std::int64_t first_violation = 0;  // 0 when satisfied
    double max_prefix_rate = 0.0;
};

/// Checks (1/s) sum_{t<=s} 1{y_hat != y} <= alpha for every prefix s.
inline SafetyResult safety_check(std::span<const RoundRecord> records, double alpha) {
    SafetyResult r;
    std::int64_t errors = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        errors += records[i].y_hat != records[i].y ? 1 : 0;
        const double rate = static_cast<double>(errors) / static_cast<double>(i + 1);
        r.max_prefix_rate = std::max(r.max_prefix_rate, rate);
        if (rate > alpha && r.satisfied) {
            r.satisfied = false;
            r.first_violation = records[i].t;
        }
    }
    return r;
}

/// Distinct integer rounds, log-spaced on [1, T], always including 1 and T.
inline std::vector<std::int64_t> time_grid(std::int64_t horizon, int points) {
    std::vector<std::int64_t> g;
    const double log_t = std::log(static_cast<double>(horizon));
    for (int i = 0; i < points; ++i) {
        const double v = std::exp(log_t * i / (points - 1));
        g.push_back(std::clamp<std::int64_t>(std::llround(v), 1, horizon));
    }
    g.back() = horizon;
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

struct CurveSample {
    std::int64_t t = 0;
    std::int64_t cum_tests = 0;
    std::int64_t cum_errors = 0;
    std::int64_t oracle_cum_tests = 0;
    double excess_tests = 0.0;  // cum_tests - p* t
};

struct RunSummary {
    std::uint64_t seed = 0;
    std::int64_t horizon = 0;
    std::int64_t tests = 0;
    std::int64_t errors = 0;
    double p_star = 0.0;
    double tau_star = 0.0;
    double excess_tests = 0.0;
    double max_prefix_rate = 0.0;
    bool safety_satisfied = true;
    std::int64_t first_violation = 0;
    std::int64_t oracle_tests = 0;
    std::int64_t oracle_errors = 0;
    double oracle_max_prefix_rate = 0.0;
    std::int64_t pessimism_violations = -1;  // -1: not tracked
    bool dominates_alpha_t_oracle = true;    // prefix errors <= alpha_t-oracle prefix errors
    std::vector<CurveSample> curve;
};

/// Derives every summary field from the records.
inline RunSummary summarize(std::span<const RoundRecord> records, std::uint64_t seed, double alpha, double p_star,
                            double tau_star, int curve_points, bool pessimism_tracked) {
    RunSummary s;
    s.seed = seed;
    s.horizon = static_cast<std::int64_t>(records.size());
    s.p_star = p_star;
    s.tau_star = tau_star;
    if (records.empty()) return s;
    const auto safety = safety_check(records, alpha);
    s.safety_satisfied = safety.satisfied;
    s.first_violation = safety.first_violation;
    s.max_prefix_rate = safety.max_prefix_rate;

    std::int64_t tests = 0, errors = 0, o_tests = 0, o_errors = 0, pess = 0;
    double excess = 0.0;  // accumulated per round
    for (const auto& r : records) {
        tests += r.z;
        errors += r.y_hat != r.y ? 1 : 0;
        o_tests += r.oracle_z;
        excess += r.z - p_star;
        pess += r.pessimism_violation;
        o_errors = r.oracle_cum_errors;
        s.oracle_max_prefix_rate =
            std::max(s.oracle_max_prefix_rate, static_cast<double>(o_errors) / static_cast<double>(r.t));
        if (pessimism_tracked && r.cum_errors > r.oracle_alpha_t_cum_errors) s.dominates_alpha_t_oracle = false;
    }
    s.tests = tests;
    s.errors = errors;
    s.oracle_tests = o_tests;
    s.oracle_errors = o_errors;
    s.excess_tests = excess;
    s.pessimism_violations = pessimism_tracked ? pess : -1;

    for (std::int64_t t : time_grid(s.horizon, curve_points)) {
        const auto& r = records[static_cast<std::size_t>(t - 1)];
        s.curve.push_back({t, r.cum_tests, r.cum_errors, r.oracle_cum_tests,
                           static_cast<double>(r.cum_tests) - p_star * static_cast<double>(t)});
    }
    return s;
}

// ---------------------------------------------------------------------------
// Oracle resolution
// ---------------------------------------------------------------------------

struct OracleInfo {
    double tau_star = 0.0;
    double p_star = 0.0;
    double p_star_standard_error = 0.0;
    std::string source;  // "analytic" or "monte_carlo"
};

inline constexpr std::size_t kMonteCarloOracleSamples = 1'000'000;
inline constexpr std::uint64_t kOracleStreamSeed = 0x5C0'7ull;

inline OracleInfo resolve_oracle(const ExperimentConfig& cfg) {
    OracleInfo info;
    if (cfg.distribution == DistributionKind::UniformBall) {
        const auto o = oracle_tau_p_star(cfg.alpha, cfg.d);
        info.tau_star = o.tau_star;
        info.p_star = o.p_star;
        info.source = "analytic";
        return info;
    }
    // Radial densities are rotation invariant, so any unit theta* gives the same p*.
    RngStream rng(kOracleStreamSeed, 3);
    Vector e1(cfg.d, 0.0);
    e1[0] = 1.0;
    const GroundTruth gt(e1, cfg.context_distribution());
    const auto mc = monte_carlo_tau_p_star(gt, cfg.alpha, kMonteCarloOracleSamples, rng);
    info.tau_star = mc.tau_star;
    info.p_star = mc.p_star;
    info.p_star_standard_error = mc.p_star_standard_error;
    info.source = "monte_carlo";
    return info;
}

/// tau*(theta*, Unif(ball), alpha_t) for t = 1..T (index t-1).
inline std::vector<double> alpha_t_oracle_thresholds(const ExperimentConfig& cfg) {
    std::vector<double> out(static_cast<std::size_t>(cfg.horizon));
    const double slack = cfg.scout_config().mode == Mode::Rigorous ? 1.0 : cfg.scout_config().slack_scale;
    double last_alpha = -1.0, last_tau = 1.0;
    for (std::int64_t t = 1; t <= cfg.horizon; ++t) {
        const double a = std::max(0.0, cfg.alpha - slack * alpha_deflation(t, cfg.delta_prime()));
        if (a != last_alpha) {
            last_tau = uniform_tau_star(a, cfg.d, 1e-10);
            last_alpha = a;
        }
        out[static_cast<std::size_t>(t - 1)] = last_tau;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct EpisodeResult {
    std::vector<RoundRecord> records;
    RunSummary summary;
};

/// Stream ids under a run seed.
enum StreamId : std::uint64_t { kStreamInteraction = 1, kStreamTheta = 2 };

inline Vector resolve_theta_star(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.theta_star) return *cfg.theta_star;
    RngStream rng(seed, kStreamTheta);
    return random_unit_vector(cfg.d, rng);
}

/// Simulates one run. `oracle` and `alpha_t_thresholds` may be shared across
/// seeds; the latter is required when cfg.track_pessimism is set.
inline EpisodeResult run_episode(const ExperimentConfig& cfg, std::uint64_t seed, const OracleInfo& oracle,
                                 const std::vector<double>* alpha_t_thresholds = nullptr) {
    const GroundTruth gt(resolve_theta_star(cfg, seed), cfg.context_distribution());
    RngStream rng(seed, kStreamInteraction);
    ScoutAgent agent(static_cast<std::size_t>(cfg.d), cfg.scout_config());
    const bool pess = cfg.track_pessimism && alpha_t_thresholds != nullptr;

    EpisodeResult out;
    out.records.reserve(static_cast<std::size_t>(cfg.horizon));
    RoundRecord prev;
    for (std::int64_t t = 1; t <= cfg.horizon; ++t) {
        try {
            const Context x = gt.distribution.sample(rng);
            const int y = sample_label(x, gt, rng);
            const Decision dec = agent.decide(x);
            std::optional<int> observed;
            if (dec.z) observed.emplace(y);

            RoundRecord r;
            r.t = t;
            r.z = dec.z ? 1 : 0;
            r.y = y;
            r.y_hat = dec.final_prediction(observed);
            r.score = dec.score;
            const auto& bundle = agent.bundle();
            r.tau_t = (t <= 2 || bundle.tau.always_test) ? std::numeric_limits<double>::infinity() : bundle.tau.value;
            r.b_t = agent.config().c_b * agent.radius();
            r.lambda_min = agent.lambda_min();
            r.n_theta = static_cast<std::int64_t>(agent.n_theta());
            r.n_p = static_cast<std::int64_t>(agent.n_p());
            r.cum_tests = prev.cum_tests + r.z;
            r.cum_errors = prev.cum_errors + (r.y_hat != y ? 1 : 0);

            const Decision od = oracle_decide(x, gt.theta_star, oracle.tau_star);
            r.oracle_z = od.z ? 1 : 0;
            r.oracle_cum_tests = prev.oracle_cum_tests + r.oracle_z;
            r.oracle_cum_errors = prev.oracle_cum_errors + (od.final_prediction(y) != y ? 1 : 0);
            if (pess) {
                const double tau_t_star = (*alpha_t_thresholds)[static_cast<std::size_t>(t - 1)];
                const Decision ot = oracle_decide(x, gt.theta_star, tau_t_star);
                r.pessimism_violation = (ot.z && !dec.z) ? 1 : 0;
                r.oracle_alpha_t_cum_errors = prev.oracle_alpha_t_cum_errors + (ot.final_prediction(y) != y ? 1 : 0);
            }
            agent.update(x, dec, observed);
            out.records.push_back(r);
            prev = r;
        } catch (const RoundError&) {
            throw;
        } catch (const std::exception& e) {
            throw RoundError(t, e.what());
        }
    }
    out.summary = summarize(out.records, seed, cfg.alpha, oracle.p_star, oracle.tau_star, cfg.curve_points, pess);
    return out;
}

inline unsigned worker_count(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SCOUT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = static_cast<unsigned>(v);
    }
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/// Runs every seed of `cfg`, in parallel, and hands each finished episode to
/// `sink` in seed-list order. Returns the summaries in the same order.
template <typename Sink>
std::vector<RunSummary> run_seeds(const ExperimentConfig& cfg, const OracleInfo& oracle, Sink&& sink) {
    const std::size_t n = cfg.seeds.size();
    std::vector<double> thresholds;
    if (cfg.track_pessimism) thresholds = alpha_t_oracle_thresholds(cfg);
    const std::vector<double>* thr = cfg.track_pessimism ? &thresholds : nullptr;

    std::vector<std::optional<EpisodeResult>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t emitted = 0;
    std::vector<RunSummary> summaries(n);

    // Emits finished episodes in order, dropping their records once consumed.
    auto drain = [&]() {
        while (emitted < n && (slots[emitted] || errors[emitted])) {
            if (errors[emitted]) std::rethrow_exception(errors[emitted]);
            sink(*slots[emitted]);
            summaries[emitted] = std::move(slots[emitted]->summary);
            slots[emitted].reset();
            ++emitted;
        }
    };

    std::exception_ptr sink_error;
    auto worker = [&]() {
        for (std::size_t i = next++; i < n; i = next++) {
            std::optional<EpisodeResult> res;
            std::exception_ptr err;
            try {
                res = run_episode(cfg, cfg.seeds[i], oracle, thr);
            } catch (...) {
                err = std::current_exception();
            }
            std::lock_guard lock(mu);
            slots[i] = std::move(res);
            errors[i] = err;
            if (!sink_error) {
                try {
                    drain();
                } catch (...) {
                    sink_error = std::current_exception();
                }
            }
        }
    };

    const unsigned workers = worker_count(n);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (sink_error) std::rethrow_exception(sink_error);
    return summaries;
}

inline std::vector<RunSummary> run_seeds(const ExperimentConfig& cfg, const OracleInfo& oracle) {
    return run_seeds(cfg, oracle, [](const EpisodeResult&) {});
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Linear-interpolation quantile of already sorted values.
inline double sorted_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Least-squares slope of log(y) against log(t) over points with y > 0.
inline double log_log_slope(std::span<const std::int64_t> t, std::span<const double> y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(y[i] > 0.0)) continue;
        const double lx = std::log(static_cast<double>(t[i])), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double denom = n * sxx - sx * sx;
    return denom == 0.0 ? std::numeric_limits<double>::quiet_NaN() : (n * sxy - sx * sy) / denom;
}

struct AggregateReport {
    std::vector<std::int64_t> grid;
    std::vector<double> test_rate_q10, test_rate_q50, test_rate_q90;
    std::vector<double> error_rate_q10, error_rate_q50, error_rate_q90;
    std::vector<double> oracle_test_rate_q50;
    std::vector<double> mean_excess;
    double mean_final_excess = 0.0;
    double mean_final_test_rate = 0.0;
    std::size_t runs = 0;
    std::size_t safety_violations = 0;
    double violation_fraction = 0.0;
    double slope = std::numeric_limits<double>::quiet_NaN();
    std::int64_t slope_from = 0;
    std::int64_t slope_to = 0;
};

/// Per-grid quantiles (10/50/90) across runs, mean excess tests and the
/// log-log slope of mean excess over t in [T/10, T]. Values are sorted before
/// reduction so the result does not depend on run order.
inline AggregateReport aggregate(std::span<const RunSummary> runs) {
    AggregateReport rep;
    rep.runs = runs.size();
    if (runs.empty()) return rep;
    const std::size_t points = runs.front().curve.size();
    for (const auto& r : runs)
        if (r.curve.size() != points) throw DomainError("aggregate: runs have different curve grids");

    std::vector<double> tr(runs.size()), er(runs.size()), ot(runs.size()), ex(runs.size());
    for (std::size_t k = 0; k < points; ++k) {
        const std::int64_t t = runs.front().curve[k].t;
        const double tt = static_cast<double>(t);
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto& c = runs[i].curve[k];
            tr[i] = static_cast<double>(c.cum_tests) / tt;
            er[i] = static_cast<double>(c.cum_errors) / tt;
            ot[i] = static_cast<double>(c.oracle_cum_tests) / tt;
            ex[i] = c.excess_tests;
        }
        for (auto* v : {&tr, &er, &ot, &ex}) std::sort(v->begin(), v->end());
        rep.grid.push_back(t);
        rep.test_rate_q10.push_back(sorted_quantile(tr, 0.1));
        rep.test_rate_q50.push_back(sorted_quantile(tr, 0.5));
        rep.test_rate_q90.push_back(sorted_quantile(tr, 0.9));
        rep.error_rate_q10.push_back(sorted_quantile(er, 0.1));
        rep.error_rate_q50.push_back(sorted_quantile(er, 0.5));
        rep.error_rate_q90.push_back(sorted_quantile(er, 0.9));
        rep.oracle_test_rate_q50.push_back(sorted_quantile(ot, 0.5));
        double sum = 0.0;
        for (double v : ex) sum += v;
        rep.mean_excess.push_back(sum / static_cast<double>(runs.size()));
    }
    rep.mean_final_excess = rep.mean_excess.back();
    {
        std::vector<double> rates;
        for (const auto& r : runs) rates.push_back(static_cast<double>(r.tests) / static_cast<double>(r.horizon));
        std::sort(rates.begin(), rates.end());
        double sum = 0.0;
        for (double v : rates) sum += v;
        rep.mean_final_test_rate = sum / static_cast<double>(rates.size());
    }
    for (const auto& r : runs) rep.safety_violations += r.safety_satisfied ? 0 : 1;
    rep.violation_fraction = static_cast<double>(rep.safety_violations) / static_cast<double>(runs.size());

    const std::int64_t horizon = rep.grid.back();
    rep.slope_from = std::max<std::int64_t>(1, horizon / 10);
    rep.slope_to = horizon;
    std::vector<std::int64_t> ts;
    std::vector<double> ys;
    for (std::size_t k = 0; k < points; ++k)
        if (rep.grid[k] >= rep.slope_from) {
            ts.push_back(rep.grid[k]);
            ys.push_back(rep.mean_excess[k]);
        }
    rep.slope = log_log_slope(ts, ys);
    return rep;
}

}  // namespace scout
