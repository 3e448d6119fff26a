#include "scout/harness.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace scout;

namespace {

ExperimentConfig small_config(std::int64_t horizon = 1000, int d = 2, double alpha = 0.1) {
    ExperimentConfig cfg;
    cfg.d = d;
    cfg.horizon = horizon;
    cfg.alpha = alpha;
    cfg.delta = 0.05;
    cfg.curve_points = 50;
    return cfg;
}

RoundRecord rec(std::int64_t t, int y, int y_hat) {
    RoundRecord r;
    r.t = t;
    r.y = y;
    r.y_hat = y_hat;
    return r;
}

// Synthetic run whose excess tests follow c * sqrt(t) exactly on the grid.
RunSummary synthetic_run(double c, std::int64_t horizon, int points, double p_star) {
    RunSummary s;
    s.horizon = horizon;
    s.p_star = p_star;
    for (std::int64_t t : time_grid(horizon, points)) {
        CurveSample cs;
        cs.t = t;
        cs.excess_tests = c * std::sqrt(static_cast<double>(t));
        cs.cum_tests = static_cast<std::int64_t>(std::llround(p_star * t + cs.excess_tests));
        s.curve.push_back(cs);
    }
    s.tests = s.curve.back().cum_tests;
    s.excess_tests = s.curve.back().excess_tests;
    return s;
}

}  // namespace

TEST(Validate, RejectsOutOfRange) {
    auto cfg = small_config();
    EXPECT_NO_THROW(cfg.validate());
    cfg.alpha = 0.5;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = small_config();
    cfg.horizon = 1;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = small_config();
    cfg.delta = 1.0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = small_config();
    cfg.seeds.clear();
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = small_config();
    cfg.theta_star = Vector{1.0, 0.0, 0.0};
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = small_config();
    EXPECT_DOUBLE_EQ(cfg.delta_prime(), 0.05 / 7.0);
}

TEST(Oracle, LargeBudgetNeverTests) {
    // With alpha above the worst-case error the oracle predicts everywhere.
    const auto o = oracle_tau_p_star(0.5, 2);
    EXPECT_EQ(o.tau_star, 0.0);
    EXPECT_EQ(o.p_star, 0.0);
    const Vector theta{1.0, 0.0};
    EXPECT_FALSE(oracle_decide(Vector{-0.01, 0.5}, theta, o.tau_star).z);
    EXPECT_FALSE(oracle_decide(Vector{0.3, 0.1}, theta, o.tau_star).z);
}

TEST(RunEpisode, TwoRoundsAreForcedTests) {
    auto cfg = small_config(2);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto res = run_episode(cfg, seed, resolve_oracle(cfg));
        ASSERT_EQ(res.records.size(), 2u);
        for (const auto& r : res.records) {
            EXPECT_EQ(r.z, 1);
            EXPECT_EQ(r.y_hat, r.y);
        }
        EXPECT_EQ(res.summary.errors, 0);
        EXPECT_TRUE(res.summary.safety_satisfied);
    }
}

TEST(RunEpisode, SummaryRederivedFromRecords) {
    auto cfg = small_config(1000);
    const auto oracle = resolve_oracle(cfg);
    const auto res = run_episode(cfg, 7, oracle);
    const auto& recs = res.records;
    ASSERT_EQ(recs.size(), 1000u);

    // Independent pass over the records.
    std::int64_t tests = 0, errors = 0, first_violation = 0, otests = 0, even_tests = 0;
    double max_rate = 0.0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        ASSERT_EQ(r.t, static_cast<std::int64_t>(i + 1));
        if (r.z) {
            ASSERT_EQ(r.y_hat, r.y);
        }
        tests += r.z;
        errors += r.y != r.y_hat;
        otests += r.oracle_z;
        ASSERT_EQ(r.cum_tests, tests);
        ASSERT_EQ(r.cum_errors, errors);
        ASSERT_EQ(r.oracle_cum_tests, otests);
        // Counts in use when the round was decided: every odd round feeds the
        // context sample, tested even rounds feed the estimator.
        ASSERT_EQ(r.n_p, r.t / 2);
        ASSERT_EQ(r.n_theta, even_tests);
        if (r.t % 2 == 0) even_tests += r.z;
        const double rate = static_cast<double>(errors) / static_cast<double>(i + 1);
        max_rate = std::max(max_rate, rate);
        if (rate > cfg.alpha && first_violation == 0) first_violation = r.t;
    }
    const auto& s = res.summary;
    EXPECT_EQ(s.seed, 7u);
    EXPECT_EQ(s.horizon, 1000);
    EXPECT_EQ(s.tests, tests);
    EXPECT_EQ(s.errors, errors);
    EXPECT_EQ(s.oracle_tests, otests);
    EXPECT_EQ(s.max_prefix_rate, max_rate);
    EXPECT_EQ(s.first_violation, first_violation);
    EXPECT_EQ(s.safety_satisfied, first_violation == 0);
    EXPECT_EQ(s.p_star, oracle.p_star);
    EXPECT_EQ(s.tau_star, oracle.tau_star);
    EXPECT_NEAR(s.excess_tests, static_cast<double>(tests) - oracle.p_star * 1000.0, 1e-9);
    for (const auto& c : s.curve) {
        const auto& r = recs[static_cast<std::size_t>(c.t - 1)];
        EXPECT_EQ(c.cum_tests, r.cum_tests);
        EXPECT_EQ(c.cum_errors, r.cum_errors);
        EXPECT_NEAR(c.excess_tests, r.cum_tests - oracle.p_star * c.t, 1e-9);
    }
    EXPECT_EQ(s.curve.back().t, 1000);
}

TEST(RunEpisode, DeterministicReplay) {
    auto cfg = small_config(600, 3);
    const auto oracle = resolve_oracle(cfg);
    const auto a = run_episode(cfg, 11, oracle);
    const auto b = run_episode(cfg, 11, oracle);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        ASSERT_EQ(a.records[i].z, b.records[i].z);
        ASSERT_EQ(a.records[i].y, b.records[i].y);
        ASSERT_EQ(a.records[i].score, b.records[i].score);
    }
    const auto c = run_episode(cfg, 12, oracle);
    bool differs = false;
    for (std::size_t i = 0; i < a.records.size(); ++i) differs |= a.records[i].y != c.records[i].y;
    EXPECT_TRUE(differs);
}

TEST(SafetyCheck, Examples) {
    std::vector<RoundRecord> ok{rec(1, 1, 1), rec(2, 0, 0), rec(3, 1, 1)};
    auto r = safety_check(ok, 0.1);
    EXPECT_TRUE(r.satisfied);
    EXPECT_EQ(r.first_violation, 0);
    EXPECT_EQ(r.max_prefix_rate, 0.0);

    std::vector<RoundRecord> bad{rec(1, 1, 0), rec(2, 0, 0)};
    r = safety_check(bad, 0.9);
    EXPECT_FALSE(r.satisfied);
    EXPECT_EQ(r.first_violation, 1);
    EXPECT_EQ(r.max_prefix_rate, 1.0);

    // Error at round 5 of 5: prefix rate 0.2.
    std::vector<RoundRecord> late{rec(1, 0, 0), rec(2, 0, 0), rec(3, 0, 0), rec(4, 0, 0), rec(5, 1, 0)};
    EXPECT_TRUE(safety_check(late, 0.2).satisfied);
    r = safety_check(late, 0.19);
    EXPECT_FALSE(r.satisfied);
    EXPECT_EQ(r.first_violation, 5);
}

TEST(SafetyCheck, MatchesBruteForceOnRandomTraces) {
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(u(gen) * 200);
        const double err_p = u(gen) * 0.3;
        const double alpha = 0.02 + u(gen) * 0.3;
        std::vector<RoundRecord> recs;
        for (int t = 1; t <= n; ++t) {
            const int y = u(gen) < 0.5;
            recs.push_back(rec(t, y, u(gen) < err_p ? 1 - y : y));
        }
        std::int64_t first = 0;
        for (int s = 1; s <= n && first == 0; ++s) {
            int e = 0;
            for (int t = 0; t < s; ++t) e += recs[t].y != recs[t].y_hat;
            if (static_cast<double>(e) / s > alpha) first = s;
        }
        const auto r = safety_check(recs, alpha);
        ASSERT_EQ(r.satisfied, first == 0) << trial;
        ASSERT_EQ(r.first_violation, first) << trial;
    }
}

TEST(TimeGrid, LogSpacedAndDistinct) {
    const auto g = time_grid(20000, 200);
    EXPECT_EQ(g.front(), 1);
    EXPECT_EQ(g.back(), 20000);
    EXPECT_LE(g.size(), 200u);
    EXPECT_GT(g.size(), 150u);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i - 1], g[i]);
    const auto small = time_grid(2, 200);
    EXPECT_EQ(small, (std::vector<std::int64_t>{1, 2}));
}

TEST(Aggregate, SingleRunQuantilesEqualCurve) {
    auto cfg = small_config(500);
    const auto oracle = resolve_oracle(cfg);
    const auto res = run_episode(cfg, 3, oracle);
    const std::vector<RunSummary> runs{res.summary};
    const auto rep = aggregate(runs);
    ASSERT_EQ(rep.grid.size(), res.summary.curve.size());
    for (std::size_t k = 0; k < rep.grid.size(); ++k) {
        const double rate = static_cast<double>(res.summary.curve[k].cum_tests) / rep.grid[k];
        EXPECT_EQ(rep.test_rate_q10[k], rate);
        EXPECT_EQ(rep.test_rate_q50[k], rate);
        EXPECT_EQ(rep.test_rate_q90[k], rate);
        EXPECT_EQ(rep.mean_excess[k], res.summary.curve[k].excess_tests);
    }
    EXPECT_EQ(rep.runs, 1u);
}

TEST(Aggregate, IdenticalSeedsHaveNoSpread) {
    auto cfg = small_config(400);
    cfg.seeds = {5, 5, 5};
    const auto runs = run_seeds(cfg, resolve_oracle(cfg));
    const auto rep = aggregate(runs);
    for (std::size_t k = 0; k < rep.grid.size(); ++k) EXPECT_EQ(rep.test_rate_q10[k], rep.test_rate_q90[k]);
}

TEST(Aggregate, SqrtCurvesGiveHalfSlope) {
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    std::vector<RunSummary> runs;
    for (int i = 0; i < 50; ++i) runs.push_back(synthetic_run(u(gen), 20000, 200, 0.7));
    const auto rep = aggregate(runs);
    EXPECT_NEAR(rep.slope, 0.5, 0.02);
    EXPECT_EQ(rep.slope_from, 2000);
    EXPECT_EQ(rep.slope_to, 20000);
}

TEST(Aggregate, LogLogSlopeKnownExponents) {
    std::vector<std::int64_t> t;
    std::vector<double> y;
    for (std::int64_t v = 10; v <= 10000; v *= 2) {
        t.push_back(v);
        y.push_back(4.0 * std::pow(static_cast<double>(v), 0.8));
    }
    EXPECT_NEAR(log_log_slope(t, y), 0.8, 1e-12);
    std::vector<double> flat(t.size(), 0.0);
    EXPECT_TRUE(std::isnan(log_log_slope(t, flat)));
}

TEST(Aggregate, PermutationInvariant) {
    auto cfg = small_config(800);
    cfg.seeds = {1, 2, 3, 4, 5, 6, 7};
    auto runs = run_seeds(cfg, resolve_oracle(cfg));
    const auto base = aggregate(runs);
    std::mt19937_64 gen(5);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(runs.begin(), runs.end(), gen);
        const auto rep = aggregate(runs);
        EXPECT_EQ(rep.test_rate_q10, base.test_rate_q10);
        EXPECT_EQ(rep.test_rate_q50, base.test_rate_q50);
        EXPECT_EQ(rep.test_rate_q90, base.test_rate_q90);
        EXPECT_EQ(rep.mean_excess, base.mean_excess);
        EXPECT_EQ(rep.mean_final_test_rate, base.mean_final_test_rate);
        EXPECT_EQ(rep.safety_violations, base.safety_violations);
        EXPECT_EQ(rep.slope, base.slope);
    }
}

TEST(Aggregate, RejectsMismatchedGrids) {
    std::vector<RunSummary> runs{synthetic_run(1.0, 1000, 50, 0.5), synthetic_run(1.0, 2000, 50, 0.5)};
    EXPECT_THROW(aggregate(runs), DomainError);
}

TEST(RunSeeds, OrderAndThreadCountIndependence) {
    auto cfg = small_config(500);
    cfg.seeds = {9, 3, 7, 1};
    const auto oracle = resolve_oracle(cfg);
    std::vector<std::uint64_t> seen;
    const auto runs = run_seeds(cfg, oracle, [&](const EpisodeResult& e) { seen.push_back(e.summary.seed); });
    EXPECT_EQ(seen, cfg.seeds);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        EXPECT_EQ(runs[i].seed, cfg.seeds[i]);
        const auto single = run_episode(cfg, cfg.seeds[i], oracle);
        EXPECT_EQ(runs[i].tests, single.summary.tests);
        EXPECT_EQ(runs[i].errors, single.summary.errors);
    }
}

TEST(RunSeeds, SinkErrorPropagates) {
    auto cfg = small_config(50);
    cfg.seeds = {1, 2};
    EXPECT_THROW(run_seeds(cfg, resolve_oracle(cfg), [](const EpisodeResult&) { throw std::runtime_error("x"); }),
                 std::runtime_error);
}

TEST(RoundErrorType, CarriesRound) {
    const RoundError e(17, "bad");
    EXPECT_EQ(e.round, 17);
    EXPECT_STREQ(e.what(), "round 17: bad");
}

TEST(ResolveOracle, UniformIsAnalytic) {
    const auto cfg = small_config(100, 2, 0.1);
    const auto o = resolve_oracle(cfg);
    EXPECT_EQ(o.source, "analytic");
    EXPECT_NEAR(o.tau_star, 0.5746559413516166, 1e-9);
    EXPECT_NEAR(o.p_star, 0.6891277187531843, 1e-9);
}

TEST(ResolveOracle, FlatRadialMatchesUniform) {
    // A constant radial profile is the uniform ball, so the Monte-Carlo route
    // should land on the analytic values.
    auto cfg = small_config(100, 2, 0.1);
    cfg.distribution = DistributionKind::Radial;
    cfg.radial = {{0.0, 0.5, 1.0}, {1.0, 1.0}};
    const auto o = resolve_oracle(cfg);
    EXPECT_EQ(o.source, "monte_carlo");
    EXPECT_GT(o.p_star_standard_error, 0.0);
    EXPECT_NEAR(o.p_star, 0.6891277187531843, 0.005);
    EXPECT_NEAR(o.tau_star, 0.5746559413516166, 0.01);
}

TEST(PessimismTracking, ThresholdsNonincreasing) {
    auto cfg = small_config(3000);
    cfg.track_pessimism = true;
    const auto thr = alpha_t_oracle_thresholds(cfg);
    ASSERT_EQ(thr.size(), 3000u);
    for (std::size_t i = 1; i < thr.size(); ++i) EXPECT_LE(thr[i], thr[i - 1]);
    EXPECT_GE(thr.back(), 0.5746559413516166);
    const auto res = run_episode(cfg, 4, resolve_oracle(cfg), &thr);
    EXPECT_GE(res.summary.pessimism_violations, 0);
}
