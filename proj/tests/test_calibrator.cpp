#include "scout/calibrator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace scout;

namespace {

// Contexts (s_i, 0) with theta = e1 give exactly the scores s_i.
EmpiricalDistribution scores_fixture(std::initializer_list<double> scores) {
    EmpiricalDistribution dist(2);
    for (double s : scores) dist.append(std::vector<double>{s, 0.0});
    return dist;
}

const std::vector<double> kE1{1.0, 0.0};

EmpiricalDistribution random_dist(std::size_t d, std::size_t n, RngStream& rng) {
    const auto ball = ContextDistribution::uniform_ball(static_cast<int>(d));
    EmpiricalDistribution dist(d);
    for (std::size_t i = 0; i < n; ++i) dist.append(ball.sample(rng));
    return dist;
}

Vector random_theta(std::size_t d, RngStream& rng, double max_norm = 1.0) {
    Vector v = random_unit_vector(static_cast<int>(d), rng);
    const double r = max_norm * rng.uniform();
    for (auto& x : v) x *= r;
    return v;
}

// Continuous minimizer by brute force: tau* is 0 or one of the scores, so
// evaluate p_err directly at every candidate and keep the smallest feasible.
double brute_force_tau_star(std::span<const double> theta, const EmpiricalDistribution& dist, double alpha) {
    double best = INFINITY;
    if (p_err_empirical(theta, dist, 0.0) <= alpha) return 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const double s = std::abs(dot(dist.context(i), theta));
        if (s < best && p_err_empirical(theta, dist, s) <= alpha) best = s;
    }
    return best;
}

}  // namespace

// --- empirical distribution ------------------------------------------------------

TEST(EmpiricalDistribution, AppendOnlyAndBounded) {
    EmpiricalDistribution d(2);
    EXPECT_TRUE(d.empty());
    d.append(std::vector<double>{0.6, 0.8});
    d.append(std::vector<double>{0.0, -0.1});
    EXPECT_EQ(d.size(), 2u);
    EXPECT_EQ(d.context(1)[1], -0.1);
    EXPECT_THROW(d.append(std::vector<double>{0.9, 0.9}), DomainError);
    EXPECT_THROW(d.append(std::vector<double>{0.1}), DomainError);
    EXPECT_EQ(d.size(), 2u);
}

// --- p_err ----------------------------------------------------------------------

TEST(PErr, Examples) {
    RngStream rng(1);
    const auto dist = random_dist(3, 200, rng);
    EXPECT_EQ(p_err_empirical(std::vector<double>{0.6, 0.0, 0.8}, dist, 1.0), 0.0);
    EXPECT_EQ(p_err_empirical(kE1, scores_fixture({0.0}), 0.0), 0.0);
    const auto fx = scores_fixture({0.2, 0.5, 0.9});
    EXPECT_NEAR(p_err_empirical(kE1, fx, 0.4), 0.22219705539104714, 1e-12);
    EXPECT_NEAR(p_err_empirical(kE1, fx, 0.1), 0.37225238962022117, 1e-12);
    EXPECT_NEAR(p_err_empirical(kE1, fx, 0.4), (0.37754 + 0.28905) / 3.0, 1e-5);
}

TEST(PErr, StrictInequalityAtTies) {
    const auto fx = scores_fixture({0.5});
    EXPECT_EQ(p_err_empirical(kE1, fx, 0.5), 0.0);
    EXPECT_GT(p_err_empirical(kE1, fx, std::nextafter(0.5, 0.0)), 0.0);
    EXPECT_EQ(SortedScores(kE1, fx).p_err(0.5), 0.0);
}

TEST(PErr, EmptyDistributionSignals) {
    EmpiricalDistribution empty(2);
    EXPECT_THROW(p_err_empirical(kE1, empty, 0.0), EmptyDistribution);
    EXPECT_THROW(SortedScores(kE1, empty), EmptyDistribution);
    EXPECT_THROW(tau_star_quantized(kE1, empty, 0.1, 0.01), EmptyDistribution);
}

TEST(PErr, MonotoneBoundedAndSuffixSumsAgree) {
    RngStream rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 1 + trial % 5;
        const auto dist = random_dist(d, 1 + trial % 40, rng);
        const auto theta = random_theta(d, rng, 3.0);
        double t1 = 1.2 * rng.uniform(), t2 = 1.2 * rng.uniform();
        if (t1 > t2) std::swap(t1, t2);
        const double p1 = p_err_empirical(theta, dist, t1), p2 = p_err_empirical(theta, dist, t2);
        EXPECT_GE(p1, p2);
        EXPECT_GE(p2, 0.0);
        EXPECT_LE(p1, 0.5);
        const SortedScores ss(theta, dist);
        EXPECT_NEAR(ss.p_err(t1), p1, 1e-14);
        EXPECT_NEAR(ss.p_err(t2), p2, 1e-14);
    }
}

// --- quantized tau* -------------------------------------------------------------

TEST(TauStarQuantized, Examples) {
    const auto fx = scores_fixture({0.2, 0.5, 0.9});
    const auto half = tau_star_quantized(kE1, fx, 0.5, 0.1);
    ASSERT_FALSE(half.always_test);
    EXPECT_EQ(half.value, 0.0);
    const auto quarter = tau_star_quantized(kE1, fx, 0.25, 0.1);
    ASSERT_FALSE(quarter.always_test);
    EXPECT_NEAR(quarter.value, 0.2, 1e-15);
    EXPECT_TRUE(tau_star_quantized(kE1, fx, -0.01, 0.1).always_test);
    EXPECT_THROW(tau_star_quantized(kE1, fx, 0.1, 0.0), DomainError);
}

TEST(TauStarQuantized, MatchesGridScan) {
    RngStream rng(3);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t d = 1 + trial % 4;
        const auto dist = random_dist(d, 5 + trial % 60, rng);
        const auto theta = random_theta(d, rng, 1.0);
        const double alpha = 0.3 * rng.uniform();
        const double eps = 0.005 + 0.05 * rng.uniform();
        // First grid point k*eps meeting the budget, found by direct evaluation.
        int k = 0;
        while (p_err_empirical(theta, dist, k * eps) > alpha) ++k;
        const auto q = tau_star_quantized(theta, dist, alpha, eps);
        ASSERT_FALSE(q.always_test);
        EXPECT_EQ(q.value, k * eps) << trial;
    }
}

TEST(TauStarQuantized, SandwichAgainstContinuousMinimizer) {
    RngStream rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 1 + trial % 6;
        const auto dist = random_dist(d, 1 + trial % 80, rng);
        const auto theta = random_theta(d, rng, 1.5);
        const double alpha = 0.5 * rng.uniform();
        const double eps = std::pow(10.0, -1.0 - 3.0 * rng.uniform());
        const double cont = brute_force_tau_star(theta, dist, alpha);
        const auto q = tau_star_quantized(theta, dist, alpha, eps);
        ASSERT_FALSE(q.always_test);
        EXPECT_GE(q.value - cont, 0.0) << trial;
        EXPECT_LE(q.value - cont, eps) << trial;
    }
}

TEST(TauStarQuantized, NonincreasingInBudget) {
    RngStream rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto dist = random_dist(2, 50, rng);
        const auto theta = random_theta(2, rng);
        const SortedScores ss(theta, dist);
        double prev = INFINITY;
        for (double a = 0.0; a <= 0.5; a += 0.01) {
            const auto q = tau_star_quantized(ss, a, 1e-3);
            ASSERT_FALSE(q.always_test);
            EXPECT_LE(q.value, prev);
            prev = q.value;
        }
    }
}

// --- schedules -------------------------------------------------------------------

TEST(Zeta, Examples) {
    EXPECT_NEAR(zeta(1, 2, 1.0, std::numbers::pi * std::numbers::pi), 0.0, 1e-8);
    EXPECT_NEAR(zeta(100, 2, 1e-4, 0.01), 0.3306659622851724, 1e-12);
    const double t = 1e6;
    EXPECT_LT(zeta(1'000'000, 2, 1.0 / (t * t), 0.01), 0.01);
    EXPECT_THROW(zeta(0, 2, 0.1, 0.1), DomainError);
}

TEST(AlphaSchedule, Examples) {
    EXPECT_DOUBLE_EQ(alpha_schedule(1, 0.1, 2.0), 0.1);
    EXPECT_NEAR(alpha_schedule(10000, 0.1, 0.01), 0.0655623765987689, 1e-12);
    EXPECT_EQ(alpha_schedule(5, 0.1, 0.001), 0.0);
    double prev = 0.0;
    for (std::int64_t t = 1; t < 100000; t = t * 3 / 2 + 1) {
        const double a = alpha_schedule(t, 0.1, 0.05 / 7);
        EXPECT_LE(a, 0.1);
        EXPECT_GE(a, prev);
        prev = a;
    }
}

TEST(EpsQSchedule, FloorsAtMinimum) {
    EXPECT_EQ(eps_q_schedule(1, 1e-4), 1.0);
    EXPECT_EQ(eps_q_schedule(10, 1e-4), 0.01);
    EXPECT_EQ(eps_q_schedule(1000, 1e-4), 1e-4);
}

// --- assembly ----------------------------------------------------------------------

TEST(AssembleTau, NegativeInnerBudgetIsAlwaysTest) {
    RngStream rng(6);
    const auto dist = random_dist(2, 20, rng);
    DesignState design(2, 6.0);
    const auto b = assemble_tau(kE1, dist, design, 12.0, 20, 0.1, 0.05 / 7);
    EXPECT_LT(b.inner_budget, 0.0);
    EXPECT_TRUE(b.tau.always_test);
    EXPECT_TRUE(b.tau.tests(1e9));
}

TEST(AssembleTau, VanishingInflationsRecoverQuantizedOptimum) {
    RngStream rng(7);
    const auto dist = random_dist(2, 100, rng);
    const SortedScores ss(kE1, dist);
    const double eps = 1e-12;
    const auto b = compose_threshold(ss, 0.08, 0.0, 0.0, eps);
    const auto cont = ss.tau_star(0.08);
    ASSERT_TRUE(cont);
    ASSERT_FALSE(b.tau.always_test);
    EXPECT_NEAR(b.tau.value, *cont, 3e-12);
}

TEST(AssembleTau, EqualsHandComposedPipeline) {
    RngStream rng(8);
    const auto dist = random_dist(2, 100, rng);
    DesignState design(2, 6.0);
    for (int i = 0; i < 5000; ++i) update_design(design, ContextDistribution::uniform_ball(2).sample(rng));
    const Vector theta{0.6, -0.7};
    const double delta_prime = 0.05 / 7, alpha = 0.45, radius = 0.02;
    const std::int64_t t = 40000;
    const auto b = assemble_tau(theta, dist, design, radius, t, alpha, delta_prime);

    const double eps = eps_q_schedule(t, 1e-4);
    const double a_t = alpha_schedule(t, alpha, delta_prime);
    const double z_t = zeta(t, 2, eps, delta_prime);
    const double margin = radius / std::sqrt(min_eigenvalue(design.V));
    const auto inner = tau_star_quantized(theta, dist, a_t - z_t - 2 * margin - eps, eps);
    ASSERT_FALSE(inner.always_test);
    ASSERT_FALSE(b.tau.always_test);
    EXPECT_EQ(b.inner.value, inner.value);
    EXPECT_EQ(b.tau.value, inner.value + 3 * margin + eps);
    EXPECT_EQ(b.alpha_t, a_t);
    EXPECT_EQ(b.zeta_t, z_t);
    EXPECT_EQ(b.eps_q, eps);
}

TEST(AssembleTau, NonincreasingAlongFixedPrefix) {
    RngStream rng(9);
    const auto dist = random_dist(2, 400, rng);
    DesignState design(2, 6.0);
    for (int i = 0; i < 2000; ++i) update_design(design, ContextDistribution::uniform_ball(2).sample(rng));
    const Vector theta{0.8, 0.1};
    double prev = INFINITY;
    int finite = 0;
    // eps_q sits on its floor for t >= 100, and the radius passed in shrinks.
    for (std::int64_t t = 100; t <= 200000; t += 997) {
        const double radius = 0.05 / std::log(static_cast<double>(t));
        const auto b = assemble_tau(theta, dist, design, radius, t, 0.3, 0.05 / 7);
        if (b.tau.always_test) {
            EXPECT_EQ(prev, INFINITY);
            continue;
        }
        ++finite;
        EXPECT_LE(b.tau.value, prev + 1e-15) << t;
        prev = b.tau.value;
    }
    EXPECT_GT(finite, 0);
}

TEST(AssembleTau, SimplifiedScalesSlacks) {
    RngStream rng(10);
    const auto dist = random_dist(2, 300, rng);
    const Vector theta{0.3, 0.9};
    const auto full = assemble_tau_simplified(theta, dist, 5000, 0.1, 0.01, 1e-4, 1.0);
    const auto tenth = assemble_tau_simplified(theta, dist, 5000, 0.1, 0.01, 1e-4, 0.1);
    EXPECT_NEAR(full.zeta_t, 10.0 * tenth.zeta_t, 1e-15);
    EXPECT_DOUBLE_EQ(full.alpha_t, alpha_schedule(5000, 0.1, 0.01));
    EXPECT_GE(tenth.alpha_t, full.alpha_t);
    EXPECT_EQ(tenth.b_over_sqrt_lambda, 0.0);
}

// --- uniform-ball oracle --------------------------------------------------------

TEST(UniformOracle, PErrAtZero) {
    EXPECT_NEAR(uniform_p_err(0.0, 2), 0.39724408135490574, 1e-10);
    EXPECT_NEAR(uniform_p_err(0.0, 8), 0.43627841610336393, 1e-10);
    EXPECT_EQ(uniform_p_err(1.0, 3), 0.0);
}

TEST(UniformOracle, BoundaryAndErrors) {
    const auto o = oracle_tau_p_star(0.45, 2);
    EXPECT_EQ(o.tau_star, 0.0);
    EXPECT_EQ(o.p_star, 0.0);
    EXPECT_THROW(oracle_tau_p_star(0.0, 2), DomainError);
    EXPECT_THROW(oracle_tau_p_star(-0.1, 2), DomainError);
    EXPECT_EQ(uniform_tau_star(0.0, 2), 1.0);
}

TEST(UniformOracle, SlabMassClosedForm) {
    EXPECT_NEAR(uniform_slab_fraction(0.5, 2), 0.6089977810442294, 1e-12);
    EXPECT_NEAR(uniform_slab_fraction_quadrature(0.5, 2), 0.6089977810442294, 1e-10);
}

TEST(UniformOracle, ReferenceValues) {
    struct Case {
        int d;
        double alpha, tau, p;
    };
    // Independent root finding on the score marginal.
    const Case cases[] = {{2, 0.05, 0.7255332368526966, 0.8346795396997413},
                          {2, 0.10, 0.5746559413516166, 0.6891277187531843},
                          {8, 0.05, 0.4751347410851045, 0.8603024053655128},
                          {8, 0.10, 0.36789273168254943, 0.7343569573244771}};
    for (const auto& c : cases) {
        const auto o = oracle_tau_p_star(c.alpha, c.d);
        EXPECT_NEAR(o.tau_star, c.tau, 1e-8) << c.d << " " << c.alpha;
        EXPECT_NEAR(o.p_star, c.p, 1e-8) << c.d << " " << c.alpha;
        EXPECT_NEAR(o.p_star, o.p_star_quadrature, 1e-6);
        EXPECT_LE(uniform_p_err(o.tau_star, c.d), c.alpha);
    }
}

TEST(UniformOracle, BetaAndQuadratureRoutesAgree) {
    for (int d = 1; d <= 12; ++d)
        for (double tau = 0.05; tau < 1.0; tau += 0.05)
            EXPECT_NEAR(uniform_slab_fraction(tau, d), uniform_slab_fraction_quadrature(tau, d), 1e-9) << d << " " << tau;
}

TEST(UniformOracle, MatchesMonteCarloInversion) {
    RngStream rng(11, 3);
    const GroundTruth gt({0.0, 1.0}, ContextDistribution::uniform_ball(2));
    const auto mc = monte_carlo_tau_p_star(gt, 0.1, 1'000'000, rng);
    const auto o = oracle_tau_p_star(0.1, 2);
    EXPECT_NEAR(mc.tau_star, o.tau_star, 0.005);
    EXPECT_NEAR(mc.p_star, o.p_star, 0.005);
}
