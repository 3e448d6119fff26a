#pragma once
// Numeric self-checks of the closed forms the library relies on.

#include "scout/calibrator.hpp"
#include "scout/environment.hpp"
#include "scout/estimator.hpp"
#include "scout/numerics.hpp"
#include "scout/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace scout {

struct DiagnosticCheck {
    std::string name;
    double value = 0.0;
    double reference = 0.0;
    double tolerance = 0.0;  // absolute unless `relative`
    bool relative = false;
    bool passed = false;
};

namespace detail {

inline DiagnosticCheck make_check(std::string name, double value, double reference, double tol, bool relative) {
    DiagnosticCheck c{std::move(name), value, reference, tol, relative, false};
    const double err = std::abs(value - reference);
    c.passed = std::isfinite(value) && (relative ? err <= tol * std::abs(reference) : err <= tol);
    return c;
}

/// Fraction of the ball with |x_1| <= tau, by hit counting on the cube.
inline double rejection_segment_fraction(int d, double tau, std::size_t n, RngStream& rng) {
    std::size_t inside = 0, slab = 0;
    Vector x(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : x) v = 2.0 * rng.uniform() - 1.0;
        if (dot(x, x) > 1.0) continue;
        ++inside;
        if (std::abs(x[0]) <= tau) ++slab;
    }
    return inside ? static_cast<double>(slab) / static_cast<double>(inside) : 0.0;
}

}  // namespace detail

/// Runs every check with `samples` Monte-Carlo draws where sampling is used.
inline std::vector<DiagnosticCheck> run_diagnostics(std::size_t samples = 1'000'000, std::uint64_t seed = 0xD1A6) {
    using detail::make_check;
    std::vector<DiagnosticCheck> out;
    const double pi = std::numbers::pi;

    // Second-moment eigenvalue of the uniform ball.
    for (int d : {2, 3}) {
        RngStream rng(seed, 10 + d);
        const auto dist = ContextDistribution::uniform_ball(d);
        SymmetricMatrix m(d);
        for (std::size_t i = 0; i < samples; ++i) m.add_outer(dist.sample(rng));
        SymmetricMatrix s(d);
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) s.set(i, j, m(i, j) / static_cast<double>(samples));
        out.push_back(make_check("covariance_min_eig_d" + std::to_string(d), min_eigenvalue(s), 1.0 / (d + 2), 0.01,
                                 false));
    }

    // Spherical segment fraction against hit counting.
    for (int d : {2, 5}) {
        for (double tau : {0.3, 0.5, 0.8}) {
            RngStream rng(seed, 100 + 10 * d + static_cast<int>(tau * 10));
            // Keep roughly `samples` accepted points whatever the ball/cube ratio.
            const double accept = unit_ball_volume(d) / std::pow(2.0, d);
            const auto n = static_cast<std::size_t>(static_cast<double>(samples) / accept);
            char name[64];
            std::snprintf(name, sizeof name, "segment_fraction_d%d_tau%.1f", d, tau);
            out.push_back(make_check(name, uniform_slab_fraction(tau, d),
                                     detail::rejection_segment_fraction(d, tau, n, rng), 0.01, true));
        }
    }
    out.push_back(make_check("segment_fraction_tau1", uniform_slab_fraction(1.0, 3), 1.0, 0.0, false));
    out.push_back(make_check("segment_volume_d2_tau0.5", unit_ball_volume(2) * uniform_slab_fraction(0.5, 2),
                             pi * 0.6089977810, 1e-8, false));

    // Incomplete Beta identities.
    out.push_back(make_check("inc_beta_arcsine", reg_inc_beta(0.25, 0.5, 1.5),
                             2.0 / pi * (std::asin(0.5) + std::sqrt(0.25 * 0.75)), 1e-10, false));
    {
        double worst = 0.0;
        for (double a : {0.5, 1.0, 2.5, 4.0})
            for (double b : {0.5, 1.5, 3.0, 5.5})
                for (double x : {0.01, 0.2, 0.5, 0.77, 0.99})
                    worst = std::max(worst, std::abs(reg_inc_beta(x, a, b) + reg_inc_beta(1.0 - x, b, a) - 1.0));
        out.push_back(make_check("inc_beta_symmetry", worst, 0.0, 1e-12, false));
    }
    {
        double worst = 0.0;
        for (double b : {0.5, 2.0, 3.5})
            for (double x : {0.1, 0.4, 0.9})
                worst = std::max(worst, std::abs(reg_inc_beta(x, 1.0, b) - (1.0 - std::pow(1.0 - x, b))));
        out.push_back(make_check("inc_beta_a1_closed_form", worst, 0.0, 1e-12, false));
    }
    {
        const double tau = uniform_tau_star(0.1, 2);
        out.push_back(make_check("slab_mass_beta_vs_quadrature", uniform_slab_fraction(tau, 2),
                                 uniform_slab_fraction_quadrature(tau, 2), 1e-8, false));
    }

    // Likelihood gradient against central differences.
    {
        RngStream rng(seed, 200);
        double worst = 0.0;
        for (int inst = 0; inst < 100; ++inst) {
            const int d = 1 + inst % 5;
            const auto dist = ContextDistribution::uniform_ball(d);
            std::vector<LabeledSample> s;
            for (int i = 0; i < 20; ++i) s.push_back({dist.sample(rng), rng.bernoulli(0.5) ? 1 : 0});
            Vector theta(d);
            for (auto& v : theta) v = 2.0 * rng.normal();
            const Vector g = log_likelihood_gradient(s, theta);
            Vector fd(d);
            constexpr double h = 1e-5;
            for (int k = 0; k < d; ++k) {
                Vector tp = theta, tm = theta;
                tp[k] += h;
                tm[k] -= h;
                fd[k] = (log_likelihood(s, tp) - log_likelihood(s, tm)) / (2.0 * h);
            }
            Vector diff(d);
            for (int k = 0; k < d; ++k) diff[k] = g[k] - fd[k];
            worst = std::max(worst, norm2(diff) / std::max(norm2(g), 1e-12));
        }
        out.push_back(make_check("mle_gradient_finite_difference", worst, 0.0, 1e-5, false));
    }
    return out;
}

}  // namespace scout
