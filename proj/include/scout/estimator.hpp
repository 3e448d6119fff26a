#pragma once
// Regularized logistic maximum likelihood, design-matrix bookkeeping,
// confidence-ellipsoid radius and the constrained projection step.

#include "scout/errors.hpp"
#include "scout/numerics.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace scout {

struct LabeledSample {
    Vector x;
    int y = 0;
};

/// V = kappa I + sum x x^T over the labeled set, plus its update count.
struct DesignState {
    SymmetricMatrix V;
    std::size_t n_theta = 0;
    double kappa = 6.0;

    DesignState() = default;
    DesignState(std::size_t d, double kappa_) : V(d, kappa_), kappa(kappa_) {
        if (!(kappa_ > 0.0)) throw DomainError("design: kappa must be positive");
    }

    std::size_t dim() const { return V.dim(); }
};

/// V += x x^T, n_theta += 1.
inline void update_design(DesignState& state, std::span<const double> x) {
    state.V.add_outer(x);
    ++state.n_theta;
}

// ---------------------------------------------------------------------------
// Log-likelihood
// ---------------------------------------------------------------------------

/// sum_s [y log mu(x.theta) + (1-y) log(1 - mu(x.theta))] - |theta|^2 / 2
inline double log_likelihood(std::span<const LabeledSample> samples, std::span<const double> theta) {
    double ll = -0.5 * dot(theta, theta);
    for (const auto& s : samples) {
        const double z = dot(s.x, theta);
        ll -= s.y ? log1pexp(-z) : log1pexp(z);
    }
    return ll;
}

inline Vector log_likelihood_gradient(std::span<const LabeledSample> samples, std::span<const double> theta) {
    Vector g(theta.begin(), theta.end());
    for (auto& v : g) v = -v;
    for (const auto& s : samples) {
        const double r = s.y - logistic(dot(s.x, theta));
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += r * s.x[i];
    }
    return g;
}

/// Negated Hessian: sum mu(1-mu) x x^T + I (positive definite).
inline SymmetricMatrix log_likelihood_neg_hessian(std::span<const LabeledSample> samples, std::span<const double> theta) {
    SymmetricMatrix h(theta.size(), 1.0);
    for (const auto& s : samples) {
        const double mu = logistic(dot(s.x, theta));
        h.add_outer(s.x, mu * (1.0 - mu));
    }
    return h;
}

struct MleOptions {
    int max_iterations = 100;
    double gradient_tolerance = 1e-10;
};

struct MleFit {
    Vector theta;
    int iterations = 0;
    double gradient_norm = 0.0;
    std::vector<double> objective_trace;  // objective after each accepted iterate, starting point first
};

/// Damped Newton ascent with Armijo backtracking. Throws ConvergenceError if
/// the gradient tolerance is not met within the iteration cap.
inline MleFit fit_mle_traced(std::span<const LabeledSample> samples, std::size_t d,
                             std::optional<std::span<const double>> warm_start = std::nullopt, MleOptions opts = {}) {
    for (const auto& s : samples)
        if (s.x.size() != d || (s.y != 0 && s.y != 1)) throw DomainError("fit_mle: malformed sample");

    MleFit fit;
    fit.theta = warm_start ? Vector(warm_start->begin(), warm_start->end()) : Vector(d, 0.0);
    if (fit.theta.size() != d) throw DomainError("fit_mle: warm start has wrong dimension");

    double objective = log_likelihood(samples, fit.theta);
    fit.objective_trace.push_back(objective);
    for (int it = 0;; ++it) {
        const Vector grad = log_likelihood_gradient(samples, fit.theta);
        fit.gradient_norm = norm2(grad);
        fit.iterations = it;
        if (fit.gradient_norm <= opts.gradient_tolerance) return fit;
        if (it >= opts.max_iterations)
            throw ConvergenceError("fit_mle: gradient norm " + std::to_string(fit.gradient_norm) + " after " +
                                   std::to_string(it) + " Newton iterations");

        const Vector step = solve_spd(log_likelihood_neg_hessian(samples, fit.theta), grad);
        const double slope = dot(grad, step);  // > 0: ascent direction
        // Round-off allowance: near the optimum the objective change drops below
        // the precision of a sum over many samples.
        const double noise = 1e-14 * (1.0 + std::abs(objective)) * (1.0 + static_cast<double>(samples.size()));
        double t = 1.0;
        Vector candidate(d);
        double cand_obj = objective;
        for (;;) {
            for (std::size_t i = 0; i < d; ++i) candidate[i] = fit.theta[i] + t * step[i];
            cand_obj = log_likelihood(samples, candidate);
            if (cand_obj >= objective + 1e-4 * t * slope - noise) break;
            t *= 0.5;
            if (t < 1e-12) throw ConvergenceError("fit_mle: line search failed");
        }
        fit.theta = candidate;
        objective = cand_obj;
        fit.objective_trace.push_back(objective);
    }
}

inline Vector fit_mle(std::span<const LabeledSample> samples, std::size_t d,
                      std::optional<std::span<const double>> warm_start = std::nullopt) {
    return fit_mle_traced(samples, d, warm_start).theta;
}

// ---------------------------------------------------------------------------
// Confidence set
// ---------------------------------------------------------------------------

/// B(delta') = scale * 2 kappa (1 + sqrt(log(1/delta') + 2 d log(1 + n/(kappa d))))
inline double confidence_radius(std::size_t n_theta, std::size_t d, double kappa, double delta_prime,
                                double scale = 1.0) {
    if (!(delta_prime > 0.0 && delta_prime <= 1.0)) throw DomainError("confidence_radius: delta' must be in (0,1]");
    const double dd = static_cast<double>(d);
    const double inner =
        std::log(1.0 / delta_prime) + 2.0 * dd * std::log1p(static_cast<double>(n_theta) / (kappa * dd));
    return scale * 2.0 * kappa * (1.0 + std::sqrt(inner));
}

/// B |x|_{V^{-1}}
inline double uncertainty_width(const Cholesky& v_factor, double radius, std::span<const double> x) {
    return radius * std::sqrt(v_factor.inverse_quadratic_form(x));
}

inline double uncertainty_width(const DesignState& design, double radius, std::span<const double> x) {
    return uncertainty_width(Cholesky(design.V), radius, x);
}

// ---------------------------------------------------------------------------
// Projection onto the unit ball in the g_t geometry
// ---------------------------------------------------------------------------

/// g(theta) = sum mu(x.theta) x + theta
inline Vector link_map(std::span<const LabeledSample> samples, std::span<const double> theta) {
    Vector g(theta.begin(), theta.end());
    for (const auto& s : samples) {
        const double mu = logistic(dot(s.x, theta));
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += mu * s.x[i];
    }
    return g;
}

/// |g(theta) - g(theta_hat)|^2_{V^{-1}}
inline double projection_objective(std::span<const LabeledSample> samples, const Cholesky& v_factor,
                                   std::span<const double> theta, std::span<const double> g_target) {
    Vector r = link_map(samples, theta);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= g_target[i];
    return v_factor.inverse_quadratic_form(r);
}

namespace detail {

inline Vector project_to_ball(Vector v) {
    const double n = norm2(v);
    if (n > 1.0)
        for (auto& x : v) x /= n;
    return v;
}

// argmin_{|u| <= 1} u^T H u + 2 c^T u for positive-definite H.
inline Vector ball_constrained_quadratic(const SymmetricMatrix& h, std::span<const double> c) {
    auto solve_shifted = [&](double nu) {
        SymmetricMatrix shifted = h;
        shifted.add_diagonal(nu);
        Vector u = solve_spd(shifted, c);
        for (auto& x : u) x = -x;
        return u;
    };
    Vector u = solve_shifted(0.0);
    if (norm2(u) <= 1.0) return u;
    double lo = 0.0, hi = 1.0;
    while (norm2(solve_shifted(hi)) > 1.0) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * (1.0 + hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        (norm2(solve_shifted(mid)) > 1.0 ? lo : hi) = mid;
    }
    return project_to_ball(solve_shifted(hi));
}

}  // namespace detail

struct ProjectionOptions {
    int max_iterations = 500;
    double tolerance = 1e-8;  // on the projected-gradient mapping norm
};

/// theta^L = argmin_{|theta| <= 1} |g(theta) - g(theta_hat)|_{V^{-1}}.
///
/// Returns theta_hat unchanged when it is already feasible. Otherwise runs
/// Gauss-Newton, each step solving the ball-constrained quadratic model
/// exactly (bisection on the multiplier), with backtracking along the segment
/// toward the model minimizer.
inline Vector project_theta(std::span<const double> theta_hat, const DesignState& design,
                            std::span<const LabeledSample> samples, ProjectionOptions opts = {}) {
    const std::size_t d = theta_hat.size();
    if (norm2(theta_hat) <= 1.0) return Vector(theta_hat.begin(), theta_hat.end());

    const Cholesky v_factor(design.V);
    const Vector g_target = link_map(samples, theta_hat);
    Vector theta = detail::project_to_ball(Vector(theta_hat.begin(), theta_hat.end()));

    auto jacobian = [&](std::span<const double> th) {
        SymmetricMatrix j(d, 1.0);
        for (const auto& s : samples) {
            const double mu = logistic(dot(s.x, th));
            j.add_outer(s.x, mu * (1.0 - mu));
        }
        return j;
    };

    double f = projection_objective(samples, v_factor, theta, g_target);
    for (int it = 0; it < opts.max_iterations; ++it) {
        Vector r = link_map(samples, theta);
        for (std::size_t i = 0; i < d; ++i) r[i] -= g_target[i];
        const SymmetricMatrix j = jacobian(theta);
        // Columns of V^{-1} J give H = J V^{-1} J (J symmetric).
        std::vector<Vector> vinv_j(d);
        for (std::size_t k = 0; k < d; ++k) {
            Vector col(d);
            for (std::size_t i = 0; i < d; ++i) col[i] = j(i, k);
            vinv_j[k] = v_factor.solve(col);
        }
        SymmetricMatrix h(d);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = a; b < d; ++b) {
                double v = 0.0;
                for (std::size_t i = 0; i < d; ++i) v += j(a, i) * vinv_j[b][i];
                h.set(a, b, v);
            }
        const Vector vinv_r = v_factor.solve(r);
        const Vector grad_half = j.multiply(vinv_r);  // half the objective gradient

        // Stationarity: projected-gradient mapping with step 1/L, L = 2 lambda_max(H).
        const double lipschitz = 2.0 * symmetric_eigenvalues(h).back();
        Vector trial(d);
        for (std::size_t i = 0; i < d; ++i) trial[i] = theta[i] - 2.0 * grad_half[i] / lipschitz;
        trial = detail::project_to_ball(std::move(trial));
        double mapping = 0.0;
        for (std::size_t i = 0; i < d; ++i) mapping += (theta[i] - trial[i]) * (theta[i] - trial[i]);
        mapping = std::sqrt(mapping) * lipschitz;
        if (mapping <= opts.tolerance) return theta;

        // Linearized residual r + J (u - theta); minimize over the ball.
        Vector c(d);
        const Vector h_theta = h.multiply(theta);
        for (std::size_t i = 0; i < d; ++i) c[i] = grad_half[i] - h_theta[i];
        const Vector model_min = detail::ball_constrained_quadratic(h, c);

        double step = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
            Vector cand(d);
            for (std::size_t i = 0; i < d; ++i) cand[i] = theta[i] + step * (model_min[i] - theta[i]);
            const double fc = projection_objective(samples, v_factor, cand, g_target);
            if (fc < f) {
                theta = std::move(cand);
                f = fc;
                moved = true;
                break;
            }
        }
        if (!moved) {
            // No representable decrease left; accept if stationary to round-off.
            if (mapping <= 1e3 * opts.tolerance) return theta;
            break;
        }
    }
    throw ConvergenceError("project_theta: did not reach stationarity");
}

}  // namespace scout
