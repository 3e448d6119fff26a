#pragma once
// Threshold calibration: empirical misclassification rates, quantized
// optimal thresholds, the slack schedules, and closed-form uniform-ball oracles.

#include "scout/environment.hpp"
#include "scout/errors.hpp"
#include "scout/estimator.hpp"
#include "scout/numerics.hpp"
#include "scout/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace scout {

/// Append-only multiset of contexts used as the plug-in estimate of P.
class EmpiricalDistribution {
public:
    explicit EmpiricalDistribution(std::size_t d) : d_(d) {}

    void append(std::span<const double> x) {
        if (x.size() != d_) throw DomainError("empirical distribution: dimension mismatch");
        if (norm2(x) > 1.0 + 1e-12) throw DomainError("empirical distribution: context outside the unit ball");
        flat_.insert(flat_.end(), x.begin(), x.end());
        ++n_;
    }

    std::size_t size() const { return n_; }
    bool empty() const { return n_ == 0; }
    std::size_t dim() const { return d_; }
    std::span<const double> context(std::size_t i) const { return {flat_.data() + i * d_, d_}; }

    /// |x_i . theta| for every stored context.
    std::vector<double> abs_scores(std::span<const double> theta) const {
        std::vector<double> s(n_);
        for (std::size_t i = 0; i < n_; ++i) s[i] = std::abs(dot(context(i), theta));
        return s;
    }

private:
    std::size_t d_;
    std::size_t n_ = 0;
    std::vector<double> flat_;
};

/// (1/N) sum_i (1 + e^{|x_i.theta|})^{-1} 1{|x_i.theta| > tau}
inline double p_err_empirical(std::span<const double> theta, const EmpiricalDistribution& dist, double tau) {
    if (dist.empty()) throw EmptyDistribution();
    double total = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const double s = std::abs(dot(dist.context(i), theta));
        if (s > tau) total += bayes_error(s);
    }
    return total / static_cast<double>(dist.size());
}

/// Sorted |scores| with normalized suffix sums of their Bayes errors.
/// tail[i] = (1/N) sum_{j >= i} w_j, so p_err(tau) = tail[first index with score > tau].
class SortedScores {
public:
    explicit SortedScores(std::vector<double> abs_scores) : scores_(std::move(abs_scores)) {
        if (scores_.empty()) throw EmptyDistribution();
        std::sort(scores_.begin(), scores_.end());
        const double inv_n = 1.0 / static_cast<double>(scores_.size());
        tail_.assign(scores_.size() + 1, 0.0);
        for (std::size_t i = scores_.size(); i-- > 0;) tail_[i] = tail_[i + 1] + bayes_error(scores_[i]) * inv_n;
    }

    SortedScores(std::span<const double> theta, const EmpiricalDistribution& dist)
        : SortedScores(dist.empty() ? throw EmptyDistribution() : dist.abs_scores(theta)) {}

    double p_err(double tau) const {
        const auto it = std::upper_bound(scores_.begin(), scores_.end(), tau);
        return tail_[static_cast<std::size_t>(it - scores_.begin())];
    }

    /// min { tau >= 0 : p_err(tau) <= alpha } over the continuum. The feasible
    /// set is [tau*, inf) and tau* is either 0 or one of the scores.
    std::optional<double> tau_star(double alpha) const {
        if (alpha < 0.0) return std::nullopt;
        if (p_err(0.0) <= alpha) return 0.0;
        std::size_t i = 0;
        while (i < scores_.size()) {
            std::size_t j = i;
            while (j < scores_.size() && scores_[j] == scores_[i]) ++j;  // ties share one candidate
            if (tail_[j] <= alpha) return scores_[i];
            i = j;
        }
        return scores_.back();  // unreachable: tail_[N] == 0 <= alpha
    }

    const std::vector<double>& scores() const { return scores_; }

private:
    std::vector<double> scores_;
    std::vector<double> tail_;
};

/// Result of a threshold search; `always_test` means no threshold meets the budget.
struct Threshold {
    bool always_test = true;
    double value = 0.0;

    static Threshold always() { return {}; }
    static Threshold at(double v) { return {false, v}; }
    bool tests(double abs_score) const { return always_test || abs_score <= value; }
};

/// Smallest multiple of eps_q at which the empirical p_err is within alpha_eff.
inline Threshold tau_star_quantized(const SortedScores& sorted, double alpha_eff, double eps_q) {
    if (!(eps_q > 0.0)) throw DomainError("tau_star_quantized: eps_q must be positive");
    const auto cont = sorted.tau_star(alpha_eff);
    if (!cont) return Threshold::always();
    double k = std::ceil(*cont / eps_q);
    while (k > 0.0 && (k - 1.0) * eps_q >= *cont) k -= 1.0;
    while (k * eps_q < *cont) k += 1.0;
    return Threshold::at(k * eps_q);
}

inline Threshold tau_star_quantized(std::span<const double> theta, const EmpiricalDistribution& dist, double alpha_eff,
                                    double eps_q) {
    return tau_star_quantized(SortedScores(theta, dist), alpha_eff, eps_q);
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

/// 1/t^2, floored at eps_min.
inline double eps_q_schedule(std::int64_t t, double eps_min) {
    const double tt = static_cast<double>(t);
    return std::max(1.0 / (tt * tt), eps_min);
}

/// sqrt(((d+1) log(1/eps_q) + log(pi^2 t^2 / delta')) / (4t))
inline double zeta(std::int64_t t, std::size_t d, double eps_q, double delta_prime) {
    if (t < 1) throw DomainError("zeta: t must be >= 1");
    const double tt = static_cast<double>(t);
    const double num = (static_cast<double>(d) + 1.0) * std::log(1.0 / eps_q) +
                       std::log(std::numbers::pi * std::numbers::pi * tt * tt / delta_prime);
    return std::sqrt(std::max(0.0, num) / (4.0 * tt));
}

/// Deflation subtracted from alpha: sqrt(log(2 t^2 / delta') / (2t)).
inline double alpha_deflation(std::int64_t t, double delta_prime) {
    const double tt = static_cast<double>(t);
    return std::sqrt(std::max(0.0, std::log(2.0 * tt * tt / delta_prime)) / (2.0 * tt));
}

/// max(0, alpha - sqrt(log(2 t^2 / delta') / (2t)))
inline double alpha_schedule(std::int64_t t, double alpha, double delta_prime) {
    if (t < 1) throw DomainError("alpha_schedule: t must be >= 1");
    return std::max(0.0, alpha - alpha_deflation(t, delta_prime));
}

// ---------------------------------------------------------------------------
// Threshold assembly
// ---------------------------------------------------------------------------

struct ThresholdBundle {
    Threshold tau;                  // final test threshold (AlwaysTest propagates)
    Threshold inner;                // tau*_Q at the deflated budget
    double alpha_t = 0.0;
    double zeta_t = 0.0;
    double eps_q = 0.0;
    double b_over_sqrt_lambda = 0.0;
    double inner_budget = 0.0;
};

/// tau = tau*_Q(alpha_t - zeta_t - 2 r - eps) + 3 r + eps, with r = B / sqrt(lambda_min).
inline ThresholdBundle compose_threshold(const SortedScores& sorted, double alpha_t, double zeta_t, double margin,
                                         double eps_q) {
    ThresholdBundle b;
    b.alpha_t = alpha_t;
    b.zeta_t = zeta_t;
    b.eps_q = eps_q;
    b.b_over_sqrt_lambda = margin;
    b.inner_budget = alpha_t - zeta_t - 2.0 * margin - eps_q;
    b.inner = tau_star_quantized(sorted, b.inner_budget, eps_q);
    b.tau = b.inner.always_test ? Threshold::always() : Threshold::at(b.inner.value + 3.0 * margin + eps_q);
    return b;
}

/// Full pessimistic threshold for round t.
inline ThresholdBundle assemble_tau(std::span<const double> theta_l, const EmpiricalDistribution& dist,
                                    const DesignState& design, double radius, std::int64_t t, double alpha,
                                    double delta_prime, double eps_min = 1e-4) {
    if (dist.empty()) throw EmptyDistribution();
    const double eps = eps_q_schedule(t, eps_min);
    const double lambda_min = min_eigenvalue(design.V);
    if (!(lambda_min > 0.0)) throw NotPositiveDefinite("assemble_tau: design matrix not positive definite");
    return compose_threshold(SortedScores(theta_l, dist), alpha_schedule(t, alpha, delta_prime),
                             zeta(t, dist.dim(), eps, delta_prime), radius / std::sqrt(lambda_min), eps);
}

/// Threshold used by the simplified testing rule: the ellipsoid inflation is
/// left to the per-context width, and both statistical slacks are scaled by
/// `slack_scale`. tau = tau*_Q(alpha'_t - zeta'_t - eps) + eps.
inline ThresholdBundle assemble_tau_simplified(std::span<const double> theta, const EmpiricalDistribution& dist,
                                               std::int64_t t, double alpha, double delta_prime, double eps_min,
                                               double slack_scale) {
    if (dist.empty()) throw EmptyDistribution();
    const double eps = eps_q_schedule(t, eps_min);
    const double alpha_t = std::max(0.0, alpha - slack_scale * alpha_deflation(t, delta_prime));
    const double zeta_t = slack_scale * zeta(t, dist.dim(), eps, delta_prime);
    return compose_threshold(SortedScores(theta, dist), alpha_t, zeta_t, 0.0, eps);
}

// ---------------------------------------------------------------------------
// Uniform-ball oracle
// ---------------------------------------------------------------------------

namespace detail {

// For the uniform ball the score s = <x, theta*> has density
// C_d (1 - s^2)^{(d-1)/2} on [-1, 1]. Integrals below use s = sin(phi), which
// turns the integrand into the smooth cos^d(phi) weight.
inline double marginal_normalizer(int d) { return 1.0 / std::exp(log_beta(0.5, 0.5 * (d + 1))); }

}  // namespace detail

/// p_err(theta*, Unif(ball), tau) by quadrature.
inline double uniform_p_err(double tau, int d) {
    if (tau >= 1.0) return 0.0;
    const double lo = std::asin(std::max(0.0, tau));
    auto f = [d](double phi) { return std::pow(std::cos(phi), d) * logistic(-std::sin(phi)); };
    return 2.0 * detail::marginal_normalizer(d) * integrate(f, lo, std::numbers::pi / 2.0, 1e-13);
}

/// P(|<x, theta*>| <= tau) by quadrature of the score marginal (independent of
/// the incomplete-beta route).
inline double uniform_slab_fraction_quadrature(double tau, int d) {
    if (tau <= 0.0) return 0.0;
    if (tau >= 1.0) return 1.0;
    auto f = [d](double phi) { return std::pow(std::cos(phi), d); };
    return 2.0 * detail::marginal_normalizer(d) * integrate(f, 0.0, std::asin(tau), 1e-13);
}

/// Smallest tau in [0,1] with uniform_p_err(tau) <= alpha; bisection keeps the
/// returned end feasible. alpha <= 0 gives 1 (test everything).
inline double uniform_tau_star(double alpha, int d, double tolerance = 1e-12) {
    if (alpha <= 0.0) return 1.0;
    if (uniform_p_err(0.0, d) <= alpha) return 0.0;
    double lo = 0.0, hi = 1.0;
    while (hi - lo > tolerance) {
        const double mid = 0.5 * (lo + hi);
        (uniform_p_err(mid, d) <= alpha ? hi : lo) = mid;
    }
    return hi;
}

struct OracleThreshold {
    double tau_star = 0.0;
    double p_star = 0.0;             // incomplete-beta route
    double p_star_quadrature = 0.0;  // marginal quadrature route
    double p_err_at_zero = 0.0;
};

/// (tau*, p*) for the uniform ball at target rate alpha.
inline OracleThreshold oracle_tau_p_star(double alpha, int d) {
    if (!(alpha > 0.0)) throw DomainError("oracle_tau_p_star: alpha must be positive");
    if (d < 1) throw DomainError("oracle_tau_p_star: d must be >= 1");
    OracleThreshold o;
    o.p_err_at_zero = uniform_p_err(0.0, d);
    if (alpha >= o.p_err_at_zero) return o;
    o.tau_star = uniform_tau_star(alpha, d, 1e-12);
    o.p_star = uniform_slab_fraction(o.tau_star, d);
    o.p_star_quadrature = uniform_slab_fraction_quadrature(o.tau_star, d);
    return o;
}

struct MonteCarloThreshold {
    double tau_star = 0.0;
    double p_star = 0.0;
    double p_star_standard_error = 0.0;
    std::size_t samples = 0;
};

/// Empirical inversion: draw n contexts, find the continuous tau* of the
/// sample, report the tested fraction at that tau.
inline MonteCarloThreshold monte_carlo_tau_p_star(const GroundTruth& gt, double alpha, std::size_t n, RngStream& rng) {
    if (n == 0) throw EmptyDistribution();
    std::vector<double> scores(n);
    for (auto& s : scores) s = std::abs(dot(gt.distribution.sample(rng), gt.theta_star));
    const SortedScores sorted(std::move(scores));
    MonteCarloThreshold out;
    out.samples = n;
    out.tau_star = sorted.tau_star(alpha).value_or(1.0);
    if (out.tau_star > 0.0) {
        const auto& s = sorted.scores();
        const auto tested = std::upper_bound(s.begin(), s.end(), out.tau_star) - s.begin();
        out.p_star = static_cast<double>(tested) / static_cast<double>(n);
    }
    out.p_star_standard_error = std::sqrt(out.p_star * (1.0 - out.p_star) / static_cast<double>(n));
    return out;
}

}  // namespace scout
