#pragma once
// Simulated interaction stream: i.i.d. contexts on the unit ball and
// Bernoulli labels drawn from a latent logistic model.

#include "scout/errors.hpp"
#include "scout/numerics.hpp"
#include "scout/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace scout {

using Context = Vector;

/// Rotation-invariant density on the unit ball that is piecewise constant in
/// the radius. Shell i covers [edges[i], edges[i+1]) with relative density
/// levels[i]; levels are normalized so the density integrates to one.
struct RadialProfile {
    std::vector<double> edges;   // 0 = e_0 < e_1 < ... < e_k = 1
    std::vector<double> levels;  // k positive values
};

class ContextDistribution {
public:
    enum class Kind { UniformBall, RadialDensity };

    static ContextDistribution uniform_ball(int d) {
        if (d < 1) throw DomainError("context distribution: d must be >= 1");
        ContextDistribution dist;
        dist.d_ = d;
        return dist;
    }

    static ContextDistribution radial(int d, RadialProfile profile) {
        if (d < 1) throw DomainError("context distribution: d must be >= 1");
        const auto& e = profile.edges;
        const auto& l = profile.levels;
        if (e.size() < 2 || l.size() + 1 != e.size()) throw DomainError("radial profile: need k levels and k+1 edges");
        if (e.front() != 0.0 || e.back() != 1.0) throw DomainError("radial profile: edges must span [0,1]");
        for (std::size_t i = 0; i + 1 < e.size(); ++i)
            if (!(e[i + 1] > e[i])) throw DomainError("radial profile: edges must increase");
        for (double v : l)
            if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("radial profile: levels must be positive and finite");

        ContextDistribution dist;
        dist.kind_ = Kind::RadialDensity;
        dist.d_ = d;
        // Mass of shell i is level_i * V_d * (e_{i+1}^d - e_i^d).
        double total = 0.0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            const double shell = std::pow(e[i + 1], d) - std::pow(e[i], d);
            total += l[i] * shell;
            dist.cumulative_.push_back(total);
        }
        for (double& c : dist.cumulative_) c /= total;
        const double norm = 1.0 / (total * unit_ball_volume(d));
        for (double& v : profile.levels) v *= norm;
        dist.profile_ = std::move(profile);
        return dist;
    }

    Kind kind() const { return kind_; }
    int dim() const { return d_; }
    const std::optional<RadialProfile>& profile() const { return profile_; }

    /// Density at a point with norm r (normalized).
    double density(double r) const {
        if (r > 1.0) return 0.0;
        if (kind_ == Kind::UniformBall) return 1.0 / unit_ball_volume(d_);
        const auto& e = profile_->edges;
        const auto it = std::upper_bound(e.begin(), e.end(), r);
        const std::size_t shell = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - e.begin() - 1, 0), profile_->levels.size() - 1);
        return profile_->levels[shell];
    }

    /// Density bounds (m, M) over the ball.
    std::pair<double, double> density_bounds() const {
        if (kind_ == Kind::UniformBall) {
            const double v = 1.0 / unit_ball_volume(d_);
            return {v, v};
        }
        const auto [lo, hi] = std::minmax_element(profile_->levels.begin(), profile_->levels.end());
        return {*lo, *hi};
    }

    Context sample(RngStream& rng) const {
        Context x(d_);
        double n = 0.0;
        do {
            for (auto& v : x) v = rng.normal();
            n = norm2(x);
        } while (n == 0.0);
        const double r = sample_radius(rng);
        for (auto& v : x) v *= r / n;
        const double len = norm2(x);
        if (len > 1.0)
            for (auto& v : x) v /= len;
        return x;
    }

private:
    double sample_radius(RngStream& rng) const {
        const double inv_d = 1.0 / d_;
        if (kind_ == Kind::UniformBall) return std::pow(rng.uniform(), inv_d);
        const double u = rng.uniform();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        const std::size_t shell = std::min<std::size_t>(it - cumulative_.begin(), cumulative_.size() - 1);
        const double lo = std::pow(profile_->edges[shell], d_);
        const double hi = std::pow(profile_->edges[shell + 1], d_);
        return std::pow(lo + rng.uniform() * (hi - lo), inv_d);
    }

    Kind kind_ = Kind::UniformBall;
    int d_ = 1;
    std::optional<RadialProfile> profile_;
    std::vector<double> cumulative_;
};

/// The latent parameter and the context law.
struct GroundTruth {
    Vector theta_star;
    ContextDistribution distribution;

    GroundTruth(Vector theta, ContextDistribution dist) : theta_star(std::move(theta)), distribution(std::move(dist)) {
        if (theta_star.size() != static_cast<std::size_t>(distribution.dim()))
            throw DomainError("ground truth: theta dimension does not match distribution");
        const double n = norm2(theta_star);
        if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("ground truth: theta must be nonzero and finite");
        for (auto& v : theta_star) v /= n;
    }
};

/// Uniform draw from the unit sphere S^{d-1}.
inline Vector random_unit_vector(int d, RngStream& rng) {
    Vector v(d);
    double n = 0.0;
    do {
        for (auto& x : v) x = rng.normal();
        n = norm2(v);
    } while (n == 0.0);
    for (auto& x : v) x /= n;
    return v;
}

inline Context sample_context(const ContextDistribution& dist, RngStream& rng) { return dist.sample(rng); }

/// Y ~ Bernoulli(logistic(x . theta_star)).
inline int sample_label(std::span<const double> x, const GroundTruth& gt, RngStream& rng) {
    return rng.bernoulli(logistic(dot(x, gt.theta_star))) ? 1 : 0;
}

/// Probability mass of the slab |x . theta_star| <= tau under the uniform ball:
/// I_{tau^2}(1/2, (d+1)/2).
inline double uniform_slab_fraction(double tau, int d) {
    if (tau <= 0.0) return 0.0;
    if (tau >= 1.0) return 1.0;
    return reg_inc_beta(tau * tau, 0.5, 0.5 * (d + 1));
}

/// Analytic lower bound m tau^{d+2} V_d / (p (d+2)) on the minimum eigenvalue
/// of the conditional second-moment matrix, where p is the slab mass.
inline double lambda0_lower_bound(double tau, int d, double density_min, double slab_mass) {
    if (!(slab_mass > 0.0)) throw DomainError("lambda0_lower_bound: slab mass must be positive");
    return density_min * std::pow(tau, d + 2) * unit_ball_volume(d) / (slab_mass * (d + 2));
}

struct ConditionalEigenEstimate {
    double estimate = 0.0;        // lambda_min of E[X X^T | |<X,theta*>| <= tau]
    double standard_error = 0.0;  // from 10 batch means
    double lower_bound = 0.0;     // lambda0_lower_bound at the same tau
    double slab_mass = 0.0;       // analytic for the uniform ball, else empirical
    std::size_t accepted = 0;
};

/// Monte-Carlo estimate of the conditional second-moment minimum eigenvalue.
inline ConditionalEigenEstimate conditional_min_eig_estimate(const GroundTruth& gt, double tau, std::size_t n,
                                                             RngStream& rng) {
    const int d = gt.distribution.dim();
    if (!(tau > 0.0 && tau <= 1.0)) throw DomainError("conditional_min_eig_estimate: tau must be in (0,1]");
    if (n < static_cast<std::size_t>(10 * d * d)) throw DomainError("conditional_min_eig_estimate: need n >= 10 d^2");
    constexpr std::size_t kBatches = 10;
    std::vector<SymmetricMatrix> batch(kBatches, SymmetricMatrix(d));
    std::vector<std::size_t> batch_count(kBatches, 0);
    SymmetricMatrix total(d);
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Context x = gt.distribution.sample(rng);
        if (std::abs(dot(x, gt.theta_star)) > tau) continue;
        total.add_outer(x);
        batch[accepted % kBatches].add_outer(x);
        ++batch_count[accepted % kBatches];
        ++accepted;
    }
    if (accepted < static_cast<std::size_t>(d) + 1)
        throw DomainError("conditional_min_eig_estimate: fewer than d+1 samples survived conditioning");

    auto scaled_min_eig = [d](SymmetricMatrix m, std::size_t count) {
        SymmetricMatrix s(d);
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) s.set(i, j, m(i, j) / static_cast<double>(count));
        return min_eigenvalue(s);
    };

    ConditionalEigenEstimate out;
    out.accepted = accepted;
    out.estimate = scaled_min_eig(total, accepted);
    double mean = 0.0, sq = 0.0;
    std::size_t used = 0;
    for (std::size_t b = 0; b < kBatches; ++b) {
        if (batch_count[b] <= static_cast<std::size_t>(d)) continue;
        const double v = scaled_min_eig(batch[b], batch_count[b]);
        mean += v;
        sq += v * v;
        ++used;
    }
    if (used > 1) {
        mean /= used;
        const double var = std::max(0.0, (sq - used * mean * mean) / (used - 1));
        out.standard_error = std::sqrt(var / used);
    }
    out.slab_mass = gt.distribution.kind() == ContextDistribution::Kind::UniformBall
                        ? uniform_slab_fraction(tau, d)
                        : static_cast<double>(accepted) / static_cast<double>(n);
    out.lower_bound = lambda0_lower_bound(tau, d, gt.distribution.density_bounds().first, out.slab_mass);
    return out;
}

}  // namespace scout
