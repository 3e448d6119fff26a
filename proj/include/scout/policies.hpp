#pragma once
// Test-or-predict policies: the adaptive SCOUT agent, the oracle threshold
// baseline, an always-test control, and the fractional-knapsack hindsight plan.

#include "scout/calibrator.hpp"
#include "scout/errors.hpp"
#include "scout/estimator.hpp"
#include "scout/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scout {

enum class Mode { Rigorous, Practical };
enum class RefitSchedule { EveryRound, Doubling };

inline const char* to_string(Mode m) { return m == Mode::Rigorous ? "rigorous" : "practical"; }
inline const char* to_string(RefitSchedule r) { return r == RefitSchedule::EveryRound ? "every" : "doubling"; }

enum class Provenance : std::uint8_t { Forced, Threshold, AlwaysTestSentinel };

struct Decision {
    bool z = true;               // test this round
    int y_hat = 0;               // model prediction, recorded even when testing
    Provenance provenance = Provenance::Forced;
    double score = 0.0;          // <x, theta> under the policy's parameter
    double threshold = std::numeric_limits<double>::infinity();  // effective |score| cutoff

    /// Emitted label: the observation when tested, otherwise the model prediction.
    int final_prediction(std::optional<int> observed) const {
        if (z) {
            if (!observed) throw DomainError("decision: tested round requires an observed label");
            return *observed;
        }
        return y_hat;
    }
};

struct ScoutConfig {
    Mode mode = Mode::Practical;
    double alpha = 0.1;
    double delta_prime = 0.05 / 7.0;
    double kappa = 6.0;
    double c_b = 0.01;          // scale on B_t
    double slack_scale = 0.1;   // scale on the alpha deflation and zeta (simplified rule only)
    double eps_min = 1e-4;
    bool projection = false;
    RefitSchedule refit = RefitSchedule::Doubling;

    static ScoutConfig rigorous(double alpha, double delta_prime) {
        ScoutConfig c;
        c.mode = Mode::Rigorous;
        c.alpha = alpha;
        c.delta_prime = delta_prime;
        c.c_b = 1.0;
        c.slack_scale = 1.0;
        c.projection = true;
        c.refit = RefitSchedule::EveryRound;
        return c;
    }

    static ScoutConfig practical(double alpha, double delta_prime) {
        ScoutConfig c;
        c.alpha = alpha;
        c.delta_prime = delta_prime;
        return c;
    }
};

inline bool is_refit_round(RefitSchedule schedule, std::int64_t t) {
    if (t < 3) return false;
    if (schedule == RefitSchedule::EveryRound) return true;
    return t >= 4 && (t & (t - 1)) == 0;
}

/// The SCOUT rule for round t: forced test for t <= 2, test on AlwaysTest,
/// otherwise test iff |<x,theta>| <= tau + width. Ties test.
inline Decision threshold_decide(std::span<const double> x, std::span<const double> theta, const Threshold& tau,
                                 double width, std::int64_t t) {
    Decision dec;
    dec.score = dot(x, theta);
    dec.y_hat = dec.score > 0.0 ? 1 : 0;
    if (t <= 2) {
        dec.provenance = Provenance::Forced;
        return dec;
    }
    if (tau.always_test) {
        dec.provenance = Provenance::AlwaysTestSentinel;
        return dec;
    }
    dec.provenance = Provenance::Threshold;
    dec.threshold = tau.value + width;
    dec.z = std::abs(dec.score) <= dec.threshold;
    return dec;
}

/// SCOUT agent. One instance per run; decide() then update() once per round.
///
/// Sample splitting: odd rounds feed the context sample S_P, tested even
/// rounds feed the labeled set S_theta and the design matrix. Parameter and
/// threshold estimates are recomputed at the start of each refit round and
/// cached in between.
class ScoutAgent {
public:
    ScoutAgent(std::size_t d, ScoutConfig cfg)
        : d_(d), cfg_(cfg), design_(d, cfg.kappa), s_p_(d), theta_hat_(d, 0.0), theta_l_(d, 0.0), v_factor_(design_.V) {
        if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw DomainError("scout: alpha must be in (0,1)");
        if (!(cfg.delta_prime > 0.0 && cfg.delta_prime <= 1.0)) throw DomainError("scout: delta' must be in (0,1]");
        if (!(cfg.c_b > 0.0)) throw DomainError("scout: c_B must be positive");
        if (!(cfg.slack_scale >= 0.0)) throw DomainError("scout: slack scale must be nonnegative");
        if (!(cfg.eps_min > 0.0 && cfg.eps_min <= 1.0)) throw DomainError("scout: eps_min must be in (0,1]");
    }

    Decision decide(std::span<const double> x) const {
        if (x.size() != d_) throw DomainError("scout: context dimension mismatch");
        double width = 0.0;
        if (t_ > 2 && !bundle_.tau.always_test && cfg_.mode == Mode::Practical)
            width = uncertainty_width(v_factor_, cfg_.c_b * radius_, x);
        return threshold_decide(x, policy_theta(), bundle_.tau, width, t_);
    }

    /// Records round t and advances to t+1. `label` must be present exactly when
    /// the decision tested.
    void update(std::span<const double> x, const Decision& dec, std::optional<int> label) {
        if (dec.z != label.has_value()) throw DomainError("scout: label presence does not match the test decision");
        if (label && *label != 0 && *label != 1) throw DomainError("scout: label must be binary");
        if (t_ % 2 == 1) {
            s_p_.append(x);
        } else if (dec.z) {
            samples_.push_back({Vector(x.begin(), x.end()), *label});
            update_design(design_, x);
        }
        ++t_;
        if (is_refit_round(cfg_.refit, t_)) refit();
    }

    std::int64_t round() const { return t_; }
    std::size_t n_theta() const { return design_.n_theta; }
    std::size_t n_p() const { return s_p_.size(); }
    const DesignState& design() const { return design_; }
    const EmpiricalDistribution& context_sample() const { return s_p_; }
    const std::vector<LabeledSample>& labeled_samples() const { return samples_; }
    const Vector& theta_hat() const { return theta_hat_; }
    const Vector& theta_l() const { return theta_l_; }
    const Vector& policy_theta() const { return cfg_.projection ? theta_l_ : theta_hat_; }
    const ThresholdBundle& bundle() const { return bundle_; }
    const ScoutConfig& config() const { return cfg_; }
    double radius() const { return radius_; }
    double lambda_min() const { return lambda_min_; }
    std::int64_t refit_count() const { return refits_; }

    /// FNV-1a over the round counter, set sizes, estimates and threshold.
    std::uint64_t state_hash() const {
        std::uint64_t h = 0xCBF29CE484222325ull;
        auto mix = [&h](const void* p, std::size_t n) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= b[i];
                h *= 0x100000001B3ull;
            }
        };
        const std::uint64_t counts[] = {static_cast<std::uint64_t>(t_), design_.n_theta, s_p_.size()};
        mix(counts, sizeof counts);
        mix(theta_hat_.data(), theta_hat_.size() * sizeof(double));
        mix(theta_l_.data(), theta_l_.size() * sizeof(double));
        mix(design_.V.data().data(), design_.V.data().size() * sizeof(double));
        const double tau[] = {bundle_.tau.always_test ? -1.0 : bundle_.tau.value, radius_};
        mix(tau, sizeof tau);
        return h;
    }

private:
    void refit() {
        theta_hat_ = fit_mle(samples_, d_, std::span<const double>(theta_hat_));
        theta_l_ = cfg_.projection ? project_theta(theta_hat_, design_, samples_) : theta_hat_;
        radius_ = confidence_radius(design_.n_theta, d_, cfg_.kappa, cfg_.delta_prime);
        lambda_min_ = min_eigenvalue(design_.V);
        if (cfg_.mode == Mode::Rigorous) {
            bundle_ = assemble_tau(policy_theta(), s_p_, design_, cfg_.c_b * radius_, t_, cfg_.alpha, cfg_.delta_prime,
                                   cfg_.eps_min);
        } else {
            bundle_ = assemble_tau_simplified(policy_theta(), s_p_, t_, cfg_.alpha, cfg_.delta_prime, cfg_.eps_min,
                                              cfg_.slack_scale);
            bundle_.b_over_sqrt_lambda = cfg_.c_b * radius_ / std::sqrt(lambda_min_);
            v_factor_ = Cholesky(design_.V);
        }
        ++refits_;
    }

    std::size_t d_;
    ScoutConfig cfg_;
    DesignState design_;
    EmpiricalDistribution s_p_;
    std::vector<LabeledSample> samples_;
    Vector theta_hat_;
    Vector theta_l_;
    Cholesky v_factor_;
    ThresholdBundle bundle_{};  // AlwaysTest until the first refit
    double radius_ = 0.0;
    double lambda_min_ = 0.0;
    std::int64_t t_ = 1;
    std::int64_t refits_ = 0;
};

/// Baseline threshold rule with known theta*: test iff |<x,theta*>| <= tau*.
inline Decision oracle_decide(std::span<const double> x, std::span<const double> theta_star, double tau_star) {
    Decision dec;
    dec.score = dot(x, theta_star);
    dec.threshold = tau_star;
    dec.provenance = Provenance::Threshold;
    dec.z = std::abs(dec.score) <= tau_star;
    dec.y_hat = dec.score > tau_star ? 1 : 0;
    return dec;
}

/// Control policy: test every round.
inline Decision always_test_decide(std::span<const double>) {
    Decision dec;
    dec.provenance = Provenance::AlwaysTestSentinel;
    return dec;
}

struct KnapsackPlan {
    double expected_tests = 0.0;
    std::vector<double> skip_probability;  // eta_t: probability of not testing round t
    double expected_errors = 0.0;          // sum_t c_t eta_t
};

/// In-expectation optimum: maximize sum eta_t subject to
/// (1/T) sum_t min(p_t, 1-p_t) eta_t <= alpha. Greedy on ascending cost with one
/// fractional item at the budget boundary.
inline KnapsackPlan knapsack_hindsight(std::span<const double> p, double alpha) {
    if (!(alpha >= 0.0)) throw DomainError("knapsack_hindsight: alpha must be nonnegative");
    const std::size_t horizon = p.size();
    std::vector<double> cost(horizon);
    for (std::size_t i = 0; i < horizon; ++i) {
        if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw DomainError("knapsack_hindsight: p_t must be in [0,1]");
        cost[i] = std::min(p[i], 1.0 - p[i]);
    }
    std::vector<std::size_t> order(horizon);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cost[a] < cost[b]; });

    KnapsackPlan plan;
    plan.skip_probability.assign(horizon, 0.0);
    double remaining = alpha * static_cast<double>(horizon);
    for (std::size_t idx : order) {
        const double c = cost[idx];
        if (c <= remaining) {
            plan.skip_probability[idx] = 1.0;
            remaining -= c;
            plan.expected_errors += c;
            continue;
        }
        // Boundary item: spend what is left, then stop.
        if (remaining > 0.0) {
            plan.skip_probability[idx] = remaining / c;
            plan.expected_errors += remaining;
        }
        break;
    }
    plan.expected_tests = static_cast<double>(horizon) -
                          std::accumulate(plan.skip_probability.begin(), plan.skip_probability.end(), 0.0);
    return plan;
}

}  // namespace scout
