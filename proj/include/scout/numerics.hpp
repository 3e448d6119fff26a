#pragma once
// Special functions, quadrature and small dense linear algebra.
//
// Dimensions in this project are small (d <= ~20), so everything here is
// plain O(d^3) dense code over std::vector<double>.

#include "scout/errors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace scout {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Scalar special functions
// ---------------------------------------------------------------------------

/// Logistic sigmoid 1/(1+e^{-z}), branching on sign so neither side overflows.
inline double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + e^z) without overflow.
inline double log1pexp(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

/// Bayes error of a logistic label at margin s: (1 + e^{|s|})^{-1}.
inline double bayes_error(double score) { return logistic(-std::abs(score)); }

/// Adaptive Simpson quadrature of f over [lo, hi] to absolute tolerance `tol`.
inline double integrate(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12,
                        int max_depth = 50) {
    if (hi == lo) return 0.0;
    struct Segment {
        double a, b, fa, fm, fb, whole;
    };
    auto simpson = [](double a, double b, double fa, double fm, double fb) { return (b - a) / 6.0 * (fa + 4.0 * fm + fb); };

    std::function<double(const Segment&, double, int)> refine = [&](const Segment& s, double eps, int depth) -> double {
        const double m = 0.5 * (s.a + s.b);
        const double lm = 0.5 * (s.a + m);
        const double rm = 0.5 * (m + s.b);
        const double flm = f(lm);
        const double frm = f(rm);
        const double left = simpson(s.a, m, s.fa, flm, s.fm);
        const double right = simpson(m, s.b, s.fm, frm, s.fb);
        const double delta = left + right - s.whole;
        if (depth <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
        return refine({s.a, m, s.fa, flm, s.fm, left}, 0.5 * eps, depth - 1) +
               refine({m, s.b, s.fm, frm, s.fb, right}, 0.5 * eps, depth - 1);
    };

    // Seed with a few panels so narrow features are not skipped entirely.
    constexpr int kPanels = 8;
    double total = 0.0;
    const double width = (hi - lo) / kPanels;
    for (int i = 0; i < kPanels; ++i) {
        const double a = lo + width * i;
        const double b = (i == kPanels - 1) ? hi : a + width;
        const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
        total += refine({a, b, fa, fm, fb, simpson(a, b, fa, fm, fb)}, tol / kPanels, max_depth);
    }
    return total;
}

namespace detail {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
// Returns NaN when it fails to converge.
inline double beta_continued_fraction(double x, double a, double b) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// Lower regularized incomplete beta for x <= a/(a+b) by quadrature, after the
// substitution t = u^{1/a} which removes the endpoint singularity at 0.
inline double reg_inc_beta_quadrature(double x, double a, double b) {
    const double upper = std::pow(x, a);
    auto f = [a, b](double u) { return std::pow(1.0 - std::pow(u, 1.0 / a), b - 1.0); };
    return integrate(f, 0.0, upper, 1e-13) / (a * std::exp(log_beta(a, b)));
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b), the Beta(a, b) CDF at x.
inline double reg_inc_beta(double x, double a, double b) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("reg_inc_beta: x outside [0,1]");
    if (!(a > 0.0) || !(b > 0.0)) throw DomainError("reg_inc_beta: shape parameters must be positive");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;

    const bool flip = x > a / (a + b);
    const double xx = flip ? 1.0 - x : x;
    const double aa = flip ? b : a;
    const double bb = flip ? a : b;

    const double log_front = aa * std::log(xx) + bb * std::log1p(-xx) - detail::log_beta(aa, bb);
    double lower = std::exp(log_front) * detail::beta_continued_fraction(xx, aa, bb) / aa;
    if (!std::isfinite(lower)) lower = detail::reg_inc_beta_quadrature(xx, aa, bb);
    lower = std::clamp(lower, 0.0, 1.0);
    return flip ? 1.0 - lower : lower;
}

/// Volume of the unit ball in R^d: pi^{d/2} / Gamma(d/2 + 1).
inline double unit_ball_volume(int d) {
    if (d < 1) throw DomainError("unit_ball_volume: d must be >= 1");
    const double half = 0.5 * d;
    return std::exp(half * std::log(std::numbers::pi) - std::lgamma(half + 1.0));
}

// ---------------------------------------------------------------------------
// Symmetric matrices
// ---------------------------------------------------------------------------

/// Dense symmetric matrix. Writes go through set(), which mirrors the entry,
/// so entries(i,j) == entries(j,i) holds bit-for-bit.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(std::size_t dim, double diagonal = 0.0) : dim_(dim), a_(dim * dim, 0.0) {
        for (std::size_t i = 0; i < dim; ++i) a_[i * dim + i] = diagonal;
    }

    static SymmetricMatrix identity(std::size_t dim) { return SymmetricMatrix(dim, 1.0); }

    static SymmetricMatrix diagonal(std::span<const double> diag) {
        SymmetricMatrix m(diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) m.set(i, i, diag[i]);
        return m;
    }

    /// Builds from a row-major square array, averaging (i,j) with (j,i).
    static SymmetricMatrix from_rows(std::size_t dim, std::span<const double> rows) {
        if (rows.size() != dim * dim) throw DomainError("SymmetricMatrix: entry count does not match dimension");
        SymmetricMatrix m(dim);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = i; j < dim; ++j) m.set(i, j, 0.5 * (rows[i * dim + j] + rows[j * dim + i]));
        return m;
    }

    std::size_t dim() const { return dim_; }
    double operator()(std::size_t i, std::size_t j) const { return a_[i * dim_ + j]; }

    void set(std::size_t i, std::size_t j, double v) {
        a_[i * dim_ + j] = v;
        a_[j * dim_ + i] = v;
    }

    /// this += scale * x x^T
    void add_outer(std::span<const double> x, double scale = 1.0) {
        assert(x.size() == dim_);
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = i; j < dim_; ++j) set(i, j, (*this)(i, j) + scale * x[i] * x[j]);
    }

    void add_diagonal(double c) {
        for (std::size_t i = 0; i < dim_; ++i) a_[i * dim_ + i] += c;
    }

    Vector multiply(std::span<const double> x) const {
        assert(x.size() == dim_);
        Vector y(dim_, 0.0);
        for (std::size_t i = 0; i < dim_; ++i)
            for (std::size_t j = 0; j < dim_; ++j) y[i] += a_[i * dim_ + j] * x[j];
        return y;
    }

    std::span<const double> data() const { return a_; }

    bool is_finite() const { return all_finite(a_); }

    friend bool operator==(const SymmetricMatrix&, const SymmetricMatrix&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> a_;
};

/// All eigenvalues in ascending order (cyclic Jacobi rotations).
inline Vector symmetric_eigenvalues(const SymmetricMatrix& m) {
    if (!m.is_finite()) throw DomainError("symmetric_eigenvalues: non-finite entry");
    const std::size_t n = m.dim();
    std::vector<double> a(m.data().begin(), m.data().end());
    auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };

    double scale = 0.0;
    for (double v : a) scale += v * v;
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        if (off <= 1e-30 * scale || off == 0.0) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (apq == 0.0) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    Vector eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = at(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

inline double min_eigenvalue(const SymmetricMatrix& m) {
    if (m.dim() == 0) throw DomainError("min_eigenvalue: empty matrix");
    return symmetric_eigenvalues(m).front();
}

/// Lower-triangular Cholesky factor L with m = L L^T.
class Cholesky {
public:
    explicit Cholesky(const SymmetricMatrix& m) : n_(m.dim()), l_(n_ * n_, 0.0) {
        if (!m.is_finite()) throw NotPositiveDefinite("cholesky: non-finite entry");
        for (std::size_t j = 0; j < n_; ++j) {
            double diag = m(j, j);
            for (std::size_t k = 0; k < j; ++k) diag -= L(j, k) * L(j, k);
            if (!(diag > 0.0)) throw NotPositiveDefinite("cholesky: matrix is not positive definite");
            L(j, j) = std::sqrt(diag);
            for (std::size_t i = j + 1; i < n_; ++i) {
                double v = m(i, j);
                for (std::size_t k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
                L(i, j) = v / L(j, j);
            }
        }
    }

    Vector solve(std::span<const double> rhs) const {
        Vector y = forward(rhs);
        for (std::size_t ii = n_; ii-- > 0;) {
            double v = y[ii];
            for (std::size_t k = ii + 1; k < n_; ++k) v -= L(k, ii) * y[k];
            y[ii] = v / L(ii, ii);
        }
        return y;
    }

    /// x^T m^{-1} x = |L^{-1} x|^2
    double inverse_quadratic_form(std::span<const double> x) const {
        const Vector y = forward(x);
        return dot(y, y);
    }

private:
    Vector forward(std::span<const double> rhs) const {
        if (rhs.size() != n_) throw DomainError("cholesky: dimension mismatch");
        Vector y(rhs.begin(), rhs.end());
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t k = 0; k < i; ++k) y[i] -= L(i, k) * y[k];
            y[i] /= L(i, i);
        }
        return y;
    }

    double& L(std::size_t i, std::size_t j) { return l_[i * n_ + j]; }
    double L(std::size_t i, std::size_t j) const { return l_[i * n_ + j]; }

    std::size_t n_;
    std::vector<double> l_;
};

/// Solves m v = rhs for positive-definite m.
inline Vector solve_spd(const SymmetricMatrix& m, std::span<const double> rhs) { return Cholesky(m).solve(rhs); }

}  // namespace scout
