// Test-only reference implementations, independent of the library paths they
// check: quadrature for the chi-squared CDF, an erf-series normal CDF, a slow
// proximal-gradient lasso solver, and small enumeration helpers.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracles {

inline double chi2_density(double x, int df) {
    if (x < 0.0) return 0.0;
    if (x == 0.0) return df == 2 ? 0.5 : 0.0;  // df = 1 handled by substitution
    const double h = 0.5 * df;
    return std::exp((h - 1.0) * std::log(x) - 0.5 * x - std::lgamma(h) -
                    h * 0.693147180559945309417);
}

// Adaptive Simpson integration.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol, int depth = 24) {
    const double c = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fc = f(c);
    std::function<double(double, double, double, double, double, double, int)> rec =
        [&](double lo, double hi, double flo, double fhi, double fmid, double whole,
            int d) -> double {
        const double mid = 0.5 * (lo + hi);
        const double lmid = 0.5 * (lo + mid), rmid = 0.5 * (mid + hi);
        const double fl = f(lmid), fr = f(rmid);
        const double left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid);
        const double right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi);
        if (d <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
            return left + right + (left + right - whole) / 15.0;
        return rec(lo, mid, flo, fmid, fl, left, d - 1) +
               rec(mid, hi, fmid, fhi, fr, right, d - 1);
    };
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    return rec(a, b, fa, fb, fc, whole, depth);
}

inline double chi2_cdf_quadrature(double x, int df) {
    if (x <= 0.0) return 0.0;
    if (df == 1) {
        // substitute t = u^2: the integrand becomes sqrt(2/pi) exp(-u^2/2)
        auto g = [](double u) {
            return std::sqrt(2.0 / 3.14159265358979323846) * std::exp(-0.5 * u * u);
        };
        return adaptive_simpson(g, 0.0, std::sqrt(x), 1e-14);
    }
    auto f = [df](double t) { return chi2_density(t, df); };
    return adaptive_simpson(f, 0.0, x, 1e-14);
}

// Maclaurin series for erf, accurate to ~1e-15 for |x| <= 5.
inline double erf_series(double x) {
    if (x < 0.0) return -erf_series(-x);
    if (x > 5.9) return 1.0;
    const double two_over_sqrt_pi = 1.1283791670955125739;
    double term = x;
    double sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x * x / n;
        const double add = term / (2.0 * n + 1.0);
        sum += add;
        if (std::fabs(add) < 1e-18 * std::fabs(sum)) break;
    }
    return two_over_sqrt_pi * sum;
}

inline double normal_cdf_series(double x) {
    return 0.5 * (1.0 + erf_series(x / std::sqrt(2.0)));
}

inline double normal_quantile_bisect(double p) {
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (normal_cdf_series(mid) < p) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

// Slow-but-sure first-order reference for
//   min 0.5 sum_i v_i (r_i - d_i' beta)^2 + lambda ||beta||_1.
// Proximal (sub)gradient steps at 1/L; iteration cap 1e6 with an
// objective-stall early exit. Returns the final objective value.
inline double prox_gradient_lasso(const Eigen::VectorXd& r, const Eigen::MatrixXd& d,
                                  const Eigen::VectorXd& v, double lambda,
                                  Eigen::VectorXd* beta_out = nullptr,
                                  long max_iters = 1000000) {
    const Eigen::MatrixXd a = d.transpose() * v.asDiagonal() * d;
    const Eigen::VectorXd b = d.transpose() * (v.asDiagonal() * r);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const double lip = std::max(es.eigenvalues().maxCoeff(), 1e-12);
    const double step = 1.0 / lip;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d.cols());
    auto objective = [&](const Eigen::VectorXd& bb) {
        const Eigen::VectorXd res = r - d * bb;
        return 0.5 * (v.array() * res.array().square()).sum() + lambda * bb.lpNorm<1>();
    };
    double prev = objective(beta);
    int stall = 0;
    for (long it = 0; it < max_iters; ++it) {
        const Eigen::VectorXd grad = a * beta - b;
        for (Eigen::Index j = 0; j < beta.size(); ++j)
            beta(j) = soft_threshold(beta(j) - step * grad(j), step * lambda);
        if (it % 100 == 99) {
            const double obj = objective(beta);
            if (prev - obj < 1e-16 * std::max(1.0, std::fabs(prev))) {
                if (++stall >= 5) break;
            } else {
                stall = 0;
            }
            prev = obj;
        }
    }
    if (beta_out) *beta_out = beta;
    return objective(beta);
}

}  // namespace oracles
