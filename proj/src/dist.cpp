#include "stratx/dist.hpp"

#include <cmath>
#include <limits>

#include "stratx/errors.hpp"

namespace stratx {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 2000;

// Lower series: P(a,x) = x^a e^-x / Gamma(a) * sum_k x^k / (a(a+1)...(a+k)).
double gamma_p_series(double a, double x) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int i = 0; i < kMaxTerms; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper continued fraction (modified Lentz); returns Q(a,x) = 1 - P(a,x).
double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxTerms; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (a <= 0.0) throw DomainError("gamma_p: shape must be positive");
    if (x < 0.0) throw DomainError("gamma_p: x must be nonnegative");
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_contfrac(a, x);
}

double chi2_cdf(double x, int df) {
    if (df < 1) throw DomainError("chi2_cdf: df must be >= 1");
    if (x < 0.0) throw DomainError("chi2_cdf: x must be nonnegative");
    return gamma_p(0.5 * df, 0.5 * x);
}

double chi2_pdf(double x, int df) {
    if (df < 1) throw DomainError("chi2_pdf: df must be >= 1");
    if (x < 0.0) throw DomainError("chi2_pdf: x must be nonnegative");
    const double half = 0.5 * df;
    if (x == 0.0) {
        if (df == 1) return std::numeric_limits<double>::infinity();
        if (df == 2) return 0.5;
        return 0.0;
    }
    constexpr double ln2 = 0.693147180559945309417;
    return std::exp((half - 1.0) * std::log(x) - 0.5 * x - std::lgamma(half) -
                    half * ln2);
}

double chi2_quantile(double p, int df) {
    if (df < 1) throw DomainError("chi2_quantile: df must be >= 1");
    if (!(p > 0.0 && p < 1.0)) throw DomainError("chi2_quantile: p must lie in (0,1)");

    // Wilson-Hilferty start, clamped positive.
    const double dd = static_cast<double>(df);
    const double z = normal_quantile(p);
    const double t = 1.0 - 2.0 / (9.0 * dd) + z * std::sqrt(2.0 / (9.0 * dd));
    double x = dd * t * t * t;
    if (!(x > 0.0)) x = 0.5 * dd * p;  // tiny p fallback

    // Bracket the root.
    double lo = 0.0, hi = x;
    while (chi2_cdf(hi, df) < p) {
        lo = hi;
        hi = hi > 0.0 ? hi * 2.0 : 1.0;
        if (hi > 1e15) throw MaxIters("chi2_quantile: bracket expansion failed");
    }
    if (x <= lo || x >= hi) x = 0.5 * (lo + hi);

    for (int it = 0; it < 200; ++it) {
        const double f = chi2_cdf(x, df) - p;
        if (f > 0.0) hi = x; else lo = x;
        const double dens = chi2_pdf(x, df);
        double next = (dens > 0.0 && std::isfinite(dens)) ? x - f / dens
                                                          : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::fabs(next - x);
        x = next;
        if (step <= 1e-13 * std::max(1.0, std::fabs(x)) &&
            std::fabs(chi2_cdf(x, df) - p) <= 1e-10)
            return x;
    }
    if (std::fabs(chi2_cdf(x, df) - p) <= 1e-10) return x;
    throw MaxIters("chi2_quantile: no convergence after 200 iterations");
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0,1)");

    // Acklam's rational approximation.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Newton polish against the erfc-based CDF.
    const double dens = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    if (dens > 0.0) x -= (normal_cdf(x) - p) / dens;
    return x;
}

}  // namespace stratx
