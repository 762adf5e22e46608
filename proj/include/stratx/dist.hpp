#pragma once

namespace stratx {

// Regularized lower incomplete gamma P(a, x). Series expansion for
// x < a + 1, continued fraction otherwise. Absolute error below 1e-13
// over the ranges used here.
double gamma_p(double a, double x);

// Chi-squared CDF, P(df/2, x/2). Throws DomainError for x < 0 or df < 1.
double chi2_cdf(double x, int df);

double chi2_pdf(double x, int df);

// Inverse chi-squared CDF via a Wilson-Hilferty start and safeguarded
// Newton iteration; |chi2_cdf(result, df) - p| <= 1e-10. Throws MaxIters
// after 200 iterations (indicates a numerics bug, not bad input).
double chi2_quantile(double p, int df);

// Standard normal quantile: rational approximation (Acklam) polished with
// one Newton step on the erfc-based CDF. |error| well below 1e-9.
double normal_quantile(double p);

double normal_cdf(double x);

}  // namespace stratx
