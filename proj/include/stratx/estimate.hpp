#pragma once

#include <utility>

#include "stratx/lasso.hpp"
#include "stratx/types.hpp"

namespace stratx {

// Point estimate with conservative variance and normal-based confidence
// interval. var_hat is on the tau-hat scale (sigma^2 / n) so interval
// construction is uniform across methods.
struct EstimateReport {
    std::string method;   // "unadj", "lasso", "lasso2"
    double tau_hat = 0.0;
    double var_hat = 0.0;
    double alpha = 0.05;
    std::pair<double, double> ci{0.0, 0.0};
    std::vector<int> s_hat;                 // selected counts: {s(1), s(0)} or {s}
    bool rerand_adjusted = false;
    MatrixXd block_residual_var;            // M x 2: per-block arm-1 / arm-0 residual variances
};

// Pieces of the rerandomization-aware variance, kept for diagnostics.
struct RerandVarianceParts {
    VectorXd v_wy_hat;   // k
    MatrixXd v_ww;       // k x k, from the fixed design covariates
    double r2_hat = 0.0; // squared multiple correlation, clamped to [0,1]
    double v_ka = 1.0;   // P(chi2_{k+2} <= a) / P(chi2_k <= a)
};

// Weighted difference-in-means sum_m pi_[m] (Ybar_[m]1 - Ybar_[m]0).
double tau_unadj(const ExperimentData& data);

// Conservative variance sum_m pi_[m] { s2_[m]Y(1)/e_[m] + s2_[m]Y(0)/(1-e_[m]) },
// returned divided by n (tau-hat scale).
double var_unadj(const ExperimentData& data);

// Rerandomization-aware conservative variance
//   sigma2_unadj * { 1 - (1 - v_{k,a}) R2_hat },
// returned on the tau-hat scale together with its parts. Throws RankDeficient
// if the design covariance of W is singular.
std::pair<double, RerandVarianceParts> var_unadj_rerand(const ExperimentData& data,
                                                        const MatrixXd& w, double a);

std::pair<double, double> confidence_interval(double tau_hat, double var_hat, double alpha);

EstimateReport report_unadj(const ExperimentData& data, double alpha);

// Unadjusted estimate with the rerandomization-aware variance (threshold a
// from the design stage).
EstimateReport report_unadj_rerand(const ExperimentData& data, const MatrixXd& w, double a,
                                   double alpha);

// Lasso-adjusted estimator from per-arm fits of build_arm_problem; variance
// carries the degrees-of-freedom factor n_z / (n_z - s_hat(z) - 1). Throws
// DegreesOfFreedomExhausted when n_z <= s_hat(z) + 1 (never clamps).
EstimateReport report_lasso(const ExperimentData& data, const LassoFit& fit1,
                            const LassoFit& fit0, double alpha);

// Projection-originated estimator from per-arm fits of
// build_projection_problem: tau_unadj - tau_X' (gamma1 + gamma0), with the
// combined coefficient used for residuals in both arms.
EstimateReport report_lasso2(const ExperimentData& data, const LassoFit& gfit1,
                             const LassoFit& gfit0, double alpha);

}  // namespace stratx
