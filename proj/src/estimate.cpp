#include "stratx/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stratx/dist.hpp"
#include "stratx/errors.hpp"
#include "stratx/linalg.hpp"

namespace stratx {

namespace {

struct BlockArm {
    int count = 0;
    double y_sum = 0.0;
    double y_mean() const { return y_sum / count; }
};

struct BlockSummary {
    // [m][z]
    std::vector<std::array<BlockArm, 2>> arms;
    std::vector<std::vector<int>> units;
};

BlockSummary summarize(const ExperimentData& data) {
    if (!data.has_outcome() || !data.has_assignment())
        throw DomainError("estimator: data must carry outcomes and assignments");
    BlockSummary s;
    s.units = data.blocks.units_by_block();
    s.arms.resize(static_cast<std::size_t>(data.blocks.num_blocks()));
    for (int i = 0; i < data.n(); ++i) {
        const int m = data.blocks.block_of[static_cast<std::size_t>(i)];
        auto& a = s.arms[static_cast<std::size_t>(m)][static_cast<std::size_t>(data.Z(i))];
        ++a.count;
        a.y_sum += data.Y(i);
    }
    for (std::size_t m = 0; m < s.arms.size(); ++m) {
        if (s.arms[m][0].count < 2 || s.arms[m][1].count < 2)
            throw DomainError("estimator: block " + std::to_string(m + 1) +
                              " has fewer than 2 units in an arm");
    }
    return s;
}

// Per-block per-arm sample variance of Y_i - (x_i - xbar_[m]z)' beta, i.e.
// the residual variance once `beta` absorbs the covariates. beta empty means
// raw outcomes.
MatrixXd residual_variances(const ExperimentData& data, const BlockSummary& s,
                            const VectorXd& beta) {
    const int mcount = data.blocks.num_blocks();
    MatrixXd out(mcount, 2);
    const bool adjusted = beta.size() > 0;
    VectorXd xb;
    if (adjusted) xb = data.X * beta;
    for (int m = 0; m < mcount; ++m) {
        for (int z = 0; z < 2; ++z) {
            const auto& arm = s.arms[static_cast<std::size_t>(m)][static_cast<std::size_t>(z)];
            double mean_r = 0.0;
            for (int i : s.units[static_cast<std::size_t>(m)]) {
                if (data.Z(i) != z) continue;
                mean_r += data.Y(i) - (adjusted ? xb(i) : 0.0);
            }
            mean_r /= arm.count;
            double ss = 0.0;
            for (int i : s.units[static_cast<std::size_t>(m)]) {
                if (data.Z(i) != z) continue;
                const double r = data.Y(i) - (adjusted ? xb(i) : 0.0) - mean_r;
                ss += r * r;
            }
            out(m, z == 1 ? 0 : 1) = ss / (arm.count - 1);
        }
    }
    return out;  // column 0 = arm 1, column 1 = arm 0
}

double weighted_variance_sum(const ExperimentData& data, const MatrixXd& resid_var,
                             double df1, double df0) {
    double total = 0.0;
    for (int m = 0; m < data.blocks.num_blocks(); ++m) {
        const double e = data.blocks.propensity(m);
        total += data.blocks.weight(m) *
                 (df1 * resid_var(m, 0) / e + df0 * resid_var(m, 1) / (1.0 - e));
    }
    return total;
}

int arm_total(const ExperimentData& data, int z) {
    int c = 0;
    for (Eigen::Index i = 0; i < data.Z.size(); ++i) c += data.Z(i) == z ? 1 : 0;
    return c;
}

}  // namespace

double tau_unadj(const ExperimentData& data) {
    const auto s = summarize(data);
    double tau = 0.0;
    for (int m = 0; m < data.blocks.num_blocks(); ++m)
        tau += data.blocks.weight(m) * (s.arms[static_cast<std::size_t>(m)][1].y_mean() -
                                        s.arms[static_cast<std::size_t>(m)][0].y_mean());
    return tau;
}

double var_unadj(const ExperimentData& data) {
    const auto s = summarize(data);
    const MatrixXd rv = residual_variances(data, s, VectorXd());
    return weighted_variance_sum(data, rv, 1.0, 1.0) / data.n();
}

std::pair<double, double> confidence_interval(double tau_hat, double var_hat, double alpha) {
    if (var_hat < 0.0) throw DomainError("confidence_interval: negative variance");
    const double q = normal_quantile(1.0 - alpha / 2.0);
    const double half = q * std::sqrt(var_hat);
    return {tau_hat - half, tau_hat + half};
}

EstimateReport report_unadj(const ExperimentData& data, double alpha) {
    const auto s = summarize(data);
    EstimateReport rep;
    rep.method = "unadj";
    rep.alpha = alpha;
    rep.tau_hat = tau_unadj(data);
    rep.block_residual_var = residual_variances(data, s, VectorXd());
    rep.var_hat = weighted_variance_sum(data, rep.block_residual_var, 1.0, 1.0) / data.n();
    rep.ci = confidence_interval(rep.tau_hat, rep.var_hat, alpha);
    return rep;
}

std::pair<double, RerandVarianceParts> var_unadj_rerand(const ExperimentData& data,
                                                        const MatrixXd& w, double a) {
    const auto s = summarize(data);
    const int k = static_cast<int>(w.cols());
    if (k < 1) throw DomainError("var_unadj_rerand: W required");
    if (w.rows() != data.n()) throw DomainError("var_unadj_rerand: W row count mismatch");

    const int mcount = data.blocks.num_blocks();
    RerandVarianceParts parts;
    parts.v_wy_hat = VectorXd::Zero(k);
    parts.v_ww = MatrixXd::Zero(k, k);

    for (int m = 0; m < mcount; ++m) {
        const auto& units = s.units[static_cast<std::size_t>(m)];
        const double pi_m = data.blocks.weight(m);
        const double e = data.blocks.propensity(m);

        // Fixed-population covariance of W within the block.
        VectorXd w_mean = VectorXd::Zero(k);
        for (int i : units) w_mean += w.row(i).transpose();
        w_mean /= static_cast<double>(units.size());
        MatrixXd s2w = MatrixXd::Zero(k, k);
        for (int i : units) {
            const VectorXd d = w.row(i).transpose() - w_mean;
            s2w.noalias() += d * d.transpose();
        }
        s2w /= static_cast<double>(units.size() - 1);
        parts.v_ww += pi_m / (e * (1.0 - e)) * s2w;

        // Sample covariance of (W, observed Y) within each arm.
        for (int z = 0; z < 2; ++z) {
            const auto& arm = s.arms[static_cast<std::size_t>(m)][static_cast<std::size_t>(z)];
            VectorXd wz_mean = VectorXd::Zero(k);
            for (int i : units)
                if (data.Z(i) == z) wz_mean += w.row(i).transpose();
            wz_mean /= arm.count;
            const double y_mean = arm.y_mean();
            VectorXd cov = VectorXd::Zero(k);
            for (int i : units) {
                if (data.Z(i) != z) continue;
                cov += (w.row(i).transpose() - wz_mean) * (data.Y(i) - y_mean);
            }
            cov /= arm.count - 1;
            parts.v_wy_hat += pi_m * cov / (z == 1 ? e : 1.0 - e);
        }
    }

    const double sigma2_unadj = var_unadj(data) * data.n();  // sqrt(n) scale
    const SpdSolver ww(parts.v_ww);
    double r2 = parts.v_wy_hat.dot(ww.solve(parts.v_wy_hat)) / sigma2_unadj;
    parts.r2_hat = std::clamp(r2, 0.0, 1.0);

    if (std::isinf(a)) {
        parts.v_ka = 1.0;
    } else {
        const double denom = chi2_cdf(a, k);
        if (!(denom > 0.0)) throw DomainError("var_unadj_rerand: P(chi2_k <= a) is zero");
        parts.v_ka = chi2_cdf(a, k + 2) / denom;
    }

    const double sigma2 = sigma2_unadj * (1.0 - (1.0 - parts.v_ka) * parts.r2_hat);
    return {sigma2 / data.n(), parts};
}

EstimateReport report_unadj_rerand(const ExperimentData& data, const MatrixXd& w, double a,
                                   double alpha) {
    EstimateReport rep = report_unadj(data, alpha);
    auto [var, parts] = var_unadj_rerand(data, w, a);
    rep.var_hat = var;
    rep.rerand_adjusted = true;
    rep.ci = confidence_interval(rep.tau_hat, rep.var_hat, alpha);
    return rep;
}

EstimateReport report_lasso(const ExperimentData& data, const LassoFit& fit1,
                            const LassoFit& fit0, double alpha) {
    const auto s = summarize(data);
    const int mcount = data.blocks.num_blocks();
    const int p = data.p();
    if (fit1.beta.size() != p || fit0.beta.size() != p)
        throw DomainError("report_lasso: coefficient length mismatch");

    // Point estimate: block-arm means minus the fitted covariate imbalance.
    double tau = 0.0;
    const VectorXd xb1 = data.X * fit1.beta;
    const VectorXd xb0 = data.X * fit0.beta;
    for (int m = 0; m < mcount; ++m) {
        const auto& units = s.units[static_cast<std::size_t>(m)];
        double m1 = 0.0, m0 = 0.0, mall1 = 0.0, mall0 = 0.0;
        int c1 = 0, c0 = 0;
        for (int i : units) {
            if (data.Z(i) == 1) {
                m1 += data.Y(i) - xb1(i);
                ++c1;
            } else {
                m0 += data.Y(i) - xb0(i);
                ++c0;
            }
            mall1 += xb1(i);
            mall0 += xb0(i);
        }
        // Ybar_[m]z - (xbar_[m]z - xbar_[m])' beta_z written as the mean of
        // Y - x'beta over the arm plus the block-mean of x'beta.
        const double adj1 = m1 / c1 + mall1 / static_cast<double>(units.size());
        const double adj0 = m0 / c0 + mall0 / static_cast<double>(units.size());
        tau += data.blocks.weight(m) * (adj1 - adj0);
    }

    const int s1 = fit1.nnz();
    const int s0 = fit0.nnz();
    const int n1 = arm_total(data, 1);
    const int n0 = arm_total(data, 0);
    if (n1 - s1 - 1 <= 0)
        throw DegreesOfFreedomExhausted("report_lasso: n1=" + std::to_string(n1) +
                                        " <= s_hat(1)+1=" + std::to_string(s1 + 1));
    if (n0 - s0 - 1 <= 0)
        throw DegreesOfFreedomExhausted("report_lasso: n0=" + std::to_string(n0) +
                                        " <= s_hat(0)+1=" + std::to_string(s0 + 1));

    EstimateReport rep;
    rep.method = "lasso";
    rep.alpha = alpha;
    rep.tau_hat = tau;
    rep.s_hat = {s1, s0};

    MatrixXd rv(mcount, 2);
    rv.col(0) = residual_variances(data, s, fit1.beta).col(0);
    rv.col(1) = residual_variances(data, s, fit0.beta).col(1);
    rep.block_residual_var = rv;

    const double df1 = static_cast<double>(n1) / (n1 - s1 - 1);
    const double df0 = static_cast<double>(n0) / (n0 - s0 - 1);
    rep.var_hat = weighted_variance_sum(data, rv, df1, df0) / data.n();
    rep.ci = confidence_interval(rep.tau_hat, rep.var_hat, alpha);
    return rep;
}

EstimateReport report_lasso2(const ExperimentData& data, const LassoFit& gfit1,
                             const LassoFit& gfit0, double alpha) {
    const auto s = summarize(data);
    const int mcount = data.blocks.num_blocks();
    const int p = data.p();
    if (gfit1.beta.size() != p || gfit0.beta.size() != p)
        throw DomainError("report_lasso2: coefficient length mismatch");

    const VectorXd gamma = gfit1.beta + gfit0.beta;
    int s_hat = 0;
    for (Eigen::Index j = 0; j < gamma.size(); ++j)
        if (gamma(j) != 0.0) ++s_hat;
    const int n = data.n();
    if (n - s_hat - 1 <= 0)
        throw DegreesOfFreedomExhausted("report_lasso2: n=" + std::to_string(n) +
                                        " <= s_hat+1=" + std::to_string(s_hat + 1));

    // tau_X' gamma with tau_X = sum_m pi_[m] (xbar_[m]1 - xbar_[m]0); only the
    // scalar x_i' gamma is needed per unit.
    const VectorXd xg = data.X * gamma;
    double tau_x_gamma = 0.0;
    for (int m = 0; m < mcount; ++m) {
        const auto& units = s.units[static_cast<std::size_t>(m)];
        double g1 = 0.0, g0 = 0.0;
        int c1 = 0, c0 = 0;
        for (int i : units) {
            if (data.Z(i) == 1) {
                g1 += xg(i);
                ++c1;
            } else {
                g0 += xg(i);
                ++c0;
            }
        }
        tau_x_gamma += data.blocks.weight(m) * (g1 / c1 - g0 / c0);
    }

    EstimateReport rep;
    rep.method = "lasso2";
    rep.alpha = alpha;
    rep.tau_hat = tau_unadj(data) - tau_x_gamma;
    rep.s_hat = {s_hat};
    rep.block_residual_var = residual_variances(data, s, gamma);

    const double df = static_cast<double>(n) / (n - s_hat - 1);
    rep.var_hat = df * weighted_variance_sum(data, rep.block_residual_var, 1.0, 1.0) / n;
    rep.ci = confidence_interval(rep.tau_hat, rep.var_hat, alpha);
    return rep;
}

}  // namespace stratx
