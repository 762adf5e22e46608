#include "stratx/design.hpp"

#include <cmath>
#include <limits>

#include "stratx/dist.hpp"
#include "stratx/errors.hpp"

namespace stratx {

VectorXi draw_complete(int n, int n1, Rng& rng) {
    if (!(n1 >= 2 && n1 <= n - 2))
        throw DomainError("draw_complete: require 2 <= n1 <= n - 2 (n=" + std::to_string(n) +
                          ", n1=" + std::to_string(n1) + ")");
    VectorXi z = VectorXi::Zero(n);
    for (int i : rng.choose_without_replacement(n, n1)) z(i) = 1;
    return z;
}

VectorXi draw_stratified(const BlockStructure& blocks, Rng& rng) {
    if (!blocks.treated_known())
        throw DomainError("draw_stratified: treated counts not set");
    VectorXi z = VectorXi::Zero(blocks.n());
    const auto units = blocks.units_by_block();
    for (int m = 0; m < blocks.num_blocks(); ++m) {
        const auto& u = units[static_cast<std::size_t>(m)];
        const int nm = static_cast<int>(u.size());
        const int n1 = blocks.treated[static_cast<std::size_t>(m)];
        if (!(n1 >= 2 && n1 <= nm - 2))
            throw DomainError("draw_stratified: block " + std::to_string(m + 1) +
                              " violates 2 <= n1 <= n - 2");
        for (int idx : rng.choose_without_replacement(nm, n1)) z(u[static_cast<std::size_t>(idx)]) = 1;
    }
    return z;
}

namespace {

// cov(tau_W) = (1/n) sum_m pi_[m] S2_[m]W / {e_[m](1 - e_[m])}
MatrixXd tau_w_covariance(const MatrixXd& w, const BlockStructure& blocks,
                          const std::vector<std::vector<int>>& units) {
    const int k = static_cast<int>(w.cols());
    const int n = blocks.n();
    MatrixXd cov = MatrixXd::Zero(k, k);
    for (int m = 0; m < blocks.num_blocks(); ++m) {
        const auto& u = units[static_cast<std::size_t>(m)];
        const int nm = static_cast<int>(u.size());
        if (nm < 2) throw DomainError("mahalanobis: block with fewer than 2 units");
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
        for (int i : u) mean += w.row(i).transpose();
        mean /= static_cast<double>(nm);
        MatrixXd s2 = MatrixXd::Zero(k, k);
        for (int i : u) {
            const Eigen::VectorXd d = w.row(i).transpose() - mean;
            s2.noalias() += d * d.transpose();
        }
        s2 /= static_cast<double>(nm - 1);
        const double e = blocks.propensity(m);
        cov += blocks.weight(m) / (e * (1.0 - e)) * s2;
    }
    cov /= static_cast<double>(n);
    return cov;
}

}  // namespace

MahalanobisStat::MahalanobisStat(const MatrixXd& w, const BlockStructure& blocks)
    : w_(w),
      blocks_(blocks),
      units_(blocks.units_by_block()),
      cov_solver_(tau_w_covariance(w, blocks, units_)) {
    if (w.rows() != blocks.n()) throw DomainError("MahalanobisStat: W row count mismatch");
    if (!blocks.treated_known()) throw DomainError("MahalanobisStat: treated counts not set");
}

double MahalanobisStat::operator()(const VectorXi& z) const {
    const int k = static_cast<int>(w_.cols());
    Eigen::VectorXd tau_w = Eigen::VectorXd::Zero(k);
    for (int m = 0; m < blocks_.num_blocks(); ++m) {
        const auto& u = units_[static_cast<std::size_t>(m)];
        Eigen::VectorXd sum1 = Eigen::VectorXd::Zero(k);
        Eigen::VectorXd sum0 = Eigen::VectorXd::Zero(k);
        int n1 = 0;
        for (int i : u) {
            if (z(i) == 1) {
                sum1 += w_.row(i).transpose();
                ++n1;
            } else {
                sum0 += w_.row(i).transpose();
            }
        }
        const int n0 = static_cast<int>(u.size()) - n1;
        if (n1 == 0 || n0 == 0)
            throw DomainError("mahalanobis: empty arm in block " + std::to_string(m + 1));
        tau_w += blocks_.weight(m) * (sum1 / n1 - sum0 / n0);
    }
    return tau_w.dot(cov_solver_.solve(tau_w));
}

double mahalanobis(const VectorXi& z, const MatrixXd& w, const BlockStructure& blocks) {
    return MahalanobisStat(w, blocks)(z);
}

double compute_threshold(double p_a, int k) {
    if (!(p_a > 0.0 && p_a <= 1.0)) throw DomainError("compute_threshold: p_a must lie in (0,1]");
    if (k < 1) throw DomainError("compute_threshold: k must be >= 1");
    if (p_a == 1.0) return std::numeric_limits<double>::infinity();
    return chi2_quantile(p_a, k);
}

DesignResult draw_rerandomized(const DesignSpec& spec, Rng& rng) {
    if (spec.W.cols() < 1) throw DomainError("draw_rerandomized: W required");
    const bool stratified = spec.kind == DesignKind::stratified_rerandomized;
    if (!stratified && spec.blocks.num_blocks() != 1)
        throw DomainError("draw_rerandomized: complete kind requires a single block");
    const int k = static_cast<int>(spec.W.cols());
    const double a = compute_threshold(spec.p_a, k);
    const int cap = spec.max_draws > 0
                        ? spec.max_draws
                        : 10 * static_cast<int>(std::ceil(1.0 / spec.p_a));
    const MahalanobisStat stat(spec.W, spec.blocks);

    for (int draw = 1; draw <= cap; ++draw) {
        VectorXi z = stratified ? draw_stratified(spec.blocks, rng)
                                : draw_complete(spec.blocks.n(), spec.blocks.treated.at(0), rng);
        const double ma = stat(z);
        if (ma <= a) {
            DesignResult res;
            res.Z = std::move(z);
            res.draws_used = draw;
            res.mahalanobis = ma;
            res.threshold_a = a;
            return res;
        }
    }
    throw MaxDrawsExceeded(cap, "rerandomization rejected " + std::to_string(cap) +
                                    " consecutive draws (p_a=" + std::to_string(spec.p_a) + ")");
}

DesignResult run_design(const DesignSpec& spec, Rng& rng) {
    switch (spec.kind) {
        case DesignKind::complete: {
            if (spec.blocks.num_blocks() != 1)
                throw DomainError("run_design: complete kind requires a single block");
            DesignResult res;
            res.Z = draw_complete(spec.blocks.n(), spec.blocks.treated.at(0), rng);
            return res;
        }
        case DesignKind::stratified: {
            DesignResult res;
            res.Z = draw_stratified(spec.blocks, rng);
            return res;
        }
        case DesignKind::rerandomized:
        case DesignKind::stratified_rerandomized:
            return draw_rerandomized(spec, rng);
    }
    throw DomainError("run_design: unknown kind");
}

}  // namespace stratx
