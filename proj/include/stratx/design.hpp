#pragma once

#include <optional>

#include "stratx/linalg.hpp"
#include "stratx/rng.hpp"
#include "stratx/types.hpp"

namespace stratx {

enum class DesignKind { complete, stratified, rerandomized, stratified_rerandomized };

// What to randomize. `blocks` always carries the treated counts; complete
// kinds use a single block. W is required for the rerandomized kinds.
// max_draws = 0 means the default cap 10 * ceil(1 / p_a).
struct DesignSpec {
    DesignKind kind = DesignKind::complete;
    BlockStructure blocks;
    MatrixXd W;
    double p_a = 0.001;
    int max_draws = 0;
};

struct DesignResult {
    VectorXi Z;
    int draws_used = 1;
    std::optional<double> mahalanobis;
    std::optional<double> threshold_a;
};

// Uniform over all (n choose n1) assignments. Requires 2 <= n1 <= n - 2.
VectorXi draw_complete(int n, int n1, Rng& rng);

// Product of independent per-block complete randomizations.
VectorXi draw_stratified(const BlockStructure& blocks, Rng& rng);

// Balance statistic of an assignment: the squared covariate mean difference
// scaled by its known randomization covariance. The weighted form
//   tau_W = sum_m pi_[m] (Wbar_[m]1 - Wbar_[m]0),
//   cov   = (1/n) sum_m pi_[m] S2_[m]W / {e_[m] (1 - e_[m])},
// reduces to the complete-randomization expression {n/(n1 n0)} S2_W when
// M = 1. The covariance comes from the fixed finite population, never from
// the draw, and is factored once so repeated draws are cheap.
class MahalanobisStat {
  public:
    MahalanobisStat(const MatrixXd& w, const BlockStructure& blocks);
    double operator()(const VectorXi& z) const;

  private:
    const MatrixXd& w_;
    const BlockStructure& blocks_;
    std::vector<std::vector<int>> units_;
    SpdSolver cov_solver_;
};

double mahalanobis(const VectorXi& z, const MatrixXd& w, const BlockStructure& blocks);

// a with P(chi2_k <= a) = p_a; +infinity when p_a = 1 (every draw accepted).
double compute_threshold(double p_a, int k);

// Algorithm: repeat the base draw until Ma <= a. Throws MaxDrawsExceeded
// after spec.max_draws rejections.
DesignResult draw_rerandomized(const DesignSpec& spec, Rng& rng);

// Dispatch over all four kinds.
DesignResult run_design(const DesignSpec& spec, Rng& rng);

}  // namespace stratx
