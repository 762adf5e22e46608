#pragma once

#include <Eigen/Dense>

namespace stratx {

// Cholesky factorization of a small symmetric positive definite matrix with
// an explicit pivot tolerance: a pivot below 1e-10 * max diagonal raises
// RankDeficient carrying the failing pivot index, which tells callers which
// covariate made the design covariance singular.
class SpdSolver {
  public:
    explicit SpdSolver(const Eigen::MatrixXd& a);

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

    int dim() const { return static_cast<int>(chol_.rows()); }

  private:
    Eigen::MatrixXd chol_;  // lower triangular factor
};

// One-shot Cholesky solve of A x = b.
Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

}  // namespace stratx
