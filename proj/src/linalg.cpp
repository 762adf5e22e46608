#include "stratx/linalg.hpp"

#include <cmath>

#include "stratx/errors.hpp"

namespace stratx {

SpdSolver::SpdSolver(const Eigen::MatrixXd& a) {
    const auto d = a.rows();
    if (a.cols() != d) throw DomainError("SpdSolver: matrix must be square");
    double max_diag = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) max_diag = std::max(max_diag, std::fabs(a(j, j)));
    const double pivot_tol = 1e-10 * max_diag;

    chol_ = a;
    for (Eigen::Index j = 0; j < d; ++j) {
        double pivot = chol_(j, j);
        for (Eigen::Index k = 0; k < j; ++k) pivot -= chol_(j, k) * chol_(j, k);
        if (!(pivot > pivot_tol)) {
            throw RankDeficient(static_cast<int>(j),
                                "Cholesky pivot " + std::to_string(j) +
                                    " below tolerance; matrix is rank deficient");
        }
        const double ljj = std::sqrt(pivot);
        chol_(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < d; ++i) {
            double s = chol_(i, j);
            for (Eigen::Index k = 0; k < j; ++k) s -= chol_(i, k) * chol_(j, k);
            chol_(i, j) = s / ljj;
        }
    }
}

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& b) const {
    const auto d = chol_.rows();
    if (b.size() != d) throw DomainError("SpdSolver::solve: dimension mismatch");
    Eigen::VectorXd y(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        double s = b(i);
        for (Eigen::Index k = 0; k < i; ++k) s -= chol_(i, k) * y(k);
        y(i) = s / chol_(i, i);
    }
    Eigen::VectorXd x(d);
    for (Eigen::Index i = d - 1; i >= 0; --i) {
        double s = y(i);
        for (Eigen::Index k = i + 1; k < d; ++k) s -= chol_(k, i) * x(k);
        x(i) = s / chol_(i, i);
    }
    return x;
}

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    return SpdSolver(a).solve(b);
}

}  // namespace stratx
