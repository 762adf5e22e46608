#pragma once

#include <optional>
#include <vector>

#include "stratx/rng.hpp"
#include "stratx/types.hpp"

namespace stratx {

// Weighted l1-penalized least squares in standard form:
//   minimize (1/2) sum_i v_i (r_i - d_i' beta)^2 + lambda * ||beta||_1.
// Response and predictors arrive already centered/transformed by one of the
// builders below.
struct WeightedLassoProblem {
    VectorXd response;    // r, one row per unit of a single arm
    MatrixXd predictors;  // D
    VectorXd weights;     // v >= 0, sum positive
    double lambda = 0.0;
};

struct CvInfo {
    VectorXd lambda_grid;     // descending
    VectorXd cv_error;        // weighted held-out squared error per lambda
    double chosen_lambda = 0.0;
    std::vector<int> fold_of;  // per arm unit (data order), -1 for other-arm units
    bool all_rejected = false; // every lambda violated the sparsity cap
};

struct LassoFit {
    VectorXd beta;
    std::vector<int> active_set;
    double lambda = 0.0;
    int n_iter = 0;            // coordinate-descent sweeps
    double kkt_residual = 0.0;
    std::optional<CvInfo> cv;

    int nnz() const { return static_cast<int>(active_set.size()); }
};

// Per-arm block-centered problem: for arm z, weights pi_[m]/(n_[m]z - 1),
// response Y_i - Ybar_[m]z, predictors x_i - xbar_[m]z. Its minimizer is the
// Lasso-adjusted vector for that arm. Requires >= 2 units per block-arm.
WeightedLassoProblem build_arm_problem(const ExperimentData& data, int arm, double lambda);

// Projection-form problem for arm z with block weights
//   omega   = n_[m] / (n_[m]z - 1),
//   omega_Y = (1 - e_[m]z) / e_[m]z,
//   omega_X = 1 / {e_[m]z (1 - e_[m]z)},   e_[m]z = z e_[m] + (1-z)(1-e_[m]);
// v = omega, r = sqrt(omega_Y) (Y - Ybar_[m]z), D = sqrt(omega_X) (x - xbar_[m]z).
// The two arm minimizers sum to the projection coefficient estimate.
WeightedLassoProblem build_projection_problem(const ExperimentData& data, int arm, double lambda);

double lambda_max(const WeightedLassoProblem& problem);

struct SolveOptions {
    // Convergence: max coordinate change below tol_scale * max(1, ||r||_inf)
    // and KKT residual below kkt_margin * kkt_scale * max(1, lambda_max).
    double tol_scale = 1e-7;
    double kkt_scale = 1e-7;
    double kkt_margin = 0.5;
    int max_sweeps = 100000;
    VectorXd warm_start;  // empty = start at zero
    // Interior path fits skip the KKT certificate; every returned fit keeps it.
    bool verify_kkt = true;
    bool track_objective = false;
    std::vector<double>* objective_trace = nullptr;
};

// Cyclic coordinate descent with soft-threshold updates, active-set sweeps
// after each full pass, and a verified KKT certificate on the returned fit.
// Throws MaxIters if the sweep budget is exhausted (ill-conditioning).
LassoFit solve(const WeightedLassoProblem& problem, const SolveOptions& opts = {});

enum class ProblemKind { arm_centered, projection };

struct CvOptions {
    int folds = 10;
    int grid_size = 100;
    double grid_ratio = 1e-3;       // lambda_min = ratio * lambda_max
    double sparsity_cap = 0.0;      // 0 = data.n() / 3
};

// 10-fold cross-validation over a geometric lambda grid, folds stratified by
// block within the arm, centering statistics recomputed on training folds.
// The chosen lambda minimizes held-out error among grid points whose
// full-data fit keeps ||beta||_0 < n/3; the returned fit is the full-data fit
// at that lambda. If every lambda violates the cap, returns the lambda_max
// fit (beta = 0) flagged all_rejected.
LassoFit cv_select(const ExperimentData& data, int arm, ProblemKind kind, Rng& rng,
                   const CvOptions& opts = {});

}  // namespace stratx
