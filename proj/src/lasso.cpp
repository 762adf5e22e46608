#include "stratx/lasso.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "stratx/errors.hpp"

namespace stratx {

namespace {

// Per-block statistics of one arm over a subset of its units.
struct ArmBlockStats {
    std::vector<int> count;        // units of the arm (subset) per block
    std::vector<double> y_mean;
    MatrixXd x_mean;               // M x p
};

ArmBlockStats arm_stats(const ExperimentData& data, int arm, const std::vector<char>* in_subset) {
    const int mcount = data.blocks.num_blocks();
    ArmBlockStats st;
    st.count.assign(static_cast<std::size_t>(mcount), 0);
    st.y_mean.assign(static_cast<std::size_t>(mcount), 0.0);
    st.x_mean = MatrixXd::Zero(mcount, data.p());
    for (int i = 0; i < data.n(); ++i) {
        if (data.Z(i) != arm) continue;
        if (in_subset && !(*in_subset)[static_cast<std::size_t>(i)]) continue;
        const int m = data.blocks.block_of[static_cast<std::size_t>(i)];
        ++st.count[static_cast<std::size_t>(m)];
        st.y_mean[static_cast<std::size_t>(m)] += data.Y(i);
        st.x_mean.row(m) += data.X.row(i);
    }
    for (int m = 0; m < mcount; ++m) {
        if (st.count[static_cast<std::size_t>(m)] > 0) {
            st.y_mean[static_cast<std::size_t>(m)] /= st.count[static_cast<std::size_t>(m)];
            st.x_mean.row(m) /= st.count[static_cast<std::size_t>(m)];
        }
    }
    return st;
}

void require_analysis_fields(const ExperimentData& data) {
    if (!data.has_outcome() || !data.has_assignment())
        throw DomainError("lasso problem: data must carry outcomes and assignments");
    if (!data.blocks.treated_known())
        throw DomainError("lasso problem: treated counts not set");
}

// Shared assembly for both problem kinds; rows are the arm's units in data
// order, restricted to blocks where the (subset) arm count is >= 2.
WeightedLassoProblem assemble(const ExperimentData& data, int arm, ProblemKind kind,
                              double lambda, const ArmBlockStats& st,
                              const std::vector<char>* in_subset, bool require_full_blocks,
                              std::vector<int>* row_units) {
    const int mcount = data.blocks.num_blocks();
    if (require_full_blocks) {
        for (int m = 0; m < mcount; ++m)
            if (st.count[static_cast<std::size_t>(m)] < 2)
                throw DomainError("lasso problem: block " + std::to_string(m + 1) + " has " +
                                  std::to_string(st.count[static_cast<std::size_t>(m)]) +
                                  " units in arm " + std::to_string(arm) + "; need >= 2");
    }

    std::vector<int> rows;
    for (int i = 0; i < data.n(); ++i) {
        if (data.Z(i) != arm) continue;
        if (in_subset && !(*in_subset)[static_cast<std::size_t>(i)]) continue;
        const int m = data.blocks.block_of[static_cast<std::size_t>(i)];
        if (st.count[static_cast<std::size_t>(m)] < 2) continue;  // degenerate block skipped
        rows.push_back(i);
    }

    WeightedLassoProblem prob;
    prob.lambda = lambda;
    const int nr = static_cast<int>(rows.size());
    prob.response.resize(nr);
    prob.predictors.resize(nr, data.p());
    prob.weights.resize(nr);

    for (int rix = 0; rix < nr; ++rix) {
        const int i = rows[static_cast<std::size_t>(rix)];
        const int m = data.blocks.block_of[static_cast<std::size_t>(i)];
        const int nmz = st.count[static_cast<std::size_t>(m)];
        const double y_c = data.Y(i) - st.y_mean[static_cast<std::size_t>(m)];
        if (kind == ProblemKind::arm_centered) {
            prob.weights(rix) = data.blocks.weight(m) / (nmz - 1);
            prob.response(rix) = y_c;
            prob.predictors.row(rix) = data.X.row(i) - st.x_mean.row(m);
        } else {
            const double e_m = data.blocks.propensity(m);
            const double e_mz = arm == 1 ? e_m : 1.0 - e_m;
            const double omega = data.blocks.sizes[static_cast<std::size_t>(m)] /
                                 static_cast<double>(nmz - 1);
            const double omega_y = (1.0 - e_mz) / e_mz;
            const double omega_x = 1.0 / (e_mz * (1.0 - e_mz));
            prob.weights(rix) = omega;
            prob.response(rix) = std::sqrt(omega_y) * y_c;
            prob.predictors.row(rix) =
                std::sqrt(omega_x) * (data.X.row(i) - st.x_mean.row(m));
        }
    }
    if (row_units) *row_units = std::move(rows);
    return prob;
}

// Cyclic coordinate descent core, reusable across a lambda path (warm
// starts: beta persists between fit() calls).
class CdCore {
  public:
    CdCore(const VectorXd& r, const MatrixXd& d, const VectorXd& v)
        : r_(r), d_(d), v_(v) {
        if (r.size() != d.rows() || r.size() != v.size())
            throw DomainError("lasso solve: dimension mismatch");
        if (v.size() == 0 || !(v.sum() > 0.0))
            throw DomainError("lasso solve: weights must have positive sum");
        if ((v.array() < 0.0).any())
            throw DomainError("lasso solve: weights must be nonnegative");
        wd_ = (d.array().colwise() * v.array()).matrix();
        col_norm_ = (d.array().square().colwise() * v.array()).colwise().sum();
        beta_ = VectorXd::Zero(d.cols());
        residual_ = r;
        grad_ = wd_.transpose() * r_;
        grad_valid_ = true;
        lambda_max_ = grad_.size() > 0 ? grad_.cwiseAbs().maxCoeff() : 0.0;
        last_lambda_ = lambda_max_;
        r_inf_ = r.size() > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
    }

    double lambda_max() const { return lambda_max_; }

    void set_beta(const VectorXd& beta) {
        beta_ = beta;
        residual_ = r_ - d_ * beta_;
        grad_valid_ = false;
    }
    const VectorXd& beta() const { return beta_; }

    double objective(double lambda) const {
        return 0.5 * (v_.array() * residual_.array().square()).sum() +
               lambda * beta_.lpNorm<1>();
    }

    // Fits at `lambda` from the current beta (warm start across a descending
    // path). Cyclic coordinate descent restricted to the sequential strong
    // set; the full-gradient pass that checks for screened-out violations is
    // also the KKT certificate and feeds the next lambda's screen. Returns
    // sweeps used (full-gradient passes count as sweeps).
    int fit(double lambda, const SolveOptions& opts, double* kkt_out) {
        const double tol = opts.tol_scale * std::max(1.0, r_inf_);
        const double kkt_tol =
            opts.kkt_margin * opts.kkt_scale * std::max(1.0, lambda_max_);
        const auto p = beta_.size();
        int sweeps = 0;
#ifndef NDEBUG
        double prev_obj = objective(lambda);
#endif
        auto count_sweep = [&]() {
            if (++sweeps > opts.max_sweeps)
                throw MaxIters("lasso solve: exceeded " + std::to_string(opts.max_sweeps) +
                               " sweeps; problem is ill-conditioned");
#ifndef NDEBUG
            const double obj = objective(lambda);
            assert(obj <= prev_obj + 1e-10 * std::max(1.0, std::fabs(prev_obj)));
            prev_obj = obj;
#endif
            if (opts.track_objective && opts.objective_trace)
                opts.objective_trace->push_back(objective(lambda));
        };

        if (!grad_valid_) {
            refresh_gradient();
            count_sweep();
        }

        // Sequential strong rule |g_j| >= 2 lambda - lambda_prev, plus the
        // current support. Correctness never relies on the screen: violations
        // are caught below and the set enlarged.
        const double screen = 2.0 * lambda - last_lambda_;
        std::vector<char> in_set(static_cast<std::size_t>(p), 0);
        std::vector<int> working;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (beta_(j) != 0.0 || std::fabs(grad_(j)) >= screen) {
                in_set[static_cast<std::size_t>(j)] = 1;
                working.push_back(static_cast<int>(j));
            }
        }

        for (;;) {
            for (;;) {
                const double ch = sweep(working, lambda);
                count_sweep();
                if (ch < tol) break;
            }
            refresh_gradient();
            count_sweep();

            bool enlarged = false;
            for (Eigen::Index j = 0; j < p; ++j) {
                if (!in_set[static_cast<std::size_t>(j)] && std::fabs(grad_(j)) > lambda) {
                    in_set[static_cast<std::size_t>(j)] = 1;
                    working.push_back(static_cast<int>(j));
                    enlarged = true;
                }
            }
            if (enlarged) continue;

            const double kk = kkt_from_gradient(lambda);
            if (!opts.verify_kkt || kk <= kkt_tol) {
                if (kkt_out) *kkt_out = kk;
                last_lambda_ = lambda;
                return sweeps;
            }
        }
    }

  private:
    void refresh_gradient() {
        grad_.noalias() = wd_.transpose() * residual_;
        grad_valid_ = true;
    }

    double kkt_from_gradient(double lambda) const {
        double worst = 0.0;
        for (Eigen::Index j = 0; j < beta_.size(); ++j) {
            if (beta_(j) != 0.0)
                worst = std::max(worst, std::fabs(grad_(j) - std::copysign(lambda, beta_(j))));
            else
                worst = std::max(worst, std::fabs(grad_(j)) - lambda);
        }
        return std::max(worst, 0.0);
    }

    double update_coordinate(int j, double lambda) {
        const double qj = col_norm_(j);
        if (qj <= 0.0) return 0.0;
        const double bj = beta_(j);
        const double g = wd_.col(j).dot(residual_) + qj * bj;
        double nb = 0.0;
        const double ag = std::fabs(g);
        if (ag > lambda) nb = std::copysign(ag - lambda, g) / qj;
        const double delta = nb - bj;
        if (delta != 0.0) {
            beta_(j) = nb;
            residual_ -= delta * d_.col(j);
            grad_valid_ = false;
        }
        return std::fabs(delta);
    }

    double sweep(const std::vector<int>& idx, double lambda) {
        double maxch = 0.0;
        for (int j : idx) maxch = std::max(maxch, update_coordinate(j, lambda));
        return maxch;
    }

    const VectorXd& r_;
    const MatrixXd& d_;
    const VectorXd& v_;
    MatrixXd wd_;         // v_i * D_ij
    VectorXd col_norm_;   // sum_i v_i D_ij^2
    VectorXd beta_;
    VectorXd residual_;   // r - D beta
    VectorXd grad_;       // wd' residual, refreshed after each working-set pass
    bool grad_valid_ = false;
    double last_lambda_ = 0.0;
    double lambda_max_ = 0.0;
    double r_inf_ = 0.0;
};

std::vector<int> active_of(const VectorXd& beta) {
    std::vector<int> out;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (beta(j) != 0.0) out.push_back(static_cast<int>(j));
    return out;
}

VectorXd make_grid(double lmax, int size, double ratio) {
    VectorXd grid(size);
    for (int j = 0; j < size; ++j)
        grid(j) = lmax * std::pow(ratio, static_cast<double>(j) / (size - 1));
    return grid;
}

}  // namespace

WeightedLassoProblem build_arm_problem(const ExperimentData& data, int arm, double lambda) {
    require_analysis_fields(data);
    const auto st = arm_stats(data, arm, nullptr);
    return assemble(data, arm, ProblemKind::arm_centered, lambda, st, nullptr, true, nullptr);
}

WeightedLassoProblem build_projection_problem(const ExperimentData& data, int arm, double lambda) {
    require_analysis_fields(data);
    const auto st = arm_stats(data, arm, nullptr);
    return assemble(data, arm, ProblemKind::projection, lambda, st, nullptr, true, nullptr);
}

double lambda_max(const WeightedLassoProblem& problem) {
    if (problem.predictors.rows() == 0) return 0.0;
    return ((problem.predictors.array().colwise() * problem.weights.array()).matrix().transpose() *
            problem.response)
        .cwiseAbs()
        .maxCoeff();
}

LassoFit solve(const WeightedLassoProblem& problem, const SolveOptions& opts) {
    if (problem.lambda < 0.0) throw DomainError("lasso solve: lambda must be >= 0");
    CdCore core(problem.response, problem.predictors, problem.weights);
    if (opts.warm_start.size() > 0) core.set_beta(opts.warm_start);
    LassoFit fit;
    fit.lambda = problem.lambda;
    fit.n_iter = core.fit(problem.lambda, opts, &fit.kkt_residual);
    fit.beta = core.beta();
    fit.active_set = active_of(fit.beta);
    return fit;
}

LassoFit cv_select(const ExperimentData& data, int arm, ProblemKind kind, Rng& rng,
                   const CvOptions& opts) {
    require_analysis_fields(data);
    const int n = data.n();
    const double cap = opts.sparsity_cap > 0.0 ? opts.sparsity_cap : n / 3.0;

    const auto full_stats = arm_stats(data, arm, nullptr);
    std::vector<int> full_rows;
    WeightedLassoProblem full =
        assemble(data, arm, kind, 0.0, full_stats, nullptr, true, &full_rows);
    const int arm_count = static_cast<int>(full_rows.size());

    const double lmax = lambda_max(full);
    LassoFit result;
    CvInfo cv;
    cv.fold_of.assign(static_cast<std::size_t>(n), -1);

    if (!(lmax > 0.0)) {
        // Degenerate: zero gradient at the origin; beta = 0 is optimal for any
        // lambda.
        result.beta = VectorXd::Zero(data.p());
        result.lambda = 0.0;
        cv.lambda_grid = VectorXd::Zero(1);
        cv.cv_error = VectorXd::Zero(1);
        cv.chosen_lambda = 0.0;
        result.cv = std::move(cv);
        return result;
    }

    cv.lambda_grid = make_grid(lmax, opts.grid_size, opts.grid_ratio);

    // Full-data path (descending lambda, warm starts). Once a fit crosses the
    // sparsity cap every smaller lambda is inadmissible, so the path stops
    // there; this also keeps the active set well inside the row count.
    // Interior fits run at a looser tolerance: they only rank lambdas and seed
    // warm starts, and the chosen lambda is re-solved to the full contract.
    SolveOptions sopt;
    sopt.verify_kkt = false;
    sopt.tol_scale = 1e-4;
    CdCore full_core(full.response, full.predictors, full.weights);
    std::vector<VectorXd> path(static_cast<std::size_t>(opts.grid_size));
    std::vector<int> path_nnz(static_cast<std::size_t>(opts.grid_size), data.p());
    int grid_end = opts.grid_size;
    for (int j = 0; j < opts.grid_size; ++j) {
        full_core.fit(cv.lambda_grid(j), sopt, nullptr);
        path[static_cast<std::size_t>(j)] = full_core.beta();
        path_nnz[static_cast<std::size_t>(j)] =
            static_cast<int>(active_of(full_core.beta()).size());
        if (path_nnz[static_cast<std::size_t>(j)] >= cap) {
            grid_end = j + 1;
            break;
        }
    }

    // Fold assignment: stratified by block within the arm, rolling round-robin
    // so fold sizes stay balanced across blocks.
    const int folds = std::min(opts.folds, arm_count);
    if (folds < 2) throw DomainError("cv_select: not enough units per fold");
    {
        const auto by_block = data.blocks.units_by_block();
        int next_fold = 0;
        for (const auto& units : by_block) {
            std::vector<int> arm_units;
            for (int i : units)
                if (data.Z(i) == arm) arm_units.push_back(i);
            const auto perm = rng.permutation(static_cast<int>(arm_units.size()));
            for (int idx : perm) {
                cv.fold_of[static_cast<std::size_t>(arm_units[static_cast<std::size_t>(idx)])] =
                    next_fold % folds;
                ++next_fold;
            }
        }
    }

    // Held-out weighted squared error per lambda; centering statistics are
    // recomputed on the training folds, held-out units keep the full
    // problem's weights. Truncated grid points stay at +infinity.
    VectorXd err =
        VectorXd::Constant(opts.grid_size, std::numeric_limits<double>::infinity());
    err.head(grid_end).setZero();
    double weight_total = 0.0;
    std::vector<double> full_weight_of(static_cast<std::size_t>(n), 0.0);
    for (int rix = 0; rix < arm_count; ++rix)
        full_weight_of[static_cast<std::size_t>(full_rows[static_cast<std::size_t>(rix)])] =
            full.weights(rix);

    for (int f = 0; f < folds; ++f) {
        std::vector<char> in_train(static_cast<std::size_t>(n), 0);
        for (int i = 0; i < n; ++i)
            if (data.Z(i) == arm && cv.fold_of[static_cast<std::size_t>(i)] >= 0 &&
                cv.fold_of[static_cast<std::size_t>(i)] != f)
                in_train[static_cast<std::size_t>(i)] = 1;

        const auto tr_stats = arm_stats(data, arm, &in_train);
        WeightedLassoProblem train =
            assemble(data, arm, kind, 0.0, tr_stats, &in_train, false, nullptr);
        if (train.response.size() == 0) continue;

        // Held-out rows for blocks whose training arm count supports centering.
        std::vector<int> ho;
        for (int i = 0; i < n; ++i) {
            if (data.Z(i) != arm || cv.fold_of[static_cast<std::size_t>(i)] != f) continue;
            const int m = data.blocks.block_of[static_cast<std::size_t>(i)];
            if (tr_stats.count[static_cast<std::size_t>(m)] >= 2) ho.push_back(i);
        }
        if (ho.empty()) continue;

        MatrixXd dh(static_cast<Eigen::Index>(ho.size()), data.p());
        VectorXd rh(static_cast<Eigen::Index>(ho.size()));
        VectorXd vh(static_cast<Eigen::Index>(ho.size()));
        for (std::size_t rix = 0; rix < ho.size(); ++rix) {
            const int i = ho[rix];
            const int m = data.blocks.block_of[static_cast<std::size_t>(i)];
            const double y_c = data.Y(i) - tr_stats.y_mean[static_cast<std::size_t>(m)];
            if (kind == ProblemKind::arm_centered) {
                rh(static_cast<Eigen::Index>(rix)) = y_c;
                dh.row(static_cast<Eigen::Index>(rix)) =
                    data.X.row(i) - tr_stats.x_mean.row(m);
            } else {
                const double e_m = data.blocks.propensity(m);
                const double e_mz = arm == 1 ? e_m : 1.0 - e_m;
                rh(static_cast<Eigen::Index>(rix)) = std::sqrt((1.0 - e_mz) / e_mz) * y_c;
                dh.row(static_cast<Eigen::Index>(rix)) =
                    std::sqrt(1.0 / (e_mz * (1.0 - e_mz))) *
                    (data.X.row(i) - tr_stats.x_mean.row(m));
            }
            vh(static_cast<Eigen::Index>(rix)) = full_weight_of[static_cast<std::size_t>(i)];
        }
        weight_total += vh.sum();

        CdCore tr_core(train.response, train.predictors, train.weights);
        for (int j = 0; j < grid_end; ++j) {
            tr_core.fit(cv.lambda_grid(j), sopt, nullptr);
            const VectorXd resid = rh - dh * tr_core.beta();
            err(j) += (vh.array() * resid.array().square()).sum();
        }
    }
    if (weight_total > 0.0) err.head(grid_end) /= weight_total;
    cv.cv_error = err;

    int chosen = -1;
    for (int j = 0; j < grid_end; ++j) {
        if (path_nnz[static_cast<std::size_t>(j)] >= cap) continue;
        if (chosen < 0 || err(j) < err(chosen)) chosen = j;
    }

    if (chosen < 0) {
        cv.all_rejected = true;
        cv.chosen_lambda = cv.lambda_grid(0);
        result.beta = VectorXd::Zero(data.p());
        result.lambda = cv.lambda_grid(0);
        result.cv = std::move(cv);
        return result;
    }

    cv.chosen_lambda = cv.lambda_grid(chosen);
    full.lambda = cv.chosen_lambda;
    SolveOptions refit;
    refit.warm_start = path[static_cast<std::size_t>(chosen)];
    result = solve(full, refit);
    result.cv = std::move(cv);
    return result;
}

}  // namespace stratx
