#include "stratx/check.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "stratx/design.hpp"
#include "stratx/errors.hpp"
#include "stratx/estimate.hpp"
#include "stratx/lasso.hpp"
#include "stratx/rng.hpp"
#include "stratx/sim.hpp"

namespace stratx {

std::vector<VectorXi> enumerate_complete_assignments(int n, int n1) {
    std::vector<VectorXi> out;
    VectorXi z = VectorXi::Zero(n);
    std::function<void(int, int)> rec = [&](int start, int remaining) {
        if (remaining == 0) {
            out.push_back(z);
            return;
        }
        for (int i = start; i <= n - remaining; ++i) {
            z(i) = 1;
            rec(i + 1, remaining - 1);
            z(i) = 0;
        }
    };
    rec(0, n1);
    return out;
}

std::vector<VectorXi> enumerate_stratified_assignments(const BlockStructure& blocks) {
    const auto units = blocks.units_by_block();
    std::vector<VectorXi> out;
    VectorXi z = VectorXi::Zero(blocks.n());
    std::function<void(int)> rec = [&](int m) {
        if (m == blocks.num_blocks()) {
            out.push_back(z);
            return;
        }
        const auto& u = units[static_cast<std::size_t>(m)];
        const auto locals = enumerate_complete_assignments(
            static_cast<int>(u.size()), blocks.treated[static_cast<std::size_t>(m)]);
        for (const auto& local : locals) {
            for (std::size_t j = 0; j < u.size(); ++j) z(u[j]) = local(static_cast<int>(j));
            rec(m + 1);
        }
    };
    rec(0);
    return out;
}

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

std::vector<PropertyResult> run_enumeration_suite() {
    std::vector<PropertyResult> results;

    // Fixed 2-block, 8-unit population with heterogeneous effects.
    BlockStructure blocks;
    blocks.block_of = {0, 0, 0, 0, 1, 1, 1, 1};
    blocks.sizes = {4, 4};
    blocks.treated = {2, 2};
    PotentialOutcomeTable table;
    table.y1.resize(8);
    table.y0.resize(8);
    table.y1 << 3.0, 5.0, 2.0, 7.0, 11.0, 8.0, 9.0, 12.0;
    table.y0 << 1.0, 2.0, 0.5, 4.0, 6.0, 5.0, 7.0, 8.0;
    const double tau = table.tau();

    const auto assignments = enumerate_stratified_assignments(blocks);
    double mean_tau = 0.0, mean_var = 0.0;
    std::vector<double> taus;
    taus.reserve(assignments.size());
    for (const auto& z : assignments) {
        ExperimentData data;
        data.blocks = blocks;
        data.Z = z;
        data.Y = table.reveal(z);
        const double t = tau_unadj(data);
        taus.push_back(t);
        mean_tau += t;
        mean_var += var_unadj(data);
    }
    mean_tau /= static_cast<double>(assignments.size());
    mean_var /= static_cast<double>(assignments.size());
    double var_exact = 0.0;
    for (double t : taus) var_exact += (t - mean_tau) * (t - mean_tau);
    var_exact /= static_cast<double>(taus.size());

    {
        PropertyResult r;
        r.name = "enumeration: 36 stratified assignments enumerated";
        r.pass = assignments.size() == 36;
        r.detail = std::to_string(assignments.size()) + " assignments";
        results.push_back(r);
    }
    {
        PropertyResult r;
        r.name = "enumeration: E[tau_unadj] = tau to machine precision";
        const double err = std::fabs(mean_tau - tau);
        r.pass = err <= 1e-12;
        r.detail = "|mean - tau| = " + num(err);
        results.push_back(r);
    }
    {
        PropertyResult r;
        r.name = "enumeration: Var(tau_unadj) <= E[conservative variance]";
        r.pass = var_exact <= mean_var + 1e-12;
        r.detail = "exact " + num(var_exact) + " vs estimate mean " + num(mean_var);
        results.push_back(r);
    }
    return results;
}

namespace {

struct Layout {
    const char* name;
    BlockStructure blocks;
};

std::vector<Layout> concentration_layouts() {
    std::vector<Layout> layouts;
    const int n = 100;
    for (Scenario sc : {Scenario::MS, Scenario::FL, Scenario::MSFL}) {
        Layout lay;
        lay.name = scenario_name(sc);
        lay.blocks = make_design_blocks(n, sc, PropensityMode::equal);
        layouts.push_back(std::move(lay));
    }
    return layouts;
}

}  // namespace

std::vector<PropertyResult> run_concentration_suite(const CheckOptions& opts) {
    std::vector<PropertyResult> results;
    Rng data_rng(opts.seed, 7001);

    for (auto& lay : concentration_layouts()) {
        const auto& blocks = lay.blocks;
        const int n = blocks.n();
        VectorXd a(n), b(n);
        for (int i = 0; i < n; ++i) a(i) = data_rng.standard_normal();
        for (int i = 0; i < n; ++i) b(i) = data_rng.standard_normal();

        const auto units = blocks.units_by_block();
        const int mcount = blocks.num_blocks();

        // Block means / fixed-population quantities for the bounds.
        std::vector<double> a_mean(static_cast<std::size_t>(mcount), 0.0),
            b_mean(static_cast<std::size_t>(mcount), 0.0),
            s_ab(static_cast<std::size_t>(mcount), 0.0);
        double sigma_a2 = 0.0, kappa_a4 = 0.0, kappa_b4 = 0.0;
        for (int m = 0; m < mcount; ++m) {
            const auto& u = units[static_cast<std::size_t>(m)];
            double am = 0.0, bm = 0.0;
            for (int i : u) {
                am += a(i);
                bm += b(i);
            }
            am /= static_cast<double>(u.size());
            bm /= static_cast<double>(u.size());
            a_mean[static_cast<std::size_t>(m)] = am;
            b_mean[static_cast<std::size_t>(m)] = bm;
            const double e = blocks.propensity(m);
            double cov = 0.0;
            for (int i : u) {
                const double da = a(i) - am, db = b(i) - bm;
                sigma_a2 += da * da / (e * e);
                kappa_a4 += da * da * da * da / (e * e * e);
                kappa_b4 += db * db * db * db / (e * e * e);
                cov += da * db;
            }
            s_ab[static_cast<std::size_t>(m)] = cov / static_cast<double>(u.size() - 1);
        }
        sigma_a2 /= n;
        kappa_a4 /= n;
        kappa_b4 /= n;
        const double sigma_a = std::sqrt(sigma_a2);
        const double g = std::sqrt(kappa_a4 * kappa_b4);  // (kappa_a^4 kappa_b^4)^(1/2)
        // sigma_scale = 1 is the honest bound; the hook shrinks the scale
        // parameter inside the bound only, so thresholds stay honest and a
        // buggy bound must be caught empirically.
        const double scale2 = opts.sigma_scale * opts.sigma_scale;

        Rng draw_rng(opts.seed, 7100 + static_cast<std::uint64_t>(results.size()));
        const int draws = opts.concentration_draws;
        std::vector<double> mean_stats, cov_stats;
        mean_stats.reserve(static_cast<std::size_t>(draws));
        cov_stats.reserve(static_cast<std::size_t>(draws));
        for (int d = 0; d < draws; ++d) {
            const VectorXi z = draw_stratified(blocks, draw_rng);
            double stat_mean = 0.0, stat_cov = 0.0;
            for (int m = 0; m < mcount; ++m) {
                const auto& u = units[static_cast<std::size_t>(m)];
                const int n1 = blocks.treated[static_cast<std::size_t>(m)];
                double a1 = 0.0, b1 = 0.0;
                for (int i : u)
                    if (z(i) == 1) {
                        a1 += a(i);
                        b1 += b(i);
                    }
                a1 /= n1;
                b1 /= n1;
                double cov1 = 0.0;
                for (int i : u)
                    if (z(i) == 1) cov1 += (a(i) - a1) * (b(i) - b1);
                cov1 /= n1 - 1;
                const double pi_m = blocks.weight(m);
                stat_mean += pi_m * (a1 - a_mean[static_cast<std::size_t>(m)]);
                stat_cov += pi_m * (cov1 - s_ab[static_cast<std::size_t>(m)]);
            }
            mean_stats.push_back(stat_mean);
            cov_stats.push_back(stat_cov);
        }

        for (double frac : {0.1, 0.2}) {
            const double t_mean = frac * sigma_a;
            const double bound_mean =
                std::exp(-n * t_mean * t_mean / (4.0 * sigma_a2 * scale2));
            int hits = 0;
            for (double s : mean_stats) hits += s >= t_mean ? 1 : 0;
            const double emp = static_cast<double>(hits) / draws;
            PropertyResult r;
            r.name = std::string("concentration mean bound (") + lay.name +
                     ", t=" + num(frac) + " sigma_a)";
            r.pass = emp <= bound_mean;
            r.detail = "empirical " + num(emp) + " <= bound " + num(bound_mean);
            results.push_back(r);
        }
        for (double frac : {0.1, 0.2}) {
            const double t_cov = frac * std::sqrt(g);
            const double bound_cov = std::exp(-n * t_cov * t_cov / (60.0 * g * scale2));
            int hits = 0;
            for (double s : cov_stats) hits += s >= t_cov ? 1 : 0;
            const double emp = static_cast<double>(hits) / draws;
            PropertyResult r;
            r.name = std::string("concentration covariance bound (") + lay.name +
                     ", t=" + num(frac) + " sqrt(g))";
            r.pass = emp <= bound_cov;
            r.detail = "empirical " + num(emp) + " <= bound " + num(bound_cov);
            results.push_back(r);
        }
    }
    return results;
}

std::vector<PropertyResult> run_kkt_suite(const CheckOptions& opts) {
    std::vector<PropertyResult> results;
    Rng rng(opts.seed, 9001);
    double worst_kkt = 0.0;
    bool null_fit_ok = true;
    bool all_solved = true;
    for (int t = 0; t < opts.kkt_problems; ++t) {
        const int n = 10 + rng.uniform_int(31);   // 10..40
        const int p = 5 + rng.uniform_int(56);    // 5..60
        WeightedLassoProblem prob;
        prob.response.resize(n);
        prob.predictors.resize(n, p);
        prob.weights.resize(n);
        for (int i = 0; i < n; ++i) {
            prob.response(i) = rng.standard_normal();
            prob.weights(i) = 0.1 + rng.uniform();
            for (int j = 0; j < p; ++j) prob.predictors(i, j) = rng.standard_normal();
        }
        prob.weights /= prob.weights.sum();
        const double lmax = lambda_max(prob);
        prob.lambda = lmax * (0.01 + 0.5 * rng.uniform());
        try {
            const LassoFit fit = solve(prob);
            worst_kkt = std::max(worst_kkt, fit.kkt_residual);
            WeightedLassoProblem null_prob = prob;
            null_prob.lambda = lmax * 1.000001;
            if (solve(null_prob).nnz() != 0) null_fit_ok = false;
        } catch (const MaxIters&) {
            all_solved = false;
        }
    }
    {
        PropertyResult r;
        r.name = "kkt: residual <= 1e-7 on " + std::to_string(opts.kkt_problems) +
                 " random weighted problems";
        r.pass = all_solved && worst_kkt <= 1e-7;
        r.detail = "worst residual " + num(worst_kkt);
        results.push_back(r);
    }
    {
        PropertyResult r;
        r.name = "kkt: lambda >= lambda_max yields the null fit";
        r.pass = null_fit_ok;
        r.detail = null_fit_ok ? "all null" : "nonzero coefficients at lambda_max";
        results.push_back(r);
    }
    return results;
}

std::vector<PropertyResult> run_all_checks(const CheckOptions& opts) {
    std::vector<PropertyResult> all = run_enumeration_suite();
    for (auto& r : run_concentration_suite(opts)) all.push_back(std::move(r));
    for (auto& r : run_kkt_suite(opts)) all.push_back(std::move(r));
    return all;
}

}  // namespace stratx
