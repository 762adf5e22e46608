#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stratx/check.hpp"
#include "stratx/design.hpp"
#include "stratx/dist.hpp"
#include "stratx/errors.hpp"
#include "stratx/estimate.hpp"
#include "stratx/lasso.hpp"
#include "stratx/rng.hpp"
#include "stratx/sim.hpp"

using namespace stratx;

namespace {

LassoFit zero_fit(int p) {
    LassoFit f;
    f.beta = VectorXd::Zero(p);
    return f;
}

BlockStructure even_blocks(int n, int blocks_count, PropensityMode prop) {
    if (blocks_count == 1) return BlockStructure::single(n, n / 2);
    BlockStructure b;
    const int per = n / blocks_count;
    b.sizes.assign(static_cast<std::size_t>(blocks_count), per);
    for (int m = 0; m < blocks_count; ++m)
        b.block_of.insert(b.block_of.end(), static_cast<std::size_t>(per), m);
    b.treated.resize(static_cast<std::size_t>(blocks_count));
    for (int m = 0; m < blocks_count; ++m) {
        double e = 0.5;
        if (prop == PropensityMode::unequal && blocks_count > 1)
            e = 0.3 + 0.4 * static_cast<double>(m) / (blocks_count - 1);
        b.treated[static_cast<std::size_t>(m)] =
            std::clamp(static_cast<int>(std::lround(e * per)), 2, per - 2);
    }
    return b;
}

ExperimentData linear_outcome_data(int n, int p, int blocks_count, Rng& rng,
                                   const VectorXd& beta1, const VectorXd& beta0,
                                   double noise, PropensityMode prop = PropensityMode::equal) {
    ExperimentData d;
    d.blocks = even_blocks(n, blocks_count, prop);
    d.X.resize(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) d.X(i, j) = rng.standard_normal();
    d.Z = draw_stratified(d.blocks, rng);
    d.Y.resize(n);
    for (int i = 0; i < n; ++i) {
        const double signal = d.Z(i) == 1 ? d.X.row(i).dot(beta1) + 1.0 : d.X.row(i).dot(beta0);
        d.Y(i) = signal + noise * rng.standard_normal();
    }
    return d;
}

}  // namespace

TEST_CASE("tau_unadj: constant treatment effect is recovered under any assignment") {
    PotentialOutcomeTable t;
    t.y0 = VectorXd::Zero(4);
    t.y1 = VectorXd::Ones(4);
    const auto blocks = BlockStructure::single(4, 2);
    for (const auto& z : enumerate_complete_assignments(4, 2)) {
        ExperimentData d;
        d.blocks = blocks;
        d.Z = z;
        d.Y = t.reveal(z);
        CHECK(tau_unadj(d) == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("tau_unadj: hand-computed two-block value") {
    ExperimentData d;
    d.blocks.block_of = {0, 0, 0, 0, 1, 1, 1, 1};
    d.blocks.sizes = {4, 4};
    d.blocks.treated = {2, 2};
    d.Z.resize(8);
    d.Z << 1, 1, 0, 0, 0, 1, 0, 1;
    d.Y.resize(8);
    d.Y << 5, 7, 2, 4, 1, 9, 3, 11;
    // block 1: (5+7)/2 - (2+4)/2 = 3; block 2: (9+11)/2 - (1+3)/2 = 8
    CHECK(tau_unadj(d) == doctest::Approx(0.5 * 3 + 0.5 * 8).epsilon(1e-14));
}

TEST_CASE("enumeration: tau_unadj unbiased, variance estimate conservative") {
    BlockStructure blocks;
    blocks.block_of = {0, 0, 0, 0, 1, 1, 1, 1};
    blocks.sizes = {4, 4};
    blocks.treated = {2, 2};
    PotentialOutcomeTable t;
    t.y1.resize(8);
    t.y0.resize(8);
    t.y1 << 2.0, 4.5, 1.0, 3.0, 8.0, 6.5, 9.0, 7.0;
    t.y0 << 1.0, 2.0, 0.0, 1.5, 5.0, 4.0, 6.0, 5.5;

    double mean_tau = 0.0, mean_var = 0.0;
    std::vector<double> taus;
    const auto assignments = enumerate_stratified_assignments(blocks);
    REQUIRE(assignments.size() == 36);
    for (const auto& z : assignments) {
        ExperimentData d;
        d.blocks = blocks;
        d.Z = z;
        d.Y = t.reveal(z);
        taus.push_back(tau_unadj(d));
        mean_tau += taus.back();
        mean_var += var_unadj(d);
    }
    mean_tau /= 36.0;
    mean_var /= 36.0;
    CHECK(mean_tau == doctest::Approx(t.tau()).epsilon(1e-13));
    double var_exact = 0.0;
    for (double v : taus) var_exact += (v - mean_tau) * (v - mean_tau);
    var_exact /= 36.0;
    CHECK(var_exact <= mean_var + 1e-12);
}

TEST_CASE("var_unadj: zero for outcomes constant within arms, hand value at M=1") {
    ExperimentData d;
    d.blocks = BlockStructure::single(6, 3);
    d.Z.resize(6);
    d.Z << 1, 1, 1, 0, 0, 0;
    d.Y.resize(6);
    d.Y << 2, 2, 2, 5, 5, 5;
    CHECK(var_unadj(d) == doctest::Approx(0.0).scale(1).epsilon(1e-14));

    d.Y << 1, 2, 3, 4, 6, 8;
    // s2(1) = 1, s2(0) = 4, e = 1/2 -> sigma2 = 1/0.5 + 4/0.5 = 10; /n = 10/6
    CHECK(var_unadj(d) == doctest::Approx(10.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("report_lasso with zero fits: point equals unadj exactly, variance matches formula") {
    Rng rng(12, 0);
    VectorXd b1 = VectorXd::Zero(5), b0 = VectorXd::Zero(5);
    const auto d = linear_outcome_data(40, 5, 4, rng, b1, b0, 1.0);
    const auto rep = report_lasso(d, zero_fit(5), zero_fit(5), 0.05);
    CHECK(rep.tau_hat == tau_unadj(d));  // bitwise

    // documented formula with s_hat = 0: df factor n_z / (n_z - 1)
    int n1 = 0;
    for (int i = 0; i < d.n(); ++i) n1 += d.Z(i);
    const int n0 = d.n() - n1;
    const double df1 = static_cast<double>(n1) / (n1 - 1);
    const double df0 = static_cast<double>(n0) / (n0 - 1);
    double expect = 0.0;
    const auto urep = report_unadj(d, 0.05);
    for (int m = 0; m < d.blocks.num_blocks(); ++m) {
        const double e = d.blocks.propensity(m);
        expect += d.blocks.weight(m) * (df1 * urep.block_residual_var(m, 0) / e +
                                        df0 * urep.block_residual_var(m, 1) / (1.0 - e));
    }
    CHECK(rep.var_hat == doctest::Approx(expect / d.n()).epsilon(1e-13));
    CHECK(rep.s_hat == std::vector<int>{0, 0});
}

TEST_CASE("report_lasso: perfect linear outcome gives near-zero variance") {
    Rng rng(13, 0);
    VectorXd beta(1);
    beta << 2.5;
    ExperimentData d;
    d.blocks = BlockStructure::single(30, 15);
    d.X.resize(30, 1);
    for (int i = 0; i < 30; ++i) d.X(i, 0) = rng.standard_normal();
    d.Z = draw_stratified(d.blocks, rng);
    d.Y.resize(30);
    for (int i = 0; i < 30; ++i) d.Y(i) = 4.0 + 2.5 * d.X(i, 0) + d.Z(i) * 1.5;

    auto p1 = build_arm_problem(d, 1, 0.0);
    auto p0 = build_arm_problem(d, 0, 0.0);
    const auto rep = report_lasso(d, solve(p1), solve(p0), 0.05);
    CHECK(rep.var_hat <= 1e-12);
    CHECK(rep.tau_hat == doctest::Approx(1.5).epsilon(1e-6));
}

TEST_CASE("report_lasso throws DegreesOfFreedomExhausted rather than clamping") {
    Rng rng(14, 0);
    const auto d = linear_outcome_data(12, 8, 1, rng, VectorXd::Zero(8), VectorXd::Zero(8), 1.0);
    LassoFit fat;
    fat.beta = VectorXd::Ones(8);
    fat.active_set = {0, 1, 2, 3, 4, 5, 6, 7};
    CHECK_THROWS_AS(report_lasso(d, fat, fat, 0.05), DegreesOfFreedomExhausted);
}

TEST_CASE("report_lasso2: zero gamma reduces to unadj; balanced covariates too") {
    Rng rng(15, 0);
    const auto d = linear_outcome_data(40, 3, 4, rng, VectorXd::Ones(3), VectorXd::Ones(3), 0.5);
    const auto rep = report_lasso2(d, zero_fit(3), zero_fit(3), 0.05);
    CHECK(rep.tau_hat == tau_unadj(d));

    // mirror-balanced X within block-arms: tau_X = 0, any gamma leaves the point
    ExperimentData b;
    b.blocks = BlockStructure::single(8, 4);
    b.X.resize(8, 1);
    b.X << 1, -1, 2, -2, 1, -1, 2, -2;
    b.Z.resize(8);
    b.Z << 1, 1, 1, 1, 0, 0, 0, 0;
    b.Y.resize(8);
    b.Y << 3, 4, 5, 6, 1, 2, 3, 4;
    LassoFit g;
    g.beta = VectorXd::Ones(1) * 7.3;
    g.active_set = {0};
    const auto rep2 = report_lasso2(b, g, zero_fit(1), 0.05);
    CHECK(rep2.tau_hat == doctest::Approx(tau_unadj(b)).epsilon(1e-13));
}

TEST_CASE("var_unadj_rerand: no correlation or infinite threshold changes nothing") {
    Rng rng(16, 0);
    const auto d = linear_outcome_data(60, 2, 6, rng, VectorXd::Zero(2), VectorXd::Zero(2), 1.0);
    MatrixXd w(60, 1);
    for (int i = 0; i < 60; ++i) w(i, 0) = rng.standard_normal();

    // a -> infinity: v_{k,a} = 1
    const auto [v_inf, parts_inf] =
        var_unadj_rerand(d, w, std::numeric_limits<double>::infinity());
    CHECK(v_inf == doctest::Approx(var_unadj(d)).epsilon(1e-12));
    CHECK(parts_inf.v_ka == 1.0);

    // W unrelated to Y: R2 ~ 0, correction negligible
    const auto [v_fin, parts_fin] = var_unadj_rerand(d, w, chi2_quantile(0.1, 1));
    CHECK(parts_fin.r2_hat >= 0.0);
    CHECK(parts_fin.r2_hat <= 1.0);
    CHECK(v_fin <= var_unadj(d) + 1e-15);
}

TEST_CASE("v_{k,a} at the default design operating point, with a Monte Carlo cross-check" *
          doctest::timeout(120)) {
    const double a = chi2_quantile(0.001, 4);
    const double v = chi2_cdf(a, 6) / 0.001;

    Rng rng(314159, 2);
    const long n = 10000000;
    long hits4 = 0, hits6 = 0;
    for (long i = 0; i < n; ++i) {
        double s4 = 0.0;
        for (int j = 0; j < 4; ++j) {
            const double g = rng.standard_normal();
            s4 += g * g;
        }
        double s6 = s4;
        for (int j = 0; j < 2; ++j) {
            const double g = rng.standard_normal();
            s6 += g * g;
        }
        hits4 += s4 <= a ? 1 : 0;
        hits6 += s6 <= a ? 1 : 0;
    }
    REQUIRE(hits6 > 0);
    const double ratio = static_cast<double>(hits6) / static_cast<double>(hits4);
    const double se = ratio * std::sqrt(1.0 / hits6 + 1.0 / hits4);
    CHECK(std::fabs(ratio - v) <= 4.0 * se);

    // the corrected variance is never above the plain one
    Rng drng(17, 0);
    const auto d =
        linear_outcome_data(60, 5, 6, drng, VectorXd::Ones(5), VectorXd::Ones(5), 0.5);
    MatrixXd w = d.X.leftCols(4);
    const auto [corrected, parts] = var_unadj_rerand(d, w, a);
    CHECK(corrected <= var_unadj(d) + 1e-15);
    CHECK(parts.v_ka == doctest::Approx(v).epsilon(1e-9));
}

TEST_CASE("confidence_interval: degenerate and width cases") {
    const auto [lo, hi] = confidence_interval(2.5, 0.0, 0.05);
    CHECK(lo == 2.5);
    CHECK(hi == 2.5);
    const double var = 0.04;
    const auto [l2, h2] = confidence_interval(0.0, var, 0.05);
    CHECK(h2 - l2 == doctest::Approx(2.0 * 1.959964 * std::sqrt(var)).epsilon(1e-6));
    CHECK_THROWS_AS(confidence_interval(0.0, -1.0, 0.05), DomainError);
}

TEST_CASE("location-scale equivariance with lambda rescaled by |c|") {
    Rng rng(18, 0);
    VectorXd b1(6), b0(6);
    for (int j = 0; j < 6; ++j) {
        b1(j) = j < 2 ? 1.0 : 0.0;
        b0(j) = j < 2 ? 0.5 : 0.0;
    }
    auto d = linear_outcome_data(48, 6, 4, rng, b1, b0, 0.7);

    auto p1 = build_arm_problem(d, 1, 0.0);
    const double lam = 0.3 * lambda_max(p1);
    p1.lambda = lam;
    auto p0 = build_arm_problem(d, 0, lam);
    const auto rep = report_lasso(d, solve(p1), solve(p0), 0.05);

    const double c = -2.5, shift = 7.0;
    ExperimentData ds = d;
    ds.Y = c * d.Y.array() + shift;
    auto q1 = build_arm_problem(ds, 1, std::fabs(c) * lam);
    auto q0 = build_arm_problem(ds, 0, std::fabs(c) * lam);
    const auto reps = report_lasso(ds, solve(q1), solve(q0), 0.05);

    CHECK(reps.tau_hat == doctest::Approx(c * rep.tau_hat).epsilon(1e-8));
    CHECK(reps.var_hat == doctest::Approx(c * c * rep.var_hat).epsilon(1e-8));
}

TEST_CASE("variance ordering holds in >= 95% of replications" * doctest::timeout(600)) {
    // equal propensities: sigma2_lasso <= sigma2_unadj
    {
        SimulationConfig cfg;
        cfg.n = 100;
        cfg.p = 20;
        cfg.s = 4;
        cfg.k = 2;
        cfg.scenario = Scenario::MS;
        cfg.propensity = PropensityMode::equal;
        cfg.master_seed = 4004;
        const auto pop = generate_population(cfg, population_seed(cfg));
        const auto blocks = make_design_blocks(cfg.n, cfg.scenario, cfg.propensity);
        int ok = 0;
        const int reps = 40;
        for (int r = 0; r < reps; ++r) {
            Rng rng(cfg.master_seed, static_cast<std::uint64_t>(r));
            ExperimentData d;
            d.X = pop.X;
            d.blocks = blocks;
            d.Z = draw_stratified(blocks, rng);
            d.Y = pop.outcomes.reveal(d.Z);
            const auto f1 = cv_select(d, 1, ProblemKind::arm_centered, rng);
            const auto f0 = cv_select(d, 0, ProblemKind::arm_centered, rng);
            const auto rep = report_lasso(d, f1, f0, 0.05);
            if (rep.var_hat <= var_unadj(d)) ++ok;
        }
        CHECK(ok >= static_cast<int>(0.95 * reps));
    }

    // unequal propensities under rerandomization:
    // sigma2_lasso2 <= sigma2_unadj|M <= sigma2_unadj
    {
        SimulationConfig cfg;
        cfg.n = 200;
        cfg.p = 60;
        cfg.s = 10;
        cfg.k = 4;
        cfg.p_a = 0.01;
        cfg.scenario = Scenario::MS;
        cfg.propensity = PropensityMode::unequal;
        cfg.master_seed = 4005;
        const auto pop = generate_population(cfg, population_seed(cfg));
        const auto blocks = make_design_blocks(cfg.n, cfg.scenario, cfg.propensity);
        const double a = compute_threshold(cfg.p_a, cfg.k);
        DesignSpec spec;
        spec.kind = DesignKind::stratified_rerandomized;
        spec.blocks = blocks;
        spec.W = pop.W;
        spec.p_a = cfg.p_a;
        int ok = 0;
        const int reps = 40;
        for (int r = 0; r < reps; ++r) {
            Rng rng(cfg.master_seed, static_cast<std::uint64_t>(r));
            ExperimentData d;
            d.X = pop.X;
            d.W = pop.W;
            d.blocks = blocks;
            d.Z = draw_rerandomized(spec, rng).Z;
            d.Y = pop.outcomes.reveal(d.Z);
            const auto g1 = cv_select(d, 1, ProblemKind::projection, rng);
            const auto g0 = cv_select(d, 0, ProblemKind::projection, rng);
            const auto rep = report_lasso2(d, g1, g0, 0.05);
            const double vu = var_unadj(d);
            const double vur = var_unadj_rerand(d, pop.W, a).first;
            if (rep.var_hat <= vur && vur <= vu) ++ok;
        }
        CHECK(ok >= static_cast<int>(0.95 * reps));
    }
}

TEST_CASE("lasso2 interval is no wider than unadj on unequal-propensity data" *
          doctest::timeout(600)) {
    int narrower = 0;
    const int runs = 100;
    for (int s = 0; s < runs; ++s) {
        SimulationConfig cfg;
        cfg.n = 200;
        cfg.p = 100;
        cfg.s = 10;
        cfg.k = 4;
        cfg.scenario = Scenario::MS;
        cfg.propensity = PropensityMode::unequal;
        cfg.master_seed = 9000 + static_cast<std::uint64_t>(s);
        const auto pop = generate_population(cfg, population_seed(cfg));
        const auto blocks = make_design_blocks(cfg.n, cfg.scenario, cfg.propensity);
        Rng rng(cfg.master_seed, 1);
        ExperimentData d;
        d.X = pop.X;
        d.blocks = blocks;
        d.Z = draw_stratified(blocks, rng);
        d.Y = pop.outcomes.reveal(d.Z);
        const auto g1 = cv_select(d, 1, ProblemKind::projection, rng);
        const auto g0 = cv_select(d, 0, ProblemKind::projection, rng);
        const auto rep = report_lasso2(d, g1, g0, 0.05);
        const auto urep = report_unadj(d, 0.05);
        if (rep.ci.second - rep.ci.first <= urep.ci.second - urep.ci.first) ++narrower;
    }
    CHECK(narrower >= 95);
}
