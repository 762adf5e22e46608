#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stratx/design.hpp"
#include "stratx/types.hpp"

namespace stratx {

enum class Scenario { MS, FL, MSFL };           // many small / few large / hybrid blocks
enum class PropensityMode { none, equal, unequal };

const char* scenario_name(Scenario s);
const char* propensity_name(PropensityMode p);
Scenario scenario_from_name(const std::string& name);
PropensityMode propensity_from_name(const std::string& name);

struct SimulationConfig {
    int n = 200;
    Scenario scenario = Scenario::MS;
    PropensityMode propensity = PropensityMode::none;
    bool rerand = false;
    int p = 400;
    int s = 10;
    int k = 4;
    double rho = 0.6;
    double p_a = 0.001;
    double snr = 10.0;
    double alpha = 0.05;
    int replications = 1000;
    int bootstrap_reps = 500;
    std::uint64_t master_seed = 1;
    int threads = 0;  // 0 = hardware concurrency

    std::string cell_name() const;
};

// Fixed world of one (n, scenario) pair: potential outcomes, covariates,
// and the scenario's block partition. Shared across the six design cells.
struct Population {
    PotentialOutcomeTable outcomes;
    MatrixXd X;
    MatrixXd W;                 // first k columns of X
    std::vector<int> block_of;  // scenario partition (no treated counts)
    std::vector<int> block_sizes;
    VectorXd beta1, beta0;      // outcome model coefficients (first s entries t3 draws)
    VectorXd signal1, signal0;  // block term + x' beta, before noise
    double noise_var[2] = {0.0, 0.0};
    double tau() const { return outcomes.tau(); }
};

// Scenario partition: MS blocks of 10; FL two blocks of n/2; MSFL small
// blocks of 10 followed by two large blocks.
std::vector<int> scenario_block_sizes(int n, Scenario scenario);

// Design-stage blocking for a cell: a single block for PropensityMode::none,
// otherwise the scenario partition with equal (0.5) or evenly spaced
// (0.3..0.7) propensity scores, treated counts rounded and clamped to
// [2, n_[m]-2].
BlockStructure make_design_blocks(int n, Scenario scenario, PropensityMode propensity);

// Outcome model Y_i(z) = (B_i/M)^{2z+1} + x_i' beta(z) + eps_i(z) with
// X ~ N(0, Sigma), Sigma_ij = rho^|i-j|, the first s entries of beta(z) drawn
// from t_3, and per-arm noise variance set to the finite-population signal
// variance divided by snr.
Population generate_population(const SimulationConfig& cfg, std::uint64_t pop_seed);

// Population seed for a (master_seed, n, scenario) key.
std::uint64_t population_seed(const SimulationConfig& cfg);

struct MetricWithSe {
    double value = 0.0;
    double se = 0.0;
};

// One estimator's row of the summary table, on the x100 reporting scale.
// sd_pct / le_pct are percentage decreases relative to the no-rerandomization
// unadjusted baseline of the same (n, block) cell.
struct SummaryRow {
    std::string method;
    MetricWithSe bias, sd, sd_pct, rmse, cp, length, le_pct;
    bool is_baseline = false;  // the unadjusted, no-rerandomization reference
};

struct CellResult {
    SimulationConfig cfg;
    double tau_true = 0.0;
    std::string adjusted_method;        // "lasso" or "lasso2"
    std::vector<SummaryRow> rows;       // unadj, adjusted

    // Raw per-replication arrays (natural scale), index = replication.
    std::vector<double> tau_unadj_rep, tau_adj_rep;
    std::vector<double> len_unadj_rep, len_adj_rep;
    std::vector<char> cover_unadj_rep, cover_adj_rep;
    std::vector<double> var_unadj_rep, var_unadj_rerand_rep, var_adj_rep;
    std::vector<int> draws_used_rep;
    std::vector<double> base_tau_rep, base_len_rep;  // no-rerand unadjusted baseline
};

// Runs one cell: per replication draw the assignment, reveal outcomes,
// compute the unadjusted and the cell's Lasso estimator (arm-centered lasso
// under equal/no-blocking propensities, the projection form under unequal),
// then aggregate with bootstrap standard errors. Deterministic given
// master_seed, independent of thread count.
CellResult run_cell(const SimulationConfig& cfg);

struct TableResult {
    Scenario scenario;
    std::vector<CellResult> cells;  // 12: 2 n x 3 propensity x 2 rerand
};

TableResult run_table(const SimulationConfig& proto);

// Artifact writers (see README for the file formats).
std::string table_csv(const TableResult& table);
std::string cell_estimates_csv(const CellResult& cell);
std::string format_table(const std::vector<CellResult>& cells);  // human-readable

}  // namespace stratx
