#include "stratx/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "stratx/errors.hpp"
#include "stratx/estimate.hpp"
#include "stratx/lasso.hpp"

namespace stratx {

const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::MS: return "MS";
        case Scenario::FL: return "FL";
        case Scenario::MSFL: return "MSFL";
    }
    return "?";
}

const char* propensity_name(PropensityMode p) {
    switch (p) {
        case PropensityMode::none: return "no";
        case PropensityMode::equal: return "eq";
        case PropensityMode::unequal: return "uneq";
    }
    return "?";
}

Scenario scenario_from_name(const std::string& name) {
    if (name == "MS") return Scenario::MS;
    if (name == "FL") return Scenario::FL;
    if (name == "MSFL") return Scenario::MSFL;
    throw DomainError("unknown scenario '" + name + "' (expected MS, FL, or MSFL)");
}

PropensityMode propensity_from_name(const std::string& name) {
    if (name == "no") return PropensityMode::none;
    if (name == "eq") return PropensityMode::equal;
    if (name == "uneq") return PropensityMode::unequal;
    throw DomainError("unknown block mode '" + name + "' (expected no, eq, or uneq)");
}

std::string SimulationConfig::cell_name() const {
    std::ostringstream os;
    os << scenario_name(scenario) << "_n" << n << "_block-" << propensity_name(propensity)
       << "_rerand-" << (rerand ? "yes" : "no");
    return os.str();
}

std::vector<int> scenario_block_sizes(int n, Scenario scenario) {
    std::vector<int> sizes;
    switch (scenario) {
        case Scenario::MS:
            if (n % 10 != 0) throw DomainError("MS scenario requires n divisible by 10");
            sizes.assign(static_cast<std::size_t>(n / 10), 10);
            break;
        case Scenario::FL:
            if (n % 2 != 0) throw DomainError("FL scenario requires even n");
            sizes.assign(2, n / 2);
            break;
        case Scenario::MSFL: {
            int small_count, large_size;
            if (n == 200) {
                small_count = 10;
                large_size = 50;
            } else if (n == 500) {
                small_count = 20;
                large_size = 150;
            } else {
                if (n % 20 != 0) throw DomainError("MSFL scenario requires n divisible by 20");
                small_count = n / 20;       // half the units in small blocks of 10
                large_size = n / 4;
            }
            sizes.assign(static_cast<std::size_t>(small_count), 10);
            sizes.push_back(large_size);
            sizes.push_back(large_size);
            break;
        }
    }
    return sizes;
}

BlockStructure make_design_blocks(int n, Scenario scenario, PropensityMode propensity) {
    if (propensity == PropensityMode::none) return BlockStructure::single(n, n / 2);

    const auto sizes = scenario_block_sizes(n, scenario);
    BlockStructure b;
    b.sizes = sizes;
    b.block_of.reserve(static_cast<std::size_t>(n));
    for (std::size_t m = 0; m < sizes.size(); ++m)
        b.block_of.insert(b.block_of.end(), static_cast<std::size_t>(sizes[m]),
                          static_cast<int>(m));
    const int mcount = static_cast<int>(sizes.size());
    b.treated.resize(static_cast<std::size_t>(mcount));
    for (int m = 0; m < mcount; ++m) {
        double e = 0.5;
        if (propensity == PropensityMode::unequal && mcount > 1)
            e = 0.3 + 0.4 * static_cast<double>(m) / (mcount - 1);
        const int nm = sizes[static_cast<std::size_t>(m)];
        int n1 = static_cast<int>(std::lround(e * nm));
        n1 = std::clamp(n1, 2, nm - 2);
        b.treated[static_cast<std::size_t>(m)] = n1;
    }
    return b;
}

std::uint64_t population_seed(const SimulationConfig& cfg) {
    const std::uint64_t key = static_cast<std::uint64_t>(cfg.n) * 1000003ULL +
                              static_cast<std::uint64_t>(cfg.scenario);
    return mix_seed(mix_seed(cfg.master_seed, 0x504F50ULL), key);
}

Population generate_population(const SimulationConfig& cfg, std::uint64_t pop_seed) {
    if (cfg.s > cfg.p) throw DomainError("generate_population: s must not exceed p");
    if (cfg.k > cfg.p) throw DomainError("generate_population: k must not exceed p");
    if (!(cfg.rho > -1.0 && cfg.rho < 1.0))
        throw DomainError("generate_population: rho must lie in (-1, 1)");
    Rng rng(pop_seed, 0);
    Population pop;
    pop.block_sizes = scenario_block_sizes(cfg.n, cfg.scenario);
    const int mcount = static_cast<int>(pop.block_sizes.size());
    pop.block_of.reserve(static_cast<std::size_t>(cfg.n));
    for (int m = 0; m < mcount; ++m)
        pop.block_of.insert(pop.block_of.end(),
                            static_cast<std::size_t>(pop.block_sizes[static_cast<std::size_t>(m)]), m);

    // AR(1) rows: x_1 = z_1, x_j = rho x_{j-1} + sqrt(1-rho^2) z_j gives
    // cov(x_i, x_j) = rho^|i-j| exactly.
    pop.X.resize(cfg.n, cfg.p);
    const double innov = std::sqrt(1.0 - cfg.rho * cfg.rho);
    for (int i = 0; i < cfg.n; ++i) {
        double prev = rng.standard_normal();
        pop.X(i, 0) = prev;
        for (int j = 1; j < cfg.p; ++j) {
            prev = cfg.rho * prev + innov * rng.standard_normal();
            pop.X(i, j) = prev;
        }
    }
    pop.W = pop.X.leftCols(cfg.k);

    pop.beta1 = VectorXd::Zero(cfg.p);
    pop.beta0 = VectorXd::Zero(cfg.p);
    for (int j = 0; j < cfg.s; ++j) pop.beta1(j) = rng.t3();
    for (int j = 0; j < cfg.s; ++j) pop.beta0(j) = rng.t3();

    auto signal = [&](int z) {
        VectorXd sig = pop.X * (z == 1 ? pop.beta1 : pop.beta0);
        for (int i = 0; i < cfg.n; ++i) {
            const double frac =
                static_cast<double>(pop.block_of[static_cast<std::size_t>(i)] + 1) / mcount;
            sig(i) += z == 1 ? frac * frac * frac : frac;
        }
        return sig;
    };
    pop.signal1 = signal(1);
    pop.signal0 = signal(0);

    auto sample_var = [](const VectorXd& v) {
        const double mean = v.mean();
        return (v.array() - mean).square().sum() / (v.size() - 1);
    };
    pop.noise_var[1] = sample_var(pop.signal1) / cfg.snr;
    pop.noise_var[0] = sample_var(pop.signal0) / cfg.snr;

    pop.outcomes.y1.resize(cfg.n);
    pop.outcomes.y0.resize(cfg.n);
    const double sd1 = std::sqrt(pop.noise_var[1]);
    const double sd0 = std::sqrt(pop.noise_var[0]);
    for (int i = 0; i < cfg.n; ++i)
        pop.outcomes.y1(i) = pop.signal1(i) + sd1 * rng.standard_normal();
    for (int i = 0; i < cfg.n; ++i)
        pop.outcomes.y0(i) = pop.signal0(i) + sd0 * rng.standard_normal();
    return pop;
}

namespace {

void parallel_for(int total, int threads, const std::function<void(int)>& body) {
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, total));
    if (threads == 1) {
        for (int i = 0; i < total; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= total) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(total);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct Metrics {
    double bias, sd, rmse, cp, length, sd_pct, le_pct;
};

double sample_sd(const std::vector<double>& v, const std::vector<int>* idx) {
    const std::size_t r = idx ? idx->size() : v.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < r; ++i) mean += idx ? v[static_cast<std::size_t>((*idx)[i])] : v[i];
    mean /= static_cast<double>(r);
    double ss = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        const double d = (idx ? v[static_cast<std::size_t>((*idx)[i])] : v[i]) - mean;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(r - 1));
}

double mean_of(const std::vector<double>& v, const std::vector<int>* idx) {
    const std::size_t r = idx ? idx->size() : v.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < r; ++i) mean += idx ? v[static_cast<std::size_t>((*idx)[i])] : v[i];
    return mean / static_cast<double>(r);
}

Metrics compute_metrics(const std::vector<double>& tau, const std::vector<char>& cover,
                        const std::vector<double>& len, const std::vector<double>& base_tau,
                        const std::vector<double>& base_len, double tau_true,
                        const std::vector<int>* idx) {
    const std::size_t r = idx ? idx->size() : tau.size();
    Metrics m{};
    double mean = 0.0, mse = 0.0, cov = 0.0, length = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t at = idx ? static_cast<std::size_t>((*idx)[i]) : i;
        mean += tau[at];
        const double d = tau[at] - tau_true;
        mse += d * d;
        cov += cover[at];
        length += len[at];
    }
    mean /= static_cast<double>(r);
    m.bias = std::fabs(mean - tau_true);
    m.rmse = std::sqrt(mse / static_cast<double>(r));
    m.cp = cov / static_cast<double>(r);
    m.length = length / static_cast<double>(r);
    m.sd = sample_sd(tau, idx);
    const double base_sd = sample_sd(base_tau, idx);
    const double base_length = mean_of(base_len, idx);
    m.sd_pct = 100.0 * (1.0 - m.sd / base_sd);
    m.le_pct = 100.0 * (1.0 - m.length / base_length);
    return m;
}

SummaryRow make_row(const std::string& method, const Metrics& point,
                    const std::vector<Metrics>& boot, bool is_baseline) {
    auto se_of = [&](auto field) {
        if (boot.empty()) return 0.0;
        std::vector<double> vals;
        vals.reserve(boot.size());
        for (const auto& b : boot) vals.push_back(field(b));
        return sample_sd(vals, nullptr);
    };
    SummaryRow row;
    row.method = method;
    row.is_baseline = is_baseline;
    // Paper scale: bias/sd/rmse/cp/length x100; sd%/le% already percentages.
    row.bias = {100.0 * point.bias, 100.0 * se_of([](const Metrics& m) { return m.bias; })};
    row.sd = {100.0 * point.sd, 100.0 * se_of([](const Metrics& m) { return m.sd; })};
    row.rmse = {100.0 * point.rmse, 100.0 * se_of([](const Metrics& m) { return m.rmse; })};
    row.cp = {100.0 * point.cp, 100.0 * se_of([](const Metrics& m) { return m.cp; })};
    row.length = {100.0 * point.length, 100.0 * se_of([](const Metrics& m) { return m.length; })};
    row.sd_pct = {point.sd_pct, se_of([](const Metrics& m) { return m.sd_pct; })};
    row.le_pct = {point.le_pct, se_of([](const Metrics& m) { return m.le_pct; })};
    return row;
}

}  // namespace

CellResult run_cell(const SimulationConfig& cfg) {
    const Population pop = generate_population(cfg, population_seed(cfg));
    const BlockStructure design_blocks = make_design_blocks(cfg.n, cfg.scenario, cfg.propensity);
    const bool unequal = cfg.propensity == PropensityMode::unequal;

    DesignSpec spec;
    spec.blocks = design_blocks;
    spec.p_a = cfg.p_a;
    if (cfg.rerand) {
        spec.W = pop.W;
        spec.kind = cfg.propensity == PropensityMode::none
                        ? DesignKind::rerandomized
                        : DesignKind::stratified_rerandomized;
    } else {
        spec.kind = cfg.propensity == PropensityMode::none ? DesignKind::complete
                                                           : DesignKind::stratified;
    }
    const double threshold =
        cfg.rerand ? compute_threshold(cfg.p_a, static_cast<int>(pop.W.cols())) : 0.0;

    CellResult cell;
    cell.cfg = cfg;
    cell.tau_true = pop.tau();
    cell.adjusted_method = unequal ? "lasso2" : "lasso";

    const int r_total = cfg.replications;
    auto resize_all = [&](auto&... vecs) { (vecs.resize(static_cast<std::size_t>(r_total)), ...); };
    resize_all(cell.tau_unadj_rep, cell.tau_adj_rep, cell.len_unadj_rep, cell.len_adj_rep,
               cell.var_unadj_rep, cell.var_unadj_rerand_rep, cell.var_adj_rep,
               cell.base_tau_rep, cell.base_len_rep);
    cell.cover_unadj_rep.resize(static_cast<std::size_t>(r_total));
    cell.cover_adj_rep.resize(static_cast<std::size_t>(r_total));
    cell.draws_used_rep.resize(static_cast<std::size_t>(r_total));

    parallel_for(r_total, cfg.threads, [&](int r) {
        const auto ri = static_cast<std::size_t>(r);
        Rng rng(cfg.master_seed, static_cast<std::uint64_t>(r));

        const DesignResult dres = run_design(spec, rng);
        ExperimentData data;
        data.X = pop.X;
        data.W = pop.W;
        data.blocks = design_blocks;
        data.Z = dres.Z;
        data.Y = pop.outcomes.reveal(dres.Z);
        cell.draws_used_rep[ri] = dres.draws_used;

        const EstimateReport unadj = cfg.rerand
                                         ? report_unadj_rerand(data, pop.W, threshold, cfg.alpha)
                                         : report_unadj(data, cfg.alpha);
        cell.tau_unadj_rep[ri] = unadj.tau_hat;
        cell.var_unadj_rep[ri] = var_unadj(data);
        cell.var_unadj_rerand_rep[ri] = unadj.var_hat;  // equals var_unadj when not rerandomized
        cell.len_unadj_rep[ri] = unadj.ci.second - unadj.ci.first;
        cell.cover_unadj_rep[ri] =
            unadj.ci.first <= cell.tau_true && cell.tau_true <= unadj.ci.second;

        const ProblemKind kind = unequal ? ProblemKind::projection : ProblemKind::arm_centered;
        const LassoFit fit1 = cv_select(data, 1, kind, rng);
        const LassoFit fit0 = cv_select(data, 0, kind, rng);
        const EstimateReport adj = unequal ? report_lasso2(data, fit1, fit0, cfg.alpha)
                                           : report_lasso(data, fit1, fit0, cfg.alpha);
        cell.tau_adj_rep[ri] = adj.tau_hat;
        cell.var_adj_rep[ri] = adj.var_hat;
        cell.len_adj_rep[ri] = adj.ci.second - adj.ci.first;
        cell.cover_adj_rep[ri] = adj.ci.first <= cell.tau_true && cell.tau_true <= adj.ci.second;

        // No-rerandomization unadjusted baseline for sd% / le%, same stream.
        if (cfg.rerand) {
            Rng base_rng(cfg.master_seed, static_cast<std::uint64_t>(r));
            ExperimentData base = data;
            base.Z = spec.kind == DesignKind::rerandomized
                         ? draw_complete(cfg.n, design_blocks.treated.at(0), base_rng)
                         : draw_stratified(design_blocks, base_rng);
            base.Y = pop.outcomes.reveal(base.Z);
            const EstimateReport base_rep = report_unadj(base, cfg.alpha);
            cell.base_tau_rep[ri] = base_rep.tau_hat;
            cell.base_len_rep[ri] = base_rep.ci.second - base_rep.ci.first;
        } else {
            cell.base_tau_rep[ri] = unadj.tau_hat;
            cell.base_len_rep[ri] = unadj.ci.second - unadj.ci.first;
        }
    });

    // Point metrics and bootstrap standard errors (paired resampling over
    // replication indices, fixed stream, sequential so results are
    // independent of thread count).
    const Metrics unadj_point =
        compute_metrics(cell.tau_unadj_rep, cell.cover_unadj_rep, cell.len_unadj_rep,
                        cell.base_tau_rep, cell.base_len_rep, cell.tau_true, nullptr);
    const Metrics adj_point =
        compute_metrics(cell.tau_adj_rep, cell.cover_adj_rep, cell.len_adj_rep,
                        cell.base_tau_rep, cell.base_len_rep, cell.tau_true, nullptr);

    std::vector<Metrics> unadj_boot, adj_boot;
    if (cfg.bootstrap_reps > 0) {
        Rng boot_rng(cfg.master_seed, (1ULL << 40) + 0xB5EULL);
        unadj_boot.reserve(static_cast<std::size_t>(cfg.bootstrap_reps));
        adj_boot.reserve(static_cast<std::size_t>(cfg.bootstrap_reps));
        std::vector<int> idx(static_cast<std::size_t>(r_total));
        for (int b = 0; b < cfg.bootstrap_reps; ++b) {
            for (auto& i : idx) i = boot_rng.uniform_int(r_total);
            unadj_boot.push_back(compute_metrics(cell.tau_unadj_rep, cell.cover_unadj_rep,
                                                 cell.len_unadj_rep, cell.base_tau_rep,
                                                 cell.base_len_rep, cell.tau_true, &idx));
            adj_boot.push_back(compute_metrics(cell.tau_adj_rep, cell.cover_adj_rep,
                                               cell.len_adj_rep, cell.base_tau_rep,
                                               cell.base_len_rep, cell.tau_true, &idx));
        }
    }

    cell.rows.push_back(make_row("unadj", unadj_point, unadj_boot, !cfg.rerand));
    cell.rows.push_back(make_row(cell.adjusted_method, adj_point, adj_boot, false));
    return cell;
}

TableResult run_table(const SimulationConfig& proto) {
    TableResult table;
    table.scenario = proto.scenario;
    for (int n : {200, 500}) {
        for (PropensityMode prop :
             {PropensityMode::none, PropensityMode::equal, PropensityMode::unequal}) {
            for (bool rerand : {false, true}) {
                SimulationConfig cfg = proto;
                cfg.n = n;
                cfg.propensity = prop;
                cfg.rerand = rerand;
                table.cells.push_back(run_cell(cfg));
            }
        }
    }
    return table;
}

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
    char buf[48];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

}  // namespace

std::string table_csv(const TableResult& table) {
    std::ostringstream os;
    os << "scenario,n,block,rerand,est,bias,bias_se,sd,sd_se,sd_pct,sd_pct_se,"
          "rmse,rmse_se,cp,cp_se,length,length_se,le_pct,le_pct_se\n";
    for (const auto& cell : table.cells) {
        for (const auto& row : cell.rows) {
            os << scenario_name(cell.cfg.scenario) << ',' << cell.cfg.n << ','
               << propensity_name(cell.cfg.propensity) << ','
               << (cell.cfg.rerand ? "yes" : "no") << ',' << row.method << ','
               << fmt(row.bias.value) << ',' << fmt(row.bias.se) << ',' << fmt(row.sd.value)
               << ',' << fmt(row.sd.se) << ',';
            if (row.is_baseline)
                os << ",,";
            else
                os << fmt(row.sd_pct.value) << ',' << fmt(row.sd_pct.se) << ',';
            os << fmt(row.rmse.value) << ',' << fmt(row.rmse.se) << ',' << fmt(row.cp.value)
               << ',' << fmt(row.cp.se) << ',' << fmt(row.length.value) << ','
               << fmt(row.length.se) << ',';
            if (row.is_baseline)
                os << ',';
            else
                os << fmt(row.le_pct.value) << ',' << fmt(row.le_pct.se);
            os << '\n';
        }
    }
    return os.str();
}

std::string cell_estimates_csv(const CellResult& cell) {
    std::ostringstream os;
    os << "rep,tau_unadj,tau_" << cell.adjusted_method << "\n";
    char buf[64];
    for (std::size_t r = 0; r < cell.tau_unadj_rep.size(); ++r) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r + 1, cell.tau_unadj_rep[r],
                      cell.tau_adj_rep[r]);
        os << buf;
    }
    return os.str();
}

std::string format_table(const std::vector<CellResult>& cells) {
    std::ostringstream os;
    os << "scenario    n block rerand est     bias       sd       sd%     rmse     cp     "
          "length   le%\n";
    for (const auto& cell : cells) {
        for (const auto& row : cell.rows) {
            char line[256];
            const std::string bias = fmt(row.bias.value, "%.0f") + "(" + fmt(row.bias.se, "%.0f") + ")";
            const std::string sd = fmt(row.sd.value, "%.0f") + "(" + fmt(row.sd.se, "%.0f") + ")";
            const std::string rmse = fmt(row.rmse.value, "%.0f") + "(" + fmt(row.rmse.se, "%.0f") + ")";
            const std::string cp = fmt(row.cp.value, "%.0f") + "(" + fmt(row.cp.se, "%.0f") + ")";
            const std::string len = fmt(row.length.value, "%.0f") + "(" + fmt(row.length.se, "%.0f") + ")";
            const std::string sd_pct = row.is_baseline ? "-" : fmt(row.sd_pct.value, "%.0f");
            const std::string le_pct = row.is_baseline ? "-" : fmt(row.le_pct.value, "%.0f");
            std::snprintf(line, sizeof line,
                          "%-8s %4d %-5s %-6s %-7s %-10s %-8s %-7s %-8s %-6s %-8s %s\n",
                          scenario_name(cell.cfg.scenario), cell.cfg.n,
                          propensity_name(cell.cfg.propensity), cell.cfg.rerand ? "yes" : "no",
                          row.method.c_str(), bias.c_str(), sd.c_str(), sd_pct.c_str(),
                          rmse.c_str(), cp.c_str(), len.c_str(), le_pct.c_str());
            os << line;
        }
    }
    return os.str();
}

}  // namespace stratx
