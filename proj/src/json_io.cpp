#include "stratx/json_io.hpp"

#include <cmath>
#include <sstream>

#include "stratx/csv.hpp"

namespace stratx {

using nlohmann::json;

json to_json(const DesignResult& res) {
    json j;
    j["Z"] = std::vector<int>(res.Z.data(), res.Z.data() + res.Z.size());
    j["draws_used"] = res.draws_used;
    if (res.mahalanobis) j["mahalanobis"] = *res.mahalanobis;
    if (res.threshold_a) {
        if (std::isinf(*res.threshold_a))
            j["threshold_a"] = "inf";
        else
            j["threshold_a"] = *res.threshold_a;
    }
    return j;
}

json to_json(const LassoFit& fit) {
    json j;
    j["lambda"] = fit.lambda;
    j["n_iter"] = fit.n_iter;
    j["kkt_residual"] = fit.kkt_residual;
    j["active_set"] = fit.active_set;
    j["beta"] = std::vector<double>(fit.beta.data(), fit.beta.data() + fit.beta.size());
    if (fit.cv) {
        json c;
        c["lambda_grid"] = std::vector<double>(fit.cv->lambda_grid.data(),
                                               fit.cv->lambda_grid.data() + fit.cv->lambda_grid.size());
        c["cv_error"] = std::vector<double>(fit.cv->cv_error.data(),
                                            fit.cv->cv_error.data() + fit.cv->cv_error.size());
        c["chosen_lambda"] = fit.cv->chosen_lambda;
        c["fold_of"] = fit.cv->fold_of;
        c["all_rejected"] = fit.cv->all_rejected;
        j["cv"] = std::move(c);
    }
    return j;
}

json to_json(const EstimateReport& rep) {
    json j;
    j["method"] = rep.method;
    j["tau_hat"] = rep.tau_hat;
    j["var_hat"] = rep.var_hat;
    j["alpha"] = rep.alpha;
    j["ci"] = {rep.ci.first, rep.ci.second};
    j["s_hat"] = rep.s_hat;
    j["rerand_adjusted"] = rep.rerand_adjusted;
    json diag = json::array();
    for (Eigen::Index m = 0; m < rep.block_residual_var.rows(); ++m)
        diag.push_back({rep.block_residual_var(m, 0), rep.block_residual_var(m, 1)});
    j["block_residual_var"] = std::move(diag);
    return j;
}

json to_json(const SummaryRow& row) {
    auto metric = [](const MetricWithSe& m) { return json{{"value", m.value}, {"se", m.se}}; };
    json j;
    j["method"] = row.method;
    j["bias"] = metric(row.bias);
    j["sd"] = metric(row.sd);
    j["rmse"] = metric(row.rmse);
    j["cp"] = metric(row.cp);
    j["length"] = metric(row.length);
    if (!row.is_baseline) {
        j["sd_pct"] = metric(row.sd_pct);
        j["le_pct"] = metric(row.le_pct);
    }
    return j;
}

json cell_summary_json(const CellResult& cell) {
    json j;
    j["cell"] = cell.cfg.cell_name();
    j["scenario"] = scenario_name(cell.cfg.scenario);
    j["n"] = cell.cfg.n;
    j["block"] = propensity_name(cell.cfg.propensity);
    j["rerand"] = cell.cfg.rerand;
    j["replications"] = cell.cfg.replications;
    j["bootstrap_reps"] = cell.cfg.bootstrap_reps;
    j["master_seed"] = cell.cfg.master_seed;
    j["tau_true"] = cell.tau_true;
    j["adjusted_method"] = cell.adjusted_method;
    json rows = json::array();
    for (const auto& row : cell.rows) rows.push_back(to_json(row));
    j["rows"] = std::move(rows);
    return j;
}

std::string report_csv(const EstimateReport& rep) {
    std::ostringstream os;
    os << "method,tau_hat,var_hat,ci_lo,ci_hi,alpha,s_hat,rerand_adjusted\n";
    os << rep.method << ',' << format_double(rep.tau_hat) << ',' << format_double(rep.var_hat)
       << ',' << format_double(rep.ci.first) << ',' << format_double(rep.ci.second) << ','
       << format_double(rep.alpha) << ',';
    for (std::size_t i = 0; i < rep.s_hat.size(); ++i) {
        if (i) os << ';';
        os << rep.s_hat[i];
    }
    os << ',' << (rep.rerand_adjusted ? 1 : 0) << '\n';
    return os.str();
}

}  // namespace stratx
