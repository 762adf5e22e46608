// stratx: design and analysis of randomized experiments with high-dimensional
// covariates. Subcommands: design (emit an assignment), analyze (estimate
// from observed data), simulate (replication study cells/tables), check
// (enumeration / concentration / solver property suites).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "stratx/check.hpp"
#include "stratx/csv.hpp"
#include "stratx/design.hpp"
#include "stratx/errors.hpp"
#include "stratx/estimate.hpp"
#include "stratx/json_io.hpp"
#include "stratx/lasso.hpp"
#include "stratx/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes (stable, documented in README):
//   0 ok; 1 failed check property; 2 validation/usage; 3 rerandomization draw
//   budget exhausted; 4 degrees of freedom exhausted; 5 simulation cell failure.
constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitValidation = 2;
constexpr int kExitMaxDraws = 3;
constexpr int kExitDof = 4;
constexpr int kExitSimFailure = 5;

void emit_error(const std::string& kind, const std::string& message, int code) {
    json j;
    j["error"] = kind;
    j["message"] = message;
    j["code"] = code;
    std::cerr << j.dump() << "\n";
}

std::uint64_t resolve_seed(std::uint64_t seed_flag, bool seed_given) {
    if (seed_given) return seed_flag;
    if (const char* env = std::getenv("STRATX_SEED")) return std::strtoull(env, nullptr, 10);
    return 1;
}

struct SchemaFlags {
    std::string schema_json;  // inline JSON or @file
    std::string outcome, assignment, block;
    std::vector<std::string> design_cols, covariate_cols;

    stratx::CsvSchema build() const {
        stratx::CsvSchema s;
        if (!schema_json.empty()) {
            std::string text = schema_json;
            if (text.size() > 1 && text[0] == '@') {
                std::ifstream in(text.substr(1));
                if (!in) throw stratx::DomainError("cannot open schema file " + text.substr(1));
                std::ostringstream buf;
                buf << in.rdbuf();
                text = buf.str();
            }
            const json j = json::parse(text);
            if (j.contains("outcome")) s.outcome = j["outcome"].get<std::string>();
            if (j.contains("assignment")) s.assignment = j["assignment"].get<std::string>();
            if (j.contains("block")) s.block = j["block"].get<std::string>();
            if (j.contains("design"))
                s.design_covariates = j["design"].get<std::vector<std::string>>();
            if (j.contains("covariates"))
                s.covariates = j["covariates"].get<std::vector<std::string>>();
        }
        if (!outcome.empty()) s.outcome = outcome;
        if (!assignment.empty()) s.assignment = assignment;
        if (!block.empty()) s.block = block;
        if (!design_cols.empty()) s.design_covariates = design_cols;
        if (!covariate_cols.empty()) s.covariates = covariate_cols;
        return s;
    }
};

void add_schema_flags(CLI::App* cmd, SchemaFlags& flags) {
    cmd->add_option("--schema", flags.schema_json,
                    "column roles as JSON (or @file): "
                    R"({"outcome":"y","assignment":"z","block":"b","design":[...],"covariates":[...]})");
    cmd->add_option("--outcome-col", flags.outcome, "outcome column name");
    cmd->add_option("--assign-col", flags.assignment, "assignment column name");
    cmd->add_option("--block-col", flags.block, "block column name");
    cmd->add_option("--design-cols", flags.design_cols, "design covariate columns")
        ->delimiter(',');
    cmd->add_option("--covariate-cols", flags.covariate_cols,
                    "analysis covariate columns (\"*\" = all remaining)")
        ->delimiter(',');
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw stratx::DomainError("cannot write " + path.string());
    out << content;
}

// Hard violations abort; block-dependent columns are dropped with a warning.
stratx::ExperimentData validate_and_drop(const stratx::ExperimentData& data) {
    auto report = stratx::validate(data);
    if (!report.ok()) {
        const std::size_t droppable = report.drop_x.size() + report.drop_w.size();
        if (report.violations.size() > droppable) {
            std::string msg;
            for (const auto& v : report.violations) msg += (msg.empty() ? "" : "; ") + v;
            throw stratx::DomainError(msg);
        }
        json warn;
        warn["warning"] = "dropping block-dependent columns";
        warn["drop_x"] = report.drop_x;
        warn["drop_w"] = report.drop_w;
        std::cerr << warn.dump() << "\n";
        return drop_columns(data, report);
    }
    return data;
}

int cmd_design(const std::string& input, const SchemaFlags& schema_flags,
               const std::string& design_name, double pa, double propensity, int max_draws,
               std::uint64_t seed, const std::string& out_dir, const std::string& format) {
    try {
        const auto table = stratx::read_csv_file(input);
        auto data = stratx::ingest_csv(table, schema_flags.build());

        // Treated counts from the requested propensity, clamped to [2, n-2].
        const bool stratified = design_name == "stratified" || design_name == "strat-rerand";
        const bool rerand = design_name == "rerand" || design_name == "strat-rerand";
        if (!stratified) data.blocks = stratx::BlockStructure::single(data.n(), 0);
        data.blocks.treated.resize(static_cast<std::size_t>(data.blocks.num_blocks()));
        for (int m = 0; m < data.blocks.num_blocks(); ++m) {
            const int nm = data.blocks.sizes[static_cast<std::size_t>(m)];
            const int n1 = std::clamp(static_cast<int>(std::lround(propensity * nm)), 2, nm - 2);
            data.blocks.treated[static_cast<std::size_t>(m)] = n1;
        }

        data = validate_and_drop(data);
        if (rerand && data.k() == 0)
            throw stratx::DomainError("rerandomized design requires design covariate columns");

        stratx::DesignSpec spec;
        spec.blocks = data.blocks;
        spec.p_a = pa;
        spec.max_draws = max_draws;
        spec.W = data.W;
        if (rerand)
            spec.kind = stratified ? stratx::DesignKind::stratified_rerandomized
                                   : stratx::DesignKind::rerandomized;
        else
            spec.kind = stratified ? stratx::DesignKind::stratified
                                   : stratx::DesignKind::complete;

        stratx::Rng rng(seed, 0);
        const auto result = stratx::run_design(spec, rng);

        const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
        write_file(dir / "design.json", stratx::to_json(result).dump(2) + "\n");

        // Augmented input with the assignment column appended.
        std::ostringstream aug;
        for (std::size_t j = 0; j < table.header.size(); ++j)
            aug << (j ? "," : "") << table.header[j];
        aug << ",z\n";
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            for (std::size_t j = 0; j < table.rows[r].size(); ++j)
                aug << (j ? "," : "") << table.rows[r][j];
            aug << ',' << result.Z(static_cast<int>(r)) << "\n";
        }
        write_file(dir / "assigned.csv", aug.str());
        if (format == "csv") {
            std::cout << "unit,z\n";
            for (int i = 0; i < result.Z.size(); ++i)
                std::cout << (i + 1) << ',' << result.Z(i) << "\n";
        } else {
            std::cout << stratx::to_json(result).dump() << "\n";
        }
        return kExitOk;
    } catch (const stratx::MaxDrawsExceeded& e) {
        emit_error("max_draws_exceeded", e.what(), kExitMaxDraws);
        return kExitMaxDraws;
    } catch (const stratx::RankDeficient& e) {
        emit_error("rank_deficient",
                   std::string(e.what()) + " (design covariate " +
                       std::to_string(e.pivot_index + 1) + ")",
                   kExitValidation);
        return kExitValidation;
    } catch (const std::exception& e) {
        emit_error("validation", e.what(), kExitValidation);
        return kExitValidation;
    }
}

int cmd_analyze(const std::string& input, const SchemaFlags& schema_flags,
                const std::string& method, double alpha, double rerand_a, double rerand_pa,
                std::uint64_t seed, const std::string& out_dir, const std::string& format) {
    try {
        auto data = stratx::ingest_csv_file(input, schema_flags.build());
        if (!data.has_outcome() || !data.has_assignment())
            throw stratx::DomainError("analyze requires outcome and assignment columns");
        data = validate_and_drop(data);

        const bool rerand_aware = rerand_a > 0.0 || rerand_pa > 0.0;
        double a = rerand_a;
        if (rerand_aware && !(a > 0.0))
            a = stratx::compute_threshold(rerand_pa, data.k());
        if (rerand_aware && data.k() == 0)
            throw stratx::DomainError("rerandomization-aware variance requires design covariates");

        std::vector<stratx::EstimateReport> reports;
        stratx::Rng rng(seed, 0);
        auto run_lasso = [&](bool projection) {
            const auto kind = projection ? stratx::ProblemKind::projection
                                         : stratx::ProblemKind::arm_centered;
            const auto fit1 = stratx::cv_select(data, 1, kind, rng);
            const auto fit0 = stratx::cv_select(data, 0, kind, rng);
            return projection ? stratx::report_lasso2(data, fit1, fit0, alpha)
                              : stratx::report_lasso(data, fit1, fit0, alpha);
        };

        if (method == "unadj" || method == "all")
            reports.push_back(rerand_aware
                                  ? stratx::report_unadj_rerand(data, data.W, a, alpha)
                                  : stratx::report_unadj(data, alpha));
        if (method == "lasso" || method == "all") reports.push_back(run_lasso(false));
        if (method == "lasso2" || method == "all") reports.push_back(run_lasso(true));
        if (reports.empty()) throw stratx::DomainError("unknown method '" + method + "'");

        json out = json::array();
        std::string csv;
        for (const auto& rep : reports) {
            out.push_back(stratx::to_json(rep));
            csv += stratx::report_csv(rep);
        }
        std::cout << (format == "csv" ? csv : out.dump(2) + "\n");
        if (!out_dir.empty()) {
            const fs::path dir(out_dir);
            write_file(dir / "reports.json", out.dump(2) + "\n");
            write_file(dir / "reports.csv", csv);
        }
        return kExitOk;
    } catch (const stratx::DegreesOfFreedomExhausted& e) {
        emit_error("degrees_of_freedom_exhausted", e.what(), kExitDof);
        return kExitDof;
    } catch (const std::exception& e) {
        emit_error("validation", e.what(), kExitValidation);
        return kExitValidation;
    }
}

int cmd_simulate(const std::string& scenario, int n, const std::string& block,
                 const std::string& rerand, bool full_table, int replications, int bootstrap,
                 std::uint64_t seed, int threads, const std::string& out_dir,
                 const std::string& format) {
    try {
        stratx::SimulationConfig cfg;
        cfg.scenario = stratx::scenario_from_name(scenario);
        cfg.replications = replications;
        cfg.bootstrap_reps = bootstrap;
        cfg.master_seed = seed;
        cfg.threads = threads;

        std::vector<stratx::CellResult> cells;
        if (full_table) {
            const auto table = stratx::run_table(cfg);
            cells = table.cells;
            if (!out_dir.empty())
                write_file(fs::path(out_dir) /
                               (std::string(stratx::scenario_name(cfg.scenario)) + ".csv"),
                           stratx::table_csv(table));
        } else {
            cfg.n = n;
            cfg.propensity = stratx::propensity_from_name(block);
            if (rerand != "yes" && rerand != "no")
                throw stratx::DomainError("--rerand must be yes or no");
            cfg.rerand = rerand == "yes";
            cells.push_back(stratx::run_cell(cfg));
            if (!out_dir.empty()) {
                stratx::TableResult t;
                t.scenario = cfg.scenario;
                t.cells = cells;
                write_file(fs::path(out_dir) / (cfg.cell_name() + ".csv"),
                           stratx::table_csv(t));
            }
        }
        if (!out_dir.empty()) {
            for (const auto& cell : cells) {
                write_file(fs::path(out_dir) / (cell.cfg.cell_name() + ".summary.json"),
                           stratx::cell_summary_json(cell).dump(2) + "\n");
                write_file(fs::path(out_dir) / (cell.cfg.cell_name() + ".estimates.csv"),
                           stratx::cell_estimates_csv(cell));
            }
        }
        if (format == "csv") {
            stratx::TableResult t;
            t.scenario = cells.front().cfg.scenario;
            t.cells = cells;
            std::cout << stratx::table_csv(t);
        } else {
            std::cout << stratx::format_table(cells);
        }
        return kExitOk;
    } catch (const stratx::DomainError& e) {
        emit_error("usage", e.what(), kExitValidation);
        return kExitValidation;
    } catch (const std::exception& e) {
        emit_error("cell_failure", e.what(), kExitSimFailure);
        return kExitSimFailure;
    }
}

int cmd_check(std::uint64_t seed, int draws, int problems, bool inject_bug) {
    stratx::CheckOptions opts;
    opts.seed = seed;
    opts.concentration_draws = draws;
    opts.kkt_problems = problems;
    if (inject_bug) opts.sigma_scale = 0.1;
    const auto results = stratx::run_all_checks(opts);
    bool all_pass = true;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  [" << r.detail << "]\n";
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "all properties pass" : "PROPERTY FAILURES") << "\n";
    return all_pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"randomized experiments with high-dimensional covariates: "
                 "blocking, rerandomization, Lasso adjustment"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    bool seed_given = false;
    app.add_option("--seed", seed, "random seed (env STRATX_SEED if unset)")
        ->each([&](const std::string&) { seed_given = true; });
    std::string format = "json";
    app.add_option("--format", format, "stdout rendering: json|csv (table for simulate)")
        ->check(CLI::IsMember({"json", "csv"}));

    // design
    auto* design = app.add_subcommand("design", "draw a treatment assignment");
    std::string d_input, d_out, d_kind = "stratified";
    SchemaFlags d_schema;
    double d_pa = 0.001, d_prop = 0.5;
    int d_max_draws = 0;
    design->add_option("--input", d_input, "input CSV")->required();
    add_schema_flags(design, d_schema);
    design->add_option("--design", d_kind, "complete|stratified|rerand|strat-rerand")
        ->check(CLI::IsMember({"complete", "stratified", "rerand", "strat-rerand"}));
    design->add_option("--pa", d_pa, "acceptance probability for rerandomization");
    design->add_option("--prop", d_prop, "treated proportion per block (default 0.5)");
    design->add_option("--max-draws", d_max_draws, "rerandomization draw cap (0 = default)");
    design->add_option("--out", d_out, "output directory");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "estimate the average treatment effect");
    std::string a_input, a_out, a_method = "unadj";
    SchemaFlags a_schema;
    double a_alpha = 0.05, a_rerand_a = 0.0, a_rerand_pa = 0.0;
    analyze->add_option("--input", a_input, "input CSV")->required();
    add_schema_flags(analyze, a_schema);
    analyze->add_option("--method", a_method, "unadj|lasso|lasso2|all")
        ->check(CLI::IsMember({"unadj", "lasso", "lasso2", "all"}));
    analyze->add_option("--alpha", a_alpha, "1 - confidence level");
    analyze->add_option("--rerand-a", a_rerand_a,
                        "balance threshold used at the design stage (rerand-aware variance)");
    analyze->add_option("--rerand-pa", a_rerand_pa,
                        "acceptance probability used at the design stage");
    analyze->add_option("--out", a_out, "output directory");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "replication study");
    std::string s_scenario = "MS", s_block = "no", s_rerand = "no", s_out;
    int s_n = 200, s_reps = 1000, s_boot = 500, s_threads = 0;
    bool s_table = false;
    simulate->add_option("--scenario", s_scenario, "MS|FL|MSFL");
    simulate->add_option("--n", s_n, "sample size (single cell)");
    simulate->add_option("--block", s_block, "no|eq|uneq (single cell)");
    simulate->add_option("--rerand", s_rerand, "yes|no (single cell)");
    simulate->add_flag("--table", s_table, "run the full 12-cell grid of the scenario");
    simulate->add_option("--replications", s_reps, "replications per cell");
    simulate->add_option("--bootstrap", s_boot, "bootstrap resamples for standard errors");
    simulate->add_option("--threads", s_threads, "worker threads (0 = hardware)");
    simulate->add_option("--out", s_out, "output directory");

    // check
    auto* check = app.add_subcommand("check", "run the property suites");
    int c_draws = 100000, c_problems = 50;
    bool c_inject = false;
    check->add_option("--draws", c_draws, "Monte Carlo draws for the concentration suite");
    check->add_option("--problems", c_problems, "random problems for the solver suite");
    check->add_flag("--inject-bug", c_inject,
                    "negative control: corrupt the bound scale so the suite must fail");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::ostringstream usage;
        usage << app.help();
        emit_error("usage", e.what(), kExitValidation);
        std::cerr << usage.str();
        return kExitValidation;
    }

    const std::uint64_t effective_seed = resolve_seed(seed, seed_given);
    if (design->parsed())
        return cmd_design(d_input, d_schema, d_kind, d_pa, d_prop, d_max_draws, effective_seed,
                          d_out, format);
    if (analyze->parsed())
        return cmd_analyze(a_input, a_schema, a_method, a_alpha, a_rerand_a, a_rerand_pa,
                           effective_seed, a_out, format);
    if (simulate->parsed())
        return cmd_simulate(s_scenario, s_n, s_block, s_rerand, s_table, s_reps, s_boot,
                            effective_seed, s_threads, s_out, format);
    if (check->parsed()) return cmd_check(effective_seed, c_draws, c_problems, c_inject);
    return kExitValidation;
}
