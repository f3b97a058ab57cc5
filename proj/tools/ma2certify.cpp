// ma2certify: eigen-derivative oracle, Monge-Ampere solves, certificates and
// sweeps from the command line.
//
// Exit status: 0 when every invariant passes, 1 when a check fails, 2 on
// usage, configuration, I/O or solver errors.

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "ma2/error.hpp"
#include "ma2/sweep.hpp"

namespace {

using namespace ma2;

int cmd_eigcheck(std::optional<int> n, int draws, std::uint64_t seed) {
    std::vector<int> dims = n ? std::vector<int>{*n} : std::vector<int>{2, 3, 4};
    sweep::EigCheckResult total;
    for (int d : dims) {
        const auto r = sweep::eigcheck(d, draws, seed + static_cast<std::uint64_t>(d));
        total.n = std::max(total.n, d);
        total.draws += r.draws;
        total.max_rel_err_first = std::max(total.max_rel_err_first, r.max_rel_err_first);
        total.max_rel_err_second = std::max(total.max_rel_err_second, r.max_rel_err_second);
        total.failures.insert(total.failures.end(), r.failures.begin(), r.failures.end());
    }
    std::cout << sweep::eigcheck_json(total);
    return total.failures.empty() ? 0 : 1;
}

int cmd_solve(const std::string& problem_path, const std::string& out_dir) {
    const auto problem = sweep::parse_problem(sweep::read_file(problem_path));
    auto grid = solver::DiscGrid::from_spacing(problem.R, problem.h);
    const auto spec = solver::manufacture(problem.family, grid);
    solver::SolverConfig cfg;
    cfg.tol = problem.tol;
    const auto sol = solver::newton_solve(spec, cfg);

    sweep::RunResult result;
    result.residual_norm = sol.residual_norm;
    result.convexity_margin = sol.convexity_margin;
    result.iterations = sol.iterations;
    if (spec.exact) result.error_vs_exact = sol.max_error(spec);
    if (!out_dir.empty()) sweep::write_run_dir(out_dir, problem, sol, result);
    std::cout << sweep::run_result_json(result);
    return sol.convexity_margin > 0.0 ? 0 : 1;
}

int cmd_certify(const std::string& run_dir, std::optional<double> beta, std::optional<double> c0,
                std::optional<double> r, const std::string& out_file) {
    const auto run = sweep::load_run_dir(run_dir);
    auto cfg = aux::AuxConfig::defaults(run.spec);
    if (beta) cfg.beta = *beta;
    if (c0) cfg.c0 = *c0;
    if (r) cfg.r = *r;
    const auto rep = aux::certify(run.solution, run.spec, cfg);
    const std::string text = sweep::certificate_json(rep);
    if (!out_file.empty()) sweep::write_file_atomic(out_file, text);
    std::cout << text;
    return rep.invariants.all() ? 0 : 1;
}

void print_invariants(const std::vector<sweep::InvariantResult>& inv) {
    for (const auto& i : inv)
        std::fprintf(stderr, "%-24s %s%s%s\n", i.name.c_str(), i.passed ? "PASS" : "FAIL",
                     i.detail.empty() ? "" : "  ", i.detail.c_str());
}

int cmd_sweep(const std::string& config_path, std::optional<int> jobs) {
    auto cfg = sweep::SweepConfig::load(config_path);
    if (jobs) {
        if (*jobs < 1) throw ConfigError("--jobs must be positive");
        cfg.jobs = *jobs;
    }
    const auto records = sweep::run_sweep(cfg);
    const auto fits = sweep::fit_by_class(records);
    const auto inv = sweep::evaluate_invariants(records, fits);
    sweep::emit_report(records, fits, inv, cfg.csv_path, cfg.json_path);

    int failed = 0;
    for (const auto& rec : records) failed += rec.ok() ? 0 : 1;
    std::fprintf(stderr, "%zu records (%d failed) -> %s, %s\n", records.size(), failed, cfg.csv_path.c_str(),
                 cfg.json_path.c_str());
    print_invariants(inv);
    return sweep::all_passed(inv) ? 0 : 1;
}

int cmd_report(const std::string& csv_path, const std::string& json_out) {
    const auto records = sweep::read_records_csv(csv_path);
    const auto fits = sweep::fit_by_class(records);
    const auto inv = sweep::evaluate_invariants(records, fits, true);
    const std::string text = sweep::summary_json(records, fits, inv);
    if (!json_out.empty()) sweep::write_file_atomic(json_out, text);
    std::cout << text;
    print_invariants(inv);
    return sweep::all_passed(inv) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monge-Ampere interior C2 estimate: solver, certificate and sweep harness"};
    app.require_subcommand(1);

    std::optional<int> n;
    int draws = 100;
    std::uint64_t seed = 20240601;
    auto* eig = app.add_subcommand("eigcheck", "Analytic eigen-derivatives against finite differences");
    eig->add_option("--n", n, "Matrix size (default: 2, 3 and 4)")->check(CLI::Range(2, 6));
    eig->add_option("--draws", draws, "Random matrices per size")->check(CLI::PositiveNumber);
    eig->add_option("--seed", seed, "RNG seed");

    std::string problem_path, out_dir;
    auto* solve = app.add_subcommand("solve", "Solve a manufactured Dirichlet problem");
    solve->add_option("problem", problem_path, "Problem JSON")->required()->check(CLI::ExistingFile);
    solve->add_option("--out", out_dir, "Run directory for problem.json, result.json and field.csv");

    std::string run_dir, cert_out;
    std::optional<double> beta, c0, radius;
    auto* cert = app.add_subcommand("certify", "Evaluate the auxiliary-function certificate on a solved run");
    cert->add_option("run", run_dir, "Run directory written by solve --out")->required()->check(CLI::ExistingDirectory);
    cert->add_option("--beta", beta, "Weight exponent (default 4)");
    cert->add_option("--c0", c0, "Gradient weight constant (default 32/m)");
    cert->add_option("--r", radius, "Inner radius (default R/sqrt 2)");
    cert->add_option("--out", cert_out, "Also write the report here");

    std::string sweep_path;
    std::optional<int> jobs;
    auto* sw = app.add_subcommand("sweep", "Run a parameter sweep and fit the bound constants");
    sw->add_option("config", sweep_path, "Sweep JSON")->required()->check(CLI::ExistingFile);
    sw->add_option("--jobs", jobs, "Worker threads (overrides the config)");

    std::string csv_path, report_out;
    auto* rep = app.add_subcommand("report", "Refit and recheck a records CSV");
    rep->add_option("records", csv_path, "Records CSV written by sweep")->required()->check(CLI::ExistingFile);
    rep->add_option("--json", report_out, "Also write the summary here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*eig) return cmd_eigcheck(n, draws, seed);
        if (*solve) return cmd_solve(problem_path, out_dir);
        if (*cert) return cmd_certify(run_dir, beta, c0, radius, cert_out);
        if (*sw) return cmd_sweep(sweep_path, jobs);
        if (*rep) return cmd_report(csv_path, report_out);
    } catch (const ma2::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
