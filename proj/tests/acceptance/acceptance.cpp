// Acceptance run: one PASS/FAIL line per primary criterion, non-zero exit
// status if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ma2/aux_certificate.hpp"
#include "ma2/eigenperturb.hpp"
#include "ma2/error.hpp"
#include "ma2/ma_solver.hpp"
#include "ma2/sweep.hpp"

namespace fs = std::filesystem;
using namespace ma2;
using solver::ExactSolutionSpec;

namespace {

constexpr double kEps = 2.220446049250313e-16;

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string g(double v) { return fmt("%.3g", v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::shared_ptr<const solver::DiscGrid> grid(double R, int n) { return std::make_shared<const solver::DiscGrid>(R, n); }

perturb::SymmetricMatrix random_symmetric(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = u(rng);
    return perturb::SymmetricMatrix(a);
}

// ---------------------------------------------------------------------------

Outcome eigen_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    double first = 0.0, second = 0.0;
    std::size_t failures = 0;
    for (int n : {2, 3, 4}) {
        const auto r = sweep::eigcheck(n, 100, 20240601 + static_cast<std::uint64_t>(n));
        first = std::max(first, r.max_rel_err_first);
        second = std::max(second, r.max_rel_err_second);
        failures += r.failures.size();
    }
    const double t = seconds_since(t0);
    return {failures == 0 && first <= 1e-6 && second <= 1e-4 && t <= 10.0,
            "first " + g(first) + " (<= 1e-6), second " + g(second) + " (<= 1e-4), " + fmt("%.2f", t) + " s (<= 10)"};
}

Outcome closed_form_crosscheck() {
    std::mt19937_64 rng(7);
    int count = 0, rejected = 0;
    double val = 0.0, vec = 0.0;
    while (count < 1000) {
        const auto w = random_symmetric(rng, 2);
        const auto ref = perturb::eigen_decompose(w);
        if (!(ref.gap > 1e-6)) {
            ++rejected;
            continue;
        }
        const auto cf = perturb::eigen2x2_closed_form(w);
        const double scale = std::max(1.0, ref.values.cwiseAbs().maxCoeff());
        val = std::max(val, (cf.values - ref.values).cwiseAbs().maxCoeff() / scale);
        for (int k = 0; k < 2; ++k) {
            const Eigen::Vector2d a = cf.vector(k), b = ref.vector(k);
            vec = std::max(vec, std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff()));
        }
        ++count;
    }
    return {val <= 1e-12 && vec <= 1e-12, std::to_string(count) + " matrices (" + std::to_string(rejected) +
                                              " rejected for gap), eigenvalues " + g(val) + ", eigenvectors " + g(vec) +
                                              " (<= 1e-12)"};
}

Outcome taylor_order() {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> normal;
    const std::array<double, 2> eps{1e-2, 1e-3};
    std::vector<double> lx, ly;
    double worst_pair = 1e300;
    int directions = 0;
    while (directions < 50) {
        const auto w = random_symmetric(rng, 3);
        const auto base = perturb::eigen_decompose(w);
        if (base.gap < 0.2) continue;
        const auto d = perturb::conjugate_to_general(w, 0);
        Eigen::MatrixXd e(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) e(i, j) = normal(rng);
        e = (0.5 * (e + e.transpose())).eval();
        e /= e.norm();
        std::array<double, 2> err{};
        for (int s = 0; s < 2; ++s) {
            const auto p = perturb::taylor_predict(d, base.values(0), base.vector(0), e, eps[s]);
            const auto exact = perturb::eigen_decompose(perturb::SymmetricMatrix(w.matrix() + eps[s] * e));
            Eigen::VectorXd t = exact.vector(0);
            if (t.dot(p.tau) < 0) t = -t;
            err[s] = std::max(std::abs(p.lambda - exact.values(0)), (p.tau - t).cwiseAbs().maxCoeff());
            lx.push_back(std::log10(eps[s]));
            ly.push_back(std::log10(std::max(err[s], 1e-300)));
        }
        worst_pair = std::min(worst_pair, std::log10(err[0] / err[1]));
        ++directions;
    }
    // Pooled least-squares slope of log error against log eps.
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(ly.size());
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) sxx += (lx[i] - mx) * (lx[i] - mx), sxy += (lx[i] - mx) * (ly[i] - my);
    const double slope = sxy / sxx;
    return {slope >= 2.7, "pooled order " + fmt("%.3f", slope) + " (>= 2.7) over 50 directions, smallest per-direction " +
                              fmt("%.3f", worst_pair)};
}

Outcome solver_convergence() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> err;
    for (int n : {16, 32, 64}) {
        const auto spec = solver::manufacture(ExactSolutionSpec::exponential_radial(1.0), grid(1.0, n));
        err.push_back(solver::newton_solve(spec).max_error(spec));
    }
    const double r1 = err[0] / err[1], r2 = err[1] / err[2];
    double quad = 0.0;
    for (const auto& fam : {ExactSolutionSpec::quadratic(2, 0.3, 1), ExactSolutionSpec::quadratic(4, 0, 0.25)})
        for (int n : {16, 32, 64}) {
            const auto spec = solver::manufacture(fam, grid(1.0, n));
            quad = std::max(quad, solver::newton_solve(spec).max_error(spec));
        }
    const double t = seconds_since(t0);
    const bool ok = r1 >= 3.2 && r1 <= 4.8 && r2 >= 3.2 && r2 <= 4.8 && quad <= 1e-10 && t <= 120.0;
    return {ok, "exp-radial errors " + g(err[0]) + ", " + g(err[1]) + ", " + g(err[2]) + " ratios " + fmt("%.2f", r1) +
                    ", " + fmt("%.2f", r2) + " in [3.2, 4.8]; quadratic error " + g(quad) + " (<= 1e-10); " +
                    fmt("%.1f", t) + " s"};
}

Outcome identity_residuals() {
    solver::IdentitySampling s;
    s.max_radius = 1.0 / std::sqrt(2.0);
    std::vector<solver::IdentityResiduals> res;
    for (int n : {16, 32, 64}) {
        const auto spec = solver::manufacture(ExactSolutionSpec::exponential_radial(1.0), grid(1.0, n));
        res.push_back(solver::differentiated_identity_residuals(solver::newton_solve(spec), spec, s));
    }
    double worst = 1e300;
    for (std::size_t i = 1; i < res.size(); ++i)
        worst = std::min({worst, res[i - 1].first / res[i].first, res[i - 1].second / res[i].second,
                          res[i - 1].mixed / res[i].mixed});
    // Quadratic data: zero up to the rounding floor of the h^-3 / h^-4 differences.
    bool quad_ok = true;
    double quad_worst = 0.0;
    for (int n : {16, 32, 64}) {
        const auto spec = solver::manufacture(ExactSolutionSpec::quadratic(2, 0.3, 1), grid(1.0, n));
        const auto sol = solver::newton_solve(spec);
        const auto r = solver::differentiated_identity_residuals(sol, spec);
        double umax = 0.0;
        for (double v : sol.u) umax = std::max(umax, std::abs(v));
        const double h = sol.grid->spacing();
        const double f3 = 1e3 * kEps * std::max(1.0, umax) / (h * h * h);
        const double f4 = f3 / h;
        quad_ok = quad_ok && r.first <= f3 && r.second <= f4 && r.mixed <= f4;
        quad_worst = std::max({quad_worst, r.first / f3, r.second / f4, r.mixed / f4});
    }
    return {worst >= 1.5 && quad_ok, "smallest step ratio " + fmt("%.2f", worst) +
                                         " (>= 1.5); quadratic residual / rounding floor " + g(quad_worst) + " (<= 1)"};
}

Outcome eta_sigma_invariants() {
    const std::vector<ExactSolutionSpec> fams{
        ExactSolutionSpec::exponential_radial(0.5), ExactSolutionSpec::exponential_radial(1.0),
        ExactSolutionSpec::exponential_radial(2.0), ExactSolutionSpec::quadratic(2, 0, 1),
        ExactSolutionSpec::quadratic(2, 0.3, 1),    ExactSolutionSpec::quadratic(1, 0, 1),
        ExactSolutionSpec::tilted(1, 0, 1, 0.1, 1, 0.5)};
    int runs = 0, failed = 0;
    double rot = 0.0;
    std::string first_failure;
    for (const auto& fam : fams)
        for (double R : {0.5, 1.0})
            for (int n : {16, 32, 64}) {
                const auto spec = solver::manufacture(fam, grid(R, n));
                const auto sol = solver::newton_solve(spec);
                const auto cfg = aux::AuxConfig::defaults(spec);
                const auto tau = aux::build_tau_field(sol, cfg);
                const auto phi = aux::phi_field(sol, tau, cfg);
                const auto inv = aux::check_invariants(sol, tau, phi, cfg);
                const bool ok = inv.eta_bounds && inv.enclosure && inv.sign_invariance && inv.rotation_invariance;
                rot = std::max(rot, inv.rotation_defect);
                ++runs;
                if (!ok) {
                    ++failed;
                    if (first_failure.empty()) first_failure = "; first failure " + fam.id() + "(" + fam.params() + ")";
                }
            }
    return {failed == 0, std::to_string(runs) + " runs, " + std::to_string(failed) +
                             " failing, max rotation defect " + g(rot) + " r^4 (<= 1e-10)" + first_failure};
}

Outcome critical_point() {
    std::vector<double> res;
    solver::SolutionField finest;
    solver::ProblemSpec finest_spec;
    for (int n : {16, 32, 64}) {
        auto spec = solver::manufacture(ExactSolutionSpec::exponential_radial(1.0), grid(1.0, n));
        auto sol = solver::newton_solve(spec);
        const auto rep = aux::certify(sol, spec, aux::AuxConfig::defaults(spec));
        if (!rep.cp_residual) return {false, "residual not checkable at h = 1/" + std::to_string(n) + ": " + rep.cp_status};
        res.push_back(std::max(std::abs((*rep.cp_residual)[0]), std::abs((*rep.cp_residual)[1])));
        finest = std::move(sol);
        finest_spec = std::move(spec);
    }
    const double plateau = 1e3 * kEps;
    bool monotone = true;
    for (std::size_t i = 1; i < res.size(); ++i) monotone = monotone && (res[i] < res[i - 1] || res[i] <= plateau);

    // Negative control: the same expression at a node that is not a critical
    // point of log phi (halfway to the ring of maxima, off the axes).
    const auto cfg = aux::AuxConfig::defaults(finest_spec);
    const auto tau = aux::build_tau_field(finest, cfg);
    const int n = finest.grid->cells();
    const int node = finest.grid->index(n / 4, n / 8);
    const auto bad = aux::critical_point_residual(finest, tau, node, cfg);
    const double control = std::max(std::abs(bad[0]), std::abs(bad[1]));
    const bool detected = control > 10.0 * res.back();
    return {monotone && detected, "argmax residuals " + g(res[0]) + ", " + g(res[1]) + ", " + g(res[2]) +
                                      (monotone ? " (decreasing)" : " (NOT decreasing)") + "; negative control " +
                                      g(control) + " = " + fmt("%.0f", control / res.back()) + "x converged (> 10x)"};
}

Outcome empirical_bound() {
    const auto t0 = std::chrono::steady_clock::now();
    sweep::SweepConfig cfg;
    for (double k : {0.5, 0.75, 1.0, 1.5, 2.0}) cfg.families.push_back(ExactSolutionSpec::exponential_radial(k));
    cfg.radii = {1.0};
    cfg.cells = {64};
    cfg.jobs = 4;
    const auto records = sweep::run_sweep(cfg);
    for (const auto& r : records)
        if (!r.ok()) return {false, r.params + ": " + r.error_class + " " + r.error_message};
    const auto fit = sweep::fit_constants(records);

    // Recompute slack, exponent bound and case threshold from the records and
    // the manufactured data, independently of the harness invariants.
    double slack = 1e300;
    int mismatched = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        slack = std::min(slack, fit.log_c1 + fit.c2 * r.s_R - std::log(r.d2u0));
        const auto spec = solver::manufacture(cfg.families[i], grid(r.R, 64));
        const double rr = r.R / std::sqrt(2.0);
        const double threshold =
            1e3 * (1.0 + spec.M + rr * spec.sup_grad_f + (spec.M / spec.m) * r.sup_du / rr) * std::pow(rr, 4);
        const char label = r.eta_lambda1 <= threshold ? 'A' : 'B';
        if (label != r.case_label || std::abs(threshold - r.threshold) > 1e-9 * threshold) ++mismatched;
    }
    const double bound = 32.0 / fit.m + 2.0;
    const double t = seconds_since(t0);
    const bool ok = slack >= 0.0 && fit.c2_r <= bound && mismatched == 0 && t <= 300.0;
    return {ok, "min slack " + g(slack) + " (>= 0), C2 over s_r " + g(fit.c2_r) + " (<= " + g(bound) +
                    "), log C1 " + fmt("%.4f", fit.log_c1) + ", case mismatches " + std::to_string(mismatched) + ", " +
                    fmt("%.1f", t) + " s"};
}

#ifdef MA2_CLI_PATH
std::string slurp(const fs::path& p) {
    std::FILE* f = std::fopen(p.c_str(), "rb");
    if (!f) return {};
    std::string s;
    char buf[4096];
    std::size_t k;
    while ((k = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, k);
    std::fclose(f);
    return s;
}

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / "ma2_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::FILE* f = std::fopen((dir / "sweep.json").c_str(), "w");
        std::fputs(R"({"families": [{"family": "exp_radial", "params": {"kappa": [0.5, 1, 2]}},
                                    {"family": "quadratic", "params": {"a": [2, 3], "b": 0, "c": 1}}],
                       "radii": [1.0], "cells": [16, 32], "jobs": 4})",
                   f);
        std::fclose(f);
    }
    std::array<std::string, 2> csv, json;
    for (int run = 0; run < 2; ++run) {
        const std::string cmd = std::string("\"") + MA2_CLI_PATH + "\" sweep \"" + (dir / "sweep.json").string() +
                                "\" > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
            return {false, "sweep exited with status " + std::to_string(status)};
        csv[run] = slurp(dir / "records.csv");
        json[run] = slurp(dir / "summary.json");
        fs::remove(dir / "records.csv");
        fs::remove(dir / "summary.json");
    }
    const bool ok = !csv[0].empty() && csv[0] == csv[1] && json[0] == json[1];
    return {ok, "CSV " + std::to_string(csv[0].size()) + " bytes " + (csv[0] == csv[1] ? "identical" : "DIFFER") +
                    ", JSON " + std::to_string(json[0].size()) + " bytes " +
                    (json[0] == json[1] ? "identical" : "DIFFER")};
}
#else
Outcome determinism() { return {false, "CLI not built"}; }
#endif

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"eigenperturb oracle agreement", eigen_oracle},
        {"closed-form 2x2 cross-check", closed_form_crosscheck},
        {"Taylor consistency", taylor_order},
        {"solver convergence", solver_convergence},
        {"identity residuals", identity_residuals},
        {"eta/Sigma invariants", eta_sigma_invariants},
        {"critical-point certificate", critical_point},
        {"empirical bound (kappa sweep)", empirical_bound},
        {"sweep determinism", determinism},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.passed ? 0 : 1;
        std::printf("%s  %-32s %s\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
