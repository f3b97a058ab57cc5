#include "ma2/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <thread>
#include <tuple>

#include "ma2/eigenperturb.hpp"
#include "ma2/error.hpp"

namespace ma2::sweep {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

bool same_class(double m1, double m2) { return std::abs(m1 - m2) <= 1e-12 * std::max(std::abs(m1), std::abs(m2)); }

std::optional<double> param_value(const std::string& params, const std::string& key) {
    const std::string tag = key + "=";
    std::size_t pos = 0;
    while ((pos = params.find(tag, pos)) != std::string::npos) {
        if (pos == 0 || params[pos - 1] == ';') {
            const std::size_t end = params.find(';', pos);
            return std::stod(params.substr(pos + tag.size(), end == std::string::npos ? end : end - pos - tag.size()));
        }
        pos += tag.size();
    }
    return std::nullopt;
}

}  // namespace

SweepRecord run_triple(const solver::ExactSolutionSpec& family, double radius, int cells, std::optional<double> tol) {
    SweepRecord rec;
    rec.family = family.id();
    rec.params = family.params();
    rec.R = radius;
    rec.r = radius / std::sqrt(2.0);
    rec.h = radius / cells;
    try {
        auto grid = std::make_shared<const solver::DiscGrid>(radius, cells);
        const solver::ProblemSpec spec = solver::manufacture(family, grid);
        rec.m = spec.m;
        rec.M = spec.M;

        solver::SolverConfig sc;
        sc.tol = tol;
        const solver::SolutionField sol = solver::newton_solve(spec, sc);
        rec.iterations = sol.iterations;
        rec.residual_norm = sol.residual_norm;
        rec.convexity_margin = sol.convexity_margin;
        if (spec.exact) rec.error_vs_exact = sol.max_error(spec);

        const aux::AuxConfig cfg = aux::AuxConfig::defaults(spec);
        const aux::CertificateReport rep = aux::certify(sol, spec, cfg);
        rec.sup_du = rep.sups.du;
        rec.d2u0 = rep.margins.d2u0;
        rec.s_R = rec.sup_du * rec.sup_du / (radius * radius);
        rec.s_r = rec.sup_du * rec.sup_du / (rec.r * rec.r);
        rec.case_label = rep.case_info.label;
        rec.eta_lambda1 = rep.case_info.eta_lambda1;
        rec.threshold = rep.case_info.threshold;
        rec.case_a_margin = rep.case_info.direct_margin;
        rec.eta_lambda_ratio = rep.margins.eta_lambda_ratio;
        rec.c1_empirical = rep.margins.c1_empirical;
        rec.log_c1_empirical = rep.margins.log_c1_empirical;
        if (rep.cp_residual)
            rec.cp_residual = std::max(std::abs((*rep.cp_residual)[0]), std::abs((*rep.cp_residual)[1]));
        rec.certificate_invariants = rep.invariants.all();
        rec.boundary_band_ratio = rep.invariants.boundary_band_ratio;
        rec.degenerate_fraction = rep.degenerate_fraction;

        double umin = sol.u.front();
        double umax = sol.u.front();
        for (int node = 0; node < grid->node_count(); ++node) {
            const auto k = static_cast<std::size_t>(node);
            umin = std::min(umin, sol.u[k]);
            umax = std::max(umax, sol.u[k]);
            if (grid->position(node).norm() <= 0.5 * radius) rec.sup_du_half = std::max(rec.sup_du_half, sol.du[k].norm());
        }
        // The Dirichlet data close the oscillation over the closed disc.
        for (double b : spec.boundary_values) {
            umin = std::min(umin, b);
            umax = std::max(umax, b);
        }
        rec.osc_u = umax - umin;
    } catch (const Error& e) {
        rec.error_class = e.kind();
        rec.error_message = e.what();
    } catch (const std::exception& e) {
        rec.error_class = "InvalidArgument";
        rec.error_message = e.what();
    }
    return rec;
}

std::vector<SweepRecord> run_sweep(const SweepConfig& cfg) {
    struct Triple {
        const solver::ExactSolutionSpec* family;
        double radius;
        int cells;
    };
    std::vector<Triple> triples;
    for (const auto& f : cfg.families)
        for (double R : cfg.radii)
            for (int n : cfg.cells) triples.push_back({&f, R, n});

    std::vector<SweepRecord> out(triples.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < triples.size();)
            out[i] = run_triple(*triples[i].family, triples[i].radius, triples[i].cells, cfg.tol);
    };
    const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(triples.size())));
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return out;
}

double ConstantFit::c1() const { return std::exp(log_c1); }

ConstantFit fit_constants(std::span<const SweepRecord> records) {
    std::vector<const SweepRecord*> usable;
    for (const auto& r : records)
        if (r.ok()) usable.push_back(&r);
    if (usable.size() < 3)
        throw InsufficientData("constant fit needs at least 3 successful records, got " + std::to_string(usable.size()));
    const double m = usable.front()->m;
    for (const auto* r : usable)
        if (!same_class(r->m, m)) throw MixedClass("records mix lower bounds m = " + fmt(m) + " and " + fmt(r->m));

    const auto n = static_cast<double>(usable.size());
    double sx = 0, sy = 0;
    for (const auto* r : usable) {
        sx += r->s_R;
        sy += std::log(r->d2u0);
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0, sxy = 0;
    for (const auto* r : usable) {
        sxx += (r->s_R - mx) * (r->s_R - mx);
        sxy += (r->s_R - mx) * (std::log(r->d2u0) - my);
    }
    ConstantFit fit;
    fit.m = m;
    fit.count = static_cast<int>(usable.size());
    fit.c2 = sxx > 0.0 ? std::max(0.0, sxy / sxx) : 0.0;

    // Lift the intercept so every record lies under the envelope.
    double a = -std::numeric_limits<double>::infinity();
    for (const auto* r : usable) a = std::max(a, std::log(r->d2u0) - fit.c2 * r->s_R);
    auto min_slack = [&](double intercept) {
        double s = std::numeric_limits<double>::infinity();
        for (const auto* r : usable) s = std::min(s, intercept + fit.c2 * r->s_R - std::log(r->d2u0));
        return s;
    };
    while (min_slack(a) < 0.0) a = std::nextafter(a, std::numeric_limits<double>::infinity());
    fit.log_c1 = a;
    fit.min_slack = min_slack(a);
    fit.c2_r = fit.c2 / 2.0;
    for (const auto* r : usable) fit.M = std::max(fit.M, r->M);
    fit.proof_exponent = 32.0 / m + 2.0;
    fit.exponent_within_proof = fit.c2_r <= fit.proof_exponent;
    return fit;
}

std::vector<ConstantFit> fit_by_class(std::span<const SweepRecord> records) {
    std::vector<std::vector<SweepRecord>> classes;
    for (const auto& r : records) {
        if (!r.ok()) continue;
        auto it = std::find_if(classes.begin(), classes.end(),
                               [&](const auto& c) { return same_class(c.front().m, r.m); });
        if (it == classes.end())
            classes.push_back({r});
        else
            it->push_back(r);
    }
    std::vector<ConstantFit> fits;
    for (const auto& c : classes)
        if (c.size() >= 3) fits.push_back(fit_constants(c));
    return fits;
}

std::vector<InvariantResult> evaluate_invariants(std::span<const SweepRecord> records,
                                                 std::span<const ConstantFit> fits, bool from_csv) {
    std::vector<InvariantResult> out;

    {
        InvariantResult env{"envelope", true, ""};
        for (const auto& f : fits) {
            double slack = std::numeric_limits<double>::infinity();
            for (const auto& r : records)
                if (r.ok() && same_class(r.m, f.m))
                    slack = std::min(slack, f.log_c1 + f.c2 * r.s_R - std::log(r.d2u0));
            if (!(slack >= 0.0)) {
                env.passed = false;
                env.detail += "class m=" + fmt(f.m) + " slack " + fmt(slack) + "; ";
            }
        }
        if (fits.empty()) env.detail = "no class with 3 or more records";
        out.push_back(env);

        InvariantResult ex{"exponent_within_proof", true, ""};
        for (const auto& f : fits)
            if (!f.exponent_within_proof) {
                ex.passed = false;
                ex.detail += "class m=" + fmt(f.m) + " C2_r " + fmt(f.c2_r) + " > " + fmt(f.proof_exponent) + "; ";
            }
        out.push_back(ex);
    }

    InvariantResult pos{"positivity", true, ""};
    for (const auto& r : records) {
        if (!r.ok()) continue;
        if (!(r.d2u0 > 0.0) || !(r.s_R >= 0.0) || std::abs(r.s_r - 2.0 * r.s_R) > 1e-9 * std::max(1.0, r.s_r)) {
            pos.passed = false;
            pos.detail += r.family + "(" + r.params + ") R=" + fmt(r.R) + " h=" + fmt(r.h) + "; ";
        }
    }
    out.push_back(pos);

    if (!from_csv) {
        InvariantResult cs{"case_consistency", true, ""};
        InvariantResult am{"case_a_margin", true, ""};
        InvariantResult ci{"certificate_invariants", true, ""};
        for (const auto& r : records) {
            if (!r.ok()) continue;
            const std::string tag = r.family + "(" + r.params + ") R=" + fmt(r.R) + " h=" + fmt(r.h) + "; ";
            const char expected = r.eta_lambda1 <= r.threshold ? 'A' : 'B';
            if (r.case_label != expected) {
                cs.passed = false;
                cs.detail += tag;
            }
            if (r.case_label == 'A' && !(r.case_a_margin.value_or(-1.0) >= 0.0)) {
                am.passed = false;
                am.detail += tag;
            }
            if (!r.certificate_invariants) {
                ci.passed = false;
                ci.detail += tag;
            }
        }
        out.push_back(cs);
        out.push_back(am);
        out.push_back(ci);
    }

    // Exponential-radial at fixed (R, h): d2u0 and s non-decreasing in kappa.
    InvariantResult mono{"monotone_stress", true, ""};
    {
        std::map<std::pair<double, double>, std::vector<std::pair<double, const SweepRecord*>>> groups;
        for (const auto& r : records) {
            if (!r.ok() || r.family != "exp_radial") continue;
            if (auto k = param_value(r.params, "kappa")) groups[{r.R, r.h}].emplace_back(*k, &r);
        }
        for (auto& [key, list] : groups) {
            std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t i = 1; i < list.size(); ++i) {
                const auto* a = list[i - 1].second;
                const auto* b = list[i].second;
                // d2u0 is pinned by det = f(0) at the origin node; allow the Newton residual.
                const double slack = std::max(a->residual_norm, b->residual_norm) + 1e-12 * a->d2u0;
                if (b->d2u0 < a->d2u0 - slack || b->s_R < a->s_R) {
                    mono.passed = false;
                    mono.detail += "R=" + fmt(key.first) + " h=" + fmt(key.second) + " kappa " + fmt(list[i - 1].first) +
                                   " -> " + fmt(list[i].first) + "; ";
                }
            }
        }
    }
    out.push_back(mono);

    // Two finest resolutions per (family, params, R) within 5%.
    InvariantResult stab{"resolution_stability", true, ""};
    {
        std::map<std::tuple<std::string, std::string, double>, std::vector<const SweepRecord*>> groups;
        for (const auto& r : records)
            if (r.ok()) groups[{r.family, r.params, r.R}].push_back(&r);
        for (auto& [key, list] : groups) {
            if (list.size() < 2) continue;
            std::sort(list.begin(), list.end(), [](const auto* a, const auto* b) { return a->h < b->h; });
            const double change = std::abs(list[0]->d2u0 - list[1]->d2u0) / list[0]->d2u0;
            if (change > 0.05) {
                stab.passed = false;
                stab.detail += std::get<0>(key) + "(" + std::get<1>(key) + ") R=" + fmt(std::get<2>(key)) +
                               " change " + fmt(change) + "; ";
            }
        }
    }
    out.push_back(stab);
    return out;
}

bool all_passed(std::span<const InvariantResult> results) {
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

EigCheckResult eigcheck(int n, int draws, std::uint64_t seed) {
    using namespace perturb;
    if (n < 2) throw ConfigError("eigcheck needs n >= 2");
    if (draws < 1) throw ConfigError("eigcheck needs at least one draw");
    EigCheckResult res;
    res.n = n;
    res.draws = draws;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> start(-3.0, 3.0);
    std::uniform_real_distribution<double> spacing(0.5, 2.0);
    constexpr double kStep = 1e-5;

    for (int draw = 0; draw < draws; ++draw) {
        std::vector<double> d(static_cast<std::size_t>(n));
        d[0] = start(rng);
        for (std::size_t i = 1; i < d.size(); ++i) d[i] = d[i - 1] - spacing(rng);
        std::shuffle(d.begin(), d.end(), rng);
        const SymmetricMatrix w = SymmetricMatrix::diagonal(d);

        double first = 0.0;
        double second = 0.0;
        for (int k = 0; k < n; ++k) {
            // Position in the descending order.
            const int sorted = static_cast<int>(
                std::count_if(d.begin(), d.end(), [&](double v) { return v > d[static_cast<std::size_t>(k)]; }));
            const EigenDerivatives raw = derivatives_at_diagonal(w, k);
            const EigenDerivatives folded = fold_symmetric(raw);
            const EigenDerivatives fd_raw = fd_eigen_derivatives(w, sorted, kStep, Convention::kIndependentEntries);
            const EigenDerivatives fd_folded = fd_eigen_derivatives(w, sorted, kStep, Convention::kSymmetricFolded);
            first = std::max({first, relative_error(raw.d_lambda, fd_raw.d_lambda), relative_error(raw.d_tau, fd_raw.d_tau),
                              relative_error(folded.d_lambda, fd_folded.d_lambda),
                              relative_error(folded.d_tau, fd_folded.d_tau)});
            second = std::max({second, relative_error(raw.d2_lambda, fd_raw.d2_lambda),
                               relative_error(raw.d2_tau, fd_raw.d2_tau),
                               relative_error(folded.d2_lambda, fd_folded.d2_lambda),
                               relative_error(folded.d2_tau, fd_folded.d2_tau)});
        }
        res.max_rel_err_first = std::max(res.max_rel_err_first, first);
        res.max_rel_err_second = std::max(res.max_rel_err_second, second);
        if (first > 1e-6 || second > 1e-4)
            res.failures.push_back("n=" + std::to_string(n) + " draw=" + std::to_string(draw) + ": first " +
                                   fmt(first) + " second " + fmt(second));
    }
    return res;
}

}  // namespace ma2::sweep
