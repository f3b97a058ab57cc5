#include "ma2/aux_certificate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ma2/eigenperturb.hpp"
#include "ma2/error.hpp"

namespace ma2::aux {

using solver::DiscGrid;
using solver::SolutionField;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// phi_grad is sampled where eta >= this fraction of r^4.
constexpr double kPhiGradEtaFloor = 0.25;

Vec2 perp(const Vec2& t) { return {-t(1), t(0)}; }

double quadratic_form(const Mat2& h, const Vec2& t) {
    return t(0) * t(0) * h(0, 0) + 2.0 * t(0) * t(1) * h(0, 1) + t(1) * t(1) * h(1, 1);
}

double log_phi_at(double eta_value, const Vec2& du, double u_tautau, const AuxConfig& cfg) {
    return cfg.beta * std::log(eta_value) + cfg.g_log(0.5 * du.squaredNorm()) + std::log(u_tautau);
}

// Principal frame at a node: columns tau and the second eigenvector.
Mat2 principal_frame(const SolutionField& sol, int node) {
    const Mat2& h = sol.hess[static_cast<std::size_t>(node)];
    return perturb::eigen2x2_closed_form(h(0, 0), h(0, 1), h(1, 1)).vectors;
}

void require_checkable(const TauField& tau, int node) {
    if (tau.degenerate[static_cast<std::size_t>(node)])
        throw NotCheckable("degenerate Hessian at the node (tau undefined)");
}

}  // namespace

AuxConfig AuxConfig::defaults(const solver::ProblemSpec& spec) {
    AuxConfig cfg;
    cfg.c0 = 32.0 / spec.m;
    cfg.r = spec.grid->radius() / std::sqrt(2.0);
    return cfg;
}

std::vector<std::string> AuxConfig::overrides(const solver::ProblemSpec& spec) const {
    const AuxConfig d = defaults(spec);
    std::vector<std::string> out;
    if (beta != d.beta) out.emplace_back("beta");
    if (c0 != d.c0) out.emplace_back("c0");
    if (r != d.r) out.emplace_back("r");
    if (threshold_factor != d.threshold_factor) out.emplace_back("threshold_factor");
    if (gap_tol_factor != d.gap_tol_factor) out.emplace_back("gap_tol");
    if (sample_relative_gap != d.sample_relative_gap) out.emplace_back("sample_relative_gap");
    return out;
}

double AuxConfig::gap_tol(double lambda1) const { return gap_tol_factor * std::max(1.0, std::abs(lambda1)); }

TauField build_tau_field(const SolutionField& sol, const AuxConfig& cfg) {
    const std::size_t n = sol.u.size();
    TauField t;
    t.tau.resize(n);
    t.lambda1.resize(n);
    t.lambda2.resize(n);
    t.gap.resize(n);
    t.degenerate.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Mat2& h = sol.hess[i];
        const perturb::EigenSystem es = perturb::eigen2x2_closed_form(h(0, 0), h(0, 1), h(1, 1));
        t.lambda1[i] = es.values(0);
        t.lambda2[i] = es.values(1);
        t.gap[i] = es.values(0) - es.values(1);
        const bool degenerate = !(t.gap[i] > cfg.gap_tol(std::max(std::abs(es.values(0)), std::abs(es.values(1)))));
        t.degenerate[i] = degenerate ? 1 : 0;
        t.tau[i] = degenerate ? Vec2(1.0, 0.0) : Vec2(es.vectors.col(0));
    }
    return t;
}

// Written in the adapted form (r^2 - <x,tau_perp>^2)(r^2 - <x,tau>^2), which
// equals the product formula for unit tau and keeps each factor <= r^2 in
// floating point.
std::array<double, 2> eta_factors(const Vec2& x, const Vec2& tau, const AuxConfig& cfg) {
    const double r2 = cfg.r * cfg.r;
    const double along = x.dot(tau);
    const double across = x.dot(perp(tau));
    return {r2 - across * across, r2 - along * along};
}

double eta(const Vec2& x, const Vec2& tau, const AuxConfig& cfg) {
    const auto f = eta_factors(x, tau, cfg);
    return f[0] * f[1];
}

bool sigma_membership(const Vec2& x, const Vec2& tau, const AuxConfig& cfg) {
    const auto f = eta_factors(x, tau, cfg);
    return f[0] > 0.0 && f[1] > 0.0;
}

PhiField phi_field(const SolutionField& sol, const TauField& tau, const AuxConfig& cfg) {
    const DiscGrid& g = *sol.grid;
    const std::size_t n = sol.u.size();
    PhiField phi;
    phi.in_sigma.assign(n, 0);
    phi.eta.assign(n, 0.0);
    phi.u_tautau.assign(n, 0.0);
    phi.log_phi.assign(n, kNegInf);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 x = g.position(static_cast<int>(i));
        phi.eta[i] = eta(x, tau.tau[i], cfg);
        phi.u_tautau[i] = tau.degenerate[i] ? tau.lambda1[i] : quadratic_form(sol.hess[i], tau.tau[i]);
        if (!sigma_membership(x, tau.tau[i], cfg)) continue;
        phi.in_sigma[i] = 1;
        phi.log_phi[i] = log_phi_at(phi.eta[i], sol.du[i], phi.u_tautau[i], cfg);
    }
    return phi;
}

MaxLocation locate_interior_max(const PhiField& phi, const DiscGrid& grid) {
    MaxLocation best;
    for (int node = 0; node < grid.node_count(); ++node) {
        const auto k = static_cast<std::size_t>(node);
        if (!phi.in_sigma[k]) continue;
        if (best.node < 0 || phi.log_phi[k] > best.log_phi) {
            best.node = node;
            best.log_phi = phi.log_phi[k];
        }
    }
    if (best.node < 0) throw std::invalid_argument("Sigma contains no grid nodes");
    best.x = grid.position(best.node);
    const auto [i, j] = grid.lattice(best.node);
    best.interior = true;
    for (int di = -2; di <= 2 && best.interior; ++di)
        for (int dj = -2; dj <= 2; ++dj) {
            const int nb = grid.index(i + di, j + dj);
            if (nb < 0 || !phi.in_sigma[static_cast<std::size_t>(nb)]) {
                best.interior = false;
                break;
            }
        }
    return best;
}

EtaGradient analytic_eta_gradient(const SolutionField& sol, const TauField& tau, int node, const AuxConfig& cfg) {
    require_checkable(tau, node);
    const auto jet = solver::local_jet(sol, node);
    if (!jet) throw NotCheckable("node lacks the width-5 stencil for third differences");
    const auto k = static_cast<std::size_t>(node);
    const Mat2 frame = principal_frame(sol, node);
    const solver::Third t3 = jet->third.rotated(frame);
    const double gap = tau.lambda1[k] - tau.lambda2[k];
    const double r2 = cfg.r * cfg.r;

    EtaGradient out;
    out.x_frame = frame.transpose() * sol.grid->position(node);
    const double x1 = out.x_frame(0);
    const double x2 = out.x_frame(1);
    for (int i = 0; i < 2; ++i) out.x_dtau(i) = x2 * t3.v[0][1][i] / gap;
    const double spread = x2 * x2 - x1 * x1;
    out.d_eta(0) = -2.0 * x1 * (r2 - x2 * x2) + 2.0 * x1 * out.x_dtau(0) * spread;
    out.d_eta(1) = -2.0 * x2 * (r2 - x1 * x1) + 2.0 * x1 * out.x_dtau(1) * spread;
    return out;
}

std::array<double, 2> critical_point_residual(const SolutionField& sol, const TauField& tau, int node,
                                              const AuxConfig& cfg) {
    require_checkable(tau, node);
    const Vec2 x = sol.grid->position(node);
    const auto k = static_cast<std::size_t>(node);
    if (!sigma_membership(x, tau.tau[k], cfg)) throw NotCheckable("node is outside Sigma");
    const auto jet = solver::local_jet(sol, node);
    if (!jet) throw NotCheckable("node lacks the width-5 stencil for third differences");

    const EtaGradient eg = analytic_eta_gradient(sol, tau, node, cfg);
    const Mat2 frame = principal_frame(sol, node);
    const solver::Third t3 = jet->third.rotated(frame);
    const Vec2 du = frame.transpose() * sol.du[k];
    const double eta_value = eta(x, tau.tau[k], cfg);
    const std::array<double, 2> lam{tau.lambda1[k], tau.lambda2[k]};

    std::array<double, 2> res{};
    for (int i = 0; i < 2; ++i)
        res[static_cast<std::size_t>(i)] =
            cfg.r * (t3.v[0][0][i] / lam[0] + cfg.beta * eg.d_eta(i) / eta_value + cfg.g_ratio() * du(i) * lam[static_cast<std::size_t>(i)]);
    return res;
}

std::vector<int> derivative_sample_nodes(const SolutionField& sol, const TauField& tau, const PhiField& phi,
                                         const AuxConfig& cfg) {
    const DiscGrid& g = *sol.grid;
    std::vector<int> nodes;
    for (int node = 0; node < g.node_count(); ++node) {
        const auto k = static_cast<std::size_t>(node);
        if (tau.degenerate[k] || !g.has_block(node, 2)) continue;
        if (!(tau.gap[k] > cfg.sample_relative_gap * std::abs(tau.lambda1[k]))) continue;
        const auto [i, j] = g.lattice(node);
        bool ok = true;
        for (int di = -2; di <= 2 && ok; ++di)
            for (int dj = -2; dj <= 2 && ok; ++dj) {
                const auto nb = static_cast<std::size_t>(g.index(i + di, j + dj));
                if (!phi.in_sigma[nb]) ok = false;
                if (std::abs(di) + std::abs(dj) <= 1 && tau.degenerate[nb]) ok = false;
            }
        if (ok) nodes.push_back(node);
    }
    return nodes;
}

EtaDerivativeResiduals eta_derivative_check(const SolutionField& sol, const TauField& tau, const AuxConfig& cfg,
                                            std::span<const int> nodes) {
    if (nodes.size() < 4)
        throw InsufficientSample("only " + std::to_string(nodes.size()) + " nodes qualify for eta derivative checks");
    const DiscGrid& g = *sol.grid;
    const double h = g.spacing();
    const double r3 = cfg.r * cfg.r * cfg.r;
    EtaDerivativeResiduals out;
    for (int node : nodes) {
        const auto k = static_cast<std::size_t>(node);
        const EtaGradient eg = analytic_eta_gradient(sol, tau, node, cfg);
        const Mat2 frame = principal_frame(sol, node);
        const Vec2 t0 = tau.tau[k];
        const auto [i, j] = g.lattice(node);

        // <x, tau(x)> with the neighbour's tau sign-aligned to the centre.
        auto along = [&](int nb) {
            const Vec2 t = tau.tau[static_cast<std::size_t>(nb)];
            const Vec2 aligned = t.dot(t0) < 0.0 ? Vec2(-t) : t;
            return g.position(nb).dot(aligned);
        };
        auto eta_at = [&](int nb) { return eta(g.position(nb), tau.tau[static_cast<std::size_t>(nb)], cfg); };
        auto log_phi = [&](int nb) {
            const auto q = static_cast<std::size_t>(nb);
            return log_phi_at(eta_at(nb), sol.du[q], quadratic_form(sol.hess[q], tau.tau[q]), cfg);
        };

        const int xp = g.index(i + 1, j), xm = g.index(i - 1, j);
        const int yp = g.index(i, j + 1), ym = g.index(i, j - 1);
        const Vec2 grad_along((along(xp) - along(xm)) / (2 * h), (along(yp) - along(ym)) / (2 * h));
        const Vec2 grad_eta((eta_at(xp) - eta_at(xm)) / (2 * h), (eta_at(yp) - eta_at(ym)) / (2 * h));

        const Vec2 grad_log_phi((log_phi(xp) - log_phi(xm)) / (2 * h), (log_phi(yp) - log_phi(ym)) / (2 * h));
        const auto cp = critical_point_residual(sol, tau, node, cfg);
        const Vec2 fd_log_phi = cfg.r * (frame.transpose() * grad_log_phi);
        // Close to the Sigma boundary log phi has curvature ~ 1/dist^2 and the
        // central difference is no longer informative.
        if (eta(g.position(node), t0, cfg) >= kPhiGradEtaFloor * cfg.r * cfg.r * cfg.r * cfg.r)
            out.phi_grad = std::max(out.phi_grad, (fd_log_phi - Vec2(cp[0], cp[1])).cwiseAbs().maxCoeff());

        const Vec2 fd_along = frame.transpose() * grad_along;
        const Vec2 fd_eta = frame.transpose() * grad_eta;
        const Vec2 expected_along = Vec2(1.0, 0.0) + eg.x_dtau;
        out.tau_id = std::max(out.tau_id, (fd_along - expected_along).cwiseAbs().maxCoeff());
        out.eta_d = std::max(out.eta_d, (fd_eta - eg.d_eta).cwiseAbs().maxCoeff() / r3);
        ++out.samples;
    }
    return out;
}

Sups measure_sups(const SolutionField& sol, const solver::ProblemSpec& spec) {
    Sups s;
    for (const Vec2& d : sol.du) s.du = std::max(s.du, d.norm());
    for (const Vec2& d : spec.grad_f) s.grad_f = std::max(s.grad_f, d.norm());
    return s;
}

CaseClassification classify_case(double eta_lambda1, double u_tautau_origin, const solver::ProblemSpec& spec,
                                 const Sups& sups, const AuxConfig& cfg) {
    const double r = cfg.r;
    const double r4 = r * r * r * r;
    const double ratio_term = spec.M / spec.m * sups.du / r;
    const double base = 1.0 + spec.M + r * sups.grad_f;
    CaseClassification c;
    c.eta_lambda1 = eta_lambda1;
    c.threshold = cfg.threshold_factor * (base + ratio_term) * r4;
    c.label = eta_lambda1 <= c.threshold ? 'A' : 'B';
    if (c.label == 'A') {
        const double s_r = sups.du * sups.du / (r * r);
        const double log_u0 = std::log(u_tautau_origin);
        c.stage_margin = std::log(cfg.threshold_factor * (base + ratio_term)) + cfg.c0 * s_r - log_u0;
        c.direct_margin = std::log(cfg.threshold_factor * base) + (cfg.c0 + 2.0 * spec.M / spec.m) * s_r - log_u0;
    }
    return c;
}

BoundMargins bound_check(const SolutionField& sol, double eta_lambda1, const Sups& sups, const AuxConfig& cfg) {
    const double r = cfg.r;
    const Mat2& h0 = sol.hess[static_cast<std::size_t>(sol.grid->origin())];
    const auto es = perturb::eigen2x2_closed_form(h0(0, 0), h0(0, 1), h0(1, 1));
    BoundMargins b;
    b.eta_lambda_ratio = eta_lambda1 / ((1.0 + sups.du / r) * r * r * r * r);
    b.d2u0 = std::max(std::abs(es.values(0)), std::abs(es.values(1)));
    b.log_c1_empirical = std::log(b.d2u0) - (cfg.c0 + 2.0) * sups.du * sups.du / (r * r);
    b.c1_empirical = std::exp(b.log_c1_empirical);
    return b;
}

InvariantChecks check_invariants(const SolutionField& sol, const TauField& tau, const PhiField& phi,
                                 const AuxConfig& cfg) {
    const DiscGrid& g = *sol.grid;
    const double r2 = cfg.r * cfg.r;
    const double r4 = r2 * r2;
    InvariantChecks inv;

    double log_phi_max = kNegInf;
    for (int node = 0; node < g.node_count(); ++node) {
        const auto k = static_cast<std::size_t>(node);
        const Vec2 x = g.position(node);
        const Vec2& t = tau.tau[k];
        const bool in = phi.in_sigma[k] != 0;

        if (in && !(phi.eta[k] > 0.0 && phi.eta[k] <= r4)) inv.eta_bounds = false;
        if (x.squaredNorm() < r2 && !in) inv.enclosure = false;
        if (x.norm() >= g.radius() && in) inv.enclosure = false;

        const Vec2 flipped = -t;
        const double eta_flip = eta(x, flipped, cfg);
        const double utt_flip = tau.degenerate[k] ? tau.lambda1[k] : quadratic_form(sol.hess[k], flipped);
        if (eta_flip != phi.eta[k] || sigma_membership(x, flipped, cfg) != in || utt_flip != phi.u_tautau[k])
            inv.sign_invariance = false;
        if (in && log_phi_at(eta_flip, sol.du[k], utt_flip, cfg) != phi.log_phi[k]) inv.sign_invariance = false;

        if (in) {
            if (!(phi.u_tautau[k] > 0.0) || !std::isfinite(phi.log_phi[k])) inv.phi_positive = false;
            log_phi_max = std::max(log_phi_max, phi.log_phi[k]);
        }

        if (!tau.degenerate[k]) {
            const Mat2& h = sol.hess[k];
            Mat2 rho;
            rho << 0.0, -1.0, 1.0, 0.0;
            Mat2 rot = Mat2::Identity();
            for (int q = 1; q <= 3; ++q) {
                rot = rho * rot;
                const Mat2 hr = rot * h * rot.transpose();
                const auto es = perturb::eigen2x2_closed_form(hr(0, 0), hr(0, 1), hr(1, 1));
                const double eta_rot = eta(rot * x, es.vectors.col(0), cfg);
                inv.rotation_defect = std::max(inv.rotation_defect, std::abs(eta_rot - phi.eta[k]) / r4);
            }
        }
    }
    inv.rotation_invariance = inv.rotation_defect <= 1e-10;

    // Lattice points outside the disc cannot lie in Sigma for any direction.
    for (int i = -g.cells(); i <= g.cells(); ++i)
        for (int j = -g.cells(); j <= g.cells(); ++j) {
            const Vec2 x(i * g.spacing(), j * g.spacing());
            if (x.norm() < g.radius()) continue;
            for (int a = 0; a < 16; ++a) {
                const double th = a * M_PI / 16.0;
                if (sigma_membership(x, Vec2(std::cos(th), std::sin(th)), cfg)) inv.enclosure = false;
            }
        }

    // Band of Sigma nodes within 2h of its boundary.
    double band_max = kNegInf;
    for (int node = 0; node < g.node_count(); ++node) {
        if (!phi.in_sigma[static_cast<std::size_t>(node)]) continue;
        const auto [i, j] = g.lattice(node);
        bool near = false;
        for (int di = -2; di <= 2 && !near; ++di)
            for (int dj = -2; dj <= 2; ++dj) {
                if (di * di + dj * dj > 4) continue;
                const int nb = g.index(i + di, j + dj);
                if (nb < 0 || !phi.in_sigma[static_cast<std::size_t>(nb)]) {
                    near = true;
                    break;
                }
            }
        if (near) band_max = std::max(band_max, phi.log_phi[static_cast<std::size_t>(node)]);
    }
    inv.boundary_band_ratio = std::isfinite(band_max) ? std::exp(band_max - log_phi_max) : 0.0;
    return inv;
}

CertificateReport certify(const SolutionField& sol, const solver::ProblemSpec& spec, const AuxConfig& cfg) {
    const DiscGrid& g = *sol.grid;
    CertificateReport rep;
    rep.overrides = cfg.overrides(spec);

    const TauField tau = build_tau_field(sol, cfg);
    const PhiField phi = phi_field(sol, tau, cfg);
    const MaxLocation max = locate_interior_max(phi, g);
    const auto k0 = static_cast<std::size_t>(max.node);

    rep.x0_node = max.node;
    rep.x0 = max.x;
    rep.x0_interior = max.interior;
    rep.x0_degenerate = tau.degenerate[k0] != 0;
    rep.log_phi_max = max.log_phi;
    const double phi_max = std::exp(max.log_phi);
    if (std::isfinite(phi_max)) rep.phi_max = phi_max;
    rep.eta_at_x0 = phi.eta[k0];
    rep.lambda1_at_x0 = tau.lambda1[k0];

    int sigma_nodes = 0;
    int degenerate_nodes = 0;
    for (std::size_t i = 0; i < phi.in_sigma.size(); ++i) {
        if (!phi.in_sigma[i]) continue;
        ++sigma_nodes;
        if (tau.degenerate[i]) ++degenerate_nodes;
    }
    rep.degenerate_fraction = static_cast<double>(degenerate_nodes) / sigma_nodes;
    rep.degenerate_field = degenerate_nodes == sigma_nodes;

    try {
        rep.cp_residual = critical_point_residual(sol, tau, max.node, cfg);
        rep.cp_status = "ok";
    } catch (const NotCheckable& e) {
        rep.cp_status = e.what();
    }
    try {
        const std::vector<int> samples = derivative_sample_nodes(sol, tau, phi, cfg);
        rep.eta_checks = eta_derivative_check(sol, tau, cfg, samples);
        rep.eta_status = "ok";
    } catch (const InsufficientSample& e) {
        rep.eta_status = e.what();
    }

    rep.sups = measure_sups(sol, spec);
    const double eta_lambda1 = rep.eta_at_x0 * rep.lambda1_at_x0;
    rep.case_info = classify_case(eta_lambda1, tau.lambda1[static_cast<std::size_t>(g.origin())], spec, rep.sups, cfg);
    rep.margins = bound_check(sol, eta_lambda1, rep.sups, cfg);
    rep.invariants = check_invariants(sol, tau, phi, cfg);
    return rep;
}

}  // namespace ma2::aux
