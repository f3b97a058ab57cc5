#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ma2/aux_certificate.hpp"
#include "ma2/error.hpp"

using namespace ma2;
using namespace ma2::aux;
using solver::ExactSolutionSpec;

namespace {

struct Solved {
    solver::ProblemSpec spec;
    solver::SolutionField sol;
    AuxConfig cfg;
};

Solved solve(const ExactSolutionSpec& fam, double R, int n) {
    auto spec = solver::manufacture(fam, std::make_shared<const solver::DiscGrid>(R, n));
    auto sol = solver::newton_solve(spec);
    auto cfg = AuxConfig::defaults(spec);
    return {std::move(spec), std::move(sol), cfg};
}

AuxConfig unit_cfg(double r) {
    AuxConfig c;
    c.r = r;
    return c;
}

Vec2 random_unit(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> a(0.0, 2.0 * M_PI);
    const double t = a(rng);
    return {std::cos(t), std::sin(t)};
}

}  // namespace

// ---------------------------------------------------------------------------
// eta and Sigma

TEST(Eta, OriginGivesRToTheFourth) {
    std::mt19937_64 rng(1);
    const auto cfg = unit_cfg(0.7);
    for (int t = 0; t < 20; ++t) EXPECT_DOUBLE_EQ(eta(Vec2::Zero(), random_unit(rng), cfg), std::pow(0.7, 4));
}

TEST(Eta, PointOnTauAxis) {
    const double r = 0.9;
    const auto cfg = unit_cfg(r);
    const Vec2 tau = Vec2(3, 4) / 5.0;
    EXPECT_NEAR(eta(0.5 * r * tau, tau, cfg), 0.75 * std::pow(r, 4), 1e-15);
}

TEST(Eta, AdaptedCoordinates) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1, 1);
    const double r = 1.0 / std::sqrt(2.0);
    const auto cfg = unit_cfg(r);
    for (int t = 0; t < 50; ++t) {
        const Vec2 x(u(rng), u(rng));
        EXPECT_NEAR(eta(x, Vec2(1, 0), cfg), (r * r - x(1) * x(1)) * (r * r - x(0) * x(0)), 1e-15);
        // Product form for unit tau.
        const Vec2 tau = random_unit(rng);
        const double xt = x.dot(tau);
        EXPECT_NEAR(eta(x, tau, cfg), (r * r - x.squaredNorm() + xt * xt) * (r * r - xt * xt), 1e-14);
    }
}

TEST(Sigma, Examples) {
    const double r = 1.0 / std::sqrt(2.0);
    const auto cfg = unit_cfg(r);
    EXPECT_FALSE(sigma_membership(Vec2(r, 0), Vec2(0, 1), cfg));
    EXPECT_TRUE(sigma_membership(Vec2(0.99 * r, 0), Vec2(0, 1), cfg));
}

TEST(Sigma, EnclosureAndBoundsProperty) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    const double R = 1.0;
    const double r = R / std::sqrt(2.0);
    const auto cfg = unit_cfg(r);
    const double r4 = r * r * r * r;
    for (int t = 0; t < 20000; ++t) {
        const Vec2 x(u(rng), u(rng));
        const Vec2 tau = random_unit(rng);
        const bool in = sigma_membership(x, tau, cfg);
        if (x.norm() < r) EXPECT_TRUE(in);
        if (x.norm() >= R) EXPECT_FALSE(in);
        if (in) {
            EXPECT_GT(eta(x, tau, cfg), 0.0);
            EXPECT_LE(eta(x, tau, cfg), r4);
        }
        // Bit-identical under tau -> -tau.
        EXPECT_EQ(eta(x, tau, cfg), eta(x, Vec2(-tau), cfg));
        EXPECT_EQ(in, sigma_membership(x, -tau, cfg));
    }
}

TEST(Eta, RotationInvariance) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    const auto cfg = unit_cfg(0.8);
    for (int t = 0; t < 200; ++t) {
        const Vec2 x(u(rng), u(rng));
        const Vec2 tau = random_unit(rng);
        const double a = u(rng) * M_PI;
        Mat2 rho;
        rho << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
        EXPECT_NEAR(eta(rho * x, rho * tau, cfg), eta(x, tau, cfg), 1e-15);
    }
}

// ---------------------------------------------------------------------------
// tau field

TEST(TauField, QuadraticDiag21) {
    const Solved run = solve(ExactSolutionSpec::quadratic(2, 0, 1), 1.0, 16);
    const auto tau = build_tau_field(run.sol, run.cfg);
    for (std::size_t i = 0; i < tau.tau.size(); ++i) {
        EXPECT_NEAR(std::abs(tau.tau[i](0)), 1.0, 1e-12);
        EXPECT_NEAR(tau.gap[i], 1.0, 1e-9);
        EXPECT_FALSE(tau.degenerate[i]);
    }
}

TEST(TauField, RadialQuadraticIsDegenerateEverywhere) {
    const Solved run = solve(ExactSolutionSpec::quadratic(1, 0, 1), 1.0, 16);
    const auto tau = build_tau_field(run.sol, run.cfg);
    for (std::size_t i = 0; i < tau.tau.size(); ++i) {
        EXPECT_TRUE(tau.degenerate[i]);
        EXPECT_EQ(tau.tau[i], Vec2(1, 0));
    }
    const auto rep = certify(run.sol, run.spec, run.cfg);
    EXPECT_EQ(rep.degenerate_fraction, 1.0);
    EXPECT_TRUE(rep.degenerate_field);
    EXPECT_TRUE(rep.x0_degenerate);
    EXPECT_FALSE(rep.cp_residual.has_value());
    EXPECT_FALSE(rep.eta_checks.has_value());
    EXPECT_TRUE(rep.invariants.all());
}

TEST(TauField, ExponentialRadialIsRadialAndAnEigenvector) {
    const Solved run = solve(ExactSolutionSpec::exponential_radial(1.0), 1.0, 32);
    const auto tau = build_tau_field(run.sol, run.cfg);
    const auto& g = *run.sol.grid;
    for (int node = 0; node < g.node_count(); ++node) {
        const auto k = static_cast<std::size_t>(node);
        if (tau.degenerate[k]) continue;
        const Mat2& h = run.sol.hess[k];
        EXPECT_LE((h * tau.tau[k] - tau.lambda1[k] * tau.tau[k]).norm(), 1e-8 * std::max(1.0, tau.lambda1[k]));
        const Vec2 x = g.position(node);
        if (x.norm() > 0.2 && g.classify(node) == solver::NodeClass::kInterior)
            EXPECT_LT(std::abs(x.normalized().dot(Vec2(-tau.tau[k](1), tau.tau[k](0)))), 0.02) << x.transpose();
    }
}

// ---------------------------------------------------------------------------
// phi and its maximum

TEST(Phi, OriginValueForDiag21) {
    const Solved run = solve(ExactSolutionSpec::quadratic(2, 0, 1), 1.0, 16);
    const auto tau = build_tau_field(run.sol, run.cfg);
    const auto phi = phi_field(run.sol, tau, run.cfg);
    const double r = 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(phi.log_phi[static_cast<std::size_t>(run.sol.grid->origin())], std::log(2.0 * std::pow(r, 16)), 1e-12);
}

TEST(Phi, ArgmaxMatchesAnalyticBruteForce) {
    // log phi from the closed-form u* = x1^2 + x2^2 / 2: tau = e1, u_tautau = 2.
    const Solved run = solve(ExactSolutionSpec::quadratic(2, 0, 1), 1.0, 64);
    const auto rep = certify(run.sol, run.spec, run.cfg);
    const auto& g = *run.sol.grid;
    const double r = run.cfg.r;
    double best = -1e300;
    for (int node = 0; node < g.node_count(); ++node) {
        const Vec2 x = g.position(node);
        const double e = (r * r - x(1) * x(1)) * (r * r - x(0) * x(0));
        if (!(r * r - x(1) * x(1) > 0 && r * r - x(0) * x(0) > 0)) continue;
        const Vec2 du(2 * x(0), x(1));
        best = std::max(best, 4 * std::log(e) + 16.0 / (r * r) * 0.5 * du.squaredNorm() + std::log(2.0));
    }
    EXPECT_NEAR(rep.log_phi_max, best, 1e-9);
    // The maximiser is off-centre: the gradient weight outgrows eta.
    EXPECT_GT(rep.x0.norm(), 0.5);
    ASSERT_TRUE(rep.phi_max.has_value());
    EXPECT_NEAR(std::log(*rep.phi_max), rep.log_phi_max, 1e-12);

    const auto tau = build_tau_field(run.sol, run.cfg);
    const auto phi = phi_field(run.sol, tau, run.cfg);
    for (std::size_t i = 0; i < phi.log_phi.size(); ++i)
        if (phi.in_sigma[i]) EXPECT_LE(phi.log_phi[i], rep.log_phi_max);
}

TEST(Phi, ConstantFieldTieBreak) {
    const solver::DiscGrid g(1.0, 8);
    PhiField phi;
    const auto n = static_cast<std::size_t>(g.node_count());
    phi.in_sigma.assign(n, 1);
    phi.eta.assign(n, 1.0);
    phi.u_tautau.assign(n, 1.0);
    phi.log_phi.assign(n, 0.0);
    const auto m = locate_interior_max(phi, g);
    EXPECT_EQ(m.node, 0);
    EXPECT_FALSE(m.interior);

    phi.in_sigma.assign(n, 0);
    EXPECT_THROW(locate_interior_max(phi, g), std::invalid_argument);
}

TEST(Phi, PositiveOnSigmaAndSignInvariant) {
    for (const auto& fam : {ExactSolutionSpec::exponential_radial(2.0), ExactSolutionSpec::tilted(1, 0, 1, 0.1, 1, 0.5)}) {
        const Solved run = solve(fam, 1.0, 32);
        const auto tau = build_tau_field(run.sol, run.cfg);
        const auto phi = phi_field(run.sol, tau, run.cfg);
        auto flipped = tau;
        for (auto& t : flipped.tau) t = -t;
        const auto phi2 = phi_field(run.sol, flipped, run.cfg);
        for (std::size_t i = 0; i < phi.log_phi.size(); ++i) {
            EXPECT_EQ(phi.in_sigma[i], phi2.in_sigma[i]);
            EXPECT_EQ(phi.log_phi[i], phi2.log_phi[i]);
            if (phi.in_sigma[i]) {
                EXPECT_TRUE(std::isfinite(phi.log_phi[i]));
                EXPECT_GT(phi.u_tautau[i], 0.0);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Critical point and eta derivatives

TEST(CriticalPoint, QuadraticAtCentreIsZero) {
    const Solved run = solve(ExactSolutionSpec::quadratic(2, 0, 1), 1.0, 32);
    const auto tau = build_tau_field(run.sol, run.cfg);
    const auto res = critical_point_residual(run.sol, tau, run.sol.grid->origin(), run.cfg);
    EXPECT_LE(std::abs(res[0]), 1e-6);
    EXPECT_LE(std::abs(res[1]), 1e-6);
}

TEST(CriticalPoint, NegativeControlOffCentre) {
    const Solved run = solve(ExactSolutionSpec::quadratic(2, 0, 1), 1.0, 32);
    const auto tau = build_tau_field(run.sol, run.cfg);
    const int node = run.sol.grid->index(8, 8);
    const auto res = critical_point_residual(run.sol, tau, node, run.cfg);
    EXPECT_GT(std::max(std::abs(res[0]), std::abs(res[1])), 1.0);
}

TEST(CriticalPoint, NotCheckable) {
    const Solved radial = solve(ExactSolutionSpec::quadratic(1, 0, 1), 1.0, 16);
    const auto t0 = build_tau_field(radial.sol, radial.cfg);
    EXPECT_THROW(critical_point_residual(radial.sol, t0, radial.sol.grid->origin(), radial.cfg), NotCheckable);

    const Solved run = solve(ExactSolutionSpec::quadratic(2, 0, 1), 1.0, 16);
    const auto t1 = build_tau_field(run.sol, run.cfg);
    EXPECT_THROW(critical_point_residual(run.sol, t1, run.sol.grid->index(15, 0), run.cfg), NotCheckable);
    EXPECT_THROW(critical_point_residual(run.sol, t1, run.sol.grid->index(12, 0), run.cfg), NotCheckable);
}

TEST(CriticalPoint, ExponentialRadialDecreases) {
    std::vector<double> res;
    for (int n : {16, 32, 64}) {
        const Solved run = solve(ExactSolutionSpec::exponential_radial(1.0), 1.0, n);
        const auto rep = certify(run.sol, run.spec, run.cfg);
        ASSERT_TRUE(rep.cp_residual.has_value()) << rep.cp_status;
        res.push_back(std::max(std::abs((*rep.cp_residual)[0]), std::abs((*rep.cp_residual)[1])));
    }
    EXPECT_GT(res[0], res[1]);
    EXPECT_GT(res[1], res[2]);
}

TEST(EtaDerivatives, QuadraticHasConstantTau) {
    const Solved run = solve(ExactSolutionSpec::quadratic(2, 0.3, 1), 1.0, 32);
    const auto tau = build_tau_field(run.sol, run.cfg);
    const auto phi = phi_field(run.sol, tau, run.cfg);
    const auto nodes = derivative_sample_nodes(run.sol, tau, phi, run.cfg);
    const auto res = eta_derivative_check(run.sol, tau, run.cfg, nodes);
    EXPECT_GT(res.samples, 100);
    EXPECT_LE(res.tau_id, 1e-8);
    for (int node : nodes) EXPECT_LE(analytic_eta_gradient(run.sol, tau, node, run.cfg).x_dtau.norm(), 1e-6);
}

TEST(EtaDerivatives, OnAxisTauDerivativeVanishes) {
    const Solved run = solve(ExactSolutionSpec::exponential_radial(1.0), 1.0, 32);
    const auto tau = build_tau_field(run.sol, run.cfg);
    for (int i = 4; i <= 16; ++i) {
        const auto g = analytic_eta_gradient(run.sol, tau, run.sol.grid->index(i, 0), run.cfg);
        EXPECT_LE(std::abs(g.x_frame(1)), 1e-12);
        EXPECT_LE(std::abs(g.x_dtau(0)), 1e-9);
    }
}

TEST(EtaDerivatives, ExponentialRadialRefinement) {
    std::vector<EtaDerivativeResiduals> res;
    for (int n : {16, 32, 64}) {
        const Solved run = solve(ExactSolutionSpec::exponential_radial(1.0), 1.0, n);
        const auto tau = build_tau_field(run.sol, run.cfg);
        const auto phi = phi_field(run.sol, tau, run.cfg);
        res.push_back(eta_derivative_check(run.sol, tau, run.cfg, derivative_sample_nodes(run.sol, tau, phi, run.cfg)));
    }
    for (std::size_t i = 1; i < res.size(); ++i) {
        EXPECT_GE(res[i - 1].tau_id / res[i].tau_id, 2.0);
        EXPECT_GE(res[i - 1].eta_d / res[i].eta_d, 2.0);
        EXPECT_GT(res[i - 1].phi_grad, res[i].phi_grad);
    }
}

TEST(EtaDerivatives, TooFewSamples) {
    const Solved run = solve(ExactSolutionSpec::quadratic(2, 0, 1), 1.0, 16);
    const auto tau = build_tau_field(run.sol, run.cfg);
    const std::vector<int> nodes{run.sol.grid->origin()};
    EXPECT_THROW(eta_derivative_check(run.sol, tau, run.cfg, nodes), InsufficientSample);
}

// ---------------------------------------------------------------------------
// Case split and bounds

TEST(CaseSplit, UnitQuadraticThresholdByHand) {
    const Solved run = solve(ExactSolutionSpec::quadratic(1, 0, 1), 1.0, 16);
    const auto rep = certify(run.sol, run.spec, run.cfg);
    const double r = 1.0 / std::sqrt(2.0);
    // 10^3 (1 + M + r sup|grad f| + (M/m) sup|Du| / r) r^4 with M = m = 1, grad f = 0.
    const double expected = 1e3 * (1.0 + 1.0 + 0.0 + rep.sups.du / r) * r * r * r * r;
    EXPECT_NEAR(rep.case_info.threshold, expected, 1e-12 * expected);
    EXPECT_EQ(rep.case_info.label, 'A');
    EXPECT_LE(rep.case_info.eta_lambda1, std::pow(r, 4) * (1 + 1e-9));
    ASSERT_TRUE(rep.case_info.direct_margin.has_value());
    EXPECT_GE(*rep.case_info.direct_margin, 0.0);
}

TEST(CaseSplit, SyntheticCaseB) {
    const Solved run = solve(ExactSolutionSpec::quadratic(1, 0, 1), 1.0, 16);
    const double r4 = std::pow(run.cfg.r, 4);
    const auto c = classify_case(1e7 * r4, 1e7, run.spec, Sups{1e-3, 0.0}, run.cfg);
    EXPECT_EQ(c.label, 'B');
    EXPECT_FALSE(c.direct_margin.has_value());
}

TEST(CaseSplit, SmallLambdaAlwaysCaseA) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Solved run = solve(ExactSolutionSpec::exponential_radial(1.0), 1.0, 16);
    const double r4 = std::pow(run.cfg.r, 4);
    for (int t = 0; t < 1000; ++t) {
        const double lambda1 = 1e3 * u(rng);
        const auto c = classify_case(u(rng) * r4 * lambda1, 1.0, run.spec, Sups{u(rng), u(rng)}, run.cfg);
        EXPECT_EQ(c.label, 'A');
    }
}

TEST(Bounds, OriginHessianNorm) {
    const Solved q = solve(ExactSolutionSpec::quadratic(3, 0, 1), 1.0, 16);
    EXPECT_NEAR(certify(q.sol, q.spec, q.cfg).margins.d2u0, 3.0, 1e-10);
    const Solved e = solve(ExactSolutionSpec::exponential_radial(1.0), 1.0, 32);
    const auto rep = certify(e.sol, e.spec, e.cfg);
    EXPECT_NEAR(rep.margins.d2u0, 1.0, 1e-8);
    const double r = e.cfg.r;
    EXPECT_NEAR(rep.margins.log_c1_empirical, std::log(rep.margins.d2u0) - (32.0 + 2.0) * rep.sups.du * rep.sups.du / (r * r),
                1e-12);
}

TEST(Bounds, ScaleConsistentAcrossRadii) {
    // Same cell count: the grids are scaled copies and every ratio is scale-free.
    std::vector<double> ratio;
    for (double R : {0.5, 1.0, 2.0}) {
        const Solved run = solve(ExactSolutionSpec::quadratic(2, 0, 1), R, 32);
        ratio.push_back(certify(run.sol, run.spec, run.cfg).margins.eta_lambda_ratio);
    }
    EXPECT_NEAR(ratio[0] / ratio[1], 1.0, 1e-9);
    EXPECT_NEAR(ratio[2] / ratio[1], 1.0, 1e-9);
}

// ---------------------------------------------------------------------------
// Reports

TEST(Certificate, InvariantsOnManufacturedRuns) {
    for (const auto& fam : {ExactSolutionSpec::exponential_radial(0.5), ExactSolutionSpec::exponential_radial(2.0),
                            ExactSolutionSpec::quadratic(2, 0.3, 1), ExactSolutionSpec::tilted(1, 0, 1, 0.1, 1, 0.5)}) {
        for (int n : {16, 32}) {
            const Solved run = solve(fam, 1.0, n);
            const auto rep = certify(run.sol, run.spec, run.cfg);
            EXPECT_TRUE(rep.invariants.eta_bounds) << fam.params();
            EXPECT_TRUE(rep.invariants.enclosure);
            EXPECT_TRUE(rep.invariants.sign_invariance);
            EXPECT_LE(rep.invariants.rotation_defect, 1e-10);
            EXPECT_TRUE(rep.invariants.phi_positive);
            EXPECT_TRUE(rep.overrides.empty());
            EXPECT_EQ(rep.case_info.label, rep.case_info.eta_lambda1 <= rep.case_info.threshold ? 'A' : 'B');
        }
    }
}

TEST(Certificate, BoundaryBandShrinksUnderRefinement) {
    std::vector<double> band;
    for (int n : {32, 64, 128}) {
        const Solved run = solve(ExactSolutionSpec::quadratic(2, 0, 1), 1.0, n);
        band.push_back(certify(run.sol, run.spec, run.cfg).invariants.boundary_band_ratio);
    }
    EXPECT_GE(band[0], band[1]);
    EXPECT_GT(band[1], band[2]);
}

TEST(Certificate, OverridesAreFlagged) {
    Solved run = solve(ExactSolutionSpec::exponential_radial(1.0), 1.0, 16);
    run.cfg.beta = 3.0;
    run.cfg.c0 = 8.0;
    const auto rep = certify(run.sol, run.spec, run.cfg);
    ASSERT_EQ(rep.overrides.size(), 2u);
    EXPECT_EQ(rep.overrides[0], "beta");
    EXPECT_EQ(rep.overrides[1], "c0");
    EXPECT_TRUE(AuxConfig::defaults(run.spec).overrides(run.spec).empty());
}
