#pragma once

// Auxiliary test function of the interior C^2 estimate, evaluated on a solved
// field: eigenvector field tau, region Sigma, weight eta and
//   phi = eta^beta * g(|Du|^2 / 2) * u_tautau,   g(t) = exp(c0 t / r^2).
// phi is carried as log phi; g overflows double for modest gradients.

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ma2/ma_solver.hpp"

namespace ma2::aux {

using solver::Mat2;
using solver::Vec2;

struct AuxConfig {
    double beta = 4.0;
    double c0 = 32.0;              // 32 / m by default
    double r = 1.0 / 1.4142135623730951;  // R / sqrt(2) by default
    double threshold_factor = 1e3;
    double gap_tol_factor = 1e-8;  // relative to max(1, |lambda_1|)
    // Derivative checks only sample nodes with (lambda_1 - lambda_2) / lambda_1
    // above this; 1 / gap amplifies discretisation error near umbilic points.
    double sample_relative_gap = 0.1;

    /// beta = 4, c0 = 32/m, r = R/sqrt(2) for the given problem.
    static AuxConfig defaults(const solver::ProblemSpec& spec);

    /// Names of fields that differ from defaults(spec).
    std::vector<std::string> overrides(const solver::ProblemSpec& spec) const;

    double g_log(double t) const { return c0 / (r * r) * t; }
    double g_ratio() const { return c0 / (r * r); }  // g'/g
    double gap_tol(double lambda1) const;
};

struct TauField {
    std::vector<Vec2> tau;  // top unit eigenvector; e1 at degenerate nodes
    std::vector<double> lambda1;
    std::vector<double> lambda2;
    std::vector<double> gap;
    std::vector<char> degenerate;
};

TauField build_tau_field(const solver::SolutionField& sol, const AuxConfig& cfg);

/// (r^2 - |x|^2 + <x,tau>^2) and (r^2 - <x,tau>^2).
std::array<double, 2> eta_factors(const Vec2& x, const Vec2& tau, const AuxConfig& cfg);
double eta(const Vec2& x, const Vec2& tau, const AuxConfig& cfg);
bool sigma_membership(const Vec2& x, const Vec2& tau, const AuxConfig& cfg);

struct PhiField {
    std::vector<char> in_sigma;
    std::vector<double> eta;
    std::vector<double> u_tautau;
    std::vector<double> log_phi;  // -inf outside Sigma
};

PhiField phi_field(const solver::SolutionField& sol, const TauField& tau, const AuxConfig& cfg);

struct MaxLocation {
    int node = -1;
    Vec2 x = Vec2::Zero();
    double log_phi = 0.0;
    bool interior = false;  // every lattice point within 2h is in Sigma
};

/// Grid argmax of log phi over Sigma; ties go to the smallest node index
/// (lexicographic in x1, then x2). Throws std::invalid_argument when Sigma
/// has no nodes.
MaxLocation locate_interior_max(const PhiField& phi, const solver::DiscGrid& grid);

/// First-order condition at a maximum of phi written in the principal frame
/// at the node:
///   r * (u_11i / lambda_1 + beta eta_i / eta + (g'/g) u_i lambda_i),  i = 1, 2.
/// Throws NotCheckable when the node is degenerate, outside Sigma or lacks
/// the width-5 stencil.
std::array<double, 2> critical_point_residual(const solver::SolutionField& sol, const TauField& tau,
                                              int node, const AuxConfig& cfg);

/// Analytic first derivatives of eta at a node in its principal frame, and
/// the pieces they are built from.
struct EtaGradient {
    Vec2 x_frame;      // position in the principal frame
    Vec2 x_dtau;       // <x, d_i tau>, i = 1, 2
    Vec2 d_eta;        // eta_i
};
EtaGradient analytic_eta_gradient(const solver::SolutionField& sol, const TauField& tau, int node,
                                  const AuxConfig& cfg);

struct EtaDerivativeResiduals {
    double tau_id = 0.0;  // FD of <x, tau(x)> vs delta_i1 + x_2 u_12i / (lambda_1 - lambda_2)
    double eta_d = 0.0;   // FD of eta vs analytic eta_i, in units of r^3
    // r * |FD of log phi - first-order expression at the node|; the
    // critical-point residual is that expression, so this checks it is the
    // gradient of log phi away from the maximum too.
    double phi_grad = 0.0;
    int samples = 0;
};

/// Nodes where the derivative checks are meaningful: width-5 stencil, every
/// node within 2h in Sigma and non-degenerate, relative gap above
/// cfg.sample_relative_gap.
std::vector<int> derivative_sample_nodes(const solver::SolutionField& sol, const TauField& tau,
                                         const PhiField& phi, const AuxConfig& cfg);

/// Throws InsufficientSample when `nodes` has fewer than 4 entries.
EtaDerivativeResiduals eta_derivative_check(const solver::SolutionField& sol, const TauField& tau,
                                            const AuxConfig& cfg, std::span<const int> nodes);

struct CaseClassification {
    char label = 'A';
    double eta_lambda1 = 0.0;
    double threshold = 0.0;
    // Case A only: log(bound) - log u_tautau(0) for the two bound stages,
    // the one keeping the (M/m) sup|Du|/r term and the final exponential form.
    std::optional<double> stage_margin;
    std::optional<double> direct_margin;
};

struct Sups {
    double du = 0.0;      // max |Du| over active nodes
    double grad_f = 0.0;  // max |grad f|
};
Sups measure_sups(const solver::SolutionField& sol, const solver::ProblemSpec& spec);

/// Threshold 10^3 (1 + M + r sup|grad f| + (M/m) sup|Du| / r) r^4; case A when
/// eta lambda_1 <= threshold.
CaseClassification classify_case(double eta_lambda1, double u_tautau_origin, const solver::ProblemSpec& spec,
                                 const Sups& sups, const AuxConfig& cfg);

struct BoundMargins {
    double eta_lambda_ratio = 0.0;  // eta lambda_1 / ((1 + sup|Du|/r) r^4)
    double d2u0 = 0.0;              // spectral norm of the Hessian at the origin node
    double log_c1_empirical = 0.0;  // log d2u0 - (c0 + 2) sup|Du|^2 / r^2
    double c1_empirical = 0.0;      // may underflow to 0; use the log
};

BoundMargins bound_check(const solver::SolutionField& sol, double eta_lambda1, const Sups& sups,
                         const AuxConfig& cfg);

/// Exhaustive per-node checks of the eta / Sigma / phi properties.
struct InvariantChecks {
    bool eta_bounds = true;     // 0 < eta <= r^4 on Sigma
    bool enclosure = true;      // |x| < r => in Sigma; |x| >= R => not
    bool sign_invariance = true;  // bit-identical under tau -> -tau
    double rotation_defect = 0.0;  // max |eta_rho(rho x) - eta(x)| / r^4 over 90/180/270 degrees
    bool rotation_invariance = true;  // rotation_defect <= 1e-10
    bool phi_positive = true;
    double boundary_band_ratio = 0.0;  // max phi within 2h of the Sigma boundary / phi_max

    bool all() const { return eta_bounds && enclosure && sign_invariance && rotation_invariance && phi_positive; }
};

InvariantChecks check_invariants(const solver::SolutionField& sol, const TauField& tau, const PhiField& phi,
                                 const AuxConfig& cfg);

struct CertificateReport {
    int x0_node = -1;
    Vec2 x0 = Vec2::Zero();
    bool x0_interior = false;
    bool x0_degenerate = false;
    double log_phi_max = 0.0;
    std::optional<double> phi_max;  // empty when exp overflows
    double eta_at_x0 = 0.0;
    double lambda1_at_x0 = 0.0;
    CaseClassification case_info;
    std::optional<std::array<double, 2>> cp_residual;
    std::string cp_status;  // "ok" or the NotCheckable reason
    std::optional<EtaDerivativeResiduals> eta_checks;
    std::string eta_status;
    BoundMargins margins;
    Sups sups;
    double degenerate_fraction = 0.0;  // over Sigma nodes
    bool degenerate_field = false;     // every Sigma node degenerate
    InvariantChecks invariants;
    std::vector<std::string> overrides;
};

CertificateReport certify(const solver::SolutionField& sol, const solver::ProblemSpec& spec,
                          const AuxConfig& cfg);

}  // namespace ma2::aux
