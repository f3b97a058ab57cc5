#pragma once

// Finite-difference Newton solver for det D^2 u = f on a disc B_R(0) with
// Dirichlet data, plus manufactured exact solutions.

#include <Eigen/Dense>

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ma2::solver {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

enum class NodeClass { kInterior, kBoundaryAdjacent, kExterior };

/// Grid lines used by the stencils: the two axes, the diagonal (1,1) and the
/// anti-diagonal (1,-1).
enum Direction : int { kAlongX = 0, kAlongY = 1, kDiagonal = 2, kAntiDiagonal = 3 };
inline constexpr int kDirections = 4;

/// One end of a three-point stencil along a grid line. Either an active node
/// at one step (t = 1) or a crossing with the circle at t steps, t in (0, 1.5).
struct LineEnd {
    int node = -1;
    int boundary = -1;
    double t = 1.0;
};

/// Three-point stencil along one line through an active node. The weights are
/// the derivatives of the quadratic through (-t_minus, 0, t_plus), in units of
/// one lattice step along the line; with both neighbours present they reduce
/// to the standard central differences.
struct LineStencil {
    LineEnd minus;
    LineEnd plus;
    std::array<double, 3> second{};  // (minus, centre, plus)
    std::array<double, 3> first{};
};

/// Uniform Cartesian lattice with spacing h = R/N over [-R, R]^2. Nodes more
/// than 1e-3 h inside the circle are active (unknowns); active nodes are
/// numbered lexicographically in (x1, x2).
class DiscGrid {
public:
    DiscGrid(double radius, int cells_per_radius);

    /// Builds the grid for a spacing that must divide R into an integer number
    /// of cells (N = R/h >= 8).
    static std::shared_ptr<const DiscGrid> from_spacing(double radius, double spacing);

    double radius() const noexcept { return radius_; }
    double spacing() const noexcept { return h_; }
    int cells() const noexcept { return n_; }
    int node_count() const noexcept { return static_cast<int>(lattice_.size()); }

    /// Active node at lattice coordinates (i, j), each in [-N, N], or -1.
    int index(int i, int j) const;
    std::array<int, 2> lattice(int node) const { return lattice_[static_cast<std::size_t>(node)]; }
    Vec2 position(int node) const;
    NodeClass classify(int i, int j) const;
    NodeClass classify(int node) const;

    const LineStencil& line(int node, Direction d) const {
        return lines_[static_cast<std::size_t>(node) * kDirections + static_cast<std::size_t>(d)];
    }
    const std::vector<Vec2>& boundary_points() const noexcept { return boundary_points_; }

    /// Node at the origin (always active).
    int origin() const { return index(0, 0); }

    /// True when every lattice point within `half_width` steps (a square block)
    /// is active.
    bool has_block(int node, int half_width) const;

private:
    double radius_;
    int n_;
    double h_;
    std::vector<int> index_;  // (2N+1)^2 lattice -> active node or -1
    std::vector<std::array<int, 2>> lattice_;
    std::vector<LineStencil> lines_;
    std::vector<Vec2> boundary_points_;
};

/// Third and fourth derivative tensors in two dimensions.
struct Third {
    double v[2][2][2] = {};
    Third rotated(const Mat2& frame) const;  // components along frame columns
};
struct Fourth {
    double v[2][2][2][2] = {};
    Fourth rotated(const Mat2& frame) const;
};

enum class Family { kQuadratic, kExponentialRadial, kTilted };

/// Manufactured exact solution families:
///   quadratic           u = (a x1^2 + 2 b x1 x2 + c x2^2) / 2
///   exponential-radial  u = exp(kappa |x|^2 / 2) / kappa
///   tilted              quadratic + eps * exp(w1 x1 + w2 x2)
struct ExactSolutionSpec {
    Family family = Family::kQuadratic;
    double a = 1.0, b = 0.0, c = 1.0;
    double kappa = 1.0;
    double eps = 0.0, w1 = 0.0, w2 = 0.0;

    static ExactSolutionSpec quadratic(double a, double b, double c);
    static ExactSolutionSpec exponential_radial(double kappa);
    static ExactSolutionSpec tilted(double a, double b, double c, double eps, double w1, double w2);

    std::string id() const;      // "quadratic", "exp_radial", "tilted"
    std::string params() const;  // e.g. "kappa=1"
    bool radially_symmetric() const;
};

Family parse_family(const std::string& id);

/// Closed-form evaluation of u*, its derivatives and f = det D^2 u*.
class ExactSolution {
public:
    explicit ExactSolution(ExactSolutionSpec spec) : spec_(spec) {}

    const ExactSolutionSpec& spec() const noexcept { return spec_; }

    double u(const Vec2& x) const;
    Vec2 grad(const Vec2& x) const;
    Mat2 hess(const Vec2& x) const;
    Third third(const Vec2& x) const;

    double f(const Vec2& x) const;
    Vec2 grad_f(const Vec2& x) const;
    Mat2 hess_f(const Vec2& x) const;

    /// Throws NotConvex unless u* is uniformly convex on the closed disc.
    void require_convex(double radius) const;

    /// Exact (min, max) of f over the closed disc.
    std::pair<double, double> f_bounds(double radius) const;

private:
    ExactSolutionSpec spec_;
};

struct ProblemSpec {
    std::shared_ptr<const DiscGrid> grid;
    std::vector<double> f;       // per active node
    std::vector<Vec2> grad_f;    // per active node
    std::vector<Mat2> hess_f;    // per active node
    std::vector<double> boundary_values;  // per grid boundary point
    double m = 0.0;
    double M = 0.0;
    double sup_grad_f = 0.0;  // max over active nodes
    double sup_hess_f = 0.0;
    std::optional<ExactSolutionSpec> exact;
    std::vector<double> exact_u;  // per active node when `exact` is set

    /// Throws ma2::Error when min f < m, max f > M or m <= 0.
    void validate() const;
};

/// Builds f, Dirichlet data and bounds from an exact solution. Throws
/// NotConvex when the family is not uniformly convex on the disc.
ProblemSpec manufacture(const ExactSolutionSpec& family, std::shared_ptr<const DiscGrid> grid);

struct SolverConfig {
    std::optional<double> tol;  // default 1e-10 * max(1, M)
    int max_iterations = 50;
    int max_halvings = 30;
};

struct IterationRecord {
    double residual_norm = 0.0;
    double step = 0.0;
    int halvings = 0;
    double convexity_margin = 0.0;
};

/// Gridded solution with derivative caches. Immutable once built.
struct SolutionField {
    std::shared_ptr<const DiscGrid> grid;
    std::vector<double> u;
    std::vector<Vec2> du;    // central differences (one-sided quadratic at the boundary)
    std::vector<Mat2> hess;  // second differences, cross term via the diagonals
    double residual_norm = 0.0;     // max |det Hess - f|
    double convexity_margin = 0.0;  // min smaller Hessian eigenvalue
    int iterations = 0;
    std::vector<IterationRecord> history;

    /// Derivative caches and diagnostics for given nodal values.
    static SolutionField from_values(const ProblemSpec& spec, std::vector<double> u);

    /// max |u - u*| over active nodes; requires spec.exact.
    double max_error(const ProblemSpec& spec) const;
};

/// Discrete det D^2_h u - f at every active node.
std::vector<double> assemble_residual(std::span<const double> u, const ProblemSpec& spec);

/// Cofactor linearisation of assemble_residual at u applied to v.
std::vector<double> apply_jacobian(std::span<const double> u, std::span<const double> v,
                                   const ProblemSpec& spec);

/// Convex quadratic matching the Dirichlet data in least squares.
std::vector<double> initial_iterate(const ProblemSpec& spec);

/// Damped Newton iteration. Throws NonConvergence or ConvexityLost.
SolutionField newton_solve(const ProblemSpec& spec, const SolverConfig& config = {});

/// Finite-difference jet at a node whose 5x5 lattice block is active.
struct LocalJet {
    Vec2 grad;
    Mat2 hess;
    Third third;
    Fourth fourth;
};
std::optional<LocalJet> local_jet(const SolutionField& sol, int node);

struct IdentityResiduals {
    double first = 0.0;   // differentiated once, both components
    double second = 0.0;  // differentiated twice along the principal direction
    double mixed = 0.0;   // differentiated along both principal directions
    int samples = 0;
};

struct IdentitySampling {
    double max_radius = 1e300;  // only nodes with |x| <= max_radius
};

/// Residuals of the once- and twice-differentiated equation written in the
/// principal axes of the discrete Hessian at each sampled node. Nodes need a
/// full width-5 stencil and a simple top eigenvalue. Throws
/// InsufficientSample when fewer than 4 nodes qualify.
IdentityResiduals differentiated_identity_residuals(const SolutionField& sol, const ProblemSpec& spec,
                                                    const IdentitySampling& sampling = {});

}  // namespace ma2::solver
