#include "ma2/ma_solver.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "ma2/eigenperturb.hpp"
#include "ma2/error.hpp"

namespace ma2::solver {

namespace {

// Active nodes sit at least this many steps inside the circle, which bounds
// the boundary stencil weights.
constexpr double kClearance = 1e-3;

// Multiple of the estimated rounding level that still counts as converged.
constexpr double kRoundoffSafety = 16.0;

constexpr std::array<std::array<int, 2>, kDirections> kSteps{{{1, 0}, {0, 1}, {1, 1}, {1, -1}}};

std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// Second and first derivative weights of the quadratic through
// (-a, v_minus), (0, v_centre), (b, v_plus), evaluated at 0.
void line_weights(LineStencil& s) {
    const double a = s.minus.t;
    const double b = s.plus.t;
    s.second = {2.0 / (a * (a + b)), -2.0 / (a * b), 2.0 / (b * (a + b))};
    s.first = {-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b))};
}

double end_value(const LineEnd& e, std::span<const double> u, const std::vector<double>& bvals) {
    return e.node >= 0 ? u[static_cast<std::size_t>(e.node)] : bvals[static_cast<std::size_t>(e.boundary)];
}

double line_second(const LineStencil& s, double centre, std::span<const double> u,
                   const std::vector<double>& bvals) {
    return s.second[0] * end_value(s.minus, u, bvals) + s.second[1] * centre +
           s.second[2] * end_value(s.plus, u, bvals);
}

double line_first(const LineStencil& s, double centre, std::span<const double> u,
                  const std::vector<double>& bvals) {
    return s.first[0] * end_value(s.minus, u, bvals) + s.first[1] * centre +
           s.first[2] * end_value(s.plus, u, bvals);
}

// Discrete Hessian (u11, u12, u22) at a node.
struct HessEntries {
    double xx, xy, yy;
};

HessEntries discrete_hessian(const DiscGrid& g, int node, std::span<const double> u,
                             const std::vector<double>& bvals) {
    const double h2 = g.spacing() * g.spacing();
    const double c = u[static_cast<std::size_t>(node)];
    const double sx = line_second(g.line(node, kAlongX), c, u, bvals);
    const double sy = line_second(g.line(node, kAlongY), c, u, bvals);
    const double sd = line_second(g.line(node, kDiagonal), c, u, bvals);
    const double sa = line_second(g.line(node, kAntiDiagonal), c, u, bvals);
    return {sx / h2, (sd - sa) / (4.0 * h2), sy / h2};
}

double smaller_eigenvalue(const HessEntries& e) {
    return perturb::eigen2x2_closed_form(e.xx, e.xy, e.yy).values(1);
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Lexicographic offsets of the 1D difference operators on -2..2.
using Op = std::array<double, 5>;
constexpr Op kIdentity{0, 0, 1, 0, 0};
constexpr Op kD1{0, -0.5, 0, 0.5, 0};
constexpr Op kD2{0, 1, -2, 1, 0};
constexpr Op kD3{-0.5, 1, 0, -1, 0.5};
constexpr Op kD4{1, -4, 6, -4, 1};

}  // namespace

// ---------------------------------------------------------------------------
// DiscGrid

DiscGrid::DiscGrid(double radius, int cells_per_radius) : radius_(radius), n_(cells_per_radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("disc radius must be positive");
    if (cells_per_radius < 8) throw std::invalid_argument("grid needs h <= R/8");
    h_ = radius_ / n_;
    const int width = 2 * n_ + 1;
    index_.assign(static_cast<std::size_t>(width) * width, -1);

    const double clearance = kClearance * h_;
    for (int i = -n_; i <= n_; ++i)
        for (int j = -n_; j <= n_; ++j) {
            const double x = i * h_;
            const double y = j * h_;
            if (radius_ - std::sqrt(x * x + y * y) > clearance) {
                index_[static_cast<std::size_t>((i + n_) * width + (j + n_))] = static_cast<int>(lattice_.size());
                lattice_.push_back({i, j});
            }
        }

    lines_.resize(lattice_.size() * kDirections);
    for (int node = 0; node < node_count(); ++node) {
        const auto [i, j] = lattice_[static_cast<std::size_t>(node)];
        const Vec2 x = position(node);
        for (int d = 0; d < kDirections; ++d) {
            LineStencil& s = lines_[static_cast<std::size_t>(node) * kDirections + d];
            for (int side : {-1, 1}) {
                LineEnd& end = side < 0 ? s.minus : s.plus;
                const int ni = i + side * kSteps[d][0];
                const int nj = j + side * kSteps[d][1];
                end.node = index(ni, nj);
                if (end.node >= 0) continue;
                // Crossing of x + t*step with the circle, t > 0.
                const Vec2 step(side * kSteps[d][0] * h_, side * kSteps[d][1] * h_);
                const double ss = step.squaredNorm();
                const double xs = x.dot(step);
                const double xx = x.squaredNorm() - radius_ * radius_;
                end.t = (-xs + std::sqrt(xs * xs - ss * xx)) / ss;
                end.boundary = static_cast<int>(boundary_points_.size());
                boundary_points_.push_back(x + end.t * step);
            }
            line_weights(s);
        }
    }
}

std::shared_ptr<const DiscGrid> DiscGrid::from_spacing(double radius, double spacing) {
    if (!(spacing > 0.0)) throw std::invalid_argument("grid spacing must be positive");
    const double cells = radius / spacing;
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, cells))
        throw std::invalid_argument("grid spacing must divide the radius into whole cells");
    return std::make_shared<const DiscGrid>(radius, static_cast<int>(rounded));
}

int DiscGrid::index(int i, int j) const {
    if (i < -n_ || i > n_ || j < -n_ || j > n_) return -1;
    const int width = 2 * n_ + 1;
    return index_[static_cast<std::size_t>((i + n_) * width + (j + n_))];
}

Vec2 DiscGrid::position(int node) const {
    const auto [i, j] = lattice_[static_cast<std::size_t>(node)];
    return {i * h_, j * h_};
}

NodeClass DiscGrid::classify(int i, int j) const {
    if (index(i, j) < 0) return NodeClass::kExterior;
    for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj)
            if (index(i + di, j + dj) < 0) return NodeClass::kBoundaryAdjacent;
    return NodeClass::kInterior;
}

NodeClass DiscGrid::classify(int node) const {
    const auto [i, j] = lattice(node);
    return classify(i, j);
}

bool DiscGrid::has_block(int node, int half_width) const {
    const auto [i, j] = lattice(node);
    for (int di = -half_width; di <= half_width; ++di)
        for (int dj = -half_width; dj <= half_width; ++dj)
            if (index(i + di, j + dj) < 0) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Tensors

Third Third::rotated(const Mat2& r) const {
    Third out;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                double s = 0.0;
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j)
                        for (int k = 0; k < 2; ++k) s += r(i, a) * r(j, b) * r(k, c) * v[i][j][k];
                out.v[a][b][c] = s;
            }
    return out;
}

Fourth Fourth::rotated(const Mat2& r) const {
    Fourth out;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int d = 0; d < 2; ++d) {
                    double s = 0.0;
                    for (int i = 0; i < 2; ++i)
                        for (int j = 0; j < 2; ++j)
                            for (int k = 0; k < 2; ++k)
                                for (int l = 0; l < 2; ++l)
                                    s += r(i, a) * r(j, b) * r(k, c) * r(l, d) * v[i][j][k][l];
                    out.v[a][b][c][d] = s;
                }
    return out;
}

// ---------------------------------------------------------------------------
// Exact solutions

ExactSolutionSpec ExactSolutionSpec::quadratic(double a, double b, double c) {
    ExactSolutionSpec s;
    s.family = Family::kQuadratic;
    s.a = a;
    s.b = b;
    s.c = c;
    return s;
}

ExactSolutionSpec ExactSolutionSpec::exponential_radial(double kappa) {
    ExactSolutionSpec s;
    s.family = Family::kExponentialRadial;
    s.kappa = kappa;
    return s;
}

ExactSolutionSpec ExactSolutionSpec::tilted(double a, double b, double c, double eps, double w1, double w2) {
    ExactSolutionSpec s = quadratic(a, b, c);
    s.family = Family::kTilted;
    s.eps = eps;
    s.w1 = w1;
    s.w2 = w2;
    return s;
}

std::string ExactSolutionSpec::id() const {
    switch (family) {
        case Family::kQuadratic: return "quadratic";
        case Family::kExponentialRadial: return "exp_radial";
        case Family::kTilted: return "tilted";
    }
    return "unknown";
}

std::string ExactSolutionSpec::params() const {
    switch (family) {
        case Family::kQuadratic: return "a=" + fmt_num(a) + ";b=" + fmt_num(b) + ";c=" + fmt_num(c);
        case Family::kExponentialRadial: return "kappa=" + fmt_num(kappa);
        case Family::kTilted:
            return "a=" + fmt_num(a) + ";b=" + fmt_num(b) + ";c=" + fmt_num(c) + ";eps=" + fmt_num(eps) +
                   ";w1=" + fmt_num(w1) + ";w2=" + fmt_num(w2);
    }
    return {};
}

bool ExactSolutionSpec::radially_symmetric() const {
    if (family == Family::kExponentialRadial) return true;
    const bool isotropic = a == c && b == 0.0;
    return isotropic && (family == Family::kQuadratic || eps == 0.0);
}

Family parse_family(const std::string& id) {
    if (id == "quadratic") return Family::kQuadratic;
    if (id == "exp_radial" || id == "exponential_radial") return Family::kExponentialRadial;
    if (id == "tilted") return Family::kTilted;
    throw ConfigError("unknown solution family '" + id + "'");
}

namespace {

Mat2 quadratic_part(const ExactSolutionSpec& s) {
    Mat2 a;
    a << s.a, s.b, s.b, s.c;
    return a;
}

}  // namespace

double ExactSolution::u(const Vec2& x) const {
    switch (spec_.family) {
        case Family::kQuadratic: return 0.5 * x.dot(quadratic_part(spec_) * x);
        case Family::kExponentialRadial: return std::exp(0.5 * spec_.kappa * x.squaredNorm()) / spec_.kappa;
        case Family::kTilted:
            return 0.5 * x.dot(quadratic_part(spec_) * x) + spec_.eps * std::exp(spec_.w1 * x(0) + spec_.w2 * x(1));
    }
    return 0.0;
}

Vec2 ExactSolution::grad(const Vec2& x) const {
    switch (spec_.family) {
        case Family::kQuadratic: return quadratic_part(spec_) * x;
        case Family::kExponentialRadial: return x * std::exp(0.5 * spec_.kappa * x.squaredNorm());
        case Family::kTilted: {
            const Vec2 w(spec_.w1, spec_.w2);
            return quadratic_part(spec_) * x + spec_.eps * std::exp(w.dot(x)) * w;
        }
    }
    return Vec2::Zero();
}

Mat2 ExactSolution::hess(const Vec2& x) const {
    switch (spec_.family) {
        case Family::kQuadratic: return quadratic_part(spec_);
        case Family::kExponentialRadial:
            return std::exp(0.5 * spec_.kappa * x.squaredNorm()) *
                   (Mat2::Identity() + spec_.kappa * x * x.transpose());
        case Family::kTilted: {
            const Vec2 w(spec_.w1, spec_.w2);
            return quadratic_part(spec_) + spec_.eps * std::exp(w.dot(x)) * w * w.transpose();
        }
    }
    return Mat2::Zero();
}

Third ExactSolution::third(const Vec2& x) const {
    Third t;
    switch (spec_.family) {
        case Family::kQuadratic: break;
        case Family::kExponentialRadial: {
            const double k = spec_.kappa;
            const double e = std::exp(0.5 * k * x.squaredNorm());
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int l = 0; l < 2; ++l) {
                        const double dij = i == j ? 1.0 : 0.0;
                        const double dil = i == l ? 1.0 : 0.0;
                        const double djl = j == l ? 1.0 : 0.0;
                        t.v[i][j][l] = e * (k * x(l) * (dij + k * x(i) * x(j)) + k * (dil * x(j) + djl * x(i)));
                    }
            break;
        }
        case Family::kTilted: {
            const Vec2 w(spec_.w1, spec_.w2);
            const double p = spec_.eps * std::exp(w.dot(x));
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int l = 0; l < 2; ++l) t.v[i][j][l] = p * w(i) * w(j) * w(l);
            break;
        }
    }
    return t;
}

double ExactSolution::f(const Vec2& x) const {
    switch (spec_.family) {
        case Family::kQuadratic: return spec_.a * spec_.c - spec_.b * spec_.b;
        case Family::kExponentialRadial: {
            const double kr = spec_.kappa * x.squaredNorm();
            return std::exp(kr) * (1.0 + kr);
        }
        case Family::kTilted: {
            const Mat2 a = quadratic_part(spec_);
            const Vec2 w(spec_.w1, spec_.w2);
            const double q = w.dot(a.inverse() * w);
            return a.determinant() * (1.0 + spec_.eps * q * std::exp(w.dot(x)));
        }
    }
    return 0.0;
}

Vec2 ExactSolution::grad_f(const Vec2& x) const {
    switch (spec_.family) {
        case Family::kQuadratic: return Vec2::Zero();
        case Family::kExponentialRadial: {
            const double k = spec_.kappa;
            const double kr = k * x.squaredNorm();
            const double f_rho = k * std::exp(kr) * (2.0 + kr);
            return 2.0 * f_rho * x;
        }
        case Family::kTilted: {
            const Mat2 a = quadratic_part(spec_);
            const Vec2 w(spec_.w1, spec_.w2);
            const double q = w.dot(a.inverse() * w);
            return a.determinant() * spec_.eps * q * std::exp(w.dot(x)) * w;
        }
    }
    return Vec2::Zero();
}

Mat2 ExactSolution::hess_f(const Vec2& x) const {
    switch (spec_.family) {
        case Family::kQuadratic: return Mat2::Zero();
        case Family::kExponentialRadial: {
            const double k = spec_.kappa;
            const double kr = k * x.squaredNorm();
            const double e = std::exp(kr);
            const double f_rho = k * e * (2.0 + kr);
            const double f_rhorho = k * k * e * (3.0 + kr);
            return 2.0 * f_rho * Mat2::Identity() + 4.0 * f_rhorho * x * x.transpose();
        }
        case Family::kTilted: {
            const Mat2 a = quadratic_part(spec_);
            const Vec2 w(spec_.w1, spec_.w2);
            const double q = w.dot(a.inverse() * w);
            return a.determinant() * spec_.eps * q * std::exp(w.dot(x)) * w * w.transpose();
        }
    }
    return Mat2::Zero();
}

void ExactSolution::require_convex(double radius) const {
    const auto& s = spec_;
    auto check_quadratic = [&] {
        if (!(s.a * s.c - s.b * s.b > 0.0) || !(s.a > 0.0))
            throw NotConvex("quadratic part is not positive definite (ac - b^2 = " +
                            fmt_num(s.a * s.c - s.b * s.b) + ")");
    };
    switch (s.family) {
        case Family::kQuadratic: check_quadratic(); return;
        case Family::kExponentialRadial:
            if (s.kappa == 0.0 || !(1.0 + s.kappa * radius * radius > 0.0))
                throw NotConvex("exponential-radial family needs kappa != 0 and 1 + kappa R^2 > 0");
            return;
        case Family::kTilted: {
            check_quadratic();
            if (s.eps < 0.0) {
                const Vec2 w(s.w1, s.w2);
                const double q = w.dot(quadratic_part(s).inverse() * w);
                if (!(1.0 + s.eps * q * std::exp(w.norm() * radius) > 0.0))
                    throw NotConvex("perturbation too large: Hessian loses definiteness on the disc");
            }
            return;
        }
    }
}

std::pair<double, double> ExactSolution::f_bounds(double radius) const {
    const auto& s = spec_;
    switch (s.family) {
        case Family::kQuadratic: {
            const double v = s.a * s.c - s.b * s.b;
            return {v, v};
        }
        case Family::kExponentialRadial: {
            // f is monotone in |x|^2 on the convex range.
            const double kr = s.kappa * radius * radius;
            const double at_rim = std::exp(kr) * (1.0 + kr);
            return {std::min(1.0, at_rim), std::max(1.0, at_rim)};
        }
        case Family::kTilted: {
            const Mat2 a = quadratic_part(s);
            const Vec2 w(s.w1, s.w2);
            const double q = w.dot(a.inverse() * w);
            const double lo = a.determinant() * (1.0 + s.eps * q * std::exp(-w.norm() * radius));
            const double hi = a.determinant() * (1.0 + s.eps * q * std::exp(w.norm() * radius));
            return {std::min(lo, hi), std::max(lo, hi)};
        }
    }
    return {0.0, 0.0};
}

// ---------------------------------------------------------------------------
// Problem specification

void ProblemSpec::validate() const {
    if (!(m > 0.0)) throw ConfigError("lower bound m must be positive");
    if (f.empty()) throw ConfigError("problem has no active nodes");
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    const double slack = 1e-12;
    if (*lo < m * (1.0 - slack) || *hi > M * (1.0 + slack))
        throw ConfigError("right-hand side leaves the certified range [m, M]");
}

ProblemSpec manufacture(const ExactSolutionSpec& family, std::shared_ptr<const DiscGrid> grid) {
    if (!grid) throw std::invalid_argument("manufacture needs a grid");
    const ExactSolution exact(family);
    exact.require_convex(grid->radius());

    ProblemSpec spec;
    spec.exact = family;
    const auto n = static_cast<std::size_t>(grid->node_count());
    spec.f.resize(n);
    spec.grad_f.resize(n);
    spec.hess_f.resize(n);
    spec.exact_u.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 x = grid->position(static_cast<int>(i));
        spec.f[i] = exact.f(x);
        spec.grad_f[i] = exact.grad_f(x);
        spec.hess_f[i] = exact.hess_f(x);
        spec.exact_u[i] = exact.u(x);
        spec.sup_grad_f = std::max(spec.sup_grad_f, spec.grad_f[i].norm());
        const Eigen::Vector2d hf_eig =
            Eigen::SelfAdjointEigenSolver<Mat2>(spec.hess_f[i], Eigen::EigenvaluesOnly).eigenvalues();
        spec.sup_hess_f = std::max(spec.sup_hess_f, hf_eig.cwiseAbs().maxCoeff());
    }
    spec.boundary_values.reserve(grid->boundary_points().size());
    for (const Vec2& p : grid->boundary_points()) spec.boundary_values.push_back(exact.u(p));
    std::tie(spec.m, spec.M) = exact.f_bounds(grid->radius());
    spec.grid = std::move(grid);
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Residual and linearisation

std::vector<double> assemble_residual(std::span<const double> u, const ProblemSpec& spec) {
    const DiscGrid& g = *spec.grid;
    std::vector<double> r(static_cast<std::size_t>(g.node_count()));
    for (int node = 0; node < g.node_count(); ++node) {
        const HessEntries e = discrete_hessian(g, node, u, spec.boundary_values);
        r[static_cast<std::size_t>(node)] = e.xx * e.yy - e.xy * e.xy - spec.f[static_cast<std::size_t>(node)];
    }
    return r;
}

namespace {

// Visits the Jacobian entries of one residual row: d(det)/d(u_col).
template <typename Emit>
void jacobian_row(const DiscGrid& g, int node, const HessEntries& e, Emit&& emit) {
    const double h2 = g.spacing() * g.spacing();
    // Cofactor coefficients of the three line second differences.
    const double cx = e.yy / h2;
    const double cy = e.xx / h2;
    const double cxy = -2.0 * e.xy / (4.0 * h2);
    const std::array<double, kDirections> coeff{cx, cy, cxy, -cxy};
    for (int d = 0; d < kDirections; ++d) {
        const LineStencil& s = g.line(node, static_cast<Direction>(d));
        if (s.minus.node >= 0) emit(s.minus.node, coeff[d] * s.second[0]);
        emit(node, coeff[d] * s.second[1]);
        if (s.plus.node >= 0) emit(s.plus.node, coeff[d] * s.second[2]);
    }
}

Eigen::SparseMatrix<double> assemble_jacobian(std::span<const double> u, const ProblemSpec& spec) {
    const DiscGrid& g = *spec.grid;
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(g.node_count()) * 12);
    for (int node = 0; node < g.node_count(); ++node) {
        const HessEntries e = discrete_hessian(g, node, u, spec.boundary_values);
        jacobian_row(g, node, e, [&](int col, double v) { triplets.emplace_back(node, col, v); });
    }
    Eigen::SparseMatrix<double> jac(g.node_count(), g.node_count());
    jac.setFromTriplets(triplets.begin(), triplets.end());
    return jac;
}

// Smallest Hessian eigenvalue over interior nodes. Boundary-adjacent stencils
// mix in the Dirichlet data and are left out.
double convexity_margin_of(std::span<const double> u, const ProblemSpec& spec) {
    const DiscGrid& g = *spec.grid;
    double margin = std::numeric_limits<double>::infinity();
    for (int node = 0; node < g.node_count(); ++node) {
        if (g.classify(node) != NodeClass::kInterior) continue;
        margin = std::min(margin, smaller_eigenvalue(discrete_hessian(g, node, u, spec.boundary_values)));
    }
    return margin;
}

// Rounding error of the residual evaluation: the stencil sums lose about
// eps * sum |w u| / h^2 each, and the determinant amplifies that by the
// cofactors. Tolerances below this cannot be met.
double residual_roundoff(std::span<const double> u, const ProblemSpec& spec) {
    const DiscGrid& g = *spec.grid;
    const double h2 = g.spacing() * g.spacing();
    const auto& bvals = spec.boundary_values;
    double floor = 0.0;
    for (int node = 0; node < g.node_count(); ++node) {
        const double c = u[static_cast<std::size_t>(node)];
        std::array<double, kDirections> mag{};
        for (int d = 0; d < kDirections; ++d) {
            const LineStencil& s = g.line(node, static_cast<Direction>(d));
            mag[d] = (std::abs(s.second[0] * end_value(s.minus, u, bvals)) + std::abs(s.second[1] * c) +
                      std::abs(s.second[2] * end_value(s.plus, u, bvals))) / h2;
        }
        const HessEntries e = discrete_hessian(g, node, u, bvals);
        const double err = std::abs(e.yy) * mag[kAlongX] + std::abs(e.xx) * mag[kAlongY] +
                           0.5 * std::abs(e.xy) * (mag[kDiagonal] + mag[kAntiDiagonal]) +
                           std::abs(spec.f[static_cast<std::size_t>(node)]);
        floor = std::max(floor, err);
    }
    return floor * std::numeric_limits<double>::epsilon();
}

}  // namespace

std::vector<double> apply_jacobian(std::span<const double> u, std::span<const double> v, const ProblemSpec& spec) {
    const DiscGrid& g = *spec.grid;
    std::vector<double> out(static_cast<std::size_t>(g.node_count()), 0.0);
    for (int node = 0; node < g.node_count(); ++node) {
        const HessEntries e = discrete_hessian(g, node, u, spec.boundary_values);
        double acc = 0.0;
        jacobian_row(g, node, e, [&](int col, double w) { acc += w * v[static_cast<std::size_t>(col)]; });
        out[static_cast<std::size_t>(node)] = acc;
    }
    return out;
}

std::vector<double> initial_iterate(const ProblemSpec& spec) {
    const DiscGrid& g = *spec.grid;
    const auto& pts = g.boundary_points();
    const double r2 = g.radius() * g.radius();

    // 1, x1, x2 and the two trace-free quadratics are independent on the
    // circle; the isotropic part is fixed below by matching det to mean f.
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(pts.size()), 5);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const Vec2& p = pts[k];
        const auto row = static_cast<Eigen::Index>(k);
        basis.row(row) << 1.0, p(0), p(1), 0.5 * (p(0) * p(0) - p(1) * p(1)), p(0) * p(1);
        rhs(row) = spec.boundary_values[k];
    }
    const Eigen::VectorXd coef = basis.colPivHouseholderQr().solve(rhs);
    const double alpha = coef(3);
    const double beta = coef(4);

    double mean_f = 0.0;
    for (double v : spec.f) mean_f += v;
    mean_f /= static_cast<double>(spec.f.size());

    const double iso = std::sqrt(mean_f + alpha * alpha + beta * beta);
    Mat2 hess;
    hess << iso + alpha, beta, beta, iso - alpha;

    // Keep the start strictly inside the convex cone.
    Eigen::SelfAdjointEigenSolver<Mat2> es(hess);
    Eigen::Vector2d lam = es.eigenvalues();
    const double floor = 1e-2 * std::sqrt(spec.m);
    if (lam(0) < floor) {
        lam(0) = floor;
        hess = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    }

    auto quadratic = [&](const Vec2& x) {
        return coef(0) + coef(1) * x(0) + coef(2) * x(1) + 0.5 * x.dot(hess * x) - 0.5 * iso * r2;
    };

    // The quadratic misses the data by a smooth remainder; without correcting
    // it the short boundary stencils see O(remainder / h^2) curvature. Add the
    // discrete harmonic extension of the remainder.
    std::vector<double> remainder(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) remainder[k] = spec.boundary_values[k] - quadratic(pts[k]);

    const auto n = static_cast<Eigen::Index>(g.node_count());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n) * 5);
    Eigen::VectorXd load = Eigen::VectorXd::Zero(n);
    for (int node = 0; node < g.node_count(); ++node) {
        for (Direction d : {kAlongX, kAlongY}) {
            const LineStencil& s = g.line(node, d);
            triplets.emplace_back(node, node, s.second[1]);
            for (const auto& [end, w] : {std::pair{s.minus, s.second[0]}, std::pair{s.plus, s.second[2]}}) {
                if (end.node >= 0)
                    triplets.emplace_back(node, end.node, w);
                else
                    load(node) -= w * remainder[static_cast<std::size_t>(end.boundary)];
            }
        }
    }
    Eigen::SparseMatrix<double> laplace(n, n);
    laplace.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu(laplace);
    const Eigen::VectorXd harmonic = lu.solve(load);

    std::vector<double> u(static_cast<std::size_t>(g.node_count()));
    for (int node = 0; node < g.node_count(); ++node)
        u[static_cast<std::size_t>(node)] = quadratic(g.position(node)) + harmonic(node);
    return u;
}

SolutionField newton_solve(const ProblemSpec& spec, const SolverConfig& config) {
    const double requested = config.tol.value_or(1e-10 * std::max(1.0, spec.M));
    std::vector<double> u = initial_iterate(spec);
    const double tol = std::max(requested, kRoundoffSafety * residual_roundoff(u, spec));
    std::vector<double> residual = assemble_residual(u, spec);
    double norm = max_abs(residual);
    std::vector<double> history{norm};
    std::vector<IterationRecord> records;

    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    bool analyzed = false;
    int iterations = 0;
    const auto n = static_cast<Eigen::Index>(u.size());

    while (iterations == 0 || norm > tol) {
        if (iterations >= config.max_iterations)
            throw NonConvergence("Newton iteration limit reached with residual " + fmt_num(norm), history);

        const Eigen::SparseMatrix<double> jac = assemble_jacobian(u, spec);
        if (!analyzed) {
            lu.analyzePattern(jac);
            analyzed = true;
        }
        lu.factorize(jac);
        if (lu.info() != Eigen::Success)
            throw NonConvergence("singular Newton Jacobian: " + lu.lastErrorMessage(), history);
        const Eigen::VectorXd delta = lu.solve(-Eigen::Map<const Eigen::VectorXd>(residual.data(), n));

        double step = 1.0;
        bool accepted = false;
        bool saw_convex = false;
        int halvings = 0;
        std::vector<double> trial(u.size());
        std::vector<double> trial_residual;
        double trial_norm = 0.0;
        double margin = 0.0;
        for (; halvings <= config.max_halvings; ++halvings, step *= 0.5) {
            for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] + step * delta(static_cast<Eigen::Index>(i));
            margin = convexity_margin_of(trial, spec);
            if (!(margin > 0.0)) continue;  // rejected: left the convex cone
            saw_convex = true;
            trial_residual = assemble_residual(trial, spec);
            trial_norm = max_abs(trial_residual);
            if (trial_norm < norm || trial_norm <= tol) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (!saw_convex)
                throw ConvexityLost("every damped Newton step left the convex cone", history);
            throw NonConvergence("line search failed to reduce the residual below " + fmt_num(norm), history);
        }
        u.swap(trial);
        residual.swap(trial_residual);
        norm = trial_norm;
        history.push_back(norm);
        records.push_back({norm, step, halvings, margin});
        ++iterations;
    }

    SolutionField sol = SolutionField::from_values(spec, std::move(u));
    sol.iterations = iterations;
    sol.history = std::move(records);
    return sol;
}

// ---------------------------------------------------------------------------
// Solution field

SolutionField SolutionField::from_values(const ProblemSpec& spec, std::vector<double> values) {
    const DiscGrid& g = *spec.grid;
    if (values.size() != static_cast<std::size_t>(g.node_count()))
        throw std::invalid_argument("nodal field does not match the grid");
    SolutionField sol;
    sol.grid = spec.grid;
    sol.u = std::move(values);
    const auto n = sol.u.size();
    sol.du.resize(n);
    sol.hess.resize(n);
    sol.convexity_margin = std::numeric_limits<double>::infinity();
    const double h = g.spacing();
    for (int node = 0; node < g.node_count(); ++node) {
        const auto k = static_cast<std::size_t>(node);
        const HessEntries e = discrete_hessian(g, node, sol.u, spec.boundary_values);
        sol.hess[k] << e.xx, e.xy, e.xy, e.yy;
        sol.du[k] << line_first(g.line(node, kAlongX), sol.u[k], sol.u, spec.boundary_values) / h,
            line_first(g.line(node, kAlongY), sol.u[k], sol.u, spec.boundary_values) / h;
        sol.residual_norm = std::max(sol.residual_norm, std::abs(e.xx * e.yy - e.xy * e.xy - spec.f[k]));
        if (g.classify(node) == NodeClass::kInterior)
            sol.convexity_margin = std::min(sol.convexity_margin, smaller_eigenvalue(e));
    }
    return sol;
}

double SolutionField::max_error(const ProblemSpec& spec) const {
    if (spec.exact_u.size() != u.size()) throw std::invalid_argument("problem has no exact solution");
    double err = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) err = std::max(err, std::abs(u[i] - spec.exact_u[i]));
    return err;
}

// ---------------------------------------------------------------------------
// Jets and differentiated identities

std::optional<LocalJet> local_jet(const SolutionField& sol, int node) {
    const DiscGrid& g = *sol.grid;
    if (!g.has_block(node, 2)) return std::nullopt;
    const auto [i0, j0] = g.lattice(node);
    double block[5][5];
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b) block[a][b] = sol.u[static_cast<std::size_t>(g.index(i0 + a - 2, j0 + b - 2))];

    auto apply = [&](const Op& ox, const Op& oy) {
        double s = 0.0;
        for (int a = 0; a < 5; ++a) {
            if (ox[a] == 0.0) continue;
            for (int b = 0; b < 5; ++b) s += ox[a] * oy[b] * block[a][b];
        }
        return s;
    };
    const std::array<const Op*, 5> ops{&kIdentity, &kD1, &kD2, &kD3, &kD4};
    const double h = g.spacing();

    // Derivative with `nx` x-derivatives and `ny` y-derivatives.
    auto deriv = [&](int nx, int ny) { return apply(*ops[nx], *ops[ny]) / std::pow(h, nx + ny); };

    LocalJet jet;
    jet.grad << deriv(1, 0), deriv(0, 1);
    jet.hess << deriv(2, 0), deriv(1, 1), deriv(1, 1), deriv(0, 2);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                const int ny = a + b + c;
                jet.third.v[a][b][c] = deriv(3 - ny, ny);
                for (int d = 0; d < 2; ++d) {
                    const int my = ny + d;
                    jet.fourth.v[a][b][c][d] = deriv(4 - my, my);
                }
            }
    return jet;
}

IdentityResiduals differentiated_identity_residuals(const SolutionField& sol, const ProblemSpec& spec,
                                                    const IdentitySampling& sampling) {
    const DiscGrid& g = *sol.grid;
    IdentityResiduals out;
    for (int node = 0; node < g.node_count(); ++node) {
        if (g.position(node).norm() > sampling.max_radius) continue;
        const auto k = static_cast<std::size_t>(node);
        const Mat2& hess = sol.hess[k];
        const perturb::EigenSystem es = perturb::eigen2x2_closed_form(hess(0, 0), hess(0, 1), hess(1, 1));
        const double l1 = es.values(0);
        const double l2 = es.values(1);
        if (!(es.gap > perturb::gap_tolerance(std::max(std::abs(l1), std::abs(l2))))) continue;
        const auto jet = local_jet(sol, node);
        if (!jet) continue;

        // Principal frame: first axis along the top eigenvector.
        const Mat2 frame = es.vectors;
        const Third t3 = jet->third.rotated(frame);
        const Fourth t4 = jet->fourth.rotated(frame);
        const Vec2 fg = frame.transpose() * spec.grad_f[k];
        const Mat2 fh = frame.transpose() * spec.hess_f[k] * frame;
        const double f = spec.f[k];
        const double u11 = l1;

        for (int i = 0; i < 2; ++i) {
            const double predicted = fg(i) / l1 - f / l1 * t3.v[0][0][i] / u11;
            out.first = std::max(out.first, std::abs(t3.v[1][1][i] - predicted));
        }
        const double r111 = t3.v[0][0][0] / u11;
        const double r112 = t3.v[0][0][1] / u11;
        const double second = l2 * t4.v[0][0][0][0] + l1 * t4.v[1][1][0][0] -
                              (fh(0, 0) + 2.0 * t3.v[0][0][1] * t3.v[0][0][1] - 2.0 * fg(0) * r111 +
                               2.0 * f * r111 * r111);
        const double mixed =
            l2 * t4.v[0][0][0][1] + l1 * t4.v[1][1][0][1] - (fh(0, 1) + fg(0) * r112 - fg(1) * r111);
        out.second = std::max(out.second, std::abs(second));
        out.mixed = std::max(out.mixed, std::abs(mixed));
        ++out.samples;
    }
    if (out.samples < 4)
        throw InsufficientSample("only " + std::to_string(out.samples) + " nodes qualify for identity checks");
    return out;
}

}  // namespace ma2::solver
