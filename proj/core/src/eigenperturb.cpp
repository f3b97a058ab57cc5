#include "ma2/eigenperturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ma2/error.hpp"

namespace ma2::perturb {

namespace {

constexpr double kRelativeGapTol = 1e-8;

std::vector<double> row_major(const Eigen::MatrixXd& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Diagonal entries of W as the eigenvalues lambda_i = W_ii; validates the
// kernel preconditions.
Eigen::VectorXd checked_diagonal(const SymmetricMatrix& w, int k) {
    if (!w.is_diagonal()) throw std::invalid_argument("derivative kernel requires a diagonal matrix");
    if (k < 0 || k >= w.dim()) throw std::out_of_range("eigenvalue index out of range");
    Eigen::VectorXd lambda = w.matrix().diagonal();
    const double sep = eigenvalue_separation(lambda, k);
    if (!(sep > gap_tolerance(max_abs(lambda)))) throw DegenerateEigenvalue(k, sep);
    return lambda;
}

// Index pairs (a, b) whose perturbation the symmetric coordinate {p, q} moves.
std::vector<std::pair<int, int>> orientations(int p, int q) {
    if (p == q) return {{p, p}};
    return {{p, q}, {q, p}};
}

template <std::size_t Rank>
Tensor<Rank> contract_every_mode(const Tensor<Rank>& t, const Eigen::MatrixXd& q) {
    Tensor<Rank> cur = t;
    const int n = t.extent();
    for (std::size_t mode = 0; mode < Rank; ++mode) {
        Tensor<Rank> next(n);
        for (std::size_t flat = 0; flat < cur.size(); ++flat) {
            const double v = cur.data()[flat];
            if (v == 0.0) continue;
            auto idx = cur.index_of(flat);
            const int a = idx[mode];
            for (int p = 0; p < n; ++p) {
                idx[mode] = p;
                next.at(idx) += q(p, a) * v;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

struct Eigenpair {
    double lambda;
    Eigen::VectorXd tau;
};

// k-th largest eigenpair of a symmetric matrix, sign-aligned with `reference`.
Eigenpair symmetric_pair(const Eigen::MatrixXd& a, int k, const Eigen::VectorXd& reference) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw EigenNonConvergence(static_cast<int>(a.rows()), row_major(a));
    const int n = static_cast<int>(a.rows());
    const int col = n - 1 - k;  // Eigen sorts ascending
    Eigen::VectorXd v = es.eigenvectors().col(col);
    if (v.dot(reference) < 0.0) v = -v;
    return {es.eigenvalues()(col), v};
}

// Right eigenpair of a (possibly non-symmetric) matrix continued from a
// nearby eigenpair by Newton's method on (A - lambda) v = 0, |v|^2 = 1.
Eigenpair continued_right_pair(const Eigen::MatrixXd& a, const Eigenpair& start) {
    const int n = static_cast<int>(a.rows());
    Eigen::VectorXd v = start.tau;
    double lambda = start.lambda;
    Eigen::MatrixXd jac(n + 1, n + 1);
    Eigen::VectorXd rhs(n + 1);
    for (int it = 0; it < 30; ++it) {
        Eigen::MatrixXd shifted = a;
        shifted.diagonal().array() -= lambda;
        rhs.head(n) = -(shifted * v);
        rhs(n) = -0.5 * (v.squaredNorm() - 1.0);
        jac.topLeftCorner(n, n) = shifted;
        jac.topRightCorner(n, 1) = -v;
        jac.bottomLeftCorner(1, n) = v.transpose();
        jac(n, n) = 0.0;
        const Eigen::VectorXd delta = jac.partialPivLu().solve(rhs);
        v += delta.head(n);
        lambda += delta(n);
        if (delta.lpNorm<Eigen::Infinity>() < 1e-15) break;
    }
    return {lambda, v};
}

}  // namespace

SymmetricMatrix::SymmetricMatrix(Eigen::MatrixXd entries) : m_(std::move(entries)) {
    if (m_.rows() != m_.cols()) throw std::invalid_argument("symmetric matrix must be square");
    if (m_.rows() < 2) throw std::invalid_argument("symmetric matrix dimension must be at least 2");
    for (Eigen::Index i = 0; i < m_.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m_.cols(); ++j)
            if (m_(i, j) != m_(j, i)) throw std::invalid_argument("matrix is not exactly symmetric");
}

SymmetricMatrix::SymmetricMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : SymmetricMatrix([&] {
          const auto n = static_cast<Eigen::Index>(rows.size());
          Eigen::MatrixXd m(n, n);
          Eigen::Index i = 0;
          for (const auto& row : rows) {
              if (static_cast<Eigen::Index>(row.size()) != n)
                  throw std::invalid_argument("symmetric matrix must be square");
              Eigen::Index j = 0;
              for (double v : row) m(i, j++) = v;
              ++i;
          }
          return m;
      }()) {}

SymmetricMatrix SymmetricMatrix::diagonal(std::span<const double> diag) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(diag.size()),
                                              static_cast<Eigen::Index>(diag.size()));
    for (std::size_t i = 0; i < diag.size(); ++i)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = diag[i];
    return SymmetricMatrix(std::move(m));
}

SymmetricMatrix SymmetricMatrix::identity(int n) { return SymmetricMatrix(Eigen::MatrixXd::Identity(n, n)); }

bool SymmetricMatrix::is_diagonal() const {
    for (Eigen::Index i = 0; i < m_.rows(); ++i)
        for (Eigen::Index j = 0; j < m_.cols(); ++j)
            if (i != j && m_(i, j) != 0.0) return false;
    return true;
}

double gap_tolerance(double lambda_max) { return kRelativeGapTol * std::max(1.0, std::abs(lambda_max)); }

double eigenvalue_separation(const Eigen::VectorXd& values, int k) {
    double sep = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (i != k) sep = std::min(sep, std::abs(values(k) - values(i)));
    return sep;
}

void normalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v(i)) > std::abs(v(best))) best = i;
    if (v(best) < 0.0) v = -v;
}

EigenSystem eigen2x2_closed_form(double u11, double u12, double u22) {
    const double trace = u11 + u22;
    const double diff = u11 - u22;
    const double disc = std::hypot(diff, 2.0 * u12);
    const double det = u11 * u22 - u12 * u12;

    // The root of larger magnitude comes from the radical without
    // cancellation; the other follows from the determinant.
    double l1;
    double l2;
    if (trace >= 0.0) {
        l1 = 0.5 * (trace + disc);
        l2 = l1 != 0.0 ? det / l1 : 0.5 * (trace - disc);
    } else {
        l2 = 0.5 * (trace - disc);
        l1 = l2 != 0.0 ? det / l2 : 0.5 * (trace + disc);
    }
    if (l2 > l1) std::swap(l1, l2);

    EigenSystem es;
    es.values.resize(2);
    es.values << l1, l2;
    es.vectors = Eigen::Matrix2d::Identity();
    es.gap = disc;
    if (disc == 0.0) return es;

    Eigen::VectorXd t1(2);
    if (diff >= 0.0)
        t1 << 0.5 * (diff + disc), u12;  // (lambda_1 - u22, u12)
    else
        t1 << u12, 0.5 * (disc - diff);  // (u12, lambda_1 - u11)
    t1.normalize();
    normalize_sign(t1);
    Eigen::VectorXd t2(2);
    t2 << -t1(1), t1(0);
    normalize_sign(t2);
    es.vectors.col(0) = t1;
    es.vectors.col(1) = t2;
    return es;
}

EigenSystem eigen2x2_closed_form(const SymmetricMatrix& w) {
    if (w.dim() != 2) throw std::invalid_argument("closed form requires a 2x2 matrix");
    return eigen2x2_closed_form(w(0, 0), w(0, 1), w(1, 1));
}

EigenSystem eigen_decompose(const SymmetricMatrix& w) {
    const int n = w.dim();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w.matrix());
    if (solver.info() != Eigen::Success) throw EigenNonConvergence(n, row_major(w.matrix()));

    EigenSystem es;
    es.values = solver.eigenvalues().reverse();
    es.vectors = solver.eigenvectors().rowwise().reverse();
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXd col = es.vectors.col(k);
        normalize_sign(col);
        es.vectors.col(k) = col;
    }
    es.gap = std::numeric_limits<double>::infinity();
    for (int k = 0; k + 1 < n; ++k) es.gap = std::min(es.gap, es.values(k) - es.values(k + 1));
    return es;
}

Tensor<2> dlambda_at_diagonal(const SymmetricMatrix& w, int k) {
    checked_diagonal(w, k);
    Tensor<2> t(w.dim());
    t(k, k) = 1.0;
    return t;
}

Tensor<3> dtau_at_diagonal(const SymmetricMatrix& w, int k) {
    const Eigen::VectorXd lambda = checked_diagonal(w, k);
    const int n = w.dim();
    Tensor<3> t(n);
    for (int i = 0; i < n; ++i)
        if (i != k) t(i, i, k) = 1.0 / (lambda(k) - lambda(i));
    return t;
}

Tensor<4> d2lambda_at_diagonal(const SymmetricMatrix& w, int k) {
    const Eigen::VectorXd lambda = checked_diagonal(w, k);
    const int n = w.dim();
    Tensor<4> t(n);
    for (int q = 0; q < n; ++q) {
        if (q == k) continue;
        const double v = 1.0 / (lambda(k) - lambda(q));
        t(k, q, q, k) = v;
        t(q, k, k, q) = v;
    }
    return t;
}

Tensor<5> d2tau_at_diagonal(const SymmetricMatrix& w, int k) {
    const Eigen::VectorXd lambda = checked_diagonal(w, k);
    const int n = w.dim();
    Tensor<5> t(n);
    for (int p = 0; p < n; ++p) {
        if (p == k) continue;
        const double d = lambda(k) - lambda(p);
        t(k, p, k, p, k) = -1.0 / (d * d);
    }
    for (int i = 0; i < n; ++i) {
        if (i == k) continue;
        const double di = lambda(k) - lambda(i);
        const double inv2 = 1.0 / (di * di);
        t(i, i, k, i, i) = inv2;
        t(i, i, i, i, k) = inv2;
        t(i, i, k, k, k) = -inv2;
        t(i, k, k, i, k) = -inv2;
        for (int q = 0; q < n; ++q) {
            if (q == k || q == i) continue;
            const double v = 1.0 / (di * (lambda(k) - lambda(q)));
            t(i, i, q, q, k) = v;
            t(i, q, k, i, q) = v;
        }
    }
    return t;
}

EigenDerivatives derivatives_at_diagonal(const SymmetricMatrix& w, int k) {
    EigenDerivatives d;
    d.k = k;
    d.convention = Convention::kIndependentEntries;
    d.d_lambda = dlambda_at_diagonal(w, k);
    d.d_tau = dtau_at_diagonal(w, k);
    d.d2_lambda = d2lambda_at_diagonal(w, k);
    d.d2_tau = d2tau_at_diagonal(w, k);
    return d;
}

EigenDerivatives conjugate_to_general(const SymmetricMatrix& w, int k) {
    if (k < 0 || k >= w.dim()) throw std::out_of_range("eigenvalue index out of range");
    const EigenSystem es = eigen_decompose(w);
    const double sep = eigenvalue_separation(es.values, k);
    if (!(sep > gap_tolerance(max_abs(es.values)))) throw DegenerateEigenvalue(k, sep);

    const SymmetricMatrix diag = SymmetricMatrix::diagonal(
        std::span<const double>(es.values.data(), static_cast<std::size_t>(es.values.size())));
    const EigenDerivatives base = derivatives_at_diagonal(diag, k);

    // W + E = Q (D + Q^T E Q) Q^T, so every tensor mode transforms with Q.
    const Eigen::MatrixXd& q = es.vectors;
    EigenDerivatives out;
    out.k = k;
    out.convention = Convention::kIndependentEntries;
    out.d_lambda = contract_every_mode(base.d_lambda, q);
    out.d_tau = contract_every_mode(base.d_tau, q);
    out.d2_lambda = contract_every_mode(base.d2_lambda, q);
    out.d2_tau = contract_every_mode(base.d2_tau, q);
    return out;
}

EigenDerivatives fold_symmetric(const EigenDerivatives& d) {
    if (d.convention == Convention::kSymmetricFolded) return d;
    const int n = d.dim();
    EigenDerivatives f;
    f.k = d.k;
    f.convention = Convention::kSymmetricFolded;
    f.d_lambda = Tensor<2>(n);
    f.d_tau = Tensor<3>(n);
    f.d2_lambda = Tensor<4>(n);
    f.d2_tau = Tensor<5>(n);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            const auto pq = orientations(p, q);
            for (auto [a, b] : pq) {
                f.d_lambda(p, q) += d.d_lambda(a, b);
                for (int i = 0; i < n; ++i) f.d_tau(i, p, q) += d.d_tau(i, a, b);
            }
            for (int r = 0; r < n; ++r)
                for (int s = 0; s < n; ++s) {
                    const auto rs = orientations(r, s);
                    for (auto [a, b] : pq)
                        for (auto [c, e] : rs) {
                            f.d2_lambda(p, q, r, s) += d.d2_lambda(a, b, c, e);
                            for (int i = 0; i < n; ++i) f.d2_tau(i, p, q, r, s) += d.d2_tau(i, a, b, c, e);
                        }
                }
        }
    return f;
}

EigenDerivatives fd_eigen_derivatives(const SymmetricMatrix& w, int k, double step, Convention convention) {
    const int n = w.dim();
    if (k < 0 || k >= n) throw std::out_of_range("eigenvalue index out of range");
    if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");

    const EigenSystem base = eigen_decompose(w);
    const double sep = eigenvalue_separation(base.values, k);
    if (!(sep > gap_tolerance(max_abs(base.values)))) throw DegenerateEigenvalue(k, sep);
    if (!(sep > 10.0 * step)) throw StepTooLarge(step, sep);

    const Eigenpair base_pair{base.values(k), base.vectors.col(k)};

    // Perturbation directions, one per coordinate of the chosen convention.
    std::vector<std::pair<int, int>> coords;
    std::vector<Eigen::MatrixXd> dirs;
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            if (convention == Convention::kSymmetricFolded && q < p) continue;
            Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
            for (auto [a, b] : convention == Convention::kSymmetricFolded
                                   ? orientations(p, q)
                                   : std::vector<std::pair<int, int>>{{p, q}})
                e(a, b) = 1.0;
            coords.emplace_back(p, q);
            dirs.push_back(std::move(e));
        }

    auto eval = [&](const Eigen::MatrixXd& perturbation) {
        const Eigen::MatrixXd a = w.matrix() + perturbation;
        return convention == Convention::kSymmetricFolded ? symmetric_pair(a, k, base_pair.tau)
                                                          : continued_right_pair(a, base_pair);
    };

    // Writes `value` at every slot the coordinate represents.
    auto slots = [&](std::pair<int, int> c) {
        if (convention == Convention::kSymmetricFolded) return orientations(c.first, c.second);
        return std::vector<std::pair<int, int>>{c};
    };

    EigenDerivatives d;
    d.k = k;
    d.convention = convention;
    d.d_lambda = Tensor<2>(n);
    d.d_tau = Tensor<3>(n);
    d.d2_lambda = Tensor<4>(n);
    d.d2_tau = Tensor<5>(n);

    const double h = step;
    for (std::size_t a = 0; a < dirs.size(); ++a) {
        const Eigenpair plus = eval(h * dirs[a]);
        const Eigenpair minus = eval(-h * dirs[a]);
        const double dl = (plus.lambda - minus.lambda) / (2.0 * h);
        const Eigen::VectorXd dt = (plus.tau - minus.tau) / (2.0 * h);
        for (auto [p, q] : slots(coords[a])) {
            d.d_lambda(p, q) = dl;
            for (int i = 0; i < n; ++i) d.d_tau(i, p, q) = dt(i);
        }
    }

    const double inv = 1.0 / (4.0 * h * h);
    for (std::size_t a = 0; a < dirs.size(); ++a)
        for (std::size_t b = a; b < dirs.size(); ++b) {
            const Eigenpair pp = eval(h * dirs[a] + h * dirs[b]);
            const Eigenpair pm = eval(h * dirs[a] - h * dirs[b]);
            const Eigenpair mp = eval(-h * dirs[a] + h * dirs[b]);
            const Eigenpair mm = eval(-h * dirs[a] - h * dirs[b]);
            const double d2l = (pp.lambda - pm.lambda - mp.lambda + mm.lambda) * inv;
            const Eigen::VectorXd d2t = (pp.tau - pm.tau - mp.tau + mm.tau) * inv;
            for (auto [p, q] : slots(coords[a]))
                for (auto [r, s] : slots(coords[b])) {
                    d.d2_lambda(p, q, r, s) = d2l;
                    d.d2_lambda(r, s, p, q) = d2l;
                    for (int i = 0; i < n; ++i) {
                        d.d2_tau(i, p, q, r, s) = d2t(i);
                        d.d2_tau(i, r, s, p, q) = d2t(i);
                    }
                }
        }
    return d;
}

TaylorPrediction taylor_predict(const EigenDerivatives& d, double lambda0, const Eigen::VectorXd& tau0,
                                const Eigen::MatrixXd& direction, double eps) {
    if (d.convention != Convention::kIndependentEntries)
        throw std::invalid_argument("Taylor prediction expects independent-entry derivatives");
    const int n = d.dim();
    TaylorPrediction out;
    out.lambda = lambda0;
    out.tau = tau0;
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            const double epq = direction(p, q);
            if (epq == 0.0) continue;
            out.lambda += eps * d.d_lambda(p, q) * epq;
            for (int i = 0; i < n; ++i) out.tau(i) += eps * d.d_tau(i, p, q) * epq;
            for (int r = 0; r < n; ++r)
                for (int s = 0; s < n; ++s) {
                    const double w2 = 0.5 * eps * eps * epq * direction(r, s);
                    if (w2 == 0.0) continue;
                    out.lambda += w2 * d.d2_lambda(p, q, r, s);
                    for (int i = 0; i < n; ++i) out.tau(i) += w2 * d.d2_tau(i, p, q, r, s);
                }
        }
    return out;
}

}  // namespace ma2::perturb
