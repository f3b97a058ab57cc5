#pragma once

// Perturbation calculus for eigenpairs of real symmetric matrices.
//
// All indices are zero-based. Derivative tensors are taken with respect to
// *independent* matrix entries W_pq: perturbing W_pq alone (leaving W_qp
// untouched) generally produces a non-symmetric matrix, and tau^k is then the
// unit-norm right eigenvector continued from the base point. This is the
// convention under which the closed-form kernels below hold entry by entry.
// Callers that only ever move symmetric matrices should contract with a
// symmetric direction, or call `fold_symmetric` to obtain derivatives with
// respect to the symmetric coordinate that moves W_pq and W_qp together.

#include <Eigen/Dense>

#include <initializer_list>
#include <span>

#include "ma2/tensor.hpp"

namespace ma2::perturb {

/// Dense n x n real symmetric matrix; symmetry is checked exactly on
/// construction.
class SymmetricMatrix {
public:
    explicit SymmetricMatrix(Eigen::MatrixXd entries);
    SymmetricMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static SymmetricMatrix diagonal(std::span<const double> diag);
    static SymmetricMatrix identity(int n);

    int dim() const noexcept { return static_cast<int>(m_.rows()); }
    double operator()(int i, int j) const { return m_(i, j); }
    const Eigen::MatrixXd& matrix() const noexcept { return m_; }

    bool is_diagonal() const;

private:
    Eigen::MatrixXd m_;
};

/// Eigenvalues in descending order with matching unit eigenvectors stored as
/// columns. Each vector is signed so that its largest-magnitude component is
/// positive (first such component on ties).
struct EigenSystem {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    double gap = 0.0;  // smallest difference between adjacent eigenvalues

    Eigen::VectorXd vector(int k) const { return vectors.col(k); }
};

/// Tolerance below which two eigenvalues are treated as equal.
double gap_tolerance(double lambda_max);

/// Distance from eigenvalue k to the nearest other eigenvalue.
double eigenvalue_separation(const Eigen::VectorXd& values, int k);

/// Applies the sign convention of EigenSystem to a single vector.
void normalize_sign(Eigen::Ref<Eigen::VectorXd> v);

/// Closed-form eigenpairs of a 2x2 symmetric matrix.
///
/// The top eigenvector is built from (lambda_1 - u22, u12), or from
/// (u12, lambda_1 - u11) when that candidate is longer; the first is the
/// classical (-xi_1, -xi_2) construction. A repeated eigenvalue yields
/// gap = 0 and the canonical basis.
EigenSystem eigen2x2_closed_form(const SymmetricMatrix& w);

/// Same as above on raw entries; avoids building a matrix in hot loops.
EigenSystem eigen2x2_closed_form(double u11, double u12, double u22);

/// General symmetric eigendecomposition. Throws EigenNonConvergence.
EigenSystem eigen_decompose(const SymmetricMatrix& w);

enum class Convention {
    kIndependentEntries,  // d/dW_pq with W_pq and W_qp independent
    kSymmetricFolded,     // d/dt along W + t(E_pq + E_qp), p != q; W + tE_pp on the diagonal
};

struct EigenDerivatives {
    int k = 0;
    Convention convention = Convention::kIndependentEntries;
    Tensor<2> d_lambda;   // (p, q)
    Tensor<3> d_tau;      // (i, p, q): d tau^k_i / d W_pq
    Tensor<4> d2_lambda;  // (p, q, r, s)
    Tensor<5> d2_tau;     // (i, p, q, r, s)

    int dim() const noexcept { return d_lambda.extent(); }
};

// Kernels at a diagonal matrix. Here lambda_i = W_ii and tau^i = e_i, so k is
// the diagonal position of the differentiated eigenvalue (no sorting).
// Each throws std::invalid_argument for a non-diagonal W and
// DegenerateEigenvalue when W_kk is not separated from the other diagonal
// entries by more than gap_tolerance.
Tensor<2> dlambda_at_diagonal(const SymmetricMatrix& w, int k);
Tensor<3> dtau_at_diagonal(const SymmetricMatrix& w, int k);
Tensor<4> d2lambda_at_diagonal(const SymmetricMatrix& w, int k);
Tensor<5> d2tau_at_diagonal(const SymmetricMatrix& w, int k);

/// All four diagonal kernels bundled.
EigenDerivatives derivatives_at_diagonal(const SymmetricMatrix& w, int k);

/// Derivatives at a general symmetric W for the k-th largest eigenvalue,
/// obtained from the diagonal kernels by orthogonal conjugation
/// W = Q diag(lambda) Q^T. Independent-entry convention.
EigenDerivatives conjugate_to_general(const SymmetricMatrix& w, int k);

/// Sums the independent-entry tensors over both orientations of every
/// off-diagonal index pair. The result is symmetric in (p, q) and (r, s).
EigenDerivatives fold_symmetric(const EigenDerivatives& d);

/// Central-difference oracle for the k-th largest eigenpair (index into the
/// descending order of eigen_decompose). kSymmetricFolded differences
/// eigen_decompose along symmetric directions; kIndependentEntries perturbs
/// single entries and follows the right eigenvector by Newton continuation.
/// Eigenvector signs are tracked by overlap with the base vector.
///
/// Throws DegenerateEigenvalue when eigenvalue k is not simple, and
/// StepTooLarge when its separation is not above 10 * step.
EigenDerivatives fd_eigen_derivatives(const SymmetricMatrix& w, int k, double step,
                                      Convention convention = Convention::kSymmetricFolded);

/// max |a - b| / max(1, max |a|), the normalisation used for every
/// analytic-versus-oracle comparison.
template <std::size_t Rank>
double relative_error(const Tensor<Rank>& analytic, const Tensor<Rank>& oracle) {
    double diff = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        diff = std::max(diff, std::abs(analytic.data()[i] - oracle.data()[i]));
    return diff / std::max(1.0, analytic.max_abs());
}

/// Second-order Taylor prediction of (lambda_k, tau^k) at W + eps * E from
/// derivatives in the independent-entry convention. E may be any n x n matrix.
struct TaylorPrediction {
    double lambda = 0.0;
    Eigen::VectorXd tau;
};
TaylorPrediction taylor_predict(const EigenDerivatives& d, double lambda0,
                                const Eigen::VectorXd& tau0, const Eigen::MatrixXd& direction,
                                double eps);

}  // namespace ma2::perturb
