#pragma once

#include "enscope/common.hpp"

#include <optional>
#include <vector>

namespace enscope {

struct NnlsSolution {
  Vector weights;
  double residual_norm = 0.0;
  std::vector<Index> active_set;  // indices with strictly positive weight, ascending
  int iterations = 0;
};

/// Thrown when the active-set loop hits its pass cap; carries the best iterate.
class NnlsConvergenceError : public Error {
 public:
  NnlsConvergenceError(const std::string& msg, NnlsSolution best)
      : Error(msg), best_(std::move(best)) {}
  const NnlsSolution& best() const { return best_; }

 private:
  NnlsSolution best_;
};

/// min ||b - A w||^2 subject to w >= 0 (Lawson-Hanson active set).
/// `tol` defaults to 1e-10 * ||A^T b||_inf.
NnlsSolution nnls(const Matrix& A, const Vector& b, std::optional<double> tol = std::nullopt);

/// Same problem given the normal-equation data G = A^T A and c = A^T b.
/// residual_norm is left at 0; callers with A at hand compute it directly.
NnlsSolution nnls_normal(const Matrix& gram, const Vector& atb,
                         std::optional<double> tol = std::nullopt);

/// Largest KKT violation of w for min_{w>=0} ||b - A w||^2: max over
/// |g_j| on positive entries, max(g_j, 0) on zero entries, and max(-w_j, 0),
/// where g = A^T (b - A w).
double nnls_kkt_violation(const Matrix& A, const Vector& b, const Vector& w);

/// Minimum-norm least-squares solution of A w ~ b.
Vector lstsq(const Matrix& A, const Vector& b);

/// Column-wise minimum-norm least squares for every column of B.
Matrix lstsq(const Matrix& A, const Matrix& B);

struct SvdTruncation {
  Index rank = 0;
  Matrix left;                 // d x k, orthonormal columns
  Vector singular_values;      // k, descending
  Matrix right;                // n x k, orthonormal columns
  std::optional<Vector> mean;  // set for centered PCA
  /// Squared Frobenius norm of the discarded tail, sum_{i>k} sigma_i^2.
  double tail_energy = 0.0;

  /// mean + U S V^T.
  Matrix reconstruct() const;
};

/// Best rank-k (affine if `center`) approximation of X.
SvdTruncation truncated_svd(const Matrix& X, Index k, bool center);

/// Eckart-Young floor: sum_{i>k} sigma_i(X)^2 for the uncentered X.
double truncation_error(const Matrix& X, Index k);

/// U^T (X - mean): k x n PCA coefficients.
Matrix pca_weights(const SvdTruncation& t, const Matrix& X);

}  // namespace enscope
