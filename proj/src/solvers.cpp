#include "enscope/solvers.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace enscope {

namespace {

constexpr Index kGramSideLimit = 2000;

Vector solve_passive(const Matrix& gram, const Vector& atb, const std::vector<Index>& passive) {
  const auto p = static_cast<Index>(passive.size());
  Matrix g(p, p);
  Vector c(p);
  for (Index a = 0; a < p; ++a) {
    c(a) = atb(passive[a]);
    for (Index b = 0; b < p; ++b) g(a, b) = gram(passive[a], passive[b]);
  }
  return g.completeOrthogonalDecomposition().solve(c);
}

std::vector<Index> members(const std::vector<bool>& mask) {
  std::vector<Index> out;
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) out.push_back(static_cast<Index>(j));
  return out;
}

// Orthonormalizes the columns of Q in place (two modified Gram-Schmidt
// sweeps); columns flagged in `replace` (or collapsing to zero) are rebuilt
// from unit vectors orthogonal to everything before them.
void orthonormalize(Matrix& Q, std::vector<bool> replace) {
  const Index rows = Q.rows();
  Index next_unit = 0;
  for (Index j = 0; j < Q.cols(); ++j) {
    for (int attempt = 0;; ++attempt) {
      if (replace[static_cast<std::size_t>(j)]) {
        if (next_unit >= rows) throw Error("orthonormal completion ran out of unit vectors");
        Q.col(j).setZero();
        Q(next_unit++, j) = 1.0;
      }
      const double before = Q.col(j).norm();
      for (int sweep = 0; sweep < 2; ++sweep)
        for (Index i = 0; i < j; ++i) Q.col(j) -= Q.col(i).dot(Q.col(j)) * Q.col(i);
      const double after = Q.col(j).norm();
      if (before > 0.0 && after > 1e-8 * before) {
        Q.col(j) /= after;
        break;
      }
      replace[static_cast<std::size_t>(j)] = true;
      if (attempt > rows) throw Error("orthonormal completion failed");
    }
  }
}

}  // namespace

NnlsSolution nnls_normal(const Matrix& gram, const Vector& atb, std::optional<double> tol_opt) {
  const Index m = atb.size();
  require(m >= 1, "nnls: need at least one column");
  require(gram.rows() == m && gram.cols() == m, "nnls: gram/atb dimension mismatch");
  if (!gram.allFinite() || !atb.allFinite()) throw InvalidArgument("nnls: non-finite input");
  const double tol = tol_opt ? *tol_opt : 1e-10 * atb.cwiseAbs().maxCoeff();
  require(tol >= 0.0, "nnls: tolerance must be nonnegative");

  Vector x = Vector::Zero(m);
  std::vector<bool> passive(static_cast<std::size_t>(m), false);
  std::vector<bool> rejected(static_cast<std::size_t>(m), false);
  Vector grad = atb;
  const int max_passes = static_cast<int>(3 * m);
  int passes = 0;
  int solves = 0;

  auto package = [&] {
    NnlsSolution s;
    s.weights = x;
    s.iterations = solves;
    for (Index j = 0; j < m; ++j)
      if (x(j) > 0.0) s.active_set.push_back(j);
    return s;
  };

  for (;;) {
    Index t = -1;
    double best = tol;
    for (Index j = 0; j < m; ++j) {
      if (passive[static_cast<std::size_t>(j)] || rejected[static_cast<std::size_t>(j)]) continue;
      if (grad(j) > best) {
        best = grad(j);
        t = j;
      }
    }
    if (t < 0) break;
    if (passes >= max_passes)
      throw NnlsConvergenceError("nnls: no convergence within " + std::to_string(max_passes) +
                                     " passes",
                                 package());
    ++passes;
    passive[static_cast<std::size_t>(t)] = true;

    bool first = true;
    bool accepted = true;
    for (;;) {
      const auto p = members(passive);
      const Vector z = solve_passive(gram, atb, p);
      ++solves;
      if (first) {
        first = false;
        const auto pos = std::find(p.begin(), p.end(), t) - p.begin();
        if (z(pos) <= 0.0) {
          // Rounding noise made t look profitable; skip it until x moves.
          passive[static_cast<std::size_t>(t)] = false;
          rejected[static_cast<std::size_t>(t)] = true;
          accepted = false;
          break;
        }
      }
      if ((z.array() > 0.0).all()) {
        for (std::size_t a = 0; a < p.size(); ++a) x(p[a]) = z(static_cast<Index>(a));
        break;
      }
      double alpha = std::numeric_limits<double>::infinity();
      Index blocking = -1;
      for (std::size_t a = 0; a < p.size(); ++a) {
        const double za = z(static_cast<Index>(a));
        if (za > 0.0) continue;
        const double xa = x(p[a]);
        const double step = xa / (xa - za);
        if (step < alpha) {
          alpha = step;
          blocking = p[a];
        }
      }
      for (std::size_t a = 0; a < p.size(); ++a) x(p[a]) += alpha * (z(static_cast<Index>(a)) - x(p[a]));
      x(blocking) = 0.0;
      for (Index j : p) {
        if (x(j) <= 0.0) {
          x(j) = 0.0;
          passive[static_cast<std::size_t>(j)] = false;
        }
      }
    }
    if (accepted) std::fill(rejected.begin(), rejected.end(), false);
    grad = atb - gram * x;
  }
  return package();
}

NnlsSolution nnls(const Matrix& A, const Vector& b, std::optional<double> tol) {
  require(A.rows() == b.size(), "nnls: A rows != b length");
  if (!A.allFinite() || !b.allFinite()) throw InvalidArgument("nnls: non-finite input");
  const Matrix gram = A.transpose() * A;
  const Vector atb = A.transpose() * b;
  NnlsSolution s = nnls_normal(gram, atb, tol);
  s.residual_norm = (b - A * s.weights).norm();
  return s;
}

double nnls_kkt_violation(const Matrix& A, const Vector& b, const Vector& w) {
  const Vector g = A.transpose() * (b - A * w);
  double worst = 0.0;
  for (Index j = 0; j < w.size(); ++j) {
    worst = std::max(worst, std::max(-w(j), 0.0));
    worst = std::max(worst, w(j) > 0.0 ? std::abs(g(j)) : std::max(g(j), 0.0));
  }
  return worst;
}

Vector lstsq(const Matrix& A, const Vector& b) {
  require(A.rows() == b.size(), "lstsq: A rows != b length");
  if (!A.allFinite() || !b.allFinite()) throw InvalidArgument("lstsq: non-finite input");
  return A.completeOrthogonalDecomposition().solve(b);
}

Matrix lstsq(const Matrix& A, const Matrix& B) {
  require(A.rows() == B.rows(), "lstsq: A rows != B rows");
  if (!A.allFinite() || !B.allFinite()) throw InvalidArgument("lstsq: non-finite input");
  return A.completeOrthogonalDecomposition().solve(B);
}

Matrix SvdTruncation::reconstruct() const {
  Matrix out = left * singular_values.asDiagonal() * right.transpose();
  if (mean) out.colwise() += *mean;
  return out;
}

SvdTruncation truncated_svd(const Matrix& X, Index k, bool center) {
  const Index d = X.rows(), n = X.cols();
  require(k >= 1 && k <= std::min(d, n), "truncated_svd: rank k out of range");
  if (!X.allFinite()) throw InvalidArgument("truncated_svd: non-finite input");

  SvdTruncation t;
  t.rank = k;
  Matrix Y = X;
  if (center) {
    t.mean = X.rowwise().mean();
    Y.colwise() -= *t.mean;
  }

  const Index small = std::min(d, n);
  Vector sigma_all(small);
  Matrix small_vecs;  // singular vectors on the smaller side, descending order
  if (small <= kGramSideLimit) {
    const Matrix gram = (n <= d) ? Matrix(Y.transpose() * Y) : Matrix(Y * Y.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    if (eig.info() != Eigen::Success) throw Error("truncated_svd: eigendecomposition failed");
    small_vecs = eig.eigenvectors().rowwise().reverse();
    const Vector lambda = eig.eigenvalues().reverse();
    for (Index i = 0; i < small; ++i) sigma_all(i) = std::sqrt(std::max(lambda(i), 0.0));
  } else {
    Eigen::BDCSVD<Matrix> svd(Y, Eigen::ComputeThinU | Eigen::ComputeThinV);
    sigma_all = svd.singularValues();
    small_vecs = (n <= d) ? svd.matrixV() : svd.matrixU();
  }

  t.singular_values = sigma_all.head(k);
  double tail = 0.0;
  for (Index i = k; i < small; ++i) tail += sigma_all(i) * sigma_all(i);
  t.tail_energy = tail;

  const Matrix kept = small_vecs.leftCols(k);
  Matrix other = (n <= d) ? Matrix(Y * kept) : Matrix(Y.transpose() * kept);
  // squaring in the Gram path leaves sqrt(eps)-sized noise on zero singular values
  const double rel = static_cast<double>(std::max(d, n)) * std::numeric_limits<double>::epsilon();
  const double floor = (small <= kGramSideLimit ? std::sqrt(rel) : rel) * sigma_all(0);
  std::vector<bool> replace(static_cast<std::size_t>(k), false);
  for (Index i = 0; i < k; ++i) {
    if (t.singular_values(i) <= floor) {
      t.singular_values(i) = 0.0;
      replace[static_cast<std::size_t>(i)] = true;
    } else {
      other.col(i) /= t.singular_values(i);
    }
  }
  orthonormalize(other, replace);

  if (n <= d) {
    t.right = kept;
    t.left = std::move(other);
  } else {
    t.left = kept;
    t.right = std::move(other);
  }
  return t;
}

double truncation_error(const Matrix& X, Index k) {
  const Index small = std::min(X.rows(), X.cols());
  require(k >= 0 && k <= small, "truncation_error: rank out of range");
  if (k == small) return 0.0;
  if (k == 0) return X.squaredNorm();
  return truncated_svd(X, k, false).tail_energy;
}

Matrix pca_weights(const SvdTruncation& t, const Matrix& X) {
  require(X.rows() == t.left.rows(), "pca_weights: dimension mismatch");
  if (t.mean) return t.left.transpose() * (X.colwise() - *t.mean);
  return t.left.transpose() * X;
}

}  // namespace enscope
