#pragma once

// Independent reference implementations used as test oracles. They share no
// code with the library beyond the Matrix typedefs.

#include "enscope/common.hpp"
#include "enscope/topopt.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace testing {

using enscope::Index;
using enscope::Matrix;
using enscope::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(gen);
  return m;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("enscope_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

/// NNLS by enumerating every support set: on each support solve the
/// unconstrained problem with a full SVD, keep feasible points, take the best.
inline Vector nnls_by_supports(const Matrix& A, const Vector& b) {
  const Index m = A.cols();
  Vector best = Vector::Zero(m);
  double best_obj = b.squaredNorm();
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    std::vector<Index> cols;
    for (Index j = 0; j < m; ++j)
      if (mask & (1u << j)) cols.push_back(j);
    Matrix sub(A.rows(), static_cast<Index>(cols.size()));
    for (std::size_t q = 0; q < cols.size(); ++q) sub.col(static_cast<Index>(q)) = A.col(cols[q]);
    Eigen::JacobiSVD<Matrix> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector z = svd.solve(b);
    if ((z.array() < 0.0).any()) continue;
    Vector w = Vector::Zero(m);
    for (std::size_t q = 0; q < cols.size(); ++q) w(cols[q]) = z(static_cast<Index>(q));
    const double obj = (b - A * w).squaredNorm();
    if (obj < best_obj - 1e-14 * std::max(1.0, best_obj)) {
      best_obj = obj;
      best = w;
    }
  }
  return best;
}

/// Self-reconstruction error of X from columns `idx`: per-column NNLS (NN)
/// or SVD least squares (PN).
inline double subset_error(const Matrix& X, const std::vector<Index>& idx, bool nonneg) {
  Matrix D(X.rows(), static_cast<Index>(idx.size()));
  for (std::size_t q = 0; q < idx.size(); ++q) D.col(static_cast<Index>(q)) = X.col(idx[q]);
  double err = 0.0;
  Eigen::JacobiSVD<Matrix> svd(D, Eigen::ComputeThinU | Eigen::ComputeThinV);
  for (Index i = 0; i < X.cols(); ++i) {
    const Vector w = nonneg ? nnls_by_supports(D, X.col(i)) : Vector(svd.solve(Vector(X.col(i))));
    err += (X.col(i) - D * w).squaredNorm();
  }
  return err;
}

/// Minimum over all m-subsets by recursive enumeration.
inline double best_subset_error(const Matrix& X, Index m, bool nonneg) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<Index> idx;
  auto rec = [&](auto&& self, Index start) -> void {
    if (static_cast<Index>(idx.size()) == m) {
      best = std::min(best, subset_error(X, idx, nonneg));
      return;
    }
    for (Index j = start; j < X.cols(); ++j) {
      idx.push_back(j);
      self(self, j + 1);
      idx.pop_back();
    }
  };
  rec(rec, 0);
  return best;
}

/// sum_{i>=k} sigma_i^2 from a full SVD.
inline double svd_tail(const Matrix& X, Index k) {
  const Vector s = Eigen::JacobiSVD<Matrix>(X).singularValues();
  double t = 0.0;
  for (Index i = k; i < s.size(); ++i) t += s(i) * s(i);
  return t;
}

/// Features hit by any sample of `subset`, counted by building the union of
/// per-sample feature sets.
inline Index union_coverage(const std::vector<std::vector<int>>& feature_by_sample,
                            const std::vector<Index>& subset) {
  std::set<std::size_t> seen;
  for (Index s : subset) {
    const auto& row = feature_by_sample[static_cast<std::size_t>(s)];
    for (std::size_t f = 0; f < row.size(); ++f)
      if (row[f]) seen.insert(f);
  }
  return static_cast<Index>(seen.size());
}

/// Central difference of compliance in element e (row-major) with step h.
/// c(x+h) - c(x-h) = -(E(x_e+h) - E(x_e-h)) u+_e' k0 u-_e holds exactly, so
/// the difference is formed from the two perturbed solves without subtracting
/// two nearly equal compliances.
inline double compliance_central_difference(enscope::FemModel& model, const enscope::TopoProblem& p,
                                            const Vector& x, Index e, double h) {
  Vector xp = x, xm = x;
  xp(e) += h;
  xm(e) -= h;
  const Vector up = model.solve(xp), um = model.solve(xm);
  const auto dofs = enscope::element_dofs(p, e / p.nelx, e % p.nelx);
  Vector ep(8), em(8);
  for (int a = 0; a < 8; ++a) {
    ep(a) = up(dofs[static_cast<std::size_t>(a)]);
    em(a) = um(dofs[static_cast<std::size_t>(a)]);
  }
  auto young = [&](double v) { return p.emin + std::pow(v, p.penal) * (p.e0 - p.emin); };
  const double dE = young(xp(e)) - young(xm(e));
  return -dE * ep.dot(enscope::element_stiffness(p.nu) * em) / (2 * h);
}

}  // namespace testing
