#pragma once

#include "enscope/common.hpp"
#include "enscope/ensemble.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace enscope {

/// 2D cantilever, clamped on the left edge, unit point load on the right edge.
///
/// Elements are unit squares indexed row-major (row 0 = top). Nodes sit on an
/// (nely+1) x (nelx+1) lattice, node id = row * (nelx+1) + col, with dofs
/// (2 id, 2 id + 1) = (u_x, u_y) and y pointing up.
struct TopoProblem {
  Index nely = 40;
  Index nelx = 80;
  double position = 0.0;     // load offset in elements from the right-edge midpoint, + = up
  double angle = 0.0;        // force = (cos a, -sin a)
  double filter_size = 1.5;  // hat-filter radius in elements
  double volfrac = 0.5;
  double penal = 3.0;
  double e0 = 1.0;
  double emin = 1e-9;
  double nu = 0.3;
  double move = 0.2;
  int max_iters = 200;
  double change_tol = 0.01;

  Grid grid() const { return {nely, nelx}; }
  Index elements() const { return nely * nelx; }
  Index dofs() const { return 2 * (nely + 1) * (nelx + 1); }
  /// Right-edge node row receiving the load: round(nely/2 - position).
  Index load_row() const;
  void validate() const;
};

/// 8x8 stiffness of a unit-square bilinear plane-stress element with E = 1,
/// nodes ordered counterclockwise from the lower-left corner.
Matrix element_stiffness(double nu);

/// Global dofs of element (row, col) in element_stiffness node order.
std::array<Index, 8> element_dofs(const TopoProblem& p, Index row, Index col);

/// Assembled-stiffness solver with the sparsity pattern and symbolic
/// factorization cached across density updates. Not thread-safe; use one
/// model per optimization run.
class FemModel {
 public:
  explicit FemModel(const TopoProblem& problem);
  ~FemModel();
  FemModel(FemModel&&) noexcept;
  FemModel& operator=(FemModel&&) noexcept;

  /// Full displacement vector (clamped dofs zero) for physical densities in
  /// row-major element order, under load `f` (default: the problem's load).
  Vector solve(const Vector& density);
  Vector solve(const Vector& density, const Vector& f);

  const Vector& load() const { return load_; }
  const Matrix& ke() const { return ke_; }
  const TopoProblem& problem() const { return problem_; }
  /// Assembled full stiffness (clamped rows/cols included) for checks.
  Eigen::SparseMatrix<double> full_stiffness(const Vector& density) const;
  std::vector<Index> fixed_dofs() const;

 private:
  struct Impl;
  TopoProblem problem_;
  Matrix ke_;
  Vector load_;
  std::unique_ptr<Impl> impl_;
};

/// Nodal displacements for an nely x nelx density field.
Vector solve_fem(const Matrix& density, const TopoProblem& problem);

struct ComplianceSensitivity {
  double compliance = 0.0;
  Matrix dc;  // d compliance / d physical density, nely x nelx
};

ComplianceSensitivity compliance_sensitivity(const Matrix& density, const Vector& displacement,
                                             const TopoProblem& problem);

/// Linear hat-kernel filter, w_ej = max(0, radius - |c_e - c_j|), row-normalized.
class DensityFilter {
 public:
  DensityFilter(Grid grid, double radius);

  Vector apply(const Vector& field) const;
  /// Transpose of apply: maps d/d(filtered) to d/d(design).
  Vector chain(const Vector& grad) const;

  const Eigen::SparseMatrix<double, Eigen::RowMajor>& weights() const { return h_; }
  const Vector& row_sums() const { return hs_; }

 private:
  Grid grid_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> h_;
  Vector hs_;
};

Matrix density_filter(const Matrix& field, double radius);

/// Optimality-criteria step on design variables `x` (row-major vectors).
/// lambda is bisected on [1e-10, 1e10] until the mean of the filtered update
/// equals volfrac within 1e-6; throws if it cannot.
Vector oc_update(const Vector& x, const Vector& dc, const Vector& dv, const DensityFilter& filter,
                 double volfrac, double move);

/// Field form: dc is d compliance / d design variable and dv comes from the
/// filter chain of the problem's filter.
Matrix oc_update(const Matrix& density, const Matrix& dc, const TopoProblem& problem);

struct TopoInit {
  bool random = false;
  std::uint64_t seed = 0;

  static TopoInit uniform() { return {}; }
  static TopoInit random_with(std::uint64_t s) { return {true, s}; }
};

/// i.i.d. uniform [0,1] field rescaled (with clipping) to mean volfrac.
Vector random_initial_field(Index elements, double volfrac, std::uint64_t seed);

struct TopoResult {
  Matrix density;  // physical (filtered) densities, nely x nelx
  double compliance = 0.0;
  double max_stress = 0.0;
  double avg_stress = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> volume_history;      // mean physical density after each OC step
  std::vector<double> compliance_history;  // compliance before each OC step
};

struct ElementStress {
  Matrix von_mises;  // nely x nelx, scaled by density^penal
  double max_stress = 0.0;
  double avg_stress = 0.0;
};

/// Plane-stress von Mises at element centers. max over elements with density
/// >= 0.1, avg weighted by density.
ElementStress element_stress(const Matrix& density, const Vector& displacement,
                             const TopoProblem& problem);

TopoResult optimize_topology(const TopoProblem& problem, const TopoInit& init);

struct SamplingSpec {
  enum class Mode { D1, D2 };
  Mode mode = Mode::D1;
  Index n = 1000;
  std::uint64_t seed = 0;
  Index nely = 40;
  Index nelx = 80;
  double volfrac = 0.5;
  double fixed_position = 0.0;
  double fixed_angle = 0.7853981633974483;
  double fixed_filter_size = 1.1;
  int max_iters = 200;

  void validate() const;
  static SamplingSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Problem for sample `id`: D1 draws (p, theta, rho) uniformly from a stream
/// seeded by (seed, id); D2 uses the fixed parameters.
TopoProblem sample_problem(const SamplingSpec& spec, Index id);
TopoInit sample_init(const SamplingSpec& spec, Index id);

using ProgressFn = std::function<void(Index id, const TopoResult& result)>;

Ensemble generate_ensemble(const SamplingSpec& spec, const ProgressFn& progress = {});

}  // namespace enscope
