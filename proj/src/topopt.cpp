#include "enscope/topopt.hpp"

#include "enscope/parallel.hpp"
#include "enscope/rng.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>

namespace enscope {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kStressDensityFloor = 0.1;

Matrix plane_stress_matrix(double e, double nu) {
  Matrix c(3, 3);
  c << 1.0, nu, 0.0, nu, 1.0, 0.0, 0.0, 0.0, (1.0 - nu) / 2.0;
  return c * (e / (1.0 - nu * nu));
}

// Strain-displacement matrix of the unit square at natural coordinates (xi, eta).
Matrix strain_displacement(double xi, double eta) {
  static constexpr double kXi[4] = {-1.0, 1.0, 1.0, -1.0};
  static constexpr double kEta[4] = {-1.0, -1.0, 1.0, 1.0};
  Matrix b = Matrix::Zero(3, 8);
  for (int a = 0; a < 4; ++a) {
    // d/dx = 2 d/dxi on a unit element.
    const double dx = 2.0 * kXi[a] * (1.0 + eta * kEta[a]) / 4.0;
    const double dy = 2.0 * kEta[a] * (1.0 + xi * kXi[a]) / 4.0;
    b(0, 2 * a) = dx;
    b(1, 2 * a + 1) = dy;
    b(2, 2 * a) = dy;
    b(2, 2 * a + 1) = dx;
  }
  return b;
}

double simp_modulus(const TopoProblem& p, double x) {
  return p.emin + std::pow(x, p.penal) * (p.e0 - p.emin);
}

Vector element_vector(const Vector& u, const std::array<Index, 8>& dofs) {
  Vector ue(8);
  for (int a = 0; a < 8; ++a) ue(a) = u(dofs[static_cast<std::size_t>(a)]);
  return ue;
}

}  // namespace

Index TopoProblem::load_row() const {
  const auto row = static_cast<Index>(std::lround(static_cast<double>(nely) / 2.0 - position));
  return std::clamp<Index>(row, 0, nely);
}

void TopoProblem::validate() const {
  require(nely >= 1 && nelx >= 1, "grid must have at least one element");
  require(std::abs(position) <= static_cast<double>(nely) / 2.0,
          "position must lie within half the grid height of the midpoint");
  require(angle >= 0.0 && angle <= kPi, "angle must lie in [0, pi]");
  require(filter_size >= 1.0, "filter size must be at least 1");
  require(volfrac > 0.0 && volfrac < 1.0, "volfrac must lie in (0,1)");
  require(penal >= 1.0, "penal must be >= 1");
  require(emin > 0.0 && e0 > emin, "need 0 < emin < e0");
  require(nu > -1.0 && nu < 0.5, "Poisson ratio out of range");
  require(move > 0.0 && move <= 1.0, "move limit must lie in (0,1]");
  require(max_iters >= 1, "max_iters must be positive");
}

Matrix element_stiffness(double nu) {
  const Matrix c = plane_stress_matrix(1.0, nu);
  const double g = 1.0 / std::sqrt(3.0);
  Matrix ke = Matrix::Zero(8, 8);
  for (double xi : {-g, g})
    for (double eta : {-g, g}) {
      const Matrix b = strain_displacement(xi, eta);
      ke += b.transpose() * c * b * 0.25;  // det J of the unit square
    }
  return ke;
}

std::array<Index, 8> element_dofs(const TopoProblem& p, Index row, Index col) {
  const Index stride = p.nelx + 1;
  const Index ll = (row + 1) * stride + col;
  const Index lr = ll + 1;
  const Index ur = row * stride + col + 1;
  const Index ul = row * stride + col;
  return {2 * ll, 2 * ll + 1, 2 * lr, 2 * lr + 1, 2 * ur, 2 * ur + 1, 2 * ul, 2 * ul + 1};
}

struct FemModel::Impl {
  std::vector<Index> reduced;                     // dof -> free index or -1
  std::vector<std::array<Index, 8>> elem_dofs;    // per element
  std::vector<std::ptrdiff_t> value_pos;          // 64 per element, -1 for fixed
  Eigen::SparseMatrix<double> k;                  // free-dof stiffness
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower> llt;
  Index free_count = 0;
};

FemModel::FemModel(const TopoProblem& problem)
    : problem_(problem), ke_(element_stiffness(problem.nu)), impl_(std::make_unique<Impl>()) {
  problem_.validate();
  const TopoProblem& p = problem_;
  auto& im = *impl_;

  im.reduced.assign(static_cast<std::size_t>(p.dofs()), -1);
  for (Index row = 0; row <= p.nely; ++row)
    for (Index col = 1; col <= p.nelx; ++col) {
      const Index node = row * (p.nelx + 1) + col;
      im.reduced[static_cast<std::size_t>(2 * node)] = 0;
      im.reduced[static_cast<std::size_t>(2 * node + 1)] = 0;
    }
  for (auto& r : im.reduced)
    if (r == 0) r = im.free_count++;
    else r = -1;

  std::vector<Eigen::Triplet<double>> pattern;
  for (Index row = 0; row < p.nely; ++row)
    for (Index col = 0; col < p.nelx; ++col) {
      const auto dofs = element_dofs(p, row, col);
      im.elem_dofs.push_back(dofs);
      for (Index a : dofs)
        for (Index b : dofs) {
          const Index ra = im.reduced[static_cast<std::size_t>(a)];
          const Index rb = im.reduced[static_cast<std::size_t>(b)];
          if (ra >= 0 && rb >= 0 && ra >= rb) pattern.emplace_back(ra, rb, 0.0);
        }
    }
  im.k.resize(im.free_count, im.free_count);
  im.k.setFromTriplets(pattern.begin(), pattern.end());
  im.k.makeCompressed();

  const double* base = im.k.valuePtr();
  im.value_pos.reserve(im.elem_dofs.size() * 64);
  for (const auto& dofs : im.elem_dofs)
    for (Index a : dofs)
      for (Index b : dofs) {
        const Index ra = im.reduced[static_cast<std::size_t>(a)];
        const Index rb = im.reduced[static_cast<std::size_t>(b)];
        if (ra >= 0 && rb >= 0 && ra >= rb)
          im.value_pos.push_back(&im.k.coeffRef(ra, rb) - base);
        else
          im.value_pos.push_back(-1);
      }
  im.llt.analyzePattern(im.k);

  load_ = Vector::Zero(p.dofs());
  const Index node = p.load_row() * (p.nelx + 1) + p.nelx;
  load_(2 * node) = std::cos(p.angle);
  load_(2 * node + 1) = -std::sin(p.angle);
}

FemModel::~FemModel() = default;
FemModel::FemModel(FemModel&&) noexcept = default;
FemModel& FemModel::operator=(FemModel&&) noexcept = default;

Vector FemModel::solve(const Vector& density) { return solve(density, load_); }

Vector FemModel::solve(const Vector& density, const Vector& f) {
  auto& im = *impl_;
  require(density.size() == problem_.elements(), "solve: density size mismatch");
  require(f.size() == problem_.dofs(), "solve: load size mismatch");
  if ((density.array() < 0.0).any() || (density.array() > 1.0).any())
    throw InvalidArgument("solve: densities must lie in [0,1]");

  double* values = im.k.valuePtr();
  std::fill(values, values + im.k.nonZeros(), 0.0);
  for (std::size_t e = 0; e < im.elem_dofs.size(); ++e) {
    const double modulus = simp_modulus(problem_, density(static_cast<Index>(e)));
    const std::ptrdiff_t* pos = &im.value_pos[e * 64];
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b)
        if (const auto at = pos[a * 8 + b]; at >= 0) values[at] += modulus * ke_(a, b);
  }
  im.llt.factorize(im.k);
  if (im.llt.info() != Eigen::Success) throw Error("stiffness matrix is singular");

  Vector f_red(im.free_count);
  for (Index dof = 0; dof < problem_.dofs(); ++dof)
    if (const Index r = im.reduced[static_cast<std::size_t>(dof)]; r >= 0) f_red(r) = f(dof);
  const Vector u_red = im.llt.solve(f_red);

  Vector u = Vector::Zero(problem_.dofs());
  for (Index dof = 0; dof < problem_.dofs(); ++dof)
    if (const Index r = im.reduced[static_cast<std::size_t>(dof)]; r >= 0) u(dof) = u_red(r);
  return u;
}

Eigen::SparseMatrix<double> FemModel::full_stiffness(const Vector& density) const {
  std::vector<Eigen::Triplet<double>> trips;
  const auto& im = *impl_;
  for (std::size_t e = 0; e < im.elem_dofs.size(); ++e) {
    const double modulus = simp_modulus(problem_, density(static_cast<Index>(e)));
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b)
        trips.emplace_back(im.elem_dofs[e][static_cast<std::size_t>(a)],
                           im.elem_dofs[e][static_cast<std::size_t>(b)], modulus * ke_(a, b));
  }
  Eigen::SparseMatrix<double> k(problem_.dofs(), problem_.dofs());
  k.setFromTriplets(trips.begin(), trips.end());
  return k;
}

std::vector<Index> FemModel::fixed_dofs() const {
  std::vector<Index> out;
  for (std::size_t dof = 0; dof < impl_->reduced.size(); ++dof)
    if (impl_->reduced[dof] < 0) out.push_back(static_cast<Index>(dof));
  return out;
}

Vector solve_fem(const Matrix& density, const TopoProblem& problem) {
  require(density.rows() == problem.nely && density.cols() == problem.nelx,
          "solve_fem: density field shape mismatch");
  FemModel model(problem);
  return model.solve(flatten(density));
}

ComplianceSensitivity compliance_sensitivity(const Matrix& density, const Vector& displacement,
                                             const TopoProblem& problem) {
  require(density.rows() == problem.nely && density.cols() == problem.nelx,
          "compliance_sensitivity: density field shape mismatch");
  require(displacement.size() == problem.dofs(), "compliance_sensitivity: displacement size mismatch");
  const Matrix ke = element_stiffness(problem.nu);
  ComplianceSensitivity out;
  out.dc.resize(problem.nely, problem.nelx);
  for (Index row = 0; row < problem.nely; ++row)
    for (Index col = 0; col < problem.nelx; ++col) {
      const Vector ue = element_vector(displacement, element_dofs(problem, row, col));
      const double energy = ue.dot(ke * ue);
      const double x = density(row, col);
      out.compliance += simp_modulus(problem, x) * energy;
      out.dc(row, col) =
          -problem.penal * std::pow(x, problem.penal - 1.0) * (problem.e0 - problem.emin) * energy;
    }
  return out;
}

DensityFilter::DensityFilter(Grid grid, double radius) : grid_(grid) {
  require(radius >= 1.0, "filter radius must be at least 1");
  require(grid.nely >= 1 && grid.nelx >= 1, "filter grid must be nonempty");
  const auto reach = static_cast<Index>(std::ceil(radius)) - 1;
  std::vector<Eigen::Triplet<double>> trips;
  for (Index r = 0; r < grid.nely; ++r)
    for (Index c = 0; c < grid.nelx; ++c) {
      const Index e = r * grid.nelx + c;
      for (Index r2 = std::max<Index>(r - reach, 0); r2 <= std::min(r + reach, grid.nely - 1); ++r2)
        for (Index c2 = std::max<Index>(c - reach, 0); c2 <= std::min(c + reach, grid.nelx - 1); ++c2) {
          const double dist = std::hypot(static_cast<double>(r - r2), static_cast<double>(c - c2));
          const double w = radius - dist;
          if (w > 0.0) trips.emplace_back(e, r2 * grid.nelx + c2, w);
        }
    }
  h_.resize(grid.cells(), grid.cells());
  h_.setFromTriplets(trips.begin(), trips.end());
  hs_ = h_ * Vector::Ones(grid.cells());
}

Vector DensityFilter::apply(const Vector& field) const {
  require(field.size() == grid_.cells(), "filter: field size mismatch");
  return (h_ * field).cwiseQuotient(hs_);
}

Vector DensityFilter::chain(const Vector& grad) const {
  require(grad.size() == grid_.cells(), "filter: gradient size mismatch");
  return h_.transpose() * grad.cwiseQuotient(hs_);
}

Matrix density_filter(const Matrix& field, double radius) {
  const Grid grid{field.rows(), field.cols()};
  return reshape(DensityFilter(grid, radius).apply(flatten(field)), grid);
}

Vector oc_update(const Vector& x, const Vector& dc, const Vector& dv, const DensityFilter& filter,
                 double volfrac, double move) {
  require(x.size() == dc.size() && x.size() == dv.size(), "oc_update: size mismatch");
  require((dc.array() <= 0.0).all(), "oc_update: sensitivities must be nonpositive");
  require((dv.array() > 0.0).all(), "oc_update: volume sensitivities must be positive");

  const Vector lower = (x.array() - move).cwiseMax(0.0);
  const Vector upper = (x.array() + move).cwiseMin(1.0);
  const Vector ratio = (-dc.array() / dv.array()).sqrt();
  auto candidate = [&](double lambda) -> Vector {
    return (x.array() * ratio.array() / std::sqrt(lambda)).max(lower.array()).min(upper.array());
  };

  double lo = 1e-10, hi = 1e10;
  Vector best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 400; ++it) {
    const double mid = std::sqrt(lo * hi);
    Vector next = candidate(mid);
    const double vol = filter.apply(next).mean();
    const double gap = std::abs(vol - volfrac);
    if (gap < best_gap) {
      best_gap = gap;
      best = std::move(next);
    }
    if (gap <= 1e-12) break;
    if (vol > volfrac)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * lo) break;
  }
  if (best_gap > 1e-6)
    throw Error("oc_update: bisection could not meet the volume constraint (gap " +
                std::to_string(best_gap) + ")");
  return best;
}

Matrix oc_update(const Matrix& density, const Matrix& dc, const TopoProblem& problem) {
  require(density.rows() == problem.nely && density.cols() == problem.nelx &&
              dc.rows() == problem.nely && dc.cols() == problem.nelx,
          "oc_update: field shape mismatch");
  const DensityFilter filter(problem.grid(), problem.filter_size);
  const Index n = problem.elements();
  const Vector dv = filter.chain(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  return reshape(oc_update(flatten(density), flatten(dc), dv, filter, problem.volfrac, problem.move),
                 problem.grid());
}

Vector random_initial_field(Index elements, double volfrac, std::uint64_t seed) {
  require(elements >= 1, "random init: empty field");
  require(volfrac > 0.0 && volfrac < 1.0, "random init: volfrac must lie in (0,1)");
  std::mt19937_64 gen(seed);
  Vector x(elements);
  for (Index e = 0; e < elements; ++e) x(e) = uniform01(gen);
  for (int it = 0; it < 200; ++it) {
    const double mean = x.mean();
    if (std::abs(mean - volfrac) <= 1e-14) break;
    if (mean <= 0.0) {
      x.setConstant(volfrac);
      break;
    }
    x = (x * (volfrac / mean)).cwiseMin(1.0);
  }
  return x;
}

ElementStress element_stress(const Matrix& density, const Vector& displacement,
                             const TopoProblem& problem) {
  require(density.rows() == problem.nely && density.cols() == problem.nelx,
          "element_stress: density field shape mismatch");
  const Matrix cb = plane_stress_matrix(problem.e0, problem.nu) * strain_displacement(0.0, 0.0);
  ElementStress out;
  out.von_mises.resize(problem.nely, problem.nelx);
  double weighted = 0.0, mass = 0.0;
  for (Index row = 0; row < problem.nely; ++row)
    for (Index col = 0; col < problem.nelx; ++col) {
      const double x = density(row, col);
      const Vector s = std::pow(x, problem.penal) *
                       (cb * element_vector(displacement, element_dofs(problem, row, col)));
      const double vm = std::sqrt(std::max(0.0, s(0) * s(0) + s(1) * s(1) - s(0) * s(1) + 3.0 * s(2) * s(2)));
      out.von_mises(row, col) = vm;
      if (x >= kStressDensityFloor) out.max_stress = std::max(out.max_stress, vm);
      weighted += x * vm;
      mass += x;
    }
  out.avg_stress = mass > 0.0 ? weighted / mass : 0.0;
  return out;
}

TopoResult optimize_topology(const TopoProblem& problem, const TopoInit& init) {
  problem.validate();
  FemModel model(problem);
  const DensityFilter filter(problem.grid(), problem.filter_size);
  const Index n = problem.elements();
  const Vector dv = filter.chain(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  const Matrix& ke = model.ke();

  Vector x = init.random ? random_initial_field(n, problem.volfrac, init.seed)
                         : Vector::Constant(n, problem.volfrac);
  Vector phys = filter.apply(x);

  TopoResult result;
  Vector dc(n);
  for (int iter = 0; iter < problem.max_iters; ++iter) {
    const Vector u = model.solve(phys);
    double c = 0.0;
    for (Index row = 0; row < problem.nely; ++row)
      for (Index col = 0; col < problem.nelx; ++col) {
        const Index e = row * problem.nelx + col;
        const Vector ue = element_vector(u, element_dofs(problem, row, col));
        const double energy = ue.dot(ke * ue);
        c += simp_modulus(problem, phys(e)) * energy;
        dc(e) = -problem.penal * std::pow(phys(e), problem.penal - 1.0) *
                (problem.e0 - problem.emin) * energy;
      }
    result.compliance_history.push_back(c);

    const Vector next = oc_update(x, filter.chain(dc), dv, filter, problem.volfrac, problem.move);
    const double change = (next - x).cwiseAbs().maxCoeff();
    x = next;
    phys = filter.apply(x);
    result.volume_history.push_back(phys.mean());
    result.iterations = iter + 1;
    if (change < problem.change_tol) {
      result.converged = true;
      break;
    }
  }

  const Vector u = model.solve(phys);
  result.density = reshape(phys.cwiseMax(0.0).cwiseMin(1.0), problem.grid());
  result.compliance = u.dot(model.load());
  const auto stress = element_stress(result.density, u, problem);
  result.max_stress = stress.max_stress;
  result.avg_stress = stress.avg_stress;
  return result;
}

void SamplingSpec::validate() const {
  require(n >= 1, "sample count must be positive");
  require(nely >= 1 && nelx >= 1, "grid must be nonempty");
  require(volfrac > 0.0 && volfrac < 1.0, "volfrac must lie in (0,1)");
  require(max_iters >= 1, "max_iters must be positive");
  if (mode == Mode::D2) {
    require(std::abs(fixed_position) <= std::min(20.0, static_cast<double>(nely) / 2.0),
            "fixed position out of range");
    require(fixed_angle >= 0.0 && fixed_angle <= kPi, "fixed angle out of [0, pi]");
    require(fixed_filter_size >= 1.1 && fixed_filter_size <= 2.5, "fixed filter size out of [1.1, 2.5]");
  }
}

SamplingSpec SamplingSpec::from_json(const nlohmann::json& j) {
  static const std::vector<std::string> kKeys = {"mode", "n",      "seed",  "nely",
                                                 "nelx", "volfrac", "fixed", "max_iters"};
  require(j.is_object(), "config must be a JSON object");
  for (const auto& [key, _] : j.items())
    require(std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end(), "unknown config key '" + key + "'");
  SamplingSpec s;
  try {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "D1")
      s.mode = Mode::D1;
    else if (mode == "D2")
      s.mode = Mode::D2;
    else
      throw InvalidArgument("mode must be D1 or D2");
    s.n = j.at("n").get<Index>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.nely = j.value("nely", s.nely);
    s.nelx = j.value("nelx", s.nelx);
    s.volfrac = j.value("volfrac", s.volfrac);
    s.max_iters = j.value("max_iters", s.max_iters);
    if (j.contains("fixed")) {
      const auto& f = j.at("fixed");
      s.fixed_position = f.value("position", s.fixed_position);
      s.fixed_angle = f.value("angle", s.fixed_angle);
      s.fixed_filter_size = f.value("filter_size", s.fixed_filter_size);
    }
  } catch (const nlohmann::json::exception& err) {
    throw InvalidArgument(std::string("config: ") + err.what());
  }
  s.validate();
  return s;
}

nlohmann::json SamplingSpec::to_json() const {
  return {{"mode", mode == Mode::D1 ? "D1" : "D2"},
          {"n", n},
          {"seed", seed},
          {"nely", nely},
          {"nelx", nelx},
          {"volfrac", volfrac},
          {"max_iters", max_iters},
          {"fixed",
           {{"position", fixed_position}, {"angle", fixed_angle}, {"filter_size", fixed_filter_size}}}};
}

TopoProblem sample_problem(const SamplingSpec& spec, Index id) {
  TopoProblem p;
  p.nely = spec.nely;
  p.nelx = spec.nelx;
  p.volfrac = spec.volfrac;
  p.max_iters = spec.max_iters;
  if (spec.mode == SamplingSpec::Mode::D1) {
    std::mt19937_64 gen(derive_seed(spec.seed, static_cast<std::uint64_t>(id)));
    const double half = std::min(20.0, static_cast<double>(spec.nely) / 2.0);
    p.position = uniform_in(gen, -half, half);
    p.angle = uniform_in(gen, 0.0, kPi);
    p.filter_size = uniform_in(gen, 1.1, 2.5);
  } else {
    p.position = spec.fixed_position;
    p.angle = spec.fixed_angle;
    p.filter_size = spec.fixed_filter_size;
  }
  return p;
}

TopoInit sample_init(const SamplingSpec& spec, Index id) {
  if (spec.mode == SamplingSpec::Mode::D1) return TopoInit::uniform();
  return TopoInit::random_with(derive_seed(spec.seed, static_cast<std::uint64_t>(id)));
}

Ensemble generate_ensemble(const SamplingSpec& spec, const ProgressFn& progress) {
  spec.validate();
  std::vector<TopoResult> results(static_cast<std::size_t>(spec.n));
  std::vector<TopoProblem> problems(static_cast<std::size_t>(spec.n));
  std::mutex progress_mutex;
  parallel_for(static_cast<std::size_t>(spec.n), [&](std::size_t i) {
    const auto id = static_cast<Index>(i);
    problems[i] = sample_problem(spec, id);
    try {
      results[i] = optimize_topology(problems[i], sample_init(spec, id));
    } catch (const std::exception& err) {
      throw Error("sample " + std::to_string(id) + " failed: " + err.what());
    }
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(id, results[i]);
    }
  });

  Ensemble e;
  e.grid = {spec.nely, spec.nelx};
  e.kind = EnsembleKind::Design;
  e.data.resize(e.grid.cells(), spec.n);
  for (Index i = 0; i < spec.n; ++i) {
    const auto& r = results[static_cast<std::size_t>(i)];
    const auto& p = problems[static_cast<std::size_t>(i)];
    e.data.col(i) = flatten(r.density);
    const auto init = sample_init(spec, i);
    DesignRecordMeta meta;
    meta.id = i;
    meta.position = p.position;
    meta.angle = p.angle;
    meta.filter_size = p.filter_size;
    meta.compliance = r.compliance;
    meta.max_stress = r.max_stress;
    meta.avg_stress = r.avg_stress;
    meta.init = init.random ? InitTag::random_with(init.seed) : InitTag::uniform();
    e.records.push_back(meta);
  }
  e.validate();
  return e;
}

}  // namespace enscope
