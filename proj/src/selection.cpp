#include "enscope/selection.hpp"

#include "enscope/parallel.hpp"
#include "enscope/rng.hpp"
#include "enscope/solvers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

namespace enscope {

namespace {

// Above this many samples the n x n Gram matrix is not formed and residual
// correlations are recomputed from X every round.
constexpr Index kGramSampleLimit = 4000;

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

void check_indices(const std::vector<Index>& indices, Index n) {
  require(!indices.empty(), "subset must contain at least one index");
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (Index j : indices) {
    require(j >= 0 && j < n, "subset index " + std::to_string(j) + " out of range");
    require(!seen[static_cast<std::size_t>(j)], "subset indices must be distinct");
    seen[static_cast<std::size_t>(j)] = true;
  }
}

Matrix gather_columns(const Matrix& X, const std::vector<Index>& indices) {
  Matrix D(X.rows(), static_cast<Index>(indices.size()));
  for (std::size_t q = 0; q < indices.size(); ++q) D.col(static_cast<Index>(q)) = X.col(indices[q]);
  return D;
}

// Per-column NNLS from normal-equation data: gram = D^T D, cross = D^T X.
Matrix nn_weights(const Matrix& gram, const Matrix& cross) {
  Matrix W(cross.rows(), cross.cols());
  parallel_for(static_cast<std::size_t>(cross.cols()), [&](std::size_t i) {
    const auto col = static_cast<Index>(i);
    W.col(col) = nnls_normal(gram, cross.col(col)).weights;
  });
  return W;
}

void set_self_columns(Matrix& W, const std::vector<Index>& indices) {
  for (std::size_t q = 0; q < indices.size(); ++q) {
    W.col(indices[q]).setZero();
    W(static_cast<Index>(q), indices[q]) = 1.0;
  }
}

}  // namespace

std::string to_string(WeightMode mode) { return mode == WeightMode::NN ? "NN" : "PN"; }

std::string to_string(Method method) {
  switch (method) {
    case Method::GompNN: return "GOMP_NN";
    case Method::ID: return "ID";
    case Method::KM: return "KM";
    case Method::RAND: return "RAND";
  }
  return "?";
}

WeightMode parse_weight_mode(const std::string& text) {
  const auto t = lower(text);
  if (t == "nn") return WeightMode::NN;
  if (t == "pn") return WeightMode::PN;
  throw InvalidArgument("unknown weight mode '" + text + "' (expected nn or pn)");
}

Method parse_method(const std::string& text) {
  const auto t = lower(text);
  if (t == "gomp-nn" || t == "gomp") return Method::GompNN;
  if (t == "id") return Method::ID;
  if (t == "km") return Method::KM;
  if (t == "rand") return Method::RAND;
  throw InvalidArgument("unknown method '" + text + "' (expected gomp-nn, id, km or rand)");
}

void check_method_mode(Method method, WeightMode mode) {
  if (method == Method::GompNN && mode != WeightMode::NN)
    throw InvalidArgument("GOMP requires non-negative weights");
  if (method == Method::ID && mode != WeightMode::PN)
    throw InvalidArgument("ID requires positive-negative weights");
}

nlohmann::json SubsetResult::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (Index q = 0; q < weights.rows(); ++q) {
    nlohmann::json row = nlohmann::json::array();
    for (Index i = 0; i < weights.cols(); ++i) row.push_back(weights(q, i));
    rows.push_back(std::move(row));
  }
  return {{"method", to_string(method)},
          {"weight_mode", to_string(weight_mode)},
          {"indices", indices},
          {"error", error},
          {"per_sample_error", std::vector<double>(per_sample_error.begin(), per_sample_error.end())},
          {"weights", std::move(rows)},
          {"excluded_zero_columns", excluded_zero_columns},
          {"warnings", warnings}};
}

SubsetResult compute_weights(const Matrix& X, const std::vector<Index>& indices, WeightMode mode) {
  check_indices(indices, X.cols());
  const Matrix D = gather_columns(X, indices);

  SubsetResult r;
  r.indices = indices;
  r.weight_mode = mode;
  if (mode == WeightMode::NN) {
    const Matrix gram = D.transpose() * D;
    const Matrix cross = D.transpose() * X;
    r.weights = nn_weights(gram, cross);
  } else {
    r.weights = lstsq(D, X);
  }
  // x_j = D e_q exactly; with duplicated columns other optima exist, so pin it.
  set_self_columns(r.weights, indices);

  const Matrix residual = X - D * r.weights;
  r.per_sample_error = residual.colwise().squaredNorm().transpose();
  r.error = r.per_sample_error.sum();
  return r;
}

SubsetResult select_gomp_nn(const Matrix& X, const SelectionConfig& cfg) {
  check_method_mode(Method::GompNN, cfg.weight_mode);
  const Index n = X.cols();
  require(cfg.m >= 1 && cfg.m <= n, "m must lie in 1..n");
  if (!X.allFinite()) throw InvalidArgument("non-finite data");

  const Vector sq_norms = X.colwise().squaredNorm().transpose();
  std::vector<Index> zero_columns;
  for (Index j = 0; j < n; ++j)
    if (sq_norms(j) == 0.0) zero_columns.push_back(j);
  if (cfg.m > n - static_cast<Index>(zero_columns.size()))
    throw InvalidArgument("m exceeds the number of nonzero columns");

  const bool use_gram = n <= kGramSampleLimit;
  Matrix gram;
  if (use_gram) gram = X.transpose() * X;

  std::vector<bool> blocked(static_cast<std::size_t>(n), false);
  for (Index j : zero_columns) blocked[static_cast<std::size_t>(j)] = true;

  std::vector<Index> chosen;
  Matrix W;  // |chosen| x n
  for (Index round = 0; round < cfg.m; ++round) {
    // Column j of corr holds x_j^T r_i over samples i, for the current
    // residual R = X - X_S W.
    Matrix corr;
    if (chosen.empty()) {
      corr = use_gram ? gram : Matrix(X.transpose() * X);
    } else if (use_gram) {
      Matrix g_cols(n, static_cast<Index>(chosen.size()));
      for (std::size_t q = 0; q < chosen.size(); ++q) g_cols.col(static_cast<Index>(q)) = gram.col(chosen[q]);
      corr = gram - W.transpose() * g_cols.transpose();
    } else {
      const Matrix residual = X - gather_columns(X, chosen) * W;
      corr = residual.transpose() * X;
    }

    Index best = -1;
    double best_score = -1.0;
    for (Index j = 0; j < n; ++j) {
      if (blocked[static_cast<std::size_t>(j)]) continue;
      const double score = corr.col(j).cwiseMax(0.0).squaredNorm() / sq_norms(j);
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    chosen.push_back(best);
    blocked[static_cast<std::size_t>(best)] = true;
    if (round + 1 == cfg.m) break;

    // Refit every column on the enlarged subset.
    const auto s = static_cast<Index>(chosen.size());
    Matrix g_ss(s, s);
    Matrix cross(s, n);
    if (use_gram) {
      for (Index a = 0; a < s; ++a) {
        cross.row(a) = gram.row(chosen[static_cast<std::size_t>(a)]);
        for (Index b = 0; b < s; ++b)
          g_ss(a, b) = gram(chosen[static_cast<std::size_t>(a)], chosen[static_cast<std::size_t>(b)]);
      }
    } else {
      const Matrix D = gather_columns(X, chosen);
      g_ss = D.transpose() * D;
      cross = D.transpose() * X;
    }
    W = nn_weights(g_ss, cross);
    set_self_columns(W, chosen);
  }

  SubsetResult r = compute_weights(X, chosen, WeightMode::NN);
  r.method = Method::GompNN;
  r.excluded_zero_columns = zero_columns;
  if (!zero_columns.empty())
    r.warnings.push_back(std::to_string(zero_columns.size()) +
                         " all-zero column(s) excluded from candidacy");
  return r;
}

SubsetResult select_id(const Matrix& X, const SelectionConfig& cfg) {
  check_method_mode(Method::ID, cfg.weight_mode);
  const Index n = X.cols();
  require(cfg.m >= 1 && cfg.m <= n, "m must lie in 1..n");
  if (!X.allFinite()) throw InvalidArgument("non-finite data");

  Matrix residual = X;
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  std::vector<Index> pivots;
  std::vector<std::string> warnings;
  const double scale = std::sqrt(X.colwise().squaredNorm().maxCoeff());
  for (Index step = 0; step < cfg.m; ++step) {
    const Vector norms = residual.colwise().squaredNorm().transpose();
    Index p = -1;
    double best = -1.0;
    for (Index j = 0; j < n; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      if (norms(j) > best) {
        best = norms(j);
        p = j;
      }
    }
    pivots.push_back(p);
    taken[static_cast<std::size_t>(p)] = true;
    const double norm = std::sqrt(best);
    if (norm <= 1e-12 * scale) {
      warnings.push_back("pivot " + std::to_string(step) + " (column " + std::to_string(p) +
                         ") has near-zero residual norm; m exceeds numerical rank");
      continue;
    }
    const Vector q = residual.col(p) / norm;
    residual -= q * (q.transpose() * residual);
  }

  SubsetResult r = compute_weights(X, pivots, WeightMode::PN);
  r.method = Method::ID;
  r.warnings = std::move(warnings);
  return r;
}

SubsetResult select_kmedoids(const Matrix& X, const SelectionConfig& cfg) {
  const Index n = X.cols();
  const Index m = cfg.m;
  require(m >= 1 && m <= n, "m must lie in 1..n");
  require(cfg.seed.has_value(), "k-medoids requires a seed");
  if (!X.allFinite()) throw InvalidArgument("non-finite data");

  const Matrix gram = X.transpose() * X;
  Matrix dist(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i)
      dist(i, j) = i == j ? 0.0 : std::max(0.0, gram(i, i) + gram(j, j) - 2.0 * gram(i, j));

  // Initial medoids: the m points with the smallest normalized distance sum.
  const Vector row_sums = dist.rowwise().sum();
  std::vector<double> v(static_cast<std::size_t>(n), 0.0);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i)
      if (row_sums(i) > 0.0) v[static_cast<std::size_t>(j)] += dist(i, j) / row_sums(i);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return v[static_cast<std::size_t>(a)] < v[static_cast<std::size_t>(b)];
  });
  std::vector<Index> medoids(order.begin(), order.begin() + m);

  std::vector<Index> owner(static_cast<std::size_t>(n));
  auto assign = [&] {
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      for (Index c = 1; c < m; ++c) {
        const double dc = dist(i, medoids[static_cast<std::size_t>(c)]);
        const double db = dist(i, medoids[static_cast<std::size_t>(best)]);
        if (dc < db || (dc == db && medoids[static_cast<std::size_t>(c)] < medoids[static_cast<std::size_t>(best)]))
          best = c;
      }
      owner[static_cast<std::size_t>(i)] = best;
    }
    // A medoid always belongs to its own cluster, even when a duplicate point
    // ties it to another medoid, so no cluster is ever empty.
    for (Index c = 0; c < m; ++c) owner[static_cast<std::size_t>(medoids[static_cast<std::size_t>(c)])] = c;
  };

  for (int iter = 0; iter < cfg.km_max_iters; ++iter) {
    assign();
    bool changed = false;
    for (Index c = 0; c < m; ++c) {
      Index best = medoids[static_cast<std::size_t>(c)];
      double best_cost = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < n; ++j) {
        if (owner[static_cast<std::size_t>(j)] != c) continue;
        double cost = 0.0;
        for (Index i = 0; i < n; ++i)
          if (owner[static_cast<std::size_t>(i)] == c) cost += dist(i, j);
        if (cost < best_cost) {
          best_cost = cost;
          best = j;
        }
      }
      if (best != medoids[static_cast<std::size_t>(c)]) {
        medoids[static_cast<std::size_t>(c)] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  assign();

  std::vector<Index> sizes(static_cast<std::size_t>(m), 0);
  for (Index i = 0; i < n; ++i) ++sizes[static_cast<std::size_t>(owner[static_cast<std::size_t>(i)])];
  std::vector<Index> clusters(static_cast<std::size_t>(m));
  std::iota(clusters.begin(), clusters.end(), Index{0});
  std::sort(clusters.begin(), clusters.end(), [&](Index a, Index b) {
    const auto sa = sizes[static_cast<std::size_t>(a)], sb = sizes[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return medoids[static_cast<std::size_t>(a)] < medoids[static_cast<std::size_t>(b)];
  });
  std::vector<Index> indices;
  for (Index c : clusters) indices.push_back(medoids[static_cast<std::size_t>(c)]);

  SubsetResult r = compute_weights(X, indices, cfg.weight_mode);
  r.method = Method::KM;
  return r;
}

SubsetResult select_random(const Matrix& X, const SelectionConfig& cfg) {
  const Index n = X.cols();
  require(cfg.m >= 1 && cfg.m <= n, "m must lie in 1..n");
  require(cfg.seed.has_value(), "random selection requires a seed");
  std::mt19937_64 gen(*cfg.seed);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index q = 0; q < cfg.m; ++q) {
    const auto pick = q + static_cast<Index>(uniform_below(gen, static_cast<std::uint64_t>(n - q)));
    std::swap(perm[static_cast<std::size_t>(q)], perm[static_cast<std::size_t>(pick)]);
  }
  perm.resize(static_cast<std::size_t>(cfg.m));
  SubsetResult r = compute_weights(X, perm, cfg.weight_mode);
  r.method = Method::RAND;
  return r;
}

SubsetResult select(Method method, const Matrix& X, const SelectionConfig& cfg) {
  check_method_mode(method, cfg.weight_mode);
  switch (method) {
    case Method::GompNN: return select_gomp_nn(X, cfg);
    case Method::ID: return select_id(X, cfg);
    case Method::KM: return select_kmedoids(X, cfg);
    case Method::RAND: return select_random(X, cfg);
  }
  throw InvalidArgument("unknown method");
}

double kmedoids_objective(const Matrix& X, const std::vector<Index>& medoids) {
  check_indices(medoids, X.cols());
  double total = 0.0;
  for (Index i = 0; i < X.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index j : medoids) best = std::min(best, (X.col(i) - X.col(j)).squaredNorm());
    total += best;
  }
  return total;
}

}  // namespace enscope
