#include "enscope/evaluation.hpp"

#include "enscope/parallel.hpp"
#include "enscope/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace enscope {

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Advances `combo` to the next m-subset of 0..n-1 in lexicographic order.
bool next_combination(std::vector<Index>& combo, Index n) {
  const auto m = static_cast<Index>(combo.size());
  for (Index pos = m - 1; pos >= 0; --pos) {
    auto& c = combo[static_cast<std::size_t>(pos)];
    if (c < n - m + pos) {
      ++c;
      for (Index k = pos + 1; k < m; ++k)
        combo[static_cast<std::size_t>(k)] = combo[static_cast<std::size_t>(k - 1)] + 1;
      return true;
    }
  }
  return false;
}

double mean_coverage(const FeatureLabels& labels, const std::vector<std::vector<Index>>& subsets) {
  double total = 0.0;
  for (const auto& s : subsets) total += static_cast<double>(feature_coverage(labels, s).features_covered);
  return subsets.empty() ? 0.0 : total / static_cast<double>(subsets.size());
}

}  // namespace

double reconstruction_error(const Matrix& X, const SubsetResult& r) {
  const auto m = static_cast<Index>(r.indices.size());
  require(r.weights.rows() == m && r.weights.cols() == X.cols(),
          "reconstruction_error: weight matrix shape does not match subset/data");
  Matrix D(X.rows(), m);
  for (Index q = 0; q < m; ++q) {
    const Index j = r.indices[static_cast<std::size_t>(q)];
    require(j >= 0 && j < X.cols(), "reconstruction_error: index out of range");
    D.col(q) = X.col(j);
  }
  return (X - D * r.weights).squaredNorm();
}

BaselineStats random_baseline(const Matrix& X, Index m, Index trials, WeightMode mode,
                              std::uint64_t seed) {
  require(trials >= 2, "random baseline needs at least two trials");
  BaselineStats s;
  s.trials = trials;
  s.per_trial_errors.resize(static_cast<std::size_t>(trials));
  s.per_trial_indices.resize(static_cast<std::size_t>(trials));
  parallel_for(static_cast<std::size_t>(trials), [&](std::size_t t) {
    SelectionConfig cfg;
    cfg.m = m;
    cfg.weight_mode = mode;
    cfg.seed = derive_seed(seed, t);
    auto r = select_random(X, cfg);
    s.per_trial_errors[t] = r.error;
    s.per_trial_indices[t] = std::move(r.indices);
  });
  double sum = 0.0;
  for (double e : s.per_trial_errors) sum += e;
  s.mean = sum / static_cast<double>(trials);
  double ss = 0.0;
  for (double e : s.per_trial_errors) ss += (e - s.mean) * (e - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(trials - 1));
  return s;
}

CoverageReport feature_coverage(const FeatureLabels& labels, const std::vector<Index>& indices) {
  CoverageReport r;
  r.indices = indices;
  r.features_total = labels.f();
  for (Index i : indices) require(i >= 0 && i < labels.n, "coverage: index out of range");
  for (Index k = 0; k < labels.f(); ++k) {
    const bool hit = std::any_of(indices.begin(), indices.end(), [&](Index i) { return labels.at(k, i); });
    if (hit) {
      ++r.features_covered;
      r.covered_names.push_back(labels.names[static_cast<std::size_t>(k)]);
    }
  }
  return r;
}

double binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double out = 1.0;
  for (Index i = 1; i <= k; ++i) out = out * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(out);
}

std::pair<std::vector<Index>, double> brute_force_best_subset(const Matrix& X, Index m,
                                                              WeightMode mode) {
  const Index n = X.cols();
  require(m >= 1 && m <= n, "brute force: m must lie in 1..n");
  const double count = binomial(n, m);
  if (count > kBruteForceLimit)
    throw InvalidArgument("brute force: C(" + std::to_string(n) + "," + std::to_string(m) +
                          ") exceeds the enumeration guard");

  std::vector<std::vector<Index>> combos;
  combos.reserve(static_cast<std::size_t>(count));
  std::vector<Index> combo(static_cast<std::size_t>(m));
  std::iota(combo.begin(), combo.end(), Index{0});
  do {
    combos.push_back(combo);
  } while (next_combination(combo, n));

  std::vector<double> errors(combos.size());
  parallel_for(combos.size(), [&](std::size_t c) { errors[c] = compute_weights(X, combos[c], mode).error; });

  std::size_t best = 0;
  for (std::size_t c = 1; c < combos.size(); ++c)
    if (errors[c] < errors[best]) best = c;
  return {combos[best], errors[best]};
}

std::vector<std::pair<Index, double>> error_curve(const Matrix& X, Method method, Index m_lo,
                                                  Index m_hi, WeightMode mode,
                                                  std::uint64_t seed) {
  require(m_lo >= 1 && m_lo <= m_hi && m_hi <= X.cols(), "error curve: m range must lie in 1..n");
  check_method_mode(method, mode);
  std::vector<std::pair<Index, double>> out;
  SelectionConfig cfg;
  cfg.weight_mode = mode;
  cfg.seed = seed;
  if (method == Method::GompNN || method == Method::ID) {
    cfg.m = m_hi;
    const auto path = select(method, X, cfg);
    for (Index m = m_lo; m <= m_hi; ++m) {
      const std::vector<Index> prefix(path.indices.begin(), path.indices.begin() + m);
      out.emplace_back(m, compute_weights(X, prefix, mode).error);
    }
    return out;
  }
  for (Index m = m_lo; m <= m_hi; ++m) {
    cfg.m = m;
    out.emplace_back(m, select(method, X, cfg).error);
  }
  return out;
}

std::string better_than_random(double error, const BaselineStats& baseline, double floor) {
  if (baseline.mean <= floor) return "N/A";
  return error < baseline.mean - baseline.std ? "Y" : "N";
}

std::vector<ComparisonRow> compare_methods(const Matrix& X, const ComparisonOptions& opts) {
  require(opts.m_lo >= 1 && opts.m_lo <= opts.m_hi && opts.m_hi <= X.cols(),
          "m range must lie in 1..n");
  const FeatureLabels* labels = opts.labels;
  if (labels) require(labels->n == X.cols(), "labels sample count does not match the ensemble");

  SelectionConfig path_cfg;
  path_cfg.m = opts.m_hi;
  path_cfg.weight_mode = WeightMode::NN;
  const auto gomp_path = select_gomp_nn(X, path_cfg);
  path_cfg.weight_mode = WeightMode::PN;
  const auto id_path = select_id(X, path_cfg);

  auto coverage_of = [&](const std::vector<Index>& idx) -> std::optional<double> {
    if (!labels) return std::nullopt;
    return static_cast<double>(feature_coverage(*labels, idx).features_covered);
  };

  // random subsets that already reproduce X up to roundoff leave nothing to beat
  const double floor = 1e-12 * X.squaredNorm();
  std::vector<ComparisonRow> rows;
  for (Index m = opts.m_lo; m <= opts.m_hi; ++m) {
    const auto rand_nn = random_baseline(X, m, opts.trials, WeightMode::NN, opts.seed);
    const auto rand_pn = random_baseline(X, m, opts.trials, WeightMode::PN, opts.seed);

    const std::vector<Index> gomp_idx(gomp_path.indices.begin(), gomp_path.indices.begin() + m);
    const std::vector<Index> id_idx(id_path.indices.begin(), id_path.indices.begin() + m);
    SelectionConfig km_cfg;
    km_cfg.m = m;
    km_cfg.weight_mode = WeightMode::NN;
    km_cfg.seed = opts.seed;
    const auto km_nn = select_kmedoids(X, km_cfg);
    const auto km_pn = compute_weights(X, km_nn.indices, WeightMode::PN);

    auto fixed_row = [&](std::string label, WeightMode mode, double error, const BaselineStats& base,
                         const std::vector<Index>& idx) {
      ComparisonRow r;
      r.label = std::move(label);
      r.m = m;
      r.mode = mode;
      r.error = error;
      r.better = better_than_random(error, base, floor);
      r.coverage = coverage_of(idx);
      r.indices = idx;
      return r;
    };
    auto rand_row = [&](std::string label, WeightMode mode, const BaselineStats& base) {
      ComparisonRow r;
      r.label = std::move(label);
      r.m = m;
      r.mode = mode;
      r.error = base.mean;
      r.std = base.std;
      r.better = "N/A";
      if (labels) r.coverage = mean_coverage(*labels, base.per_trial_indices);
      return r;
    };

    rows.push_back(fixed_row("GOMP-NN", WeightMode::NN,
                             compute_weights(X, gomp_idx, WeightMode::NN).error, rand_nn, gomp_idx));
    rows.push_back(fixed_row("KM-NN", WeightMode::NN, km_nn.error, rand_nn, km_nn.indices));
    rows.push_back(rand_row("RAND-NN", WeightMode::NN, rand_nn));
    rows.push_back(fixed_row("ID", WeightMode::PN, compute_weights(X, id_idx, WeightMode::PN).error,
                             rand_pn, id_idx));
    rows.push_back(fixed_row("KM-PN", WeightMode::PN, km_pn.error, rand_pn, km_nn.indices));
    rows.push_back(rand_row("RAND-PN", WeightMode::PN, rand_pn));
  }
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "method,m,mode,error,std,better,coverage\n";
  for (const auto& r : rows) {
    out << r.label << ',' << r.m << ',' << to_string(r.mode) << ',' << format_number(r.error) << ','
        << (r.std ? format_number(*r.std) : "") << ',' << r.better << ','
        << (r.coverage ? format_number(*r.coverage) : "") << '\n';
  }
  return out.str();
}

nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"method", r.label}, {"m", r.m}, {"mode", to_string(r.mode)},
                     {"error", r.error}, {"better", r.better}};
    if (r.std) j["std"] = *r.std;
    if (r.coverage) j["coverage"] = *r.coverage;
    if (!r.indices.empty()) j["indices"] = r.indices;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace enscope
