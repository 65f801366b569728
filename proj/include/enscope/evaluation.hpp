#pragma once

#include "enscope/common.hpp"
#include "enscope/ensemble.hpp"
#include "enscope/selection.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace enscope {

struct BaselineStats {
  Index trials = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, (trials - 1) denominator
  std::vector<double> per_trial_errors;
  std::vector<std::vector<Index>> per_trial_indices;
};

struct CoverageReport {
  std::vector<Index> indices;
  Index features_total = 0;
  Index features_covered = 0;
  std::vector<std::string> covered_names;
};

/// sum_i ||x_i - D b_i||^2 recomputed from the weights stored in `r`.
double reconstruction_error(const Matrix& X, const SubsetResult& r);

/// `trials` RAND selections; trial t uses seed derive_seed(seed, t).
BaselineStats random_baseline(const Matrix& X, Index m, Index trials, WeightMode mode,
                              std::uint64_t seed);

CoverageReport feature_coverage(const FeatureLabels& labels, const std::vector<Index>& indices);

inline constexpr double kBruteForceLimit = 1e5;

/// Exhaustive search over all m-subsets. Ties keep the lexicographically
/// smallest index list. Throws when C(n, m) exceeds kBruteForceLimit.
std::pair<std::vector<Index>, double> brute_force_best_subset(const Matrix& X, Index m,
                                                              WeightMode mode);

double binomial(Index n, Index k);

/// Errors for every m in [m_lo, m_hi]. GOMP-NN and ID run one greedy path up
/// to m_hi and refit its prefixes; KM and RAND rerun per m.
std::vector<std::pair<Index, double>> error_curve(const Matrix& X, Method method, Index m_lo,
                                                  Index m_hi, WeightMode mode,
                                                  std::uint64_t seed);

/// "Y" when error < mean - std of the random baseline, "N" otherwise, "N/A"
/// when the baseline mean is at or below `floor`.
std::string better_than_random(double error, const BaselineStats& baseline, double floor = 0.0);

/// One line of the comparison table.
struct ComparisonRow {
  std::string label;  // GOMP-NN, KM-NN, RAND-NN, ID, KM-PN, RAND-PN
  Index m = 0;
  WeightMode mode = WeightMode::NN;
  double error = 0.0;
  std::optional<double> std;  // RAND rows
  std::string better;         // Y / N / N/A
  std::optional<double> coverage;
  std::vector<Index> indices;  // empty for RAND rows
};

struct ComparisonOptions {
  Index m_lo = 8;
  Index m_hi = 8;
  Index trials = 100;
  std::uint64_t seed = 0;
  const FeatureLabels* labels = nullptr;
};

/// The six-row method comparison for every m in range.
std::vector<ComparisonRow> compare_methods(const Matrix& X, const ComparisonOptions& opts);

std::string comparison_csv(const std::vector<ComparisonRow>& rows);
nlohmann::json comparison_json(const std::vector<ComparisonRow>& rows);

}  // namespace enscope
