#pragma once

#include "enscope/common.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace enscope {

enum class WeightMode { NN, PN };
enum class Method { GompNN, ID, KM, RAND };

std::string to_string(WeightMode mode);
std::string to_string(Method method);
/// Accepts "nn"/"pn" (any case).
WeightMode parse_weight_mode(const std::string& text);
/// Accepts "gomp-nn", "id", "km", "rand" (any case, '_' or '-').
Method parse_method(const std::string& text);

struct SelectionConfig {
  Index m = 8;
  WeightMode weight_mode = WeightMode::NN;
  std::optional<std::uint64_t> seed;  // KM and RAND
  int km_max_iters = 100;
  /// Group-sparsity weight of the convex formulation. The greedy solver
  /// controls sparsity through m and ignores this.
  std::optional<double> lambda;
};

struct SubsetResult {
  Method method = Method::GompNN;
  std::vector<Index> indices;  // selection order
  Matrix weights;              // m x n
  WeightMode weight_mode = WeightMode::NN;
  double error = 0.0;
  Vector per_sample_error;     // n
  std::vector<Index> excluded_zero_columns;  // GOMP-NN only
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// Per-column NNLS (NN) or least squares (PN) of X against X[:, indices];
/// returns the filled result (method left at its default).
SubsetResult compute_weights(const Matrix& X, const std::vector<Index>& indices, WeightMode mode);

SubsetResult select_gomp_nn(const Matrix& X, const SelectionConfig& cfg);
SubsetResult select_id(const Matrix& X, const SelectionConfig& cfg);
SubsetResult select_kmedoids(const Matrix& X, const SelectionConfig& cfg);
SubsetResult select_random(const Matrix& X, const SelectionConfig& cfg);

/// Dispatches on `method`, checking the method/mode pairing first.
SubsetResult select(Method method, const Matrix& X, const SelectionConfig& cfg);

/// Throws InvalidArgument for illegal method/mode pairs (GOMP needs NN, ID needs PN).
void check_method_mode(Method method, WeightMode mode);

/// Sum of squared distances of each point to its nearest medoid.
double kmedoids_objective(const Matrix& X, const std::vector<Index>& medoids);

}  // namespace enscope
