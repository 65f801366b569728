#pragma once

#include "enscope/common.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace enscope {

/// Raster shape of a design: nely rows (row 0 = top), nelx columns.
struct Grid {
  Index nely = 0;
  Index nelx = 0;

  Index cells() const { return nely * nelx; }
  bool operator==(const Grid&) const = default;
};

/// Initialization of the optimizer that produced a design.
struct InitTag {
  bool random = false;
  std::uint64_t seed = 0;

  static InitTag uniform() { return {}; }
  static InitTag random_with(std::uint64_t s) { return {true, s}; }

  /// "uniform" or "random:<seed>".
  std::string str() const;
  static InitTag parse(const std::string& text);
  bool operator==(const InitTag&) const = default;
};

struct DesignRecordMeta {
  std::int64_t id = 0;
  double position = 0.0;     // rows from center, positive = up
  double angle = 0.0;        // radians from +x
  double filter_size = 0.0;  // filter radius in elements
  double compliance = 0.0;
  double max_stress = 0.0;
  double avg_stress = 0.0;
  InitTag init;

  bool operator==(const DesignRecordMeta&) const = default;
};

/// What the columns of an ensemble hold. Design ensembles carry rasters in
/// [0,1] and load parameters in range; plain matrices only need finite data.
enum class EnsembleKind { Design, Matrix };

/// d x n data matrix, column i = row-major flattening of design i.
struct Ensemble {
  Matrix data;
  Grid grid;
  std::vector<DesignRecordMeta> records;
  EnsembleKind kind = EnsembleKind::Design;

  Index d() const { return data.rows(); }
  Index n() const { return data.cols(); }

  /// Throws InvalidArgument on the first violated invariant.
  void validate() const;

  /// Wraps an arbitrary matrix: grid (d x 1), zeroed records.
  static Ensemble from_matrix(Matrix data);
};

/// Row-major flattening of a 2D field (row 0 first).
Vector flatten(const Matrix& field);
/// Inverse of flatten for the given grid.
Matrix reshape(const Eigen::Ref<const Vector>& column, const Grid& grid);

/// Writes `<base>.ens` and `<base>.json`. A trailing ".ens" or ".json" on
/// `base` is stripped first.
void save_ensemble(const Ensemble& e, const std::filesystem::path& base);
Ensemble load_ensemble(const std::filesystem::path& base);

std::filesystem::path ensemble_base(const std::filesystem::path& path);

nlohmann::json record_to_json(const DesignRecordMeta& r);
DesignRecordMeta record_from_json(const nlohmann::json& j);

/// Binary presence of f named features over n samples.
struct FeatureLabels {
  std::vector<std::string> names;
  Index n = 0;
  std::vector<std::uint8_t> values;  // f x n, row-major

  Index f() const { return static_cast<Index>(names.size()); }
  bool at(Index feature, Index sample) const {
    return values[static_cast<std::size_t>(feature * n + sample)] != 0;
  }
};

/// CSV: a header row of f names, then f rows of n comma-separated 0/1.
FeatureLabels load_labels(const std::filesystem::path& path, Index n);
FeatureLabels parse_labels(const std::string& csv, Index n);

/// Same layout with entries in {-1, 1}; every attribute becomes two binary
/// features, "<name>" (entry 1) and "not <name>" (entry -1).
FeatureLabels load_signed_labels(const std::filesystem::path& path, Index n);
FeatureLabels parse_signed_labels(const std::string& csv, Index n);

nlohmann::json labels_to_json(const FeatureLabels& labels);

}  // namespace enscope
