#include "enscope/ensemble.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace enscope {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'N', 'S', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 5 * 4;

static_assert(std::endian::native == std::endian::little,
              "the .ens payload is written with native little-endian layout");

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t checked_u32(Index v, const char* what) {
  if (v < 0 || static_cast<std::uint64_t>(v) > std::numeric_limits<std::uint32_t>::max())
    throw InvalidArgument(std::string("dimension overflow: ") + what + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Header + rows of integer cells; `accept` maps a cell to its value or throws.
template <class Accept>
std::pair<std::vector<std::string>, std::vector<std::vector<int>>> parse_label_table(
    const std::string& csv, Index n, Accept accept) {
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> names;
  std::vector<std::vector<int>> rows;
  bool header = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (header) {
      header = false;
      if (!t.empty()) names = split_csv_line(t);
      continue;
    }
    if (t.empty()) continue;
    const auto cells = split_csv_line(t);
    if (static_cast<Index>(cells.size()) != n)
      throw FormatError("labels line " + std::to_string(line_no) + ": expected " +
                        std::to_string(n) + " entries, got " + std::to_string(cells.size()));
    std::vector<int> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(accept(c, line_no));
    rows.push_back(std::move(row));
  }
  if (rows.size() != names.size())
    throw FormatError("labels: header names " + std::to_string(names.size()) +
                      " features but found " + std::to_string(rows.size()) + " rows");
  for (std::size_t a = 0; a < names.size(); ++a) {
    if (names[a].empty()) throw FormatError("labels: empty feature name");
    for (std::size_t b = a + 1; b < names.size(); ++b)
      if (names[a] == names[b]) throw FormatError("labels: duplicate feature name " + names[a]);
  }
  return {std::move(names), std::move(rows)};
}

}  // namespace

std::string InitTag::str() const {
  return random ? "random:" + std::to_string(seed) : std::string("uniform");
}

InitTag InitTag::parse(const std::string& text) {
  if (text == "uniform") return uniform();
  constexpr std::string_view prefix = "random:";
  if (text.starts_with(prefix)) {
    const std::string digits = text.substr(prefix.size());
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw FormatError("bad init tag: " + text);
    return random_with(std::stoull(digits));
  }
  throw FormatError("bad init tag: " + text);
}

void Ensemble::validate() const {
  require(grid.nely > 0 && grid.nelx > 0, "grid dimensions must be positive");
  require(grid.cells() == d(), "grid nely*nelx != d");
  require(static_cast<Index>(records.size()) == n(), "records.length != n");
  if (!data.allFinite()) throw InvalidArgument("invalid data: non-finite entry");
  for (Index i = 0; i < n(); ++i)
    require(records[static_cast<std::size_t>(i)].id == i, "record ids must be 0..n-1 in order");
  if (kind != EnsembleKind::Design) return;
  if (d() > 0 && n() > 0 && (data.minCoeff() < 0.0 || data.maxCoeff() > 1.0))
    throw InvalidArgument("invalid data: design densities must lie in [0,1]");
  for (const auto& r : records) {
    const std::string at = " (record " + std::to_string(r.id) + ")";
    require(r.position >= -20.0 && r.position <= 20.0, "position out of [-20,20]" + at);
    require(r.angle >= 0.0 && r.angle <= M_PI, "angle out of [0,pi]" + at);
    require(r.filter_size >= 1.1 && r.filter_size <= 2.5, "filter_size out of range" + at);
    require(r.compliance >= 0.0 && r.max_stress >= 0.0 && r.avg_stress >= 0.0,
            "scores must be nonnegative" + at);
  }
}

Ensemble Ensemble::from_matrix(Matrix data) {
  Ensemble e;
  e.grid = {data.rows(), 1};
  e.records.resize(static_cast<std::size_t>(data.cols()));
  for (std::size_t i = 0; i < e.records.size(); ++i) e.records[i].id = static_cast<std::int64_t>(i);
  e.data = std::move(data);
  e.kind = EnsembleKind::Matrix;
  return e;
}

Vector flatten(const Matrix& field) {
  Vector out(field.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      out.data(), field.rows(), field.cols()) = field;
  return out;
}

Matrix reshape(const Eigen::Ref<const Vector>& column, const Grid& grid) {
  require(column.size() == grid.cells(), "reshape: column length != grid cells");
  const Vector copy = column;
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      copy.data(), grid.nely, grid.nelx);
}

fs::path ensemble_base(const fs::path& path) {
  if (path.extension() == ".ens" || path.extension() == ".json") {
    fs::path base = path;
    base.replace_extension();
    return base;
  }
  return path;
}

json record_to_json(const DesignRecordMeta& r) {
  return json{{"id", r.id},
              {"position", r.position},
              {"angle", r.angle},
              {"filter_size", r.filter_size},
              {"compliance", r.compliance},
              {"max_stress", r.max_stress},
              {"avg_stress", r.avg_stress},
              {"init", r.init.str()}};
}

DesignRecordMeta record_from_json(const json& j) {
  DesignRecordMeta r;
  r.id = j.at("id").get<std::int64_t>();
  r.position = j.at("position").get<double>();
  r.angle = j.at("angle").get<double>();
  r.filter_size = j.at("filter_size").get<double>();
  r.compliance = j.at("compliance").get<double>();
  r.max_stress = j.at("max_stress").get<double>();
  r.avg_stress = j.at("avg_stress").get<double>();
  r.init = InitTag::parse(j.at("init").get<std::string>());
  return r;
}

void save_ensemble(const Ensemble& e, const fs::path& path) {
  e.validate();
  const fs::path base = ensemble_base(path);
  const std::uint32_t d = checked_u32(e.d(), "d");
  const std::uint32_t n = checked_u32(e.n(), "n");
  const std::uint32_t nely = checked_u32(e.grid.nely, "nely");
  const std::uint32_t nelx = checked_u32(e.grid.nelx, "nelx");

  fs::path ens_path = base;
  ens_path += ".ens";
  {
    std::ofstream out(ens_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + ens_path.string());
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, kVersion);
    put_u32(out, d);
    put_u32(out, n);
    put_u32(out, nely);
    put_u32(out, nelx);
    out.write(reinterpret_cast<const char*>(e.data.data()),
              static_cast<std::streamsize>(e.data.size() * sizeof(double)));
    if (!out) throw Error("write failed: " + ens_path.string());
  }

  json manifest;
  manifest["version"] = kVersion;
  manifest["n"] = n;
  if (e.kind == EnsembleKind::Matrix) manifest["kind"] = "matrix";
  json records = json::array();
  for (const auto& r : e.records) records.push_back(record_to_json(r));
  manifest["records"] = std::move(records);

  fs::path json_path = base;
  json_path += ".json";
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw Error("cannot write " + json_path.string());
  out << manifest.dump(1) << '\n';
  if (!out) throw Error("write failed: " + json_path.string());
}

Ensemble load_ensemble(const fs::path& path) {
  const fs::path base = ensemble_base(path);
  fs::path ens_path = base;
  ens_path += ".ens";
  fs::path json_path = base;
  json_path += ".json";

  const std::string bytes = read_file(ens_path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kHeaderBytes || std::memcmp(p, kMagic.data(), 4) != 0 ||
      get_u32(p + 4) != kVersion)
    throw FormatError("unsupported format: " + ens_path.string());
  const std::uint64_t d = get_u32(p + 8), n = get_u32(p + 12);
  const Grid grid{static_cast<Index>(get_u32(p + 16)), static_cast<Index>(get_u32(p + 20))};
  if (bytes.size() != kHeaderBytes + d * n * sizeof(double))
    throw FormatError("inconsistent ensemble: payload size does not match header");

  json manifest;
  try {
    manifest = json::parse(read_file(json_path));
  } catch (const json::parse_error& err) {
    throw FormatError("manifest parse error: " + std::string(err.what()));
  }

  Ensemble e;
  try {
    if (manifest.at("version").get<std::uint32_t>() != kVersion)
      throw FormatError("unsupported format: manifest version");
    if (manifest.at("n").get<std::uint64_t>() != n ||
        manifest.at("records").size() != static_cast<std::size_t>(n))
      throw FormatError("inconsistent ensemble: manifest n does not match matrix");
    if (manifest.contains("kind")) {
      const auto kind = manifest["kind"].get<std::string>();
      if (kind == "matrix")
        e.kind = EnsembleKind::Matrix;
      else if (kind != "design")
        throw FormatError("unsupported format: ensemble kind " + kind);
    }
    for (const auto& r : manifest.at("records")) e.records.push_back(record_from_json(r));
  } catch (const json::exception& err) {
    throw FormatError("inconsistent ensemble: " + std::string(err.what()));
  }

  e.grid = grid;
  e.data.resize(static_cast<Index>(d), static_cast<Index>(n));
  std::memcpy(e.data.data(), p + kHeaderBytes, d * n * sizeof(double));
  if (!e.data.allFinite()) throw FormatError("invalid data: non-finite payload value");
  try {
    e.validate();
  } catch (const InvalidArgument& err) {
    throw FormatError("inconsistent ensemble: " + std::string(err.what()));
  }
  return e;
}

FeatureLabels parse_labels(const std::string& csv, Index n) {
  auto [names, rows] = parse_label_table(csv, n, [](const std::string& c, std::size_t line) {
    if (c == "0") return 0;
    if (c == "1") return 1;
    throw FormatError("labels line " + std::to_string(line) + ": non-binary entry '" + c + "'");
  });
  FeatureLabels out;
  out.names = std::move(names);
  out.n = n;
  for (const auto& row : rows)
    for (int v : row) out.values.push_back(static_cast<std::uint8_t>(v));
  return out;
}

FeatureLabels parse_signed_labels(const std::string& csv, Index n) {
  auto [names, rows] = parse_label_table(csv, n, [](const std::string& c, std::size_t line) {
    if (c == "1") return 1;
    if (c == "-1") return -1;
    throw FormatError("labels line " + std::to_string(line) + ": expected -1 or 1, got '" + c + "'");
  });
  FeatureLabels out;
  out.n = n;
  for (std::size_t k = 0; k < names.size(); ++k) {
    out.names.push_back(names[k]);
    out.names.push_back("not " + names[k]);
    for (int v : rows[k]) out.values.push_back(v == 1 ? 1 : 0);
    for (int v : rows[k]) out.values.push_back(v == -1 ? 1 : 0);
  }
  for (std::size_t a = 0; a < out.names.size(); ++a)
    for (std::size_t b = a + 1; b < out.names.size(); ++b)
      if (out.names[a] == out.names[b])
        throw FormatError("labels: expanded feature name collides: " + out.names[a]);
  return out;
}

FeatureLabels load_labels(const fs::path& path, Index n) { return parse_labels(read_file(path), n); }

FeatureLabels load_signed_labels(const fs::path& path, Index n) {
  return parse_signed_labels(read_file(path), n);
}

json labels_to_json(const FeatureLabels& labels) {
  json rows = json::array();
  for (Index k = 0; k < labels.f(); ++k) {
    json row = json::array();
    for (Index i = 0; i < labels.n; ++i) row.push_back(labels.at(k, i) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return json{{"n", labels.n}, {"names", labels.names}, {"matrix", std::move(rows)}};
}

}  // namespace enscope
