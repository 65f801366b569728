#include "enscope/ensemble.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

using namespace enscope;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

std::uint32_t u32_at(const std::string& bytes, std::size_t off) {
  std::uint32_t v = 0;
  for (int b = 3; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(b)]);
  return v;
}

Ensemble design_ensemble(Index nely, Index nelx, Index n, std::uint64_t seed) {
  Ensemble e;
  e.grid = {nely, nelx};
  e.data = testing::random_matrix(nely * nelx, n, seed, 0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    DesignRecordMeta r;
    r.id = i;
    r.position = -20.0 + 40.0 * static_cast<double>(i) / static_cast<double>(std::max<Index>(n - 1, 1));
    r.angle = 0.1 * static_cast<double>(i);
    r.filter_size = 1.1 + 0.01 * static_cast<double>(i);
    r.compliance = 10.0 + static_cast<double>(i);
    r.max_stress = 1.5;
    r.avg_stress = 0.25;
    r.init = i % 2 ? InitTag::random_with(1000 + static_cast<std::uint64_t>(i)) : InitTag::uniform();
    e.records.push_back(r);
  }
  return e;
}

}  // namespace

TEST_CASE("flatten is row-major and reshape inverts it") {
  Matrix f(2, 3);
  f << 1, 2, 3, 4, 5, 6;
  const Vector v = flatten(f);
  for (Index k = 0; k < 6; ++k) CHECK(v(k) == doctest::Approx(static_cast<double>(k + 1)));
  CHECK(reshape(v, Grid{2, 3}) == f);
  const Matrix g = testing::random_matrix(7, 5, 3);
  CHECK(reshape(flatten(g), Grid{7, 5}) == g);
  CHECK_THROWS_AS(reshape(v, Grid{4, 2}), InvalidArgument);
}

TEST_CASE("smallest ensemble: 24-byte header plus one float64") {
  testing::TempDir dir("ens1");
  Ensemble e;
  e.grid = {1, 1};
  e.data = Matrix::Constant(1, 1, 0.5);
  e.records.push_back(DesignRecordMeta{0, 0.0, 0.0, 1.1, 0.0, 0.0, 0.0, InitTag::uniform()});
  save_ensemble(e, dir / "one");

  const auto bytes = slurp(dir / "one.ens");
  REQUIRE(bytes.size() == 24 + 8);
  CHECK(bytes.substr(0, 4) == "ENS1");
  CHECK(u32_at(bytes, 4) == 1);
  CHECK(u32_at(bytes, 8) == 1);
  CHECK(u32_at(bytes, 12) == 1);
  CHECK(u32_at(bytes, 16) == 1);
  CHECK(u32_at(bytes, 20) == 1);
  double v = 0.0;
  std::memcpy(&v, bytes.data() + 24, 8);
  CHECK(v == 0.5);

  const auto manifest = nlohmann::json::parse(slurp(dir / "one.json"));
  CHECK(manifest["version"] == 1);
  CHECK(manifest["n"] == 1);
  CHECK(manifest["records"].size() == 1);
  CHECK(manifest["records"][0]["init"] == "uniform");
}

TEST_CASE("payload is column-major and sized d*n*8") {
  testing::TempDir dir("layout");
  const auto e = design_ensemble(2, 3, 4, 11);
  save_ensemble(e, dir / "lay.ens");
  const auto bytes = slurp(dir / "lay.ens");
  REQUIRE(bytes.size() == 24 + 6 * 4 * 8);
  CHECK(u32_at(bytes, 8) == 6);
  CHECK(u32_at(bytes, 12) == 4);
  CHECK(u32_at(bytes, 16) == 2);
  CHECK(u32_at(bytes, 20) == 3);
  // entry (i, j) at offset 24 + 8 (j d + i)
  double v = 0.0;
  std::memcpy(&v, bytes.data() + 24 + 8 * (2 * 6 + 5), 8);
  CHECK(v == e.data(5, 2));
  // a 3200 x 1000 design ensemble carries 3200 * 1000 * 8 payload bytes
  CHECK(std::uint64_t{3200} * 1000 * 8 == 25'600'000u);
}

TEST_CASE("save/load round trip is bit exact") {
  testing::TempDir dir("rt");
  const auto e = design_ensemble(2, 5, 4, 5);
  save_ensemble(e, dir / "rt");
  for (const char* name : {"rt", "rt.ens", "rt.json"}) {
    const auto back = load_ensemble(dir / name);
    CHECK(back.data == e.data);
    CHECK(back.grid == e.grid);
    CHECK(back.records == e.records);
    CHECK(back.kind == EnsembleKind::Design);
  }

  // arbitrary finite matrix, values outside [0,1]
  auto m = Ensemble::from_matrix(testing::random_matrix(10, 4, 9, -1e3, 1e3));
  m.data(0, 0) = std::numeric_limits<double>::denorm_min();
  save_ensemble(m, dir / "mat");
  const auto back = load_ensemble(dir / "mat");
  CHECK(back.data == m.data);
  CHECK(back.kind == EnsembleKind::Matrix);
  CHECK(slurp(dir / "mat.ens") == [&] {
    save_ensemble(back, dir / "mat2");
    return slurp(dir / "mat2.ens");
  }());
}

TEST_CASE("load rejects bad magic, size mismatch, and NaN payload") {
  testing::TempDir dir("bad");
  const auto e = design_ensemble(1, 2, 3, 1);
  save_ensemble(e, dir / "x");
  const auto bytes = slurp(dir / "x.ens");
  const auto manifest = slurp(dir / "x.json");

  auto expect_error = [&](const std::string& needle) {
    try {
      load_ensemble(dir / "x");
      FAIL("expected an error containing " << needle);
    } catch (const FormatError& err) {
      CHECK(std::string(err.what()).find(needle) != std::string::npos);
    }
  };

  spit(dir / "x.ens", "XXXX" + bytes.substr(4));
  expect_error("unsupported format");

  auto wrong_version = bytes;
  wrong_version[4] = 2;
  spit(dir / "x.ens", wrong_version);
  expect_error("unsupported format");

  spit(dir / "x.ens", bytes.substr(0, bytes.size() - 8));
  expect_error("inconsistent ensemble");

  spit(dir / "x.ens", bytes);
  auto j = nlohmann::json::parse(manifest);
  j["n"] = 4;
  spit(dir / "x.json", j.dump());
  expect_error("inconsistent ensemble");

  spit(dir / "x.json", manifest);
  auto nan_bytes = bytes;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan_bytes.data() + 24 + 8, &nan, 8);
  spit(dir / "x.ens", nan_bytes);
  expect_error("invalid data");

  spit(dir / "x.ens", bytes);
  CHECK_NOTHROW(load_ensemble(dir / "x"));
}

TEST_CASE("design ensembles enforce value and parameter ranges") {
  auto e = design_ensemble(2, 2, 3, 4);
  CHECK_NOTHROW(e.validate());

  auto bad = e;
  bad.data(0, 0) = 1.5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  bad = e;
  bad.records[1].position = 20.5;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  bad = e;
  bad.records[1].filter_size = 1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  bad = e;
  bad.records[2].compliance = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  bad = e;
  bad.records.pop_back();
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  bad = e;
  bad.grid = {3, 2};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  auto mat = Ensemble::from_matrix(Matrix::Constant(3, 2, 7.0));
  CHECK_NOTHROW(mat.validate());
  mat.data(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(mat.validate(), InvalidArgument);
}

TEST_CASE("init tags") {
  CHECK(InitTag::uniform().str() == "uniform");
  CHECK(InitTag::random_with(42).str() == "random:42");
  CHECK(InitTag::parse("random:18446744073709551615") == InitTag::random_with(18446744073709551615ULL));
  CHECK(InitTag::parse("uniform") == InitTag::uniform());
  CHECK_THROWS_AS(InitTag::parse("random:"), FormatError);
  CHECK_THROWS_AS(InitTag::parse("random:-1"), FormatError);
  CHECK_THROWS_AS(InitTag::parse("zeros"), FormatError);
}

TEST_CASE("binary labels") {
  const auto zeros = parse_labels("a,b\n0,0,0\n0,0,0\n", 3);
  CHECK(zeros.f() == 2);
  CHECK(zeros.n == 3);
  for (Index k = 0; k < 2; ++k)
    for (Index i = 0; i < 3; ++i) CHECK_FALSE(zeros.at(k, i));

  const auto l = parse_labels("beam,lattice\n1,0,1\n0,1,0\n", 3);
  CHECK(l.at(0, 0));
  CHECK_FALSE(l.at(0, 1));
  CHECK(l.at(1, 1));

  CHECK_THROWS_AS(parse_labels("a\n0,2,0\n", 3), FormatError);
  CHECK_THROWS_AS(parse_labels("a\n0,1\n", 3), FormatError);
  CHECK_THROWS_AS(parse_labels("a,a\n0,1,0\n1,0,0\n", 3), FormatError);
  CHECK_THROWS_AS(parse_labels("a,b\n0,1,0\n", 3), FormatError);
}

TEST_CASE("signed labels expand to presence and absence") {
  std::ostringstream csv;
  for (int a = 0; a < 40; ++a) csv << (a ? "," : "") << "attr" << a;
  csv << "\n";
  for (int a = 0; a < 40; ++a) csv << (a % 2 ? "1,-1\n" : "-1,-1\n");
  const auto l = parse_signed_labels(csv.str(), 2);
  CHECK(l.f() == 80);
  CHECK(l.names[0] == "attr0");
  CHECK(l.names[1] == "not attr0");
  CHECK_FALSE(l.at(0, 0));
  CHECK(l.at(1, 0));
  CHECK(l.at(2, 0));
  CHECK_FALSE(l.at(3, 0));
  CHECK_THROWS_AS(parse_signed_labels("a\n1,0\n", 2), FormatError);
}
