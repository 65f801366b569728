#include "enscope/raster.hpp"
#include "enscope/service.hpp"

#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <cmath>
#include <fstream>
#include <thread>

using namespace enscope;

namespace {

Ensemble small_ensemble() {
  Ensemble e;
  e.grid = {4, 6};
  e.data = testing::random_matrix(24, 15, 8, 0.0, 1.0);
  e.data(0, 12) = 0.0;
  e.data(1, 12) = 1.0;
  e.data(2, 12) = 0.5;  // rounds half away from zero: 128
  for (Index i = 0; i < 15; ++i) {
    DesignRecordMeta r;
    r.id = i;
    r.position = static_cast<double>(i) - 7.0;
    r.angle = 0.2 * static_cast<double>(i);
    r.filter_size = 1.5;
    r.compliance = 1.0 + static_cast<double>(i);
    r.max_stress = 2.0;
    r.avg_stress = 1.0;
    e.records.push_back(r);
  }
  return e;
}

Response get(Service& s, const std::string& path, QueryParams q = {}) { return s.handle(path, q); }

}  // namespace

TEST_CASE("ensemble and records endpoints echo the manifest") {
  Service s(small_ensemble());
  const auto r = get(s, "/api/ensemble");
  CHECK(r.status == 200);
  CHECK(r.content_type == "application/json");
  const auto j = nlohmann::json::parse(r.body);
  CHECK(j["n"] == 15);
  CHECK(j["d"] == 24);
  CHECK(j["grid"]["nely"] == 4);
  CHECK(j["grid"]["nelx"] == 6);
  CHECK(j["records"].size() == 15);
  CHECK(j["records"][3] == record_to_json(s.ensemble().records[3]));
  CHECK(nlohmann::json::parse(get(s, "/api/records").body) == j["records"]);
}

TEST_CASE("subset and weights are computed once and served identically") {
  Service s(small_ensemble());
  const QueryParams q{{"method", "gomp-nn"}, {"m", "4"}};
  const auto a = get(s, "/api/subset", q);
  REQUIRE(a.status == 200);
  const auto b = get(s, "/api/subset", q);
  CHECK(a.body == b.body);
  CHECK(s.subset_computations() == 1);

  SelectionConfig cfg;
  cfg.m = 4;
  cfg.seed = 0;
  const auto direct = select(Method::GompNN, s.ensemble().data, cfg);
  CHECK(a.body == direct.to_json().dump());

  const auto w = nlohmann::json::parse(get(s, "/api/weights", q).body);
  CHECK(s.subset_computations() == 1);
  REQUIRE(w["weights"].size() == 4);
  for (Index qi = 0; qi < 4; ++qi) {
    REQUIRE(w["weights"][qi].size() == 15);
    for (Index i = 0; i < 15; ++i) CHECK(w["weights"][qi][i].get<double>() == direct.weights(qi, i));
  }
  CHECK(w["indices"] == nlohmann::json(direct.indices));

  // explicit defaults share the cache entry
  get(s, "/api/subset", {{"method", "GOMP_NN"}, {"m", "4"}, {"mode", "nn"}, {"seed", "0"}});
  CHECK(s.subset_computations() == 1);
  get(s, "/api/subset", {{"method", "km"}, {"m", "4"}, {"seed", "3"}});
  CHECK(s.subset_computations() == 2);
}

TEST_CASE("concurrent requests coalesce and match serial results") {
  Service serial(small_ensemble());
  Service shared(small_ensemble());
  const std::vector<QueryParams> queries = {
      {{"method", "gomp-nn"}, {"m", "5"}},
      {{"method", "id"}, {"m", "3"}},
      {{"method", "km"}, {"m", "4"}, {"mode", "pn"}, {"seed", "2"}},
      {{"method", "rand"}, {"m", "6"}, {"seed", "11"}},
  };
  std::vector<std::string> want;
  for (const auto& q : queries) want.push_back(get(serial, "/api/subset", q).body);

  constexpr int kThreads = 8;
  std::vector<std::string> got(kThreads * queries.size());
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < kThreads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t k = 0; k < queries.size(); ++k) {
          const auto& q = queries[(k + static_cast<std::size_t>(t)) % queries.size()];
          got[static_cast<std::size_t>(t) * queries.size() + k] = get(shared, "/api/subset", q).body;
        }
      });
  }
  for (int t = 0; t < kThreads; ++t)
    for (std::size_t k = 0; k < queries.size(); ++k)
      CHECK(got[static_cast<std::size_t>(t) * queries.size() + k] ==
            want[(k + static_cast<std::size_t>(t)) % queries.size()]);
  CHECK(shared.subset_computations() == queries.size());
}

TEST_CASE("invalid queries") {
  Service s(small_ensemble());
  CHECK(get(s, "/api/subset", {{"method", "pca"}, {"m", "3"}}).status == 400);
  CHECK(get(s, "/api/subset", {{"m", "3"}}).status == 400);
  CHECK(get(s, "/api/subset", {{"method", "gomp-nn"}, {"m", "16"}}).status == 400);
  CHECK(get(s, "/api/subset", {{"method", "gomp-nn"}, {"m", "0"}}).status == 400);
  CHECK(get(s, "/api/subset", {{"method", "gomp-nn"}, {"m", "3x"}}).status == 400);
  CHECK(get(s, "/api/subset", {{"method", "rand"}, {"seed", "-1"}}).status == 400);
  const auto pair = get(s, "/api/weights", {{"method", "gomp-nn"}, {"mode", "pn"}});
  CHECK(pair.status == 400);
  CHECK(pair.body.find("GOMP requires non-negative weights") != std::string::npos);
  CHECK(get(s, "/api/subset", {{"method", "id"}, {"mode", "nn"}}).status == 400);
  CHECK(get(s, "/api/nothing").status == 404);
  CHECK(get(s, "/api/raster/15.png").status == 404);
  CHECK(get(s, "/api/raster/-1.png").status == 404);
  CHECK(get(s, "/api/raster/3.jpg").status == 404);
  CHECK(get(s, "/api/raster/abc.png").status == 404);
  CHECK(get(s, "/api/labels").status == 404);
  CHECK(s.subset_computations() == 0);
}

TEST_CASE("sample rasters are pixel exact") {
  Service s(small_ensemble());
  for (Index id : {0, 12, 14}) {
    const auto r = get(s, "/api/raster/" + std::to_string(id) + ".png");
    REQUIRE(r.status == 200);
    CHECK(r.content_type == "image/png");
    const auto img = decode_png(r.body);
    REQUIRE(img.width == 6);
    REQUIRE(img.height == 4);
    REQUIRE(img.channels == 1);
    for (int row = 0; row < 4; ++row)
      for (int col = 0; col < 6; ++col) {
        const double x = s.ensemble().data(row * 6 + col, id);
        CHECK(static_cast<int>(img.at(row, col)) == static_cast<int>(std::round(255.0 * (1.0 - x))));
      }
  }
  const auto spike = decode_png(get(s, "/api/raster/12.png").body);
  CHECK(spike.at(0, 0) == 255);
  CHECK(spike.at(0, 1) == 0);
  CHECK(spike.at(0, 2) == 128);
}

TEST_CASE("pca endpoints") {
  Service s(small_ensemble());
  const auto r = get(s, "/api/pca", {{"k", "3"}});
  REQUIRE(r.status == 200);
  const auto j = nlohmann::json::parse(r.body);
  CHECK(j["k"] == 3);
  CHECK(j["mean_id"] == -1);
  CHECK(j["singular_values"].size() == 3);
  CHECK(j["weights"].size() == 3);
  CHECK(j["weights"][0].size() == 15);
  CHECK(j["rasters"][0] == "/api/raster/pca/-1.png");

  const auto mean = decode_png(get(s, "/api/raster/pca/-1.png").body);
  const Vector mu = s.ensemble().data.rowwise().mean();
  CHECK(mean.channels == 1);
  CHECK(static_cast<int>(mean.at(1, 2)) == static_cast<int>(std::round(255.0 * (1.0 - mu(8)))));

  const auto comp = get(s, "/api/raster/pca/2.png");
  REQUIRE(comp.status == 200);
  const auto img = decode_png(comp.body);
  CHECK(img.channels == 3);
  CHECK(img.width == 6);
  CHECK(get(s, "/api/raster/pca/2.png").body == comp.body);
  CHECK(get(s, "/api/raster/pca/15.png").status == 404);
  CHECK(get(s, "/api/raster/pca/-2.png").status == 404);
  CHECK(get(s, "/api/pca", {{"k", "0"}}).status == 400);
  CHECK(get(s, "/api/pca", {{"k", "99"}}).status == 400);
  CHECK(get(s, "/api/pca").status == 200);
}

TEST_CASE("labels endpoint") {
  const auto e = small_ensemble();
  std::string csv = "beam,lattice\n";
  for (int f = 0; f < 2; ++f) {
    for (int i = 0; i < 15; ++i) csv += (i ? "," : "") + std::to_string((i + f) % 2);
    csv += "\n";
  }
  Service s(e, parse_labels(csv, 15));
  const auto r = get(s, "/api/labels");
  CHECK(r.status == 200);
  CHECK(nlohmann::json::parse(r.body) == labels_to_json(parse_labels(csv, 15)));
  CHECK_THROWS_AS(Service(e, parse_labels("a\n1,0\n", 2)), InvalidArgument);
}

TEST_CASE("signed raster colormap") {
  Matrix m(1, 3);
  m << -2, 0, 1;
  const auto img = decode_png(signed_png(m));
  CHECK(img.at(0, 0, 0) == 0);
  CHECK(img.at(0, 0, 2) == 255);
  CHECK(img.at(0, 1, 0) == 255);
  CHECK(img.at(0, 1, 1) == 255);
  CHECK(img.at(0, 1, 2) == 255);
  CHECK(img.at(0, 2, 0) == 255);
  CHECK(img.at(0, 2, 1) == 128);
  CHECK_THROWS_AS(decode_png("not a png"), FormatError);
}

TEST_CASE("http binding") {
  Service s(small_ensemble());
  testing::TempDir ui("ui");
  {
    std::ofstream(ui / "index.html") << "<html>explorer</html>";
  }
  HttpServer server(s, ui.path);
  const int port = server.bind("127.0.0.1", 0);
  std::jthread worker([&] { server.listen(); });

  httplib::Client client("127.0.0.1", port);
  for (int attempt = 0; attempt < 100 && !client.Get("/api/ensemble"); ++attempt)
    std::this_thread::sleep_for(std::chrono::milliseconds(20));

  const auto ens = client.Get("/api/ensemble");
  REQUIRE(ens);
  CHECK(ens->status == 200);
  CHECK(ens->body == get(s, "/api/ensemble").body);

  const auto sub = client.Get("/api/subset?method=id&m=3");
  REQUIRE(sub);
  CHECK(sub->status == 200);
  CHECK(sub->body == get(s, "/api/subset", {{"method", "id"}, {"m", "3"}}).body);

  const auto bad = client.Get("/api/subset?method=gomp-nn&m=99");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  const auto png = client.Get("/api/raster/2.png");
  REQUIRE(png);
  CHECK(png->get_header_value("Content-Type") == "image/png");
  CHECK(png->body == get(s, "/api/raster/2.png").body);

  const auto page = client.Get("/index.html");
  REQUIRE(page);
  CHECK(page->body == "<html>explorer</html>");

  server.stop();
}
