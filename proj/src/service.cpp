#include "enscope/service.hpp"

#include "enscope/raster.hpp"

#include <httplib.h>

#include <charconv>

namespace enscope {

namespace {

constexpr Index kDefaultSubsetSize = 8;
constexpr Index kDefaultPcaRank = 8;

// Query-level failure mapped to an HTTP status.
struct HttpError : Error {
  int status;
  HttpError(int s, const std::string& msg) : Error(msg), status(s) {}
};

Response json_response(const nlohmann::json& j, int status = 200) {
  return {status, "application/json", j.dump()};
}

Response error_response(int status, const std::string& message) {
  return json_response({{"error", message}}, status);
}

std::optional<std::int64_t> parse_int(const std::string& text) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> parse_uint(const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return v;
}

WeightMode default_mode(Method m) { return m == Method::ID ? WeightMode::PN : WeightMode::NN; }

}  // namespace

Service::Service(Ensemble ensemble, std::optional<FeatureLabels> labels)
    : ensemble_(std::move(ensemble)), labels_(std::move(labels)) {
  ensemble_.validate();
  if (labels_)
    require(labels_->n == ensemble_.n(), "labels sample count does not match the ensemble");
}

std::size_t Service::subset_computations() const {
  std::lock_guard lock(mutex_);
  return computations_;
}

Response Service::handle(const std::string& path, const QueryParams& params) {
  try {
    if (path == "/api/ensemble") return ensemble_info();
    if (path == "/api/records") return records();
    if (path == "/api/subset") return {200, "application/json", subset(parse_subset_query(params)).get()->subset_body};
    if (path == "/api/weights") return {200, "application/json", subset(parse_subset_query(params)).get()->weights_body};
    if (path == "/api/pca") return pca_info(params);
    if (path == "/api/labels") {
      if (!labels_) return error_response(404, "no labels loaded");
      return json_response(labels_to_json(*labels_));
    }
    static const std::string kRaster = "/api/raster/";
    if (path.rfind(kRaster, 0) == 0) return raster(path.substr(kRaster.size()));
    return error_response(404, "unknown route " + path);
  } catch (const HttpError& e) {
    return error_response(e.status, e.what());
  } catch (const InvalidArgument& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

Service::SubsetKey Service::parse_subset_query(const QueryParams& params) const {
  auto get = [&](const char* name) -> std::optional<std::string> {
    const auto it = params.find(name);
    return it == params.end() ? std::nullopt : std::optional(it->second);
  };
  const auto method_text = get("method");
  if (!method_text) throw HttpError(400, "missing query parameter 'method'");
  SubsetKey key{};
  try {
    key.method = parse_method(*method_text);
  } catch (const InvalidArgument& e) {
    throw HttpError(400, e.what());
  }
  key.m = kDefaultSubsetSize;
  if (const auto m = get("m")) {
    const auto v = parse_int(*m);
    if (!v) throw HttpError(400, "m must be an integer");
    key.m = *v;
  }
  if (key.m < 1 || key.m > ensemble_.n())
    throw HttpError(400, "m must lie in 1.." + std::to_string(ensemble_.n()));
  key.mode = default_mode(key.method);
  if (const auto mode = get("mode")) {
    try {
      key.mode = parse_weight_mode(*mode);
    } catch (const InvalidArgument& e) {
      throw HttpError(400, e.what());
    }
  }
  check_method_mode(key.method, key.mode);
  key.seed = 0;
  if (const auto seed = get("seed")) {
    const auto v = parse_uint(*seed);
    if (!v) throw HttpError(400, "seed must be a non-negative integer");
    key.seed = *v;
  }
  return key;
}

Service::SubsetFuture Service::subset(const SubsetKey& key) {
  std::promise<std::shared_ptr<const SubsetEntry>> promise;
  SubsetFuture out;
  {
    std::lock_guard lock(mutex_);
    if (const auto it = subsets_.find(key); it != subsets_.end()) return it->second;
    out = promise.get_future().share();
    subsets_.emplace(key, out);
    ++computations_;
  }
  try {
    SelectionConfig cfg;
    cfg.m = key.m;
    cfg.weight_mode = key.mode;
    cfg.seed = key.seed;
    const auto r = select(key.method, ensemble_.data, cfg);
    auto entry = std::make_shared<SubsetEntry>();
    entry->subset_body = r.to_json().dump();
    nlohmann::json w = {{"method", to_string(key.method)}, {"m", key.m}, {"mode", to_string(key.mode)},
                        {"seed", key.seed}, {"indices", r.indices}};
    nlohmann::json rows = nlohmann::json::array();
    for (Index q = 0; q < r.weights.rows(); ++q) {
      nlohmann::json row = nlohmann::json::array();
      for (Index i = 0; i < r.weights.cols(); ++i) row.push_back(r.weights(q, i));
      rows.push_back(std::move(row));
    }
    w["weights"] = std::move(rows);
    entry->weights_body = w.dump();
    promise.set_value(std::move(entry));
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    subsets_.erase(key);  // failures are not cached
  }
  return out;
}

Service::PcaFuture Service::pca(Index k) {
  std::promise<std::shared_ptr<const SvdTruncation>> promise;
  PcaFuture out;
  {
    std::lock_guard lock(mutex_);
    if (const auto it = pcas_.find(k); it != pcas_.end()) return it->second;
    out = promise.get_future().share();
    pcas_.emplace(k, out);
  }
  try {
    promise.set_value(std::make_shared<const SvdTruncation>(truncated_svd(ensemble_.data, k, true)));
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    pcas_.erase(k);
  }
  return out;
}

Response Service::ensemble_info() const {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : ensemble_.records) recs.push_back(record_to_json(r));
  return json_response({{"n", ensemble_.n()},
                        {"d", ensemble_.d()},
                        {"grid", {{"nely", ensemble_.grid.nely}, {"nelx", ensemble_.grid.nelx}}},
                        {"records", std::move(recs)}});
}

Response Service::records() const {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : ensemble_.records) recs.push_back(record_to_json(r));
  return json_response(recs);
}

Response Service::pca_info(const QueryParams& params) {
  const Index limit = std::min(ensemble_.d(), ensemble_.n());
  Index k = std::min(kDefaultPcaRank, limit);
  if (const auto it = params.find("k"); it != params.end()) {
    const auto v = parse_int(it->second);
    if (!v) throw HttpError(400, "k must be an integer");
    k = *v;
  }
  if (k < 1 || k > limit) throw HttpError(400, "k must lie in 1.." + std::to_string(limit));
  const auto t = pca(k).get();
  const Matrix w = pca_weights(*t, ensemble_.data);
  nlohmann::json rows = nlohmann::json::array();
  for (Index q = 0; q < w.rows(); ++q) {
    nlohmann::json row = nlohmann::json::array();
    for (Index i = 0; i < w.cols(); ++i) row.push_back(w(q, i));
    rows.push_back(std::move(row));
  }
  nlohmann::json rasters = nlohmann::json::array();
  for (Index j = -1; j < k; ++j) rasters.push_back("/api/raster/pca/" + std::to_string(j) + ".png");
  return json_response({{"k", k},
                        {"mean_id", -1},
                        {"singular_values", std::vector<double>(t->singular_values.begin(), t->singular_values.end())},
                        {"tail_energy", t->tail_energy},
                        {"rasters", std::move(rasters)},
                        {"weights", std::move(rows)}});
}

Response Service::raster(const std::string& name) {
  static const std::string kExt = ".png";
  if (name.size() <= kExt.size() || name.compare(name.size() - kExt.size(), kExt.size(), kExt) != 0)
    throw HttpError(404, "unknown raster " + name);
  std::string stem = name.substr(0, name.size() - kExt.size());
  const Grid grid = ensemble_.grid;

  static const std::string kPca = "pca/";
  if (stem.rfind(kPca, 0) == 0) {
    const auto j = parse_int(stem.substr(kPca.size()));
    const Index limit = std::min(ensemble_.d(), ensemble_.n());
    if (!j || *j < -1 || *j >= limit) throw HttpError(404, "unknown PCA component " + stem.substr(kPca.size()));
    if (*j == -1) {
      const Vector mean = ensemble_.data.rowwise().mean();
      return {200, "image/png", density_png(reshape(mean, grid))};
    }
    const auto t = pca(*j + 1).get();
    return {200, "image/png", signed_png(reshape(t->left.col(*j), grid))};
  }

  const auto id = parse_int(stem);
  if (!id || *id < 0 || *id >= ensemble_.n()) throw HttpError(404, "unknown sample " + stem);
  return {200, "image/png", density_png(reshape(ensemble_.data.col(*id), grid))};
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(Service& service, const std::optional<std::filesystem::path>& ui_dir)
    : impl_(std::make_unique<Impl>()) {
  impl_->server.Get(R"(/api/.*)", [&service](const httplib::Request& req, httplib::Response& res) {
    QueryParams params;
    for (const auto& [k, v] : req.params) params.emplace(k, v);  // first value wins
    const auto out = service.handle(req.path, params);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  });
  if (ui_dir && !impl_->server.set_mount_point("/", ui_dir->string()))
    throw InvalidArgument("ui directory not found: " + ui_dir->string());
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                              : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace enscope
