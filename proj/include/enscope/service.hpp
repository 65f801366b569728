#pragma once

#include "enscope/ensemble.hpp"
#include "enscope/selection.hpp"
#include "enscope/solvers.hpp"

#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>

namespace enscope {

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using QueryParams = std::map<std::string, std::string>;

/// Read-only JSON/PNG API over one loaded ensemble. handle() is safe to call
/// from many threads; subset and PCA results are computed on first request
/// and shared, with concurrent requests for the same key waiting on one
/// computation.
class Service {
 public:
  explicit Service(Ensemble ensemble, std::optional<FeatureLabels> labels = std::nullopt);

  Response handle(const std::string& path, const QueryParams& params);

  const Ensemble& ensemble() const { return ensemble_; }
  /// Number of subset computations actually run (cache misses).
  std::size_t subset_computations() const;

 private:
  struct SubsetKey {
    Method method;
    Index m;
    WeightMode mode;
    std::uint64_t seed;
    auto operator<=>(const SubsetKey&) const = default;
  };
  struct SubsetEntry {
    std::string subset_body;
    std::string weights_body;
  };
  using SubsetFuture = std::shared_future<std::shared_ptr<const SubsetEntry>>;
  using PcaFuture = std::shared_future<std::shared_ptr<const SvdTruncation>>;

  SubsetKey parse_subset_query(const QueryParams& params) const;
  SubsetFuture subset(const SubsetKey& key);
  PcaFuture pca(Index k);

  Response ensemble_info() const;
  Response records() const;
  Response raster(const std::string& name);
  Response pca_info(const QueryParams& params);

  Ensemble ensemble_;
  std::optional<FeatureLabels> labels_;

  mutable std::mutex mutex_;
  std::map<SubsetKey, SubsetFuture> subsets_;
  std::map<Index, PcaFuture> pcas_;
  std::size_t computations_ = 0;
};

/// HTTP binding of a Service. Static files under `ui_dir` are served at "/"
/// when given.
class HttpServer {
 public:
  HttpServer(Service& service, const std::optional<std::filesystem::path>& ui_dir = std::nullopt);
  ~HttpServer();

  /// Binds host:port (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace enscope
