#include "enscope/commands.hpp"

#include "enscope/evaluation.hpp"
#include "enscope/raster.hpp"
#include "enscope/service.hpp"
#include "enscope/topopt.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace enscope {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << data;
  if (!out) throw Error("write failed: " + path.string());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::optional<FeatureLabels> maybe_labels(const std::optional<std::filesystem::path>& path, bool is_signed,
                                          Index n) {
  if (!path) return std::nullopt;
  return is_signed ? load_signed_labels(*path, n) : load_labels(*path, n);
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

std::pair<Index, Index> parse_m_range(const std::string& text) {
  auto to_index = [&](const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw InvalidArgument("bad m range '" + text + "'");
    return static_cast<Index>(v);
  };
  const auto dash = text.find('-');
  if (dash == std::string::npos) {
    const Index m = to_index(text);
    return {m, m};
  }
  const Index lo = to_index(text.substr(0, dash));
  const Index hi = to_index(text.substr(dash + 1));
  require(lo <= hi, "m range must be ascending");
  return {lo, hi};
}

int resolve_port(int fallback) {
  if (const char* env = std::getenv("ENSCOPE_PORT")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0 && v < 65536) return static_cast<int>(v);
  }
  return fallback;
}

int cmd_generate(const std::filesystem::path& config, const std::filesystem::path& out, std::ostream& log,
                 std::ostream& err) {
  return guarded(err, [&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(config));
    } catch (const nlohmann::json::parse_error& e) {
      throw InvalidArgument(std::string("config parse error: ") + e.what());
    }
    const auto spec = SamplingSpec::from_json(j);
    const auto start = std::chrono::steady_clock::now();
    Index done = 0;
    const auto ens = generate_ensemble(spec, [&](Index id, const TopoResult& r) {
      ++done;
      log << "[" << done << "/" << spec.n << "] sample " << id << " iterations " << r.iterations
          << " compliance " << fmt(r.compliance) << (r.converged ? "" : " (iteration cap)") << "\n"
          << std::flush;
    });
    save_ensemble(ens, out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << "wrote " << ens.n() << " designs to " << ensemble_base(out).string() << ".ens in " << fmt(secs)
        << " s\n";
    return 0;
  });
}

int cmd_select(const SelectOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const Method method = parse_method(opts.method);
    const WeightMode mode = opts.mode ? parse_weight_mode(*opts.mode)
                                      : (method == Method::ID ? WeightMode::PN : WeightMode::NN);
    check_method_mode(method, mode);
    const auto ens = load_ensemble(opts.ensemble);
    SelectionConfig cfg;
    cfg.m = opts.m;
    cfg.weight_mode = mode;
    cfg.seed = opts.seed;
    const auto r = select(method, ens.data, cfg);
    write_file(opts.out, r.to_json().dump(1) + "\n");
    for (const auto& w : r.warnings) err << "warning: " << w << "\n";
    log << "error " << fmt(r.error) << "\n";
    return 0;
  });
}

int cmd_evaluate(const EvaluateOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto [lo, hi] = parse_m_range(opts.m_range);
    const auto ens = load_ensemble(opts.ensemble);
    const auto labels = maybe_labels(opts.labels, opts.signed_labels, ens.n());
    ComparisonOptions co;
    co.m_lo = lo;
    co.m_hi = hi;
    co.trials = opts.trials;
    co.seed = opts.seed;
    co.labels = labels ? &*labels : nullptr;
    const auto rows = compare_methods(ens.data, co);
    const auto csv = comparison_csv(rows);
    if (opts.out)
      write_file(*opts.out, csv);
    else
      log << csv;
    if (opts.json) write_file(*opts.json, comparison_json(rows).dump(1) + "\n");
    return 0;
  });
}

int cmd_serve(const ServeOptions& opts, std::ostream& err) {
  return guarded(err, [&] {
    auto ens = load_ensemble(opts.ensemble);
    auto labels = maybe_labels(opts.labels, opts.signed_labels, ens.n());
    Service service(std::move(ens), std::move(labels));
    HttpServer server(service, opts.ui_dir);
    const int port = server.bind(opts.host, resolve_port(opts.port));
    err << "serving on http://" << opts.host << ":" << port << "\n" << std::flush;
    server.listen();
    return 0;
  });
}

int cmd_raster(const std::filesystem::path& ensemble, Index id, const std::filesystem::path& out,
               std::ostream& err) {
  return guarded(err, [&] {
    const auto ens = load_ensemble(ensemble);
    require(id >= 0 && id < ens.n(), "sample id out of range");
    write_file(out, density_png(reshape(ens.data.col(id), ens.grid)));
    return 0;
  });
}

}  // namespace enscope
