#pragma once

#include "enscope/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>

namespace enscope {

// Each command returns a process exit code: 0 on success, 1 on failure with a
// message written to `err`.

int cmd_generate(const std::filesystem::path& config, const std::filesystem::path& out,
                 std::ostream& log, std::ostream& err);

struct SelectOptions {
  std::filesystem::path ensemble;
  std::string method;
  Index m = 8;
  std::optional<std::string> mode;  // default: PN for id, NN otherwise
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

int cmd_select(const SelectOptions& opts, std::ostream& log, std::ostream& err);

struct EvaluateOptions {
  std::filesystem::path ensemble;
  std::string m_range = "8";  // "8" or "2-12"
  Index trials = 100;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> labels;
  bool signed_labels = false;
  std::optional<std::filesystem::path> out;   // CSV; stdout when absent
  std::optional<std::filesystem::path> json;
};

int cmd_evaluate(const EvaluateOptions& opts, std::ostream& log, std::ostream& err);

struct ServeOptions {
  std::filesystem::path ensemble;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> labels;
  bool signed_labels = false;
  std::optional<std::filesystem::path> ui_dir;
};

int cmd_serve(const ServeOptions& opts, std::ostream& err);

int cmd_raster(const std::filesystem::path& ensemble, Index id, const std::filesystem::path& out,
               std::ostream& err);

/// "k" -> (k, k); "a-b" -> (a, b).
std::pair<Index, Index> parse_m_range(const std::string& text);

/// ENSCOPE_PORT when set and valid, else `fallback`.
int resolve_port(int fallback);

}  // namespace enscope
