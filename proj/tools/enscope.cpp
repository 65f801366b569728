#include "enscope/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace enscope;
  CLI::App app{"Representative-subset summaries of design ensembles"};
  app.require_subcommand(1);

  std::string config, out;
  auto* gen = app.add_subcommand("generate", "Run SIMP over a sampled parameter set and write an ensemble");
  gen->add_option("config", config, "sampling config JSON")->required();
  gen->add_option("-o,--out", out, "output base path (.ens + .json)")->required();

  SelectOptions sel;
  auto* selc = app.add_subcommand("select", "Pick a representative subset and its weights");
  selc->add_option("ensemble", sel.ensemble)->required();
  selc->add_option("--method", sel.method, "gomp-nn | id | km | rand")->required();
  selc->add_option("--m", sel.m, "subset size")->capture_default_str();
  selc->add_option("--mode", sel.mode, "nn | pn");
  selc->add_option("--seed", sel.seed)->capture_default_str();
  selc->add_option("-o,--out", sel.out, "SubsetResult JSON")->required();

  EvaluateOptions ev;
  auto* evc = app.add_subcommand("evaluate", "Compare all methods against the random baseline");
  evc->add_option("ensemble", ev.ensemble)->required();
  evc->add_option("--m-range", ev.m_range, "k or lo-hi")->capture_default_str();
  evc->add_option("--trials", ev.trials)->capture_default_str();
  evc->add_option("--seed", ev.seed)->capture_default_str();
  evc->add_option("--labels", ev.labels, "feature label CSV");
  evc->add_flag("--signed-labels", ev.signed_labels, "labels hold -1/1 attributes");
  evc->add_option("-o,--out", ev.out, "CSV output (default stdout)");
  evc->add_option("--json", ev.json, "also write rows as JSON");

  ServeOptions sv;
  auto* svc = app.add_subcommand("serve", "Serve the JSON API (ENSCOPE_PORT overrides --port)");
  svc->add_option("ensemble", sv.ensemble)->required();
  svc->add_option("--host", sv.host)->capture_default_str();
  svc->add_option("--port", sv.port)->capture_default_str();
  svc->add_option("--labels", sv.labels);
  svc->add_flag("--signed-labels", sv.signed_labels);
  svc->add_option("--ui-dir", sv.ui_dir, "static files mounted at /");

  std::string rast_ens, rast_out;
  Index rast_id = 0;
  auto* rc = app.add_subcommand("raster", "Export one design as a grayscale PNG");
  rc->add_option("ensemble", rast_ens)->required();
  rc->add_option("--id", rast_id)->required();
  rc->add_option("-o,--out", rast_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*gen) return cmd_generate(config, out, std::cout, std::cerr);
  if (*selc) return cmd_select(sel, std::cout, std::cerr);
  if (*evc) return cmd_evaluate(ev, std::cout, std::cerr);
  if (*svc) return cmd_serve(sv, std::cerr);
  return cmd_raster(rast_ens, rast_id, rast_out, std::cerr);
}
