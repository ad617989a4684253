// oranlb: simulate, identify, check and stabilize RU load balancing.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "oranlb/pipeline.hpp"
#include "oranlb/store.hpp"

namespace fs = std::filesystem;
using namespace oranlb;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<int> degree_self;
  std::optional<int> degree_coupling;
  std::string coupling_mode;
  std::optional<double> threshold;
  bool mask_saturated = false;
  bool stabilize = false;

  PipelineFlags flags() const {
    PipelineFlags f;
    f.seed = seed;
    f.gamma = gamma;
    f.degree_self = degree_self;
    f.degree_coupling = degree_coupling;
    if (!coupling_mode.empty()) f.coupling_mode = coupling_mode_from_string(coupling_mode);
    f.threshold = threshold;
    f.mask_saturated = mask_saturated;
    f.stabilize = stabilize;
    return f;
  }
};

void add_identification_flags(CLI::App* app, Common& c) {
  app->add_option("--gamma", c.gamma, "sparsity weight (default: cross-validated)")->check(CLI::NonNegativeNumber);
  app->add_option("--degree-self", c.degree_self, "highest power of l in f")->check(CLI::PositiveNumber);
  app->add_option("--degree-coupling", c.degree_coupling, "highest power of the load gap in g")
      ->check(CLI::PositiveNumber);
  app->add_option("--coupling-mode", c.coupling_mode, "aggregated | per-edge")
      ->check(CLI::IsMember({"aggregated", "per-edge"}));
  app->add_option("--threshold", c.threshold, "prune coefficients below this magnitude")
      ->check(CLI::NonNegativeNumber);
  app->add_flag("--mask-saturated", c.mask_saturated, "drop samples clipped at a capacity bound");
}

PipelineConfig config_or_default(const std::string& path, const PipelineFlags& flags) {
  PipelineConfig c;
  if (path.empty()) {
    c.scenario = default_scenario();
    for (const auto& ru : c.scenario.rus) {
      c.analysis.identify.prb_min.push_back(ru.prb_min);
      c.analysis.identify.prb_max.push_back(ru.prb_max);
    }
  } else {
    c = load_pipeline_config(path);
  }
  apply_flags(c, flags);
  return c;
}

void print_summary(const char* name, const PhaseSummary& s) {
  std::printf("%-11s verdict %-13s eigen %-13s max eig %+.4g  handovers %zu  ping-pong %zu  tail |l-1| %.4f\n", name,
              std::string(to_string(s.verdict)).c_str(), std::string(to_string(s.eigen_verdict)).c_str(),
              s.max_eigenvalue, s.handovers, s.ping_pong_events, s.tail_deviation);
}

int cmd_simulate(const Common& c) {
  const auto cfg = config_or_default(c.config, c.flags());
  const auto run = run_scenario(cfg.scenario);
  const fs::path dir = c.out;
  fs::create_directories(dir);
  store::write_telemetry(run.rows, dir / "telemetry.csv");
  std::ofstream hl(dir / "handovers.csv", std::ios::binary);
  write_handover_log(run.handovers, hl);
  const auto events =
      detect_ping_pong(run.handovers, cfg.scenario.ping_pong.window, cfg.scenario.ping_pong.bounce_threshold);
  std::printf("%lld steps, %zu RUs, %zu handovers, %zu ping-pong events -> %s\n",
              static_cast<long long>(cfg.scenario.steps), cfg.scenario.n_rus(), run.handovers.size(), events.size(),
              dir.string().c_str());
  return 0;
}

int cmd_identify(const Common& c, const std::string& telemetry) {
  const auto cfg = config_or_default(c.config, c.flags());
  const auto series = identification_window(store::read_telemetry(fs::path(telemetry)), cfg.analysis.warmup_steps);
  const auto model = identify_network(series, cfg.scenario.topology, cfg.analysis.library, cfg.analysis.identify);
  const fs::path out = c.out.empty() ? fs::path("model.json") : fs::path(c.out);
  spit(out, model_to_json(model));
  std::printf("gamma %.6g, library d_f = %d, d_g = %d (%s)\n", model.gamma, model.library.degree_self,
              model.library.degree_coupling, std::string(to_string(model.library.coupling_mode)).c_str());
  std::printf("  RU  samples        R^2   xi_f\n");
  for (const auto& r : model.rus) {
    std::printf("%4zu %8zu %10s  ", r.id, r.samples, r.r2 ? std::to_string(*r.r2).c_str() : "undefined");
    for (Eigen::Index k = 0; k < r.xi_f.size(); ++k) std::printf(" %+.4g", r.xi_f(k));
    std::printf("\n");
  }
  std::printf("model -> %s\n", out.string().c_str());
  return 0;
}

int cmd_check(const Common& c, const std::string& model_path) {
  const auto model = model_from_json(slurp(model_path));
  Tolerances tol;
  double l_star = 1.0;
  if (!c.config.empty()) {
    const auto cfg = load_pipeline_config(c.config);
    tol = cfg.analysis.tolerances;
    l_star = cfg.analysis.l_star;
  }
  const auto report = check_proposition1(model, model.topology, tol, l_star);
  std::cout << report_table(report);
  if (!c.out.empty()) spit(c.out, report_to_json(report));
  return exit_code_for(report.verdict);
}

int cmd_stabilize(const Common& c, const std::string& model_path, std::optional<double> epsilon,
                  const std::string& telemetry) {
  const auto model = model_from_json(slurp(model_path));
  double eps = 0.05;
  double dt = 1.0;
  if (!c.config.empty()) {
    const auto cfg = load_pipeline_config(c.config);
    eps = cfg.analysis.epsilon;
    dt = cfg.scenario.dt;
  }
  if (epsilon) eps = *epsilon;
  const auto lin = linearize(model, model.topology);
  const Eigen::MatrixXd P = stabilize_policy(lin.P, model.topology, eps);
  Eigen::VectorXd scale = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(model.size()), 1.0);
  if (!telemetry.empty()) {
    const auto s = store::read_telemetry(fs::path(telemetry));
    for (Eigen::Index i = 0; i < scale.size(); ++i) scale(i) = s.provisioned.col(i).cast<double>().mean();
  }
  const auto text = stabilized_policy_json(P, policy_to_beta(P, scale, dt));
  if (c.out.empty()) {
    std::cout << text;
  } else {
    spit(c.out, text);
    std::printf("stabilized policy -> %s\n", c.out.c_str());
  }
  return 0;
}

int cmd_pipeline(const Common& c) {
  auto cfg = config_or_default(c.config, c.flags());
  const auto result = run_pipeline(cfg, c.out, c.stabilize);
  print_summary("initial", result.before);
  if (result.after) print_summary("stabilized", *result.after);
  std::printf("final verdict: %s (exit %d), %zu artifacts in %s\n",
              std::string(to_string(result.final_verdict)).c_str(), result.exit_code, result.artifacts.size(),
              c.out.c_str());
  return result.exit_code;
}

int cmd_report(const std::string& dir) {
  std::cout << slurp(fs::path(dir) / "summary.json");
  for (const char* name : {"stability.txt", "stability_stabilized.txt"}) {
    const fs::path table = fs::path(dir) / name;
    if (fs::exists(table)) std::cout << "\n" << name << "\n" << slurp(table);
  }
  const auto bad = verify_manifest(dir);
  if (!bad.empty()) {
    for (const auto& b : bad) std::fprintf(stderr, "hash mismatch: %s\n", b.c_str());
    return 1;
  }
  std::printf("\nMANIFEST hashes verified\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"O-RAN load balancing: simulate, identify, certify and stabilize"};
  app.require_subcommand(1);
  Common c;
  std::string telemetry, model, dir;
  std::optional<double> epsilon;

  auto* sim = app.add_subcommand("simulate", "run a scenario and write telemetry.csv and handovers.csv");
  sim->add_option("--config", c.config, "scenario JSON (default: built-in 12-RU scenario)");
  sim->add_option("--out", c.out, "output directory")->required();
  sim->add_option("--seed", c.seed, "override the scenario seed");

  auto* idf = app.add_subcommand("identify", "identify the load dynamics from telemetry");
  idf->add_option("--config", c.config, "config with topology and identification settings");
  idf->add_option("--telemetry", telemetry, "telemetry CSV")->required()->check(CLI::ExistingFile);
  idf->add_option("--out", c.out, "model JSON path (default model.json)");
  add_identification_flags(idf, c);

  auto* chk = app.add_subcommand("check", "stability report for an identified model (exit 0 stable, 2 not)");
  chk->add_option("--model", model, "model JSON")->required()->check(CLI::ExistingFile);
  chk->add_option("--config", c.config, "config with stability tolerances");
  chk->add_option("--out", c.out, "report JSON path");

  auto* stb = app.add_subcommand("stabilize", "project the model's coupling onto the stable set");
  stb->add_option("--model", model, "model JSON")->required()->check(CLI::ExistingFile);
  stb->add_option("--config", c.config, "config with epsilon and dt");
  stb->add_option("--epsilon", epsilon, "largest allowed coupling slope, negated")->check(CLI::PositiveNumber);
  stb->add_option("--telemetry", telemetry, "telemetry for the PRB scale of beta")->check(CLI::ExistingFile);
  stb->add_option("--out", c.out, "output JSON path (default stdout)");

  auto* pip = app.add_subcommand("pipeline", "simulate, identify, check and optionally stabilize and re-run");
  pip->add_option("--config", c.config, "pipeline config JSON (default: built-in scenario)");
  pip->add_option("--out", c.out, "output directory")->required();
  pip->add_option("--seed", c.seed, "override the scenario seed");
  pip->add_flag("--stabilize", c.stabilize, "stabilize and re-simulate when the verdict is not stable");
  add_identification_flags(pip, c);

  auto* rep = app.add_subcommand("report", "print a pipeline summary and verify its MANIFEST");
  rep->add_option("--dir", dir, "pipeline output directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    if (*sim) return cmd_simulate(c);
    if (*idf) return cmd_identify(c, telemetry);
    if (*chk) return cmd_check(c, model);
    if (*stb) return cmd_stabilize(c, model, epsilon, telemetry);
    if (*pip) return cmd_pipeline(c);
    if (*rep) return cmd_report(dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
