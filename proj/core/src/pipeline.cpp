#include "oranlb/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include <json.hpp>

#include "oranlb/error.hpp"
#include "oranlb/store.hpp"

namespace oranlb {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

PipelineConfig pipeline_config_from_json(std::string_view text) {
  PipelineConfig c;
  c.scenario = scenario_from_json(text);
  auto& a = c.analysis;
  for (const auto& ru : c.scenario.rus) {
    a.identify.prb_min.push_back(ru.prb_min);
    a.identify.prb_max.push_back(ru.prb_max);
  }
  const auto j = json::parse(text);
  try {
    if (j.contains("identification")) {
      const auto& s = j["identification"];
      a.library.degree_self = s.value("degree_self", a.library.degree_self);
      a.library.degree_coupling = s.value("degree_coupling", a.library.degree_coupling);
      if (s.contains("coupling_mode")) a.library.coupling_mode = coupling_mode_from_string(s["coupling_mode"].get<std::string>());
      if (s.contains("gamma") && s["gamma"].is_number()) a.identify.gamma = s["gamma"].get<double>();
      if (s.contains("scheme")) a.identify.scheme = diff_scheme_from_string(s["scheme"].get<std::string>());
      a.identify.regress.threshold = s.value("threshold", a.identify.regress.threshold);
      a.identify.mask_saturated = s.value("mask_saturated", a.identify.mask_saturated);
      a.identify.cv_folds = s.value("cv_folds", a.identify.cv_folds);
      a.identify.cv_grid = s.value("cv_grid", a.identify.cv_grid);
      a.warmup_steps = s.value("warmup_steps", a.warmup_steps);
    }
    if (j.contains("stability")) {
      const auto& s = j["stability"];
      a.l_star = s.value("l_star", a.l_star);
      a.tolerances.eq = s.value("tol_eq", a.tolerances.eq);
      a.tolerances.sym_rel = s.value("tol_sym_rel", a.tolerances.sym_rel);
      a.tolerances.margin = s.value("margin", a.tolerances.margin);
      a.epsilon = s.value("epsilon", a.epsilon);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("analysis settings: ") + e.what());
  }
  a.library.validate();
  if (!(a.epsilon > 0.0)) throw ConfigError("stability.epsilon must be > 0");
  if (a.identify.regress.threshold < 0.0) throw ConfigError("identification.threshold must be >= 0");
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return pipeline_config_from_json(buf.str());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_flags(PipelineConfig& c, const PipelineFlags& f) {
  if (f.seed) c.scenario.seed = *f.seed;
  if (f.gamma) c.analysis.identify.gamma = *f.gamma;
  if (f.degree_self) c.analysis.library.degree_self = *f.degree_self;
  if (f.degree_coupling) c.analysis.library.degree_coupling = *f.degree_coupling;
  if (f.coupling_mode) c.analysis.library.coupling_mode = *f.coupling_mode;
  if (f.threshold) c.analysis.identify.regress.threshold = *f.threshold;
  if (f.mask_saturated) c.analysis.identify.mask_saturated = true;
  c.analysis.library.validate();
}

// ---------------------------------------------------------------------------
// Phases

TelemetrySeries identification_window(const TelemetrySeries& s, std::size_t warmup) {
  if (s.samples() < warmup + 3) return s;
  return store::window(s, warmup, s.samples());
}

namespace {

double tail_deviation(const TelemetrySeries& s) {
  if (s.samples() == 0) return 0.0;
  const auto tail = std::min<Eigen::Index>(100, s.load.rows());
  return (s.load.bottomRows(tail).array() - 1.0).abs().maxCoeff();
}

void summarize(PhaseOutcome& o) {
  auto& s = o.summary;
  s.eigen_verdict = o.report.verdict;
  s.max_eigenvalue = o.report.max_eigenvalue;
  s.conditions_hold = o.report.conditions_hold();
  s.handovers = o.run.handovers.size();
  s.ping_pong_events = o.ping_pong.size();
  s.tail_deviation = tail_deviation(o.run.series);
  s.verdict = o.ping_pong.empty() ? o.report.verdict : Verdict::Unstable;
}

IdentifiedModel identify_phase(const ScenarioRun& run, const PipelineConfig& c) {
  const auto win = identification_window(run.series, c.analysis.warmup_steps);
  return identify_network(win, c.scenario.topology, c.analysis.library, c.analysis.identify);
}

}  // namespace

PhaseOutcome run_phase(const PipelineConfig& c) {
  PhaseOutcome o;
  o.run = run_scenario(c.scenario);
  o.model = identify_phase(o.run, c);
  o.report = check_proposition1(o.model, c.scenario.topology, c.analysis.tolerances, c.analysis.l_star);
  o.ping_pong = detect_ping_pong(o.run.handovers, c.scenario.ping_pong.window, c.scenario.ping_pong.bounce_threshold);
  summarize(o);
  return o;
}

Eigen::MatrixXd stabilized_beta(const PhaseOutcome& o, const PipelineConfig& c) {
  const Eigen::MatrixXd P = stabilize_policy(o.report.lin.P, c.scenario.topology, c.analysis.epsilon);
  const auto win = identification_window(o.run.series, c.analysis.warmup_steps);
  Eigen::VectorXd scale(static_cast<Eigen::Index>(c.scenario.n_rus()));
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    scale(i) = win.has_counters() && win.samples() > 0 ? win.provisioned.col(i).cast<double>().mean()
                                                        : static_cast<double>(c.scenario.rus[static_cast<std::size_t>(i)].prb_max);
  }
  return policy_to_beta(P, scale, c.scenario.dt);
}

int exit_code_for(Verdict v) { return v == Verdict::Stable ? 0 : 2; }

// ---------------------------------------------------------------------------
// Files

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256: digest initialisation failed");
  }
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char two[3];
  for (unsigned k = 0; k < len; ++k) {
    std::snprintf(two, sizeof two, "%02x", md[k]);
    hex += two;
  }
  return hex;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Manifest {
 public:
  explicit Manifest(fs::path dir) : dir_(std::move(dir)) {}

  void add(const fs::path& file) { files_.push_back(file); }
  void complete(const std::string& stage) {
    stages_.push_back(stage);
    flush("running");
  }
  void fail(const std::string& stage, const std::string& cause) { flush("failed at " + stage + ": " + cause); }
  void finish() { flush("complete"); }
  const std::vector<fs::path>& files() const { return files_; }

 private:
  void flush(const std::string& status) {
    std::string text = "# oranlb pipeline manifest\n";
    for (const auto& s : stages_) text += "stage " + s + "\n";
    for (const auto& f : files_) text += "sha256 " + sha256_file(f) + " " + f.filename().string() + "\n";
    text += "status " + status + "\n";
    write_text(dir_ / "MANIFEST", text);
  }

  fs::path dir_;
  std::vector<std::string> stages_;
  std::vector<fs::path> files_;
};

std::string ping_pong_csv(const std::vector<PingPongEvent>& events) {
  std::string s = "ue_id,ru_a,ru_b,bounces,start_step,end_step\n";
  for (const auto& e : events) {
    s += std::to_string(e.ue_id) + ',' + std::to_string(e.ru_a) + ',' + std::to_string(e.ru_b) + ',' +
         std::to_string(e.bounces) + ',' + std::to_string(e.start_step) + ',' + std::to_string(e.end_step) + '\n';
  }
  return s;
}

json summary_json(const PhaseSummary& s) {
  return {{"verdict", std::string(to_string(s.verdict))},
          {"eigen_verdict", std::string(to_string(s.eigen_verdict))},
          {"max_eigenvalue", s.max_eigenvalue},
          {"conditions_hold", s.conditions_hold},
          {"handovers", s.handovers},
          {"ping_pong_events", s.ping_pong_events},
          {"tail_deviation", s.tail_deviation}};
}

std::string matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows.dump();
}

}  // namespace

std::string stabilized_policy_json(const Eigen::MatrixXd& P, const Eigen::MatrixXd& beta) {
  return "{\n  \"P\": " + matrix_json(P) + ",\n  \"beta\": " + matrix_json(beta) + "\n}\n";
}

std::vector<fs::path> emit_plot_data(const TelemetrySeries& series, const IdentifiedModel* model,
                                     const StabilityReport* report, const fs::path& dir, const std::string& prefix,
                                     const IdentifyOptions& options) {
  std::vector<fs::path> out;
  const auto n = series.rus();

  std::string traces = "time";
  for (std::size_t i = 0; i < n; ++i) traces += ",ru_" + std::to_string(i);
  traces += '\n';
  for (std::size_t k = 0; k < series.samples(); ++k) {
    traces += g17(series.times[k]);
    for (std::size_t i = 0; i < n; ++i)
      traces += ',' + g17(series.load(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)));
    traces += '\n';
  }
  out.push_back(dir / (prefix + "load_traces.csv"));
  write_text(out.back(), traces);

  std::string da = "step,time,ru_id,demand_prbs,allocated_prbs,provisioned_prbs\n";
  if (series.has_counters()) {
    for (std::size_t k = 0; k < series.samples(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        da += std::to_string(series.steps[k]) + ',' + g17(series.times[k]) + ',' + std::to_string(i) + ',' +
              g17(series.demand(r, c)) + ',' + g17(series.allocated(r, c)) + ',' +
              std::to_string(series.provisioned(r, c)) + '\n';
      }
    }
  }
  out.push_back(dir / (prefix + "demand_allocated.csv"));
  write_text(out.back(), da);

  std::string sc = "ru_id,time,load,observed,predicted\n";
  if (model && series.samples() >= (options.scheme == DiffScheme::Central ? 3u : 2u)) {
    for (const auto& p : derivative_scatter(*model, series, options)) {
      sc += std::to_string(p.ru) + ',' + g17(p.time) + ',' + g17(p.load) + ',' + g17(p.observed) + ',' +
            g17(p.predicted) + '\n';
    }
  }
  out.push_back(dir / (prefix + "derivative_scatter.csv"));
  write_text(out.back(), sc);

  std::string gd = "ru_id,center,radius,right_edge\n";
  if (report) {
    for (std::size_t i = 0; i < report->gershgorin.discs.size(); ++i) {
      const auto& d = report->gershgorin.discs[i];
      gd += std::to_string(i) + ',' + g17(d.center) + ',' + g17(d.radius) + ',' + g17(d.center + d.radius) + '\n';
    }
  }
  out.push_back(dir / (prefix + "gershgorin_discs.csv"));
  write_text(out.back(), gd);
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& dir, bool stabilize) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  Manifest manifest(dir);
  PipelineResult result;
  auto stage = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      manifest.fail(name, e.what());
      throw StageError(name, e.what());
    }
    manifest.complete(name);
  };
  auto emit = [&](const std::string& name, const std::string& text) {
    const auto p = dir / name;
    write_text(p, text);
    manifest.add(p);
  };

  // One simulate / identify / check round; `tag` distinguishes the file names.
  auto phase = [&](const PipelineConfig& c, const std::string& tag) {
    PhaseOutcome o;
    const std::string sfx = tag.empty() ? "" : "_" + tag;
    stage("simulate" + sfx, [&] {
      o.run = run_scenario(c.scenario);
      const auto p = dir / ("telemetry" + sfx + ".csv");
      store::write_telemetry(o.run.rows, p);
      manifest.add(p);
      std::ostringstream hl;
      write_handover_log(o.run.handovers, hl);
      emit("handovers" + sfx + ".csv", hl.str());
    });
    stage("identify" + sfx, [&] {
      o.model = identify_phase(o.run, c);
      emit("model" + sfx + ".json", model_to_json(o.model));
    });
    stage("check" + sfx, [&] {
      o.report = check_proposition1(o.model, c.scenario.topology, c.analysis.tolerances, c.analysis.l_star);
      o.ping_pong = detect_ping_pong(o.run.handovers, c.scenario.ping_pong.window, c.scenario.ping_pong.bounce_threshold);
      summarize(o);
      emit("ping_pong" + sfx + ".csv", ping_pong_csv(o.ping_pong));
    });
    return o;
  };

  PhaseOutcome first = phase(config, "");
  result.before = first.summary;
  result.final_verdict = first.summary.verdict;

  std::optional<PhaseOutcome> second;
  if (stabilize && first.summary.verdict != Verdict::Stable) {
    PipelineConfig next = config;
    stage("stabilize", [&] {
      first.report.stabilized_P = stabilize_policy(first.report.lin.P, config.scenario.topology, config.analysis.epsilon);
      next.scenario.policy.beta = stabilized_beta(first, config);
      next.scenario.policy.validate(next.scenario.topology);
      emit("stabilized_policy.json", stabilized_policy_json(*first.report.stabilized_P, next.scenario.policy.beta));
    });
    second = phase(next, "stabilized");
    result.after = second->summary;
    result.final_verdict = second->summary.verdict;
  }

  stage("report", [&] {
    emit("stability.json", report_to_json(first.report));
    emit("stability.txt", report_table(first.report));
    const auto win = identification_window(first.run.series, config.analysis.warmup_steps);
    for (const auto& p : emit_plot_data(win, &first.model, &first.report, dir, "", config.analysis.identify))
      manifest.add(p);
    if (second) {
      emit("stability_stabilized.json", report_to_json(second->report));
      emit("stability_stabilized.txt", report_table(second->report));
      const auto w2 = identification_window(second->run.series, config.analysis.warmup_steps);
      for (const auto& p :
           emit_plot_data(w2, &second->model, &second->report, dir, "stabilized_", config.analysis.identify))
        manifest.add(p);
    }
    result.exit_code = exit_code_for(result.final_verdict);
    json s;
    s["phases"] = json::array({summary_json(result.before)});
    if (result.after) s["phases"].push_back(summary_json(*result.after));
    s["stabilized"] = result.after.has_value();
    s["final_verdict"] = std::string(to_string(result.final_verdict));
    s["exit_code"] = result.exit_code;
    emit("summary.json", s.dump(2) + "\n");
  });
  manifest.finish();
  result.artifacts = manifest.files();
  result.artifacts.push_back(dir / "MANIFEST");
  return result;
}

PipelineResult run_pipeline(const fs::path& config_path, const fs::path& dir, const PipelineFlags& flags) {
  auto config = load_pipeline_config(config_path);
  apply_flags(config, flags);
  return run_pipeline(config, dir, flags.stabilize);
}

std::vector<std::string> verify_manifest(const fs::path& dir) {
  std::ifstream in(dir / "MANIFEST");
  if (!in) throw IoError("no MANIFEST in " + dir.string());
  std::vector<std::string> bad;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("sha256 ", 0) != 0) continue;
    std::istringstream ss(line.substr(7));
    std::string hash, name;
    ss >> hash >> name;
    std::error_code ec;
    if (!fs::exists(dir / name, ec) || sha256_file(dir / name) != hash) bad.push_back(name);
  }
  return bad;
}

}  // namespace oranlb
