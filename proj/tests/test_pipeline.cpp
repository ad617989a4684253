#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "oranlb/pipeline.hpp"
#include "oranlb/store.hpp"

using namespace oranlb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("oranlb_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineConfig config_for(ScenarioConfig s) {
  PipelineConfig c;
  c.scenario = std::move(s);
  for (const auto& ru : c.scenario.rus) {
    c.analysis.identify.prb_min.push_back(ru.prb_min);
    c.analysis.identify.prb_max.push_back(ru.prb_max);
  }
  return c;
}

}  // namespace

TEST(Pipeline, SymmetricArmExitsZero) {
  const auto out = scratch("sym");
  const auto r = run_pipeline(config_for(default_scenario()), out, false);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.final_verdict, Verdict::Stable);
  EXPECT_EQ(r.before.ping_pong_events, 0u);
  EXPECT_FALSE(r.after.has_value());
  for (const auto& p : r.artifacts) EXPECT_TRUE(fs::exists(p)) << p;
  EXPECT_TRUE(verify_manifest(out).empty());
  EXPECT_NE(slurp(out / "MANIFEST").find("status complete"), std::string::npos);
}

TEST(Pipeline, AsymmetricArmExitsTwo) {
  const auto out = scratch("asym");
  const auto r = run_pipeline(config_for(asymmetric_cycle_scenario()), out, false);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_EQ(r.final_verdict, Verdict::Unstable);
  EXPECT_GE(r.before.ping_pong_events, 1u);
  EXPECT_FALSE(r.after.has_value());
  EXPECT_FALSE(fs::exists(out / "stabilized_policy.json"));
}

TEST(Pipeline, StabilizedArmExitsZero) {
  const auto out = scratch("cure");
  const auto r = run_pipeline(config_for(asymmetric_cycle_scenario()), out, true);
  EXPECT_EQ(r.exit_code, 0);
  ASSERT_TRUE(r.after.has_value());
  EXPECT_EQ(r.after->ping_pong_events, 0u);
  EXPECT_LT(r.after->tail_deviation, 0.05);
  EXPECT_TRUE(fs::exists(out / "stabilized_policy.json"));
  EXPECT_TRUE(fs::exists(out / "telemetry_stabilized.csv"));
  EXPECT_TRUE(verify_manifest(out).empty());
}

TEST(Pipeline, StabilizeSkippedWhenStable) {
  const auto out = scratch("skip");
  const auto r = run_pipeline(config_for(default_scenario()), out, true);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_FALSE(r.after.has_value());
}

TEST(Pipeline, ByteIdenticalReruns) {
  auto cfg = default_scenario();
  cfg.steps = 400;
  const auto a = scratch("det_a"), b = scratch("det_b");
  run_pipeline(config_for(cfg), a, false);
  run_pipeline(config_for(cfg), b, false);
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
  }
}

TEST(Pipeline, ManifestDetectsTampering) {
  auto cfg = default_scenario();
  cfg.steps = 300;
  const auto out = scratch("tamper");
  run_pipeline(config_for(cfg), out, false);
  std::ofstream(out / "model.json", std::ios::app) << " ";
  const auto bad = verify_manifest(out);
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_EQ(bad[0], "model.json");
}

TEST(Pipeline, FailedStageRecorded) {
  auto cfg = default_scenario();
  cfg.steps = 300;
  auto pc = config_for(cfg);
  pc.analysis.identify.cv_folds = 1;  // cross-validation rejects this
  const auto out = scratch("fail");
  try {
    run_pipeline(pc, out, false);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "identify");
  }
  const auto manifest = slurp(out / "MANIFEST");
  EXPECT_NE(manifest.find("status failed at identify"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "telemetry.csv"));
}

TEST(Pipeline, ConfigParsing) {
  const std::string text = scenario_to_json(default_scenario());
  auto j = text.substr(0, text.rfind('}'));
  j += R"(, "identification": {"degree_self": 2, "coupling_mode": "per-edge", "gamma": 0.01, "threshold": 0.003,
          "scheme": "central", "mask_saturated": true, "warmup_steps": 50},
        "stability": {"l_star": 0.95, "tol_eq": 0.1, "epsilon": 0.2}})";
  const auto c = pipeline_config_from_json(j);
  EXPECT_EQ(c.analysis.library.degree_self, 2);
  EXPECT_EQ(c.analysis.library.coupling_mode, CouplingMode::PerEdge);
  EXPECT_EQ(c.analysis.identify.gamma, 0.01);
  EXPECT_EQ(c.analysis.identify.regress.threshold, 0.003);
  EXPECT_EQ(c.analysis.identify.scheme, DiffScheme::Central);
  EXPECT_TRUE(c.analysis.identify.mask_saturated);
  EXPECT_EQ(c.analysis.warmup_steps, 50u);
  EXPECT_EQ(c.analysis.l_star, 0.95);
  EXPECT_EQ(c.analysis.tolerances.eq, 0.1);
  EXPECT_EQ(c.analysis.epsilon, 0.2);
  EXPECT_EQ(c.analysis.identify.prb_max.size(), 12u);
  EXPECT_THROW(pipeline_config_from_json(text.substr(0, text.rfind('}')) + R"(, "identification": {"threshold": -1}})"),
               ConfigError);
  EXPECT_THROW(load_pipeline_config("/nonexistent/config.json"), IoError);
}

TEST(Pipeline, FlagsOverride) {
  auto c = config_for(default_scenario());
  PipelineFlags f;
  f.seed = 99;
  f.gamma = 0.5;
  f.degree_self = 4;
  f.degree_coupling = 1;
  f.coupling_mode = CouplingMode::PerEdge;
  f.mask_saturated = true;
  apply_flags(c, f);
  EXPECT_EQ(c.scenario.seed, 99u);
  EXPECT_EQ(c.analysis.identify.gamma, 0.5);
  EXPECT_EQ(c.analysis.library.degree_self, 4);
  EXPECT_EQ(c.analysis.library.degree_coupling, 1);
  EXPECT_EQ(c.analysis.library.coupling_mode, CouplingMode::PerEdge);
  EXPECT_TRUE(c.analysis.identify.mask_saturated);
}

TEST(PlotData, EmptySeriesHeadersOnly) {
  const auto out = scratch("plot_empty");
  fs::create_directories(out);
  const auto files = emit_plot_data(TelemetrySeries{}, nullptr, nullptr, out);
  EXPECT_EQ(files.size(), 4u);
  for (const auto& f : files) {
    const auto text = slurp(f);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1) << f;
  }
}

TEST(PlotData, TwelveLoadColumns) {
  auto cfg = default_scenario();
  cfg.steps = 50;
  const auto run = run_scenario(cfg);
  const auto out = scratch("plot_12");
  fs::create_directories(out);
  emit_plot_data(run.series, nullptr, nullptr, out, "x_");
  std::ifstream in(out / "x_load_traces.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 12);
  EXPECT_EQ(header.substr(0, 10), "time,ru_0,");
}

TEST(Sha256, KnownVector) {
  const auto p = scratch("sha");
  std::ofstream(p, std::ios::binary) << "abc";
  EXPECT_EQ(sha256_file(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(IdentificationWindow, SkipsWarmup) {
  auto cfg = default_scenario();
  cfg.steps = 150;
  const auto run = run_scenario(cfg);
  const auto w = identification_window(run.series, 100);
  EXPECT_EQ(w.samples(), 50u);
  EXPECT_EQ(w.steps.front(), 100);
  EXPECT_EQ(identification_window(run.series, 1000).samples(), 150u);
}
