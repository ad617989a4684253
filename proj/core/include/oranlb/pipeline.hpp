#pragma once

// simulate -> identify -> check -> (stabilize -> re-simulate) -> report,
// run in-process and written to one output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oranlb/error.hpp"
#include "oranlb/simulator.hpp"
#include "oranlb/stability.hpp"
#include "oranlb/sysid.hpp"
#include "oranlb/telemetry.hpp"

namespace oranlb {

/// Identification and stability settings; read from the "identification" and
/// "stability" sections of a config file.
struct AnalysisSettings {
  LibrarySpec library;
  IdentifyOptions identify;
  std::size_t warmup_steps = 100;  // skipped before identification
  Tolerances tolerances;
  double l_star = 1.0;
  double epsilon = 0.05;  // stabilize_policy cap
};

struct PipelineConfig {
  ScenarioConfig scenario;
  AnalysisSettings analysis;
};

PipelineConfig pipeline_config_from_json(std::string_view text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Command-line overrides.
struct PipelineFlags {
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::optional<int> degree_self;
  std::optional<int> degree_coupling;
  std::optional<CouplingMode> coupling_mode;
  std::optional<double> threshold;
  bool mask_saturated = false;
  bool stabilize = false;
};

void apply_flags(PipelineConfig& config, const PipelineFlags& flags);

struct PhaseSummary {
  Verdict eigen_verdict = Verdict::Indeterminate;
  double max_eigenvalue = 0.0;
  bool conditions_hold = false;
  std::size_t handovers = 0;
  std::size_t ping_pong_events = 0;
  double tail_deviation = 0.0;  // max |l - 1| over the last 100 steps
  Verdict verdict = Verdict::Indeterminate;  // eigen verdict, overridden by ping-pong
};

struct PipelineResult {
  std::vector<std::filesystem::path> artifacts;
  PhaseSummary before;
  std::optional<PhaseSummary> after;
  Verdict final_verdict = Verdict::Indeterminate;
  int exit_code = 1;
};

/// Everything one simulate/identify/check round produces.
struct PhaseOutcome {
  ScenarioRun run;
  IdentifiedModel model;
  StabilityReport report;
  std::vector<PingPongEvent> ping_pong;
  PhaseSummary summary;
};

PhaseOutcome run_phase(const PipelineConfig& config);

/// Offload coefficients for the stabilized coupling of an outcome.
Eigen::MatrixXd stabilized_beta(const PhaseOutcome& outcome, const PipelineConfig& config);

int exit_code_for(Verdict verdict);

/// A failing stage: its name and cause end up in the MANIFEST.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage " + stage + ": " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

PipelineResult run_pipeline(const std::filesystem::path& config_path, const std::filesystem::path& output_dir,
                            const PipelineFlags& flags);
PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& output_dir, bool stabilize);

/// Writes load traces, demand/allocation, derivative scatter and Gershgorin
/// disc tables. File names start with `prefix`.
std::vector<std::filesystem::path> emit_plot_data(const TelemetrySeries& series, const IdentifiedModel* model,
                                                  const StabilityReport* report,
                                                  const std::filesystem::path& output_dir,
                                                  const std::string& prefix = "",
                                                  const IdentifyOptions& options = {});

/// {"P": [[...]], "beta": [[...]]}
std::string stabilized_policy_json(const Eigen::MatrixXd& P, const Eigen::MatrixXd& beta);

/// Samples after the warmup, or the whole series when it is too short.
TelemetrySeries identification_window(const TelemetrySeries& series, std::size_t warmup);

/// Lowercase hex SHA-256 of a file.
std::string sha256_file(const std::filesystem::path& path);

/// Re-hashes every artifact listed in a MANIFEST; returns the mismatching names.
std::vector<std::string> verify_manifest(const std::filesystem::path& output_dir);

}  // namespace oranlb
