#pragma once

// Discrete-time O-RAN load scenario: Poisson UE arrivals, FCFS PRB
// allocation, RU capacity adaptation and load-gap driven handover.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "oranlb/netmodel.hpp"
#include "oranlb/telemetry.hpp"

namespace oranlb {

struct Rect {
  double width = 0.0;
  double height = 0.0;
};

/// beta(i, j) is the number of PRBs RU i tries to hand to neighbour j per unit
/// load gap per step. Must vanish off the topology's edges.
struct PolicyParams {
  Eigen::MatrixXd beta;
  double load_threshold = 1.0;

  void validate(const Topology& topology) const;
  static PolicyParams uniform(const Topology& topology, double beta, double load_threshold);
};

struct PingPongParams {
  int window = 20;
  int bounce_threshold = 3;
};

enum class InitialCapacity { Min, Max };

struct ScenarioConfig {
  Topology topology;
  std::vector<RuConfig> rus;
  RadioParams radio;
  std::int64_t steps = 1000;
  double dt = 1.0;
  std::uint64_t seed = 1;
  double ue_arrival_rate = 0.0;  // expected new UEs per step per RU
  double ue_bitrate_min = 0.0;
  double ue_bitrate_max = 0.0;
  int ue_lifetime_min = 1;
  int ue_lifetime_max = 1;
  double adapt_gain = 0.5;
  InitialCapacity initial_capacity = InitialCapacity::Max;
  PolicyParams policy;
  Rect area;
  PingPongParams ping_pong;

  std::size_t n_rus() const noexcept { return rus.size(); }
  void validate() const;
};

/// 12 RUs on a 4 x 3 grid (100 m spacing, 8-neighbourhood adjacency) with a
/// uniform symmetric policy.
ScenarioConfig default_scenario();

/// The default scenario with the triangle 0 -> 1 -> 5 -> 0 biased five to one
/// in the cycle direction. Produces ping-pong between the three RUs.
ScenarioConfig asymmetric_cycle_scenario();

/// Default scenario with every beta set to zero.
ScenarioConfig isolated_scenario();

std::vector<std::size_t> default_cycle();

std::string scenario_to_json(const ScenarioConfig& config);
ScenarioConfig scenario_from_json(std::string_view text);
ScenarioConfig load_scenario(const std::filesystem::path& path);

struct LiveUe {
  UeDemand demand;
  std::size_t serving = 0;
  std::uint64_t attach_seq = 0;  // FCFS order at the serving RU
  std::vector<double> rx_power;  // P_j * G_j for every RU j, W
  double required = 0.0;         // PRBs needed at the serving RU
  int allocated = 0;

  int wanted() const;  // ceil(required)
  bool satisfied() const { return allocated >= wanted(); }
};

struct ScenarioState {
  std::int64_t step = 0;
  std::vector<LiveUe> ues;
  std::vector<int> provisioned;
  std::vector<int> allocated;
  std::vector<double> demand;
  std::vector<double> load;
  std::mt19937_64 rng;
  std::uint64_t next_ue_id = 0;
  std::uint64_t next_seq = 0;

  /// Throws ConsistencyError when a state invariant is broken.
  void check(const ScenarioConfig& config) const;
};

ScenarioState initial_state(const ScenarioConfig& config);

/// Attaches a UE at `position` to its nearest RU. Used by the arrival process
/// and by tests that need hand-built states.
LiveUe make_ue(const ScenarioConfig& config, std::size_t id, Point position, double bitrate, int lifetime,
               std::uint64_t attach_seq);

/// PRB requirement of a UE were it served by `ru`.
double required_at(const ScenarioConfig& config, const LiveUe& ue, std::size_t ru);

struct HandoverRecord {
  std::int64_t step = 0;
  std::size_t ue_id = 0;
  std::size_t from_ru = 0;
  std::size_t to_ru = 0;
  bool operator==(const HandoverRecord&) const = default;
};

/// FCFS by attach order per RU. Returns a satisfied flag per entry of state.ues.
std::vector<char> allocate_prbs(ScenarioState& state, const ScenarioConfig& config);

void adapt_capacity(ScenarioState& state, const ScenarioConfig& config);

std::vector<HandoverRecord> apply_handover_policy(ScenarioState& state, const ScenarioConfig& config);

struct StepOutput {
  std::vector<TelemetryRow> rows;
  std::vector<HandoverRecord> handovers;
};

StepOutput step(ScenarioState& state, const ScenarioConfig& config);

struct ScenarioRun {
  std::vector<TelemetryRow> rows;
  TelemetrySeries series;
  std::vector<HandoverRecord> handovers;
};

ScenarioRun run_scenario(const ScenarioConfig& config);

struct PingPongEvent {
  std::size_t ue_id = 0;
  std::size_t ru_a = 0;  // ru_a < ru_b
  std::size_t ru_b = 0;
  int bounces = 0;
  std::int64_t start_step = 0;
  std::int64_t end_step = 0;
};

/// Reports every (UE, unordered RU pair) that sees at least `bounce_threshold`
/// handovers inside some window of `window` consecutive steps. Overlapping
/// qualifying windows merge into one event.
std::vector<PingPongEvent> detect_ping_pong(std::span<const HandoverRecord> log, int window, int bounce_threshold);

/// CSV with columns step,ue_id,from_ru,to_ru.
std::size_t write_handover_log(std::span<const HandoverRecord> log, std::ostream& out);
std::vector<HandoverRecord> read_handover_log(std::istream& in);

}  // namespace oranlb
