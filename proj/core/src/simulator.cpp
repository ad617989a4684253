#include "oranlb/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "oranlb/error.hpp"

namespace oranlb {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void PolicyParams::validate(const Topology& topology) const {
  const auto n = static_cast<Eigen::Index>(topology.size());
  if (beta.rows() != n || beta.cols() != n) throw ConfigError("policy.beta must be N x N");
  if (!(load_threshold > 0.0)) throw ConfigError("policy.load_threshold must be > 0");
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double b = beta(i, j);
      if (!std::isfinite(b) || b < 0.0) throw ConfigError("policy.beta entries must be finite and >= 0");
      if (b != 0.0 && !topology.connected(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) {
        throw ConfigError("policy.beta(" + std::to_string(i) + ", " + std::to_string(j) +
                          ") is nonzero on a non-edge");
      }
    }
  }
}

PolicyParams PolicyParams::uniform(const Topology& topology, double beta, double load_threshold) {
  PolicyParams p;
  p.beta = beta * topology.adjacency();
  p.load_threshold = load_threshold;
  return p;
}

void ScenarioConfig::validate() const {
  if (topology.size() < 1) throw ConfigError("scenario needs at least one RU");
  if (rus.size() != topology.size()) throw ConfigError("rus and topology disagree on the number of RUs");
  for (std::size_t i = 0; i < rus.size(); ++i) {
    if (rus[i].id != i) throw ConfigError("RU ids must be 0..N-1 in order");
    rus[i].validate();
  }
  radio.validate();
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(ue_arrival_rate >= 0.0) || !std::isfinite(ue_arrival_rate)) throw ConfigError("ue_arrival_rate must be >= 0");
  if (!(ue_bitrate_min >= 0.0 && ue_bitrate_min <= ue_bitrate_max)) throw ConfigError("ue_bitrate_range is empty");
  if (!(ue_lifetime_min >= 1 && ue_lifetime_min <= ue_lifetime_max)) throw ConfigError("ue_lifetime_range is empty");
  if (!(adapt_gain > 0.0 && adapt_gain <= 1.0)) throw ConfigError("adapt_gain must be in (0, 1]");
  if (!(area.width > 0.0 && area.height > 0.0)) throw ConfigError("area must be a nondegenerate rectangle");
  if (ping_pong.window < 2 || ping_pong.bounce_threshold < 2) {
    throw ConfigError("ping_pong window and bounce_threshold must be >= 2");
  }
  policy.validate(topology);
}

namespace {

constexpr double kSpacing = 100.0;
constexpr std::size_t kRows = 3;
constexpr std::size_t kCols = 4;

}  // namespace

ScenarioConfig default_scenario() {
  ScenarioConfig c;
  c.topology = Topology::grid(kRows, kCols, true);
  const std::size_t n = c.topology.size();
  for (std::size_t i = 0; i < n; ++i) {
    RuConfig ru;
    ru.id = i;
    ru.position = {kSpacing * (0.5 + static_cast<double>(i % kCols)), kSpacing * (0.5 + static_cast<double>(i / kCols))};
    ru.tx_power = 1.0;
    ru.prb_min = 10;
    ru.prb_max = 100;
    ru.cio.assign(n, 0.0);
    for (auto j : c.topology.neighbors(i)) ru.cio[j] = 6.0;
    ru.hys = 2.0;
    c.rus.push_back(ru);
  }
  c.area = {kSpacing * kCols, kSpacing * kRows};
  c.steps = 1000;
  c.dt = 1.0;
  c.seed = 20240601;
  c.ue_arrival_rate = 4.0;
  c.ue_bitrate_min = 100e3;
  c.ue_bitrate_max = 200e3;
  c.ue_lifetime_min = 20;
  c.ue_lifetime_max = 40;
  c.adapt_gain = 0.9;
  c.initial_capacity = InitialCapacity::Max;
  c.policy = PolicyParams::uniform(c.topology, 3.0, 1.0);
  return c;
}

std::vector<std::size_t> default_cycle() { return {0, 1, 5}; }

ScenarioConfig asymmetric_cycle_scenario() {
  auto c = default_scenario();
  const auto cyc = default_cycle();
  for (std::size_t k = 0; k < cyc.size(); ++k) {
    const auto a = static_cast<Eigen::Index>(cyc[k]);
    const auto b = static_cast<Eigen::Index>(cyc[(k + 1) % cyc.size()]);
    c.policy.beta(a, b) = 300.0;
    c.policy.beta(b, a) = 60.0;
  }
  return c;
}

ScenarioConfig isolated_scenario() {
  auto c = default_scenario();
  c.policy.beta.setZero();
  return c;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json point_json(Point p) { return json::array({p.x, p.y}); }

Point point_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("position must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

std::string scenario_to_json(const ScenarioConfig& c) {
  json j;
  j["topology"] = json::parse(topology_to_json(c.topology));
  j["rus"] = json::array();
  for (const auto& ru : c.rus) {
    json r;
    r["id"] = ru.id;
    r["position"] = point_json(ru.position);
    r["tx_power"] = ru.tx_power;
    r["prb_min"] = ru.prb_min;
    r["prb_max"] = ru.prb_max;
    r["cio"] = ru.cio;
    r["hys"] = ru.hys;
    j["rus"].push_back(r);
  }
  j["radio"] = {{"alpha", c.radio.alpha},
                {"n0", c.radio.n0},
                {"bc", c.radio.bc},
                {"pathloss_exponent", c.radio.pathloss_exponent},
                {"pathloss_ref_gain", c.radio.pathloss_ref_gain}};
  j["steps"] = c.steps;
  j["dt"] = c.dt;
  j["seed"] = c.seed;
  j["ue_arrival_rate"] = c.ue_arrival_rate;
  j["ue_bitrate_range"] = {c.ue_bitrate_min, c.ue_bitrate_max};
  j["ue_lifetime_range"] = {c.ue_lifetime_min, c.ue_lifetime_max};
  j["adapt_gain"] = c.adapt_gain;
  j["initial_capacity"] = c.initial_capacity == InitialCapacity::Max ? "max" : "min";
  json beta = json::array();
  for (Eigen::Index i = 0; i < c.policy.beta.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < c.policy.beta.cols(); ++k) row.push_back(c.policy.beta(i, k));
    beta.push_back(row);
  }
  j["policy"] = {{"beta", beta}, {"load_threshold", c.policy.load_threshold}};
  j["area"] = {{"width", c.area.width}, {"height", c.area.height}};
  j["ping_pong"] = {{"window", c.ping_pong.window}, {"bounce_threshold", c.ping_pong.bounce_threshold}};
  return j.dump(2);
}

ScenarioConfig scenario_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario JSON: ") + e.what());
  }
  ScenarioConfig c;
  try {
    if (!j.contains("topology")) throw ConfigError("scenario JSON: missing \"topology\"");
    c.topology = topology_from_json(j["topology"].dump());
    const std::size_t n = c.topology.size();
    if (!j.contains("rus") || !j["rus"].is_array()) throw ConfigError("scenario JSON: missing \"rus\" array");
    for (const auto& r : j["rus"]) {
      RuConfig ru;
      ru.id = r.at("id").get<std::size_t>();
      ru.position = point_from(r.at("position"));
      ru.tx_power = get_or(r, "tx_power", ru.tx_power);
      ru.prb_min = get_or(r, "prb_min", ru.prb_min);
      ru.prb_max = get_or(r, "prb_max", ru.prb_max);
      ru.hys = get_or(r, "hys", ru.hys);
      ru.cio.assign(n, 0.0);
      if (r.contains("cio")) {
        const auto& cio = r["cio"];
        if (cio.is_number()) {
          for (auto nb : c.topology.neighbors(std::min(ru.id, n - 1))) ru.cio[nb] = cio.get<double>();
        } else if (cio.is_array() && cio.size() == n) {
          ru.cio = cio.get<std::vector<double>>();
        } else {
          throw ConfigError("RU " + std::to_string(ru.id) + ": cio must be a number or an array of N offsets");
        }
      }
      c.rus.push_back(ru);
    }
    if (j.contains("radio")) {
      const auto& r = j["radio"];
      c.radio.alpha = get_or(r, "alpha", c.radio.alpha);
      c.radio.n0 = get_or(r, "n0", c.radio.n0);
      c.radio.bc = get_or(r, "bc", c.radio.bc);
      c.radio.pathloss_exponent = get_or(r, "pathloss_exponent", c.radio.pathloss_exponent);
      c.radio.pathloss_ref_gain = get_or(r, "pathloss_ref_gain", c.radio.pathloss_ref_gain);
    }
    c.steps = get_or<std::int64_t>(j, "steps", c.steps);
    c.dt = get_or(j, "dt", c.dt);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.ue_arrival_rate = get_or(j, "ue_arrival_rate", c.ue_arrival_rate);
    if (j.contains("ue_bitrate_range")) {
      const auto r = j["ue_bitrate_range"].get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("ue_bitrate_range must be [min, max]");
      c.ue_bitrate_min = r[0];
      c.ue_bitrate_max = r[1];
    }
    if (j.contains("ue_lifetime_range")) {
      const auto r = j["ue_lifetime_range"].get<std::vector<int>>();
      if (r.size() != 2) throw ConfigError("ue_lifetime_range must be [min, max]");
      c.ue_lifetime_min = r[0];
      c.ue_lifetime_max = r[1];
    }
    c.adapt_gain = get_or(j, "adapt_gain", c.adapt_gain);
    if (j.contains("initial_capacity")) {
      const auto v = j["initial_capacity"].get<std::string>();
      if (v == "max") {
        c.initial_capacity = InitialCapacity::Max;
      } else if (v == "min") {
        c.initial_capacity = InitialCapacity::Min;
      } else {
        throw ConfigError("initial_capacity must be \"min\" or \"max\"");
      }
    }
    c.policy.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if (j.contains("policy")) {
      const auto& p = j["policy"];
      c.policy.load_threshold = get_or(p, "load_threshold", c.policy.load_threshold);
      if (p.contains("beta")) {
        const auto& b = p["beta"];
        if (b.is_number()) {
          c.policy.beta = b.get<double>() * c.topology.adjacency();
        } else {
          if (!b.is_array() || b.size() != n) throw ConfigError("policy.beta must be a number or an N x N matrix");
          for (std::size_t r = 0; r < n; ++r) {
            if (!b[r].is_array() || b[r].size() != n) throw ConfigError("policy.beta must be N x N");
            for (std::size_t k = 0; k < n; ++k) {
              c.policy.beta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = b[r][k].get<double>();
            }
          }
        }
      }
      if (p.contains("beta_overrides")) {
        for (const auto& o : p["beta_overrides"]) {
          if (!o.is_array() || o.size() != 3) throw ConfigError("beta_overrides entries are [from, to, beta]");
          const auto a = o[0].get<std::size_t>();
          const auto b = o[1].get<std::size_t>();
          if (a >= n || b >= n) throw ConfigError("beta_overrides index out of range");
          c.policy.beta(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = o[2].get<double>();
        }
      }
    }
    if (j.contains("area")) {
      c.area.width = j["area"].at("width").get<double>();
      c.area.height = j["area"].at("height").get<double>();
    }
    if (j.contains("ping_pong")) {
      c.ping_pong.window = get_or(j["ping_pong"], "window", c.ping_pong.window);
      c.ping_pong.bounce_threshold = get_or(j["ping_pong"], "bounce_threshold", c.ping_pong.bounce_threshold);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario JSON: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return scenario_from_json(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// State

int LiveUe::wanted() const { return static_cast<int>(std::ceil(required - 1e-12)); }

double required_at(const ScenarioConfig& config, const LiveUe& ue, std::size_t ru) {
  double interference = 0.0;
  for (std::size_t k = 0; k < ue.rx_power.size(); ++k)
    if (k != ru) interference += ue.rx_power[k];
  const double s = ue.rx_power[ru] / (config.radio.n0 + interference);
  return required_prbs(ue.demand.bitrate, prb_rate(config.radio.alpha, s), config.radio.bc);
}

LiveUe make_ue(const ScenarioConfig& config, std::size_t id, Point position, double bitrate, int lifetime,
               std::uint64_t attach_seq) {
  LiveUe ue;
  ue.demand = {id, position, bitrate, lifetime};
  ue.attach_seq = attach_seq;
  const auto n = config.n_rus();
  ue.rx_power.resize(n);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& ru = config.rus[k];
    ue.rx_power[k] = ru.tx_power * channel_gain(ru.position, position, config.radio);
    const double d = distance(ru.position, position);
    if (d < best) {
      best = d;
      ue.serving = k;
    }
  }
  ue.required = required_at(config, ue, ue.serving);
  return ue;
}

ScenarioState initial_state(const ScenarioConfig& config) {
  ScenarioState s;
  const auto n = config.n_rus();
  s.provisioned.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.provisioned[i] = config.initial_capacity == InitialCapacity::Max ? config.rus[i].prb_max : config.rus[i].prb_min;
  }
  s.allocated.assign(n, 0);
  s.demand.assign(n, 0.0);
  s.load.assign(n, 0.0);
  s.rng.seed(config.seed);
  return s;
}

void ScenarioState::check(const ScenarioConfig& config) const {
  const auto n = config.n_rus();
  if (provisioned.size() != n || allocated.size() != n) throw ConsistencyError("state vectors sized wrongly");
  std::vector<int> used(n, 0);
  for (const auto& ue : ues) {
    if (ue.serving >= n) throw ConsistencyError("UE " + std::to_string(ue.demand.id) + " has no valid serving RU");
    used[ue.serving] += ue.allocated;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ru = config.rus[i];
    if (provisioned[i] < ru.prb_min || provisioned[i] > ru.prb_max) {
      throw ConsistencyError("RU " + std::to_string(i) + ": provisioned PRBs outside [prb_min, prb_max]");
    }
    if (allocated[i] != used[i] || allocated[i] > provisioned[i]) {
      throw ConsistencyError("RU " + std::to_string(i) + ": allocation exceeds provisioned PRBs");
    }
  }
}

// ---------------------------------------------------------------------------
// Phases

namespace {

// UE indices per RU in FCFS order.
std::vector<std::vector<std::size_t>> queues(const ScenarioState& state, std::size_t n) {
  std::vector<std::vector<std::size_t>> q(n);
  for (std::size_t k = 0; k < state.ues.size(); ++k) q[state.ues[k].serving].push_back(k);
  for (auto& v : q) {
    std::sort(v.begin(), v.end(),
              [&](std::size_t a, std::size_t b) { return state.ues[a].attach_seq < state.ues[b].attach_seq; });
  }
  return q;
}

void recompute_demand(ScenarioState& state, std::size_t n) {
  state.demand.assign(n, 0.0);
  for (const auto& ue : state.ues) state.demand[ue.serving] += ue.required;
  state.load.resize(n);
  for (std::size_t i = 0; i < n; ++i) state.load[i] = state.demand[i] / state.provisioned[i];
}

}  // namespace

std::vector<char> allocate_prbs(ScenarioState& state, const ScenarioConfig& config) {
  const auto n = config.n_rus();
  state.allocated.assign(n, 0);
  std::vector<char> satisfied(state.ues.size(), 0);
  const auto q = queues(state, n);
  for (std::size_t i = 0; i < n; ++i) {
    int remaining = state.provisioned[i];
    for (auto k : q[i]) {
      auto& ue = state.ues[k];
      ue.allocated = std::min(ue.wanted(), remaining);
      remaining -= ue.allocated;
      state.allocated[i] += ue.allocated;
      satisfied[k] = ue.satisfied() ? 1 : 0;
    }
  }
  return satisfied;
}

void adapt_capacity(ScenarioState& state, const ScenarioConfig& config) {
  const auto n = config.n_rus();
  recompute_demand(state, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double b = state.provisioned[i];
    const double target = b + config.adapt_gain * (state.demand[i] - b);
    const auto rounded = static_cast<int>(std::lround(target));
    state.provisioned[i] = std::clamp(rounded, config.rus[i].prb_min, config.rus[i].prb_max);
  }
}

std::vector<HandoverRecord> apply_handover_policy(ScenarioState& state, const ScenarioConfig& config) {
  const auto n = config.n_rus();
  recompute_demand(state, n);
  allocate_prbs(state, config);
  const std::vector<double> load = state.load;  // synchronous snapshot
  const auto q = queues(state, n);
  std::vector<char> moved(state.ues.size(), 0);
  std::vector<HandoverRecord> out;
  const auto& beta = config.policy.beta;

  for (std::size_t i = 0; i < n; ++i) {
    if (!(load[i] > config.policy.load_threshold)) continue;

    std::vector<std::size_t> candidates;
    for (auto k : q[i])
      if (!state.ues[k].satisfied()) candidates.push_back(k);
    if (candidates.empty()) continue;
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
      const auto& ua = state.ues[a];
      const auto& ub = state.ues[b];
      return ua.wanted() - ua.allocated > ub.wanted() - ub.allocated;
    });

    std::vector<std::size_t> targets;
    for (auto j : config.topology.neighbors(i))
      if (beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0.0 && load[i] > load[j])
        targets.push_back(j);
    std::stable_sort(targets.begin(), targets.end(),
                     [&](std::size_t a, std::size_t b) { return load[i] - load[a] > load[i] - load[b]; });

    const auto& src = config.rus[i];
    for (auto j : targets) {
      const double volume = beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (load[i] - load[j]);
      double shifted = 0.0;
      for (auto k : candidates) {
        if (moved[k]) continue;
        if (shifted + state.ues[k].required > volume) continue;
        auto& ue = state.ues[k];
        const double m_i = 10.0 * std::log10(ue.rx_power[i] * 1000.0);
        const double m_j = 10.0 * std::log10(ue.rx_power[j] * 1000.0);
        if (!a3_trigger(m_i, m_j, src.cio_toward(j), 0.0, src.hys)) continue;
        shifted += ue.required;
        ue.serving = j;
        ue.attach_seq = state.next_seq++;
        ue.required = required_at(config, ue, j);
        moved[k] = 1;
        out.push_back({state.step, ue.demand.id, i, j});
      }
    }
  }
  return out;
}

StepOutput step(ScenarioState& state, const ScenarioConfig& config) {
  const auto n = config.n_rus();

  // (1) retire
  for (auto& ue : state.ues) --ue.demand.lifetime;
  std::erase_if(state.ues, [](const LiveUe& ue) { return ue.demand.lifetime < 0; });

  // (2) arrivals
  if (config.ue_arrival_rate > 0.0) {
    std::poisson_distribution<long long> arrivals(config.ue_arrival_rate * static_cast<double>(n));
    std::uniform_real_distribution<double> ux(0.0, config.area.width);
    std::uniform_real_distribution<double> uy(0.0, config.area.height);
    std::uniform_real_distribution<double> rate(config.ue_bitrate_min, config.ue_bitrate_max);
    std::uniform_int_distribution<int> life(config.ue_lifetime_min, config.ue_lifetime_max);
    const auto count = arrivals(state.rng);
    for (long long a = 0; a < count; ++a) {
      const Point pos{ux(state.rng), uy(state.rng)};
      const double bitrate = rate(state.rng);
      // A UE living L steps is present in this step and the next L - 1.
      const int lifetime = life(state.rng) - 1;
      state.ues.push_back(make_ue(config, state.next_ue_id++, pos, bitrate, lifetime, state.next_seq++));
    }
  }

  // (3) FCFS allocation, (4) capacity adaptation, (5) handover
  allocate_prbs(state, config);
  adapt_capacity(state, config);
  StepOutput out;
  out.handovers = apply_handover_policy(state, config);

  // (6) loads and allocations under the new assignment
  recompute_demand(state, n);
  allocate_prbs(state, config);
  state.check(config);

  // (7) telemetry
  std::vector<int> counts(n, 0);
  for (const auto& ue : state.ues) ++counts[ue.serving];
  out.rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.rows.push_back({state.step, static_cast<double>(state.step) * config.dt, i, state.demand[i],
                        static_cast<double>(state.allocated[i]), state.provisioned[i], state.load[i], counts[i]});
  }
  ++state.step;
  return out;
}

ScenarioRun run_scenario(const ScenarioConfig& config) {
  config.validate();
  ScenarioRun run;
  auto state = initial_state(config);
  run.rows.reserve(static_cast<std::size_t>(config.steps) * config.n_rus());
  for (std::int64_t k = 0; k < config.steps; ++k) {
    auto out = step(state, config);
    run.rows.insert(run.rows.end(), out.rows.begin(), out.rows.end());
    run.handovers.insert(run.handovers.end(), out.handovers.begin(), out.handovers.end());
  }
  // Rows are generated in (step, ru) order, so regrouping is a reshape.
  const auto m = static_cast<Eigen::Index>(config.steps);
  const auto cols = static_cast<Eigen::Index>(config.n_rus());
  auto& s = run.series;
  s.load.resize(m, cols);
  s.demand.resize(m, cols);
  s.allocated.resize(m, cols);
  s.provisioned.resize(m, cols);
  s.ue_count.resize(m, cols);
  for (Eigen::Index k = 0; k < m; ++k) {
    s.steps.push_back(k);
    s.times.push_back(static_cast<double>(k) * config.dt);
    for (Eigen::Index i = 0; i < cols; ++i) {
      const auto& r = run.rows[static_cast<std::size_t>(k * cols + i)];
      s.load(k, i) = r.load;
      s.demand(k, i) = r.demand_prbs;
      s.allocated(k, i) = r.allocated_prbs;
      s.provisioned(k, i) = r.provisioned_prbs;
      s.ue_count(k, i) = r.ue_count;
    }
  }
  return run;
}

// ---------------------------------------------------------------------------
// Ping-pong

std::vector<PingPongEvent> detect_ping_pong(std::span<const HandoverRecord> log, int window, int bounce_threshold) {
  if (window < 2 || bounce_threshold < 2) throw ConfigError("ping-pong window and threshold must be >= 2");
  struct Key {
    std::size_t ue, a, b;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, std::vector<std::int64_t>> by_pair;
  for (const auto& h : log) {
    if (h.from_ru == h.to_ru) continue;
    by_pair[{h.ue_id, std::min(h.from_ru, h.to_ru), std::max(h.from_ru, h.to_ru)}].push_back(h.step);
  }
  std::vector<PingPongEvent> events;
  for (auto& [key, steps] : by_pair) {
    std::sort(steps.begin(), steps.end());
    const auto count = steps.size();
    // Mark handovers that belong to some qualifying window, then merge runs.
    std::vector<char> in_event(count, 0);
    std::size_t lo = 0;
    for (std::size_t hi = 0; hi < count; ++hi) {
      while (steps[hi] - steps[lo] >= window) ++lo;
      if (hi - lo + 1 >= static_cast<std::size_t>(bounce_threshold))
        for (std::size_t k = lo; k <= hi; ++k) in_event[k] = 1;
    }
    std::size_t k = 0;
    while (k < count) {
      if (!in_event[k]) {
        ++k;
        continue;
      }
      std::size_t end = k;
      while (end + 1 < count && in_event[end + 1] && steps[end + 1] - steps[end] < window) ++end;
      events.push_back({key.ue, key.a, key.b, static_cast<int>(end - k + 1), steps[k], steps[end]});
      k = end + 1;
    }
  }
  std::sort(events.begin(), events.end(), [](const PingPongEvent& x, const PingPongEvent& y) {
    return std::tie(x.start_step, x.ue_id, x.ru_a, x.ru_b) < std::tie(y.start_step, y.ue_id, y.ru_a, y.ru_b);
  });
  return events;
}

std::size_t write_handover_log(std::span<const HandoverRecord> log, std::ostream& out) {
  std::string text = "step,ue_id,from_ru,to_ru\n";
  for (const auto& h : log) {
    text += std::to_string(h.step) + ',' + std::to_string(h.ue_id) + ',' + std::to_string(h.from_ru) + ',' +
            std::to_string(h.to_ru) + '\n';
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("handover log write failed");
  return text.size();
}

std::vector<HandoverRecord> read_handover_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "step,ue_id,from_ru,to_ru") throw ConfigError("bad handover log header");
  std::vector<HandoverRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    HandoverRecord h;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ss >> h.step >> c1 >> h.ue_id >> c2 >> h.from_ru >> c3 >> h.to_ru) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw ConfigError("bad handover log line: " + line);
    }
    out.push_back(h);
  }
  return out;
}

}  // namespace oranlb
