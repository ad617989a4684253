#include "oranlb/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "oranlb/error.hpp"

namespace oranlb {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

Topology::Topology(std::size_t n) : n_(n), adj_(n * n, 0), nbrs_(n) {}

Topology Topology::from_edges(std::size_t n, std::span<const Edge> edges) {
  Topology t(n);
  for (const auto& e : edges) t.add_edge(e.i, e.j);
  return t;
}

Topology Topology::from_adjacency(const Eigen::MatrixXd& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw DimensionError("adjacency matrix must be square");
  const auto n = static_cast<std::size_t>(adjacency.rows());
  Topology t(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) {
      throw ConfigError("adjacency diagonal must be zero (RU " + std::to_string(i) + ")");
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double a = adjacency(i, j);
      if (a != 0.0 && a != 1.0) throw ConfigError("adjacency entries must be 0 or 1");
      if (a != adjacency(j, i)) {
        throw ConfigError("adjacency is not symmetric at (" + std::to_string(i) + ", " +
                          std::to_string(j) + ")");
      }
      if (a == 1.0 && i < j) t.add_edge(i, j);
    }
  }
  return t;
}

Topology Topology::grid(std::size_t rows, std::size_t cols, bool diagonals) {
  Topology t(rows * cols);
  auto idx = [cols](std::size_t r, std::size_t c) { return r * cols + c; };
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c + 1 < cols) t.add_edge(idx(r, c), idx(r, c + 1));
      if (r + 1 < rows) t.add_edge(idx(r, c), idx(r + 1, c));
      if (diagonals && r + 1 < rows) {
        if (c + 1 < cols) t.add_edge(idx(r, c), idx(r + 1, c + 1));
        if (c > 0) t.add_edge(idx(r, c), idx(r + 1, c - 1));
      }
    }
  }
  return t;
}

void Topology::add_edge(std::size_t i, std::size_t j) {
  if (i >= n_ || j >= n_) {
    throw ConfigError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                      ") out of range for " + std::to_string(n_) + " RUs");
  }
  if (i == j) throw ConfigError("self-loop on RU " + std::to_string(i));
  if (adj_[i * n_ + j]) return;
  adj_[i * n_ + j] = adj_[j * n_ + i] = 1;
  auto insert_sorted = [](std::vector<std::size_t>& v, std::size_t x) {
    v.insert(std::lower_bound(v.begin(), v.end(), x), x);
  };
  insert_sorted(nbrs_[i], j);
  insert_sorted(nbrs_[j], i);
}

bool Topology::connected(std::size_t i, std::size_t j) const {
  return i < n_ && j < n_ && adj_[i * n_ + j] != 0;
}

const std::vector<std::size_t>& Topology::neighbors(std::size_t i) const { return nbrs_.at(i); }

std::vector<Edge> Topology::edges() const {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < n_; ++i)
    for (auto j : nbrs_[i])
      if (i < j) out.push_back({i, j});
  return out;
}

Eigen::MatrixXd Topology::adjacency() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_, n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (auto j : nbrs_[i]) a(i, j) = 1.0;
  return a;
}

bool Topology::is_connected_graph() const {
  if (n_ == 0) return true;
  std::vector<char> seen(n_, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    auto v = stack.back();
    stack.pop_back();
    for (auto w : nbrs_[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        stack.push_back(w);
      }
    }
  }
  return count == n_;
}

Topology Topology::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != n_) throw DimensionError("permutation size mismatch");
  Topology t(n_);
  for (const auto& e : edges()) t.add_edge(perm[e.i], perm[e.j]);
  return t;
}

std::string topology_to_json(const Topology& topology) {
  nlohmann::json j;
  j["n"] = topology.size();
  j["edges"] = nlohmann::json::array();
  for (const auto& e : topology.edges()) j["edges"].push_back({e.i, e.j});
  return j.dump();
}

Topology topology_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("topology JSON: ") + e.what());
  }
  if (!j.contains("n") || !j["n"].is_number_integer() || j["n"].get<long long>() < 1) {
    throw ConfigError("topology JSON: \"n\" must be a positive integer");
  }
  const auto n = j["n"].get<std::size_t>();
  if (j.contains("adjacency")) {
    const auto& rows = j["adjacency"];
    if (!rows.is_array() || rows.size() != n) throw ConfigError("topology JSON: adjacency must be n x n");
    Eigen::MatrixXd a(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      if (!rows[r].is_array() || rows[r].size() != n) {
        throw ConfigError("topology JSON: adjacency must be n x n");
      }
      for (std::size_t c = 0; c < n; ++c) a(r, c) = rows[r][c].get<double>();
    }
    return Topology::from_adjacency(a);
  }
  Topology t(n);
  if (j.contains("edges")) {
    for (const auto& e : j["edges"]) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("topology JSON: edges are [i, j] pairs");
      const auto a = e[0].get<long long>();
      const auto b = e[1].get<long long>();
      if (a < 0 || b < 0) throw ConfigError("topology JSON: negative RU index");
      t.add_edge(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    }
  }
  return t;
}

void RadioParams::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("radio.alpha must be > 0");
  if (!(n0 > 0.0)) throw ConfigError("radio.n0 must be > 0");
  if (!(bc >= 1.0)) throw ConfigError("radio.bc must be >= 1");
  if (!(pathloss_exponent > 0.0)) throw ConfigError("radio.pathloss_exponent must be > 0");
  if (!(pathloss_ref_gain > 0.0)) throw ConfigError("radio.pathloss_ref_gain must be > 0");
}

void RuConfig::validate() const {
  if (!(prb_min > 0 && prb_min <= prb_max)) {
    throw ConfigError("RU " + std::to_string(id) + ": require 0 < prb_min <= prb_max");
  }
  if (!(tx_power > 0.0)) throw ConfigError("RU " + std::to_string(id) + ": tx_power must be > 0");
}

double channel_gain(Point ru_pos, Point ue_pos, const RadioParams& params) {
  const double d = std::max(distance(ru_pos, ue_pos), 1.0);
  return params.pathloss_ref_gain * std::pow(d, -params.pathloss_exponent);
}

double sinr(double serving_power_gain, std::span<const double> interference_powers, double n0) {
  const double interference = std::accumulate(interference_powers.begin(), interference_powers.end(), 0.0);
  return serving_power_gain / (n0 + interference);
}

double prb_rate(double alpha, double sinr) { return alpha * std::log2(1.0 + sinr); }

double required_prbs(double demand, double rate, double bc) {
  if (demand <= 0.0) return 0.0;
  if (rate <= 0.0) return bc;
  return std::min(demand / rate, bc);
}

double ru_load(std::span<const double> required, double provisioned) {
  if (!(provisioned > 0.0)) throw ConsistencyError("ru_load: provisioned PRBs must be positive");
  return std::accumulate(required.begin(), required.end(), 0.0) / provisioned;
}

double rsrp_dbm(double tx_power, double gain) { return 10.0 * std::log10(tx_power * gain * 1000.0); }

bool a3_trigger(double m_i, double m_j, double cio_j_to_i, double cio_i_to_j, double hys) {
  return m_j + cio_j_to_i > hys + m_i + cio_i_to_j;
}

}  // namespace oranlb
