#pragma once

// Radio and load arithmetic for a single DU serving N radio units, plus the
// undirected RU adjacency structure.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oranlb {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b);

struct Edge {
  std::size_t i;
  std::size_t j;
  bool operator==(const Edge&) const = default;
};

/// Undirected RU adjacency with a zero diagonal. Neighbor lists are kept
/// sorted so iteration order is deterministic.
class Topology {
 public:
  Topology() = default;
  explicit Topology(std::size_t n);

  static Topology from_edges(std::size_t n, std::span<const Edge> edges);
  /// Rejects asymmetric matrices, nonzero diagonals and entries outside {0,1}.
  static Topology from_adjacency(const Eigen::MatrixXd& adjacency);
  /// RUs laid out row-major on a rows x cols grid. With `diagonals` each RU is
  /// also linked to its diagonal neighbours (8-neighbourhood).
  static Topology grid(std::size_t rows, std::size_t cols, bool diagonals);

  void add_edge(std::size_t i, std::size_t j);

  std::size_t size() const noexcept { return n_; }
  bool connected(std::size_t i, std::size_t j) const;
  const std::vector<std::size_t>& neighbors(std::size_t i) const;
  std::size_t degree(std::size_t i) const { return neighbors(i).size(); }
  /// Every undirected edge once, with i < j, in lexicographic order.
  std::vector<Edge> edges() const;
  Eigen::MatrixXd adjacency() const;
  bool is_connected_graph() const;

  /// Same graph with RU k relabelled as perm[k].
  Topology permuted(std::span<const std::size_t> perm) const;

  bool operator==(const Topology& other) const {
    return n_ == other.n_ && adj_ == other.adj_;
  }

 private:
  std::size_t n_ = 0;
  std::vector<unsigned char> adj_;
  std::vector<std::vector<std::size_t>> nbrs_;
};

/// {"n": int, "edges": [[i, j], ...]} with 0-based indices. The loader also
/// accepts {"n": int, "adjacency": [[...], ...]} and validates it.
std::string topology_to_json(const Topology& topology);
Topology topology_from_json(std::string_view text);

struct RadioParams {
  double alpha = 180e3;              // Hz per PRB
  double n0 = 3.6e-15;               // W, thermal noise over one PRB
  double bc = 20.0;                  // PRB cap per UE
  double pathloss_exponent = 3.5;
  double pathloss_ref_gain = 1e-3;   // gain at 1 m

  void validate() const;
};

struct RuConfig {
  std::size_t id = 0;
  Point position;
  double tx_power = 1.0;  // W
  int prb_min = 10;
  int prb_max = 100;
  /// Offset in dB this RU applies toward each other RU (indexed by RU id) when
  /// it offloads users. Missing entries read as 0.
  std::vector<double> cio;
  double hys = 2.0;  // dB

  double cio_toward(std::size_t j) const { return j < cio.size() ? cio[j] : 0.0; }
  void validate() const;
};

struct UeDemand {
  std::size_t id = 0;
  Point position;
  double bitrate = 0.0;  // bits/s
  int lifetime = 0;      // steps remaining
};

/// Log-distance path loss, distance clamped at 1 m.
double channel_gain(Point ru_pos, Point ue_pos, const RadioParams& params);

double sinr(double serving_power_gain, std::span<const double> interference_powers, double n0);

/// Shannon rate of one PRB in bits/s.
double prb_rate(double alpha, double sinr);

/// Real-valued PRB requirement, capped at bc. A zero rate with positive demand
/// maps to the cap.
double required_prbs(double demand, double rate, double bc);

double ru_load(std::span<const double> required, double provisioned);

double rsrp_dbm(double tx_power, double gain);

/// A3 entry condition: m_j + cio_j_to_i > hys + m_i + cio_i_to_j.
bool a3_trigger(double m_i, double m_j, double cio_j_to_i, double cio_i_to_j, double hys);

}  // namespace oranlb
