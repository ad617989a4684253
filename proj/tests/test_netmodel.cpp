#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oranlb/error.hpp"
#include "oranlb/netmodel.hpp"

using namespace oranlb;

TEST(ChannelGain, ReferenceDistance) {
  RadioParams p;
  EXPECT_DOUBLE_EQ(channel_gain({0, 0}, {1, 0}, p), 1e-3);
}

TEST(ChannelGain, ClampsBelowOneMetre) {
  RadioParams p;
  EXPECT_DOUBLE_EQ(channel_gain({0, 0}, {0.1, 0}, p), channel_gain({0, 0}, {1, 0}, p));
  EXPECT_DOUBLE_EQ(channel_gain({3, 4}, {3, 4}, p), 1e-3);
}

TEST(ChannelGain, TenMetres) {
  RadioParams p;
  EXPECT_NEAR(channel_gain({0, 0}, {10, 0}, p), 3.162e-7, 1e-10);
  EXPECT_DOUBLE_EQ(channel_gain({0, 0}, {10, 0}, p), 1e-3 * std::pow(10.0, -3.5));
}

TEST(ChannelGain, NonincreasingInDistance) {
  RadioParams p;
  double prev = channel_gain({0, 0}, {1, 0}, p);
  for (double d = 1.5; d < 2000; d *= 1.3) {
    const double g = channel_gain({0, 0}, {0, d}, p);
    EXPECT_LE(g, prev);
    EXPECT_GT(g, 0.0);
    prev = g;
  }
}

TEST(Sinr, Examples) {
  EXPECT_EQ(sinr(0.0, {}, 1e-9), 0.0);
  EXPECT_DOUBLE_EQ(sinr(1e-9, {}, 1e-9), 1.0);
  const std::vector<double> interf{1e-9, 1e-9};
  EXPECT_DOUBLE_EQ(sinr(3e-9, interf, 1e-9), 1.0);
}

TEST(PrbRate, Examples) {
  EXPECT_EQ(prb_rate(180e3, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(prb_rate(180e3, 1.0), 180e3);
  EXPECT_DOUBLE_EQ(prb_rate(180e3, 15.0), 720e3);
}

TEST(PrbRate, MonotoneInSinr) {
  double prev = 0.0;
  for (double s = 0.0; s < 1e4; s = s * 1.7 + 0.01) {
    const double r = prb_rate(180e3, s);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(RequiredPrbs, Examples) {
  EXPECT_DOUBLE_EQ(required_prbs(1.44e6, 720e3, 10), 2.0);
  EXPECT_DOUBLE_EQ(required_prbs(7.2e6, 144e3, 20), 20.0);
}

TEST(RequiredPrbs, ZeroRateMapsToCap) {
  EXPECT_DOUBLE_EQ(required_prbs(1e5, 0.0, 20), 20.0);
  EXPECT_DOUBLE_EQ(required_prbs(0.0, 0.0, 20), 0.0);
}

TEST(RequiredPrbs, NonincreasingInRateAndCapped) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> demand(0, 5e6);
  for (int t = 0; t < 200; ++t) {
    const double m = demand(rng);
    double prev = 1e300;
    for (double r = 1e3; r < 1e8; r *= 2.1) {
      const double q = required_prbs(m, r, 20);
      EXPECT_LE(q, prev);
      EXPECT_LE(q, 20.0);
      prev = q;
    }
  }
}

TEST(RuLoad, Examples) {
  EXPECT_EQ(ru_load({}, 100), 0.0);
  const std::vector<double> full{40, 60};
  EXPECT_DOUBLE_EQ(ru_load(full, 100), 1.0);
  const std::vector<double> half{50};
  EXPECT_DOUBLE_EQ(ru_load(half, 100), 0.5);
}

TEST(RuLoad, RejectsZeroProvisioned) {
  const std::vector<double> r{1.0};
  EXPECT_THROW(ru_load(r, 0), ConsistencyError);
}

TEST(RuLoad, Homogeneity) {
  const std::vector<double> r{3, 7.5, 11};
  std::vector<double> r2;
  for (double x : r) r2.push_back(2.5 * x);
  EXPECT_DOUBLE_EQ(ru_load(r2, 40), 2.5 * ru_load(r, 40));
  EXPECT_DOUBLE_EQ(ru_load(r, 80), ru_load(r, 40) / 2.0);
}

TEST(Rsrp, Examples) {
  EXPECT_DOUBLE_EQ(rsrp_dbm(1.0, 1.0), 30.0);
  EXPECT_NEAR(rsrp_dbm(1.0, 1e-3), 0.0, 1e-12);
  EXPECT_NEAR(rsrp_dbm(10.0, 1e-9), -50.0, 1e-12);
}

TEST(A3, Examples) {
  EXPECT_FALSE(a3_trigger(-80, -80, 0, 0, 3));
  EXPECT_TRUE(a3_trigger(-90, -80, 0, 0, 3));
  EXPECT_TRUE(a3_trigger(-80, -80, 5, 0, 3));
}

TEST(A3, StrictInequality) {
  EXPECT_FALSE(a3_trigger(-80, -77, 0, 0, 3));
  EXPECT_TRUE(a3_trigger(-80, -76.999, 0, 0, 3));
}

TEST(A3, NeverBothDirections) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> m(-120, -40), h(0.01, 6);
  for (int t = 0; t < 5000; ++t) {
    const double a = m(rng), b = m(rng), hys = h(rng);
    EXPECT_FALSE(a3_trigger(a, b, 0, 0, hys) && a3_trigger(b, a, 0, 0, hys));
  }
}

TEST(Topology, FromEdgesAndQueries) {
  const std::vector<Edge> e{{0, 1}, {2, 1}, {3, 0}};
  const auto t = Topology::from_edges(4, e);
  EXPECT_EQ(t.size(), 4u);
  EXPECT_TRUE(t.connected(1, 2));
  EXPECT_TRUE(t.connected(2, 1));
  EXPECT_FALSE(t.connected(0, 2));
  EXPECT_EQ(t.neighbors(0), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(t.degree(1), 2u);
  EXPECT_EQ(t.edges(), (std::vector<Edge>{{0, 1}, {0, 3}, {1, 2}}));
  EXPECT_TRUE(t.is_connected_graph());
}

TEST(Topology, RejectsBadEdges) {
  Topology t(3);
  EXPECT_THROW(t.add_edge(1, 1), ConfigError);
  EXPECT_THROW(t.add_edge(0, 3), ConfigError);
}

TEST(Topology, AdjacencyValidation) {
  Eigen::MatrixXd a(2, 2);
  a << 0, 1, 0, 0;
  EXPECT_THROW(Topology::from_adjacency(a), ConfigError);
  a << 1, 0, 0, 0;
  EXPECT_THROW(Topology::from_adjacency(a), ConfigError);
  a << 0, 2, 2, 0;
  EXPECT_THROW(Topology::from_adjacency(a), ConfigError);
  EXPECT_THROW(Topology::from_adjacency(Eigen::MatrixXd::Zero(2, 3)), DimensionError);
  a << 0, 1, 1, 0;
  EXPECT_EQ(Topology::from_adjacency(a).adjacency(), a);
}

TEST(Topology, Grid) {
  const auto plain = Topology::grid(3, 4, false);
  EXPECT_EQ(plain.edges().size(), 17u);
  const auto king = Topology::grid(3, 4, true);
  EXPECT_EQ(king.edges().size(), 17u + 12u);
  EXPECT_EQ(king.degree(5), 8u);
  EXPECT_EQ(king.degree(0), 3u);
}

TEST(Topology, Disconnected) {
  const std::vector<Edge> e{{0, 1}, {2, 3}};
  EXPECT_FALSE(Topology::from_edges(4, e).is_connected_graph());
}

TEST(Topology, Permuted) {
  const std::vector<Edge> e{{0, 1}, {1, 2}};
  const auto t = Topology::from_edges(3, e);
  const std::vector<std::size_t> perm{2, 0, 1};
  const auto p = t.permuted(perm);
  EXPECT_TRUE(p.connected(2, 0));
  EXPECT_TRUE(p.connected(0, 1));
  EXPECT_FALSE(p.connected(2, 1));
}

TEST(Topology, JsonRoundTrip) {
  const auto t = Topology::grid(2, 3, true);
  EXPECT_EQ(topology_from_json(topology_to_json(t)), t);
  const auto a = topology_from_json(R"({"n": 3, "adjacency": [[0,1,0],[1,0,1],[0,1,0]]})");
  EXPECT_TRUE(a.connected(1, 2));
  EXPECT_THROW(topology_from_json(R"({"n": 2, "adjacency": [[0,1],[0,0]]})"), ConfigError);
  EXPECT_THROW(topology_from_json(R"({"n": 0, "edges": []})"), ConfigError);
  EXPECT_THROW(topology_from_json("{"), ConfigError);
}
