#pragma once

// Shared fixtures for the unit tests and the acceptance runner. Everything here
// is written independently of the library's own integrators and solvers.

#include <algorithm>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "oranlb/netmodel.hpp"
#include "oranlb/sysid.hpp"
#include "oranlb/telemetry.hpp"

namespace oranlb::testing {

inline constexpr double kRefA = 1.229;
inline constexpr double kRefB = -1.35;
inline constexpr double kRefD = 0.122;

inline double reference_f(double l) { return kRefA + kRefB * l + kRefD * l * l * l; }

// dl_i/dt = f(l_i) + p * sum_j a_ij (l_i - l_j)
inline Eigen::VectorXd coupled_field(const Eigen::VectorXd& l, const Topology& topo, double p) {
  Eigen::VectorXd d(l.size());
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    double c = 0.0;
    for (auto j : topo.neighbors(static_cast<std::size_t>(i))) c += l(i) - l(static_cast<Eigen::Index>(j));
    d(i) = reference_f(l(i)) + p * c;
  }
  return d;
}

inline TelemetrySeries integrate_rk4(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& field,
                                     Eigen::VectorXd l, double dt, std::size_t samples) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(samples), l.size());
  std::vector<double> t(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    out.row(static_cast<Eigen::Index>(k)) = l.transpose();
    t[k] = dt * static_cast<double>(k);
    const Eigen::VectorXd k1 = field(l);
    const Eigen::VectorXd k2 = field(l + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = field(l + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = field(l + dt * k3);
    l += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return TelemetrySeries::from_loads(std::move(t), std::move(out));
}

inline TelemetrySeries synthetic_series(const Topology& topo, double p, std::size_t samples, double dt,
                                        unsigned seed, double lo = 0.3, double hi = 2.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd l0(static_cast<Eigen::Index>(topo.size()));
  for (auto& v : l0) v = u(rng);
  return integrate_rk4([&](const Eigen::VectorXd& l) { return coupled_field(l, topo, p); }, l0, dt, samples);
}

// Coefficients of RU i in library order: [1, l, l^2, l^3 | c1, c2, c3].
inline Eigen::VectorXd reference_truth(double p) {
  Eigen::VectorXd x(7);
  x << kRefA, kRefB, 0.0, kRefD, p, 0.0, 0.0;
  return x;
}

// Random spanning tree plus extra random edges.
inline Topology random_connected(std::size_t n, std::mt19937_64& rng, double extra = 0.2) {
  Topology t(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k = 1; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    t.add_edge(order[k], order[pick(rng)]);
  }
  std::bernoulli_distribution coin(extra);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (!t.connected(i, j) && coin(rng)) t.add_edge(i, j);
  return t;
}

// Number of eigenvalues of symmetric S strictly below x, by LDL^T inertia
// (Sylvester's law) on S - xI without pivoting; fine for generic shifts.
inline int count_below(const Eigen::MatrixXd& S, double x) {
  const auto n = S.rows();
  Eigen::MatrixXd A = S - x * Eigen::MatrixXd::Identity(n, n);
  int neg = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    double d = A(k, k);
    if (d == 0.0) d = 1e-300;
    if (d < 0) ++neg;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = A(i, k) / d;
      for (Eigen::Index j = k + 1; j < n; ++j) A(i, j) -= f * A(k, j);
    }
  }
  return neg;
}

// Largest eigenvalue of a symmetric matrix by bisection on the inertia count.
inline double bisect_max_eigenvalue(const Eigen::MatrixXd& S, double tol = 1e-12) {
  const auto n = static_cast<int>(S.rows());
  double r = 0.0;
  for (Eigen::Index i = 0; i < S.rows(); ++i) r = std::max(r, S.row(i).cwiseAbs().sum());
  double lo = -r - 1.0, hi = r + 1.0;
  while (hi - lo > tol * std::max(1.0, std::abs(hi))) {
    const double mid = 0.5 * (lo + hi);
    if (count_below(S, mid) < n) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Characteristic polynomial coefficients (monic, highest first) by the
// Faddeev-LeVerrier recursion.
inline std::vector<double> char_poly(const Eigen::MatrixXd& A) {
  const auto n = A.rows();
  std::vector<double> c(static_cast<std::size_t>(n) + 1, 0.0);
  c[0] = 1.0;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    M = A * M + c[static_cast<std::size_t>(k - 1)] * I;
    c[static_cast<std::size_t>(k)] = -(A * M).trace() / static_cast<double>(k);
  }
  return c;
}

inline double poly_eval(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (double a : c) v = v * x + a;
  return v;
}

// Largest real root of the characteristic polynomial of a symmetric matrix,
// bracketed by a sign-change scan from the Gershgorin bound downwards and then
// bisected.
inline double char_poly_max_root(const Eigen::MatrixXd& S, int scan = 20000) {
  const auto c = char_poly(S);
  double r = 0.0;
  for (Eigen::Index i = 0; i < S.rows(); ++i) r = std::max(r, S(i, i) + (S.row(i).cwiseAbs().sum() - std::abs(S(i, i))));
  double lo_bound = 0.0;
  for (Eigen::Index i = 0; i < S.rows(); ++i)
    lo_bound = std::min(lo_bound, S(i, i) - (S.row(i).cwiseAbs().sum() - std::abs(S(i, i))));
  double hi = r + 1e-9;
  const double step = (hi - lo_bound + 1.0) / scan;
  double f_hi = poly_eval(c, hi);
  for (int k = 1; k <= scan; ++k) {
    const double lo = hi - step;
    const double f_lo = poly_eval(c, lo);
    if ((f_lo <= 0) != (f_hi <= 0)) {
      double a = lo, b = hi, fa = f_lo;
      for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(b)); ++it) {
        const double m = 0.5 * (a + b);
        const double fm = poly_eval(c, m);
        if ((fm <= 0) == (fa <= 0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      return 0.5 * (a + b);
    }
    hi = lo;
    f_hi = f_lo;
  }
  return hi;
}

}  // namespace oranlb::testing
