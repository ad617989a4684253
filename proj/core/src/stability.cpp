#include "oranlb/stability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "oranlb/error.hpp"

namespace oranlb {

using nlohmann::json;

std::string_view to_string(DiscVerdict v) {
  return v == DiscVerdict::ConclusiveStable ? "conclusive-stable" : "inconclusive";
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Stable:
      return "stable";
    case Verdict::Unstable:
      return "unstable";
    case Verdict::Indeterminate:
      break;
  }
  return "indeterminate";
}

bool StabilityReport::conditions_hold() const {
  return std::all_of(conditions.begin(), conditions.end(), [](const Condition& c) { return c.passed; });
}

std::pair<double, double> self_at(const IdentifiedModel& model, std::size_t ru, double l_star) {
  if (ru >= model.size()) throw DimensionError("self_at: RU " + std::to_string(ru) + " out of range");
  return {model.self(ru, l_star), model.self_prime(ru, l_star)};
}

Eigen::MatrixXd coupling_matrix(const IdentifiedModel& model, const Topology& topology, double) {
  if (model.size() != topology.size()) throw DimensionError("coupling_matrix: model and topology sizes differ");
  const auto n = static_cast<Eigen::Index>(topology.size());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  // Only the linear term of g survives the derivative at zero gap.
  for (std::size_t i = 0; i < topology.size(); ++i)
    for (auto j : topology.neighbors(i))
      P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = model.coupling_slope(i, j);
  return P;
}

Eigen::MatrixXd assemble_jacobian(const Eigen::VectorXd& f_prime, const Eigen::MatrixXd& P, const Topology& topology) {
  const auto n = static_cast<Eigen::Index>(topology.size());
  if (f_prime.size() != n || P.rows() != n || P.cols() != n) {
    throw DimensionError("assemble_jacobian: f_prime, P and topology disagree on N");
  }
  const Eigen::MatrixXd A = topology.adjacency();
  const Eigen::MatrixXd AP = A.cwiseProduct(P);
  Eigen::MatrixXd K = -AP;
  K.diagonal() += f_prime + AP.rowwise().sum();
  return K;
}

Linearization linearize(const IdentifiedModel& model, const Topology& topology, double l_star) {
  model.validate();
  if (model.size() != topology.size()) throw DimensionError("linearize: model and topology sizes differ");
  Linearization lin;
  lin.l_star = l_star;
  const auto n = static_cast<Eigen::Index>(topology.size());
  lin.f_at.resize(n);
  lin.f_prime.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [f, fp] = self_at(model, static_cast<std::size_t>(i), l_star);
    lin.f_at(i) = f;
    lin.f_prime(i) = fp;
  }
  lin.P = coupling_matrix(model, topology, l_star);
  const Eigen::MatrixXd AP = topology.adjacency().cwiseProduct(lin.P);
  lin.Q = AP.rowwise().sum().asDiagonal();
  lin.K = assemble_jacobian(lin.f_prime, lin.P, topology);
  return lin;
}

GershgorinResult gershgorin_check(const Eigen::MatrixXd& K) {
  if (K.rows() != K.cols()) throw DimensionError("gershgorin_check: K must be square");
  GershgorinResult r;
  bool all = K.rows() > 0;
  for (Eigen::Index i = 0; i < K.rows(); ++i) {
    const double radius = K.row(i).cwiseAbs().sum() - std::abs(K(i, i));
    r.discs.push_back({K(i, i), radius});
    if (!(K(i, i) + radius < 0.0)) all = false;
  }
  r.verdict = all ? DiscVerdict::ConclusiveStable : DiscVerdict::Inconclusive;
  return r;
}

namespace {

bool symmetric(const Eigen::MatrixXd& K) {
  const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
  return (K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

}  // namespace

std::vector<std::complex<double>> eigenvalues(const Eigen::MatrixXd& K) {
  if (K.rows() != K.cols()) throw DimensionError("eigenvalues: K must be square");
  if (!K.allFinite()) throw NumericError("eigenvalues: non-finite entry");
  std::vector<std::complex<double>> out;
  if (K.rows() == 0) return out;
  if (symmetric(K)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
      throw ConvergenceError("symmetric eigensolver did not converge",
                             static_cast<int>(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>::m_maxIterations * K.rows()));
    }
    for (Eigen::Index i = 0; i < K.rows(); ++i) out.emplace_back(es.eigenvalues()(i), 0.0);
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> es(K, false);
    if (es.info() != Eigen::Success) {
      throw ConvergenceError("general eigensolver did not converge", static_cast<int>(es.getMaxIterations() * K.rows()));
    }
    for (Eigen::Index i = 0; i < K.rows(); ++i) out.push_back(es.eigenvalues()(i));
    std::sort(out.begin(), out.end(), [](auto a, auto b) {
      return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
    });
  }
  return out;
}

double max_eigenvalue(const Eigen::MatrixXd& K) {
  const auto ev = eigenvalues(K);
  if (ev.empty()) throw DimensionError("max_eigenvalue: empty matrix");
  double best = -std::numeric_limits<double>::infinity();
  for (auto v : ev) best = std::max(best, v.real());
  return best;
}

Verdict classify(double lambda, double margin) {
  if (lambda < -margin) return Verdict::Stable;
  if (lambda > margin) return Verdict::Unstable;
  return Verdict::Indeterminate;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

StabilityReport check_proposition1(const IdentifiedModel& model, const Topology& topology, const Tolerances& tol,
                                   double l_star) {
  StabilityReport r;
  r.tolerances = tol;
  r.lin = linearize(model, topology, l_star);
  const auto& lin = r.lin;
  const auto n = topology.size();

  Condition eq{"f_i(l*) = 0", true, {}};
  Condition slope{"f_i'(l*) < 0", true, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (!(std::abs(lin.f_at(k)) <= tol.eq)) {
      eq.passed = false;
      eq.failures.push_back("RU " + std::to_string(i) + ": f = " + fmt(lin.f_at(k)));
    }
    if (!(lin.f_prime(k) < -tol.margin)) {
      slope.passed = false;
      const bool near = std::abs(lin.f_prime(k)) <= tol.margin;
      slope.failures.push_back("RU " + std::to_string(i) + ": f' = " + fmt(lin.f_prime(k)) +
                               (near ? " (within margin of 0)" : ""));
    }
  }

  r.sym_tolerance = tol.sym_rel * (lin.P.size() ? lin.P.cwiseAbs().maxCoeff() : 0.0);
  Condition sym{"p_ij = p_ji", true, {}};
  Condition neg{"p_ij < 0 on edges", true, {}};
  for (const auto& e : topology.edges()) {
    const auto a = static_cast<Eigen::Index>(e.i);
    const auto b = static_cast<Eigen::Index>(e.j);
    const std::string pair = "(" + std::to_string(e.i) + ", " + std::to_string(e.j) + ")";
    if (!(std::abs(lin.P(a, b) - lin.P(b, a)) <= r.sym_tolerance)) {
      sym.passed = false;
      sym.failures.push_back(pair + ": " + fmt(lin.P(a, b)) + " vs " + fmt(lin.P(b, a)));
    }
    for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
      if (!(lin.P(x, y) < 0.0)) {
        neg.passed = false;
        neg.failures.push_back("(" + std::to_string(x) + ", " + std::to_string(y) + "): " + fmt(lin.P(x, y)));
      }
    }
  }
  r.conditions = {eq, slope, sym, neg};

  r.gershgorin = gershgorin_check(lin.K);
  r.eigenvalues = eigenvalues(lin.K);
  r.max_eigenvalue = -std::numeric_limits<double>::infinity();
  for (auto v : r.eigenvalues) r.max_eigenvalue = std::max(r.max_eigenvalue, v.real());
  r.verdict = classify(r.max_eigenvalue, tol.margin);
  return r;
}

Eigen::MatrixXd stabilize_policy(const Eigen::MatrixXd& P, const Topology& topology, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("stabilize_policy: epsilon must be > 0");
  const auto n = static_cast<Eigen::Index>(topology.size());
  if (P.rows() != n || P.cols() != n) throw DimensionError("stabilize_policy: P must be N x N");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : topology.edges()) {
    const auto a = static_cast<Eigen::Index>(e.i);
    const auto b = static_cast<Eigen::Index>(e.j);
    const double v = std::min(0.5 * (P(a, b) + P(b, a)), -epsilon);
    out(a, b) = v;
    out(b, a) = v;
  }
  return out;
}

Eigen::MatrixXd policy_to_beta(const Eigen::MatrixXd& P, const Eigen::VectorXd& scale, double dt) {
  if (P.rows() != P.cols() || P.rows() != scale.size()) throw DimensionError("policy_to_beta: shape mismatch");
  if (!(dt > 0.0)) throw ConfigError("policy_to_beta: dt must be > 0");
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(P.rows(), P.cols());
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j)
      if (i != j && P(i, j) < 0.0) beta(i, j) = -P(i, j) * scale(i) * dt;
  return beta;
}

// ---------------------------------------------------------------------------

namespace {

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string report_to_json(const StabilityReport& r) {
  json j;
  j["l_star"] = r.lin.l_star;
  j["verdict"] = std::string(to_string(r.verdict));
  j["max_eigenvalue"] = r.max_eigenvalue;
  j["conditions_hold"] = r.conditions_hold();
  j["tolerances"] = {{"eq", r.tolerances.eq},
                     {"sym_rel", r.tolerances.sym_rel},
                     {"sym_abs", r.sym_tolerance},
                     {"margin", r.tolerances.margin}};
  j["conditions"] = json::array();
  for (const auto& c : r.conditions) j["conditions"].push_back({{"name", c.name}, {"passed", c.passed}, {"failures", c.failures}});
  j["gershgorin"]["verdict"] = std::string(to_string(r.gershgorin.verdict));
  j["gershgorin"]["discs"] = json::array();
  for (const auto& d : r.gershgorin.discs) j["gershgorin"]["discs"].push_back({{"center", d.center}, {"radius", d.radius}});
  j["eigenvalues"] = json::array();
  for (auto v : r.eigenvalues) j["eigenvalues"].push_back({v.real(), v.imag()});
  j["f_at"] = vec_json(r.lin.f_at);
  j["f_prime"] = vec_json(r.lin.f_prime);
  j["P"] = mat_json(r.lin.P);
  j["K"] = mat_json(r.lin.K);
  if (r.stabilized_P) j["stabilized_P"] = mat_json(*r.stabilized_P);
  return j.dump(2);
}

std::string report_table(const StabilityReport& r) {
  std::ostringstream out;
  char line[160];
  out << "linearization at l* = " << fmt(r.lin.l_star) << "\n\n";
  out << "  RU        f(l*)       f'(l*)    disc centre   disc radius   centre+radius\n";
  for (std::size_t i = 0; i < r.gershgorin.discs.size(); ++i) {
    const auto& d = r.gershgorin.discs[i];
    const auto k = static_cast<Eigen::Index>(i);
    std::snprintf(line, sizeof line, "%4zu %12.5g %12.5g %14.5g %13.5g %15.5g\n", i, r.lin.f_at(k), r.lin.f_prime(k),
                  d.center, d.radius, d.center + d.radius);
    out << line;
  }
  out << "\nconditions\n";
  for (const auto& c : r.conditions) {
    out << "  [" << (c.passed ? "ok" : "FAIL") << "] " << c.name << "\n";
    const std::size_t shown = std::min<std::size_t>(c.failures.size(), 8);
    for (std::size_t k = 0; k < shown; ++k) out << "         " << c.failures[k] << "\n";
    if (c.failures.size() > shown) out << "         ... " << c.failures.size() - shown << " more\n";
  }
  out << "\ngershgorin: " << to_string(r.gershgorin.verdict) << "\n";
  out << "max eigenvalue: " << fmt(r.max_eigenvalue) << "\n";
  out << "verdict: " << to_string(r.verdict) << "\n";
  return out.str();
}

}  // namespace oranlb
