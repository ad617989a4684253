#pragma once

// Linearization of the identified network at the balanced state and the
// Gershgorin / eigenvalue stability tests built on it.

#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oranlb/netmodel.hpp"
#include "oranlb/sysid.hpp"

namespace oranlb {

struct Linearization {
  double l_star = 1.0;
  Eigen::VectorXd f_at;
  Eigen::VectorXd f_prime;
  Eigen::MatrixXd P;  // p_ij, zero off edges
  Eigen::MatrixXd Q;  // diag(sum_j a_ij p_ij)
  Eigen::MatrixXd K;  // diag(f_prime) + Q - A .* P
};

struct Tolerances {
  double eq = 0.05;        // |f_i(l*)|
  double sym_rel = 0.05;   // |p_ij - p_ji| <= sym_rel * max|P|
  double margin = 1e-6;    // eigenvalues and slopes closer to 0 are indeterminate
};

struct Disc {
  double center = 0.0;
  double radius = 0.0;
};

enum class DiscVerdict { ConclusiveStable, Inconclusive };
enum class Verdict { Stable, Unstable, Indeterminate };

std::string_view to_string(DiscVerdict v);
std::string_view to_string(Verdict v);

struct GershgorinResult {
  std::vector<Disc> discs;
  DiscVerdict verdict = DiscVerdict::Inconclusive;
};

struct Condition {
  std::string name;
  bool passed = true;
  std::vector<std::string> failures;
};

struct StabilityReport {
  Linearization lin;
  std::vector<Condition> conditions;  // the four conditions of the sufficiency theorem
  GershgorinResult gershgorin;
  std::vector<std::complex<double>> eigenvalues;
  double max_eigenvalue = 0.0;
  Verdict verdict = Verdict::Indeterminate;
  Tolerances tolerances;
  double sym_tolerance = 0.0;  // absolute tolerance actually applied
  std::optional<Eigen::MatrixXd> stabilized_P;

  bool conditions_hold() const;
};

/// (f_i(l*), f_i'(l*)).
std::pair<double, double> self_at(const IdentifiedModel& model, std::size_t ru, double l_star = 1.0);

/// p_ij = d g_ij / d l_i at l_i = l_j; aggregated models give every incident
/// edge of RU i the same value.
Eigen::MatrixXd coupling_matrix(const IdentifiedModel& model, const Topology& topology, double l_star = 1.0);

Eigen::MatrixXd assemble_jacobian(const Eigen::VectorXd& f_prime, const Eigen::MatrixXd& P, const Topology& topology);

Linearization linearize(const IdentifiedModel& model, const Topology& topology, double l_star = 1.0);

GershgorinResult gershgorin_check(const Eigen::MatrixXd& K);

/// Full spectrum; symmetric input goes through the self-adjoint solver.
std::vector<std::complex<double>> eigenvalues(const Eigen::MatrixXd& K);

/// Largest real part of the spectrum.
double max_eigenvalue(const Eigen::MatrixXd& K);

Verdict classify(double max_eigenvalue, double margin);

StabilityReport check_proposition1(const IdentifiedModel& model, const Topology& topology,
                                   const Tolerances& tolerances = {}, double l_star = 1.0);

/// Symmetrizes P on every edge and caps it at -epsilon.
Eigen::MatrixXd stabilize_policy(const Eigen::MatrixXd& P, const Topology& topology, double epsilon);

/// beta_ij = -p_ij * scale_i * dt, the simulator's offload coefficients for a
/// coupling matrix. `scale` is typically the mean provisioned PRBs per RU.
Eigen::MatrixXd policy_to_beta(const Eigen::MatrixXd& P, const Eigen::VectorXd& scale, double dt);

std::string report_to_json(const StabilityReport& report);
/// Human readable summary for terminals.
std::string report_table(const StabilityReport& report);

}  // namespace oranlb
