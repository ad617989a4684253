#pragma once

// Sparse identification of coupled load dynamics
//   dl_i/dt = f_i(l_i) + sum_j a_ij g_i(l_i - l_j)
// with polynomial f and g, from telemetry.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "oranlb/netmodel.hpp"
#include "oranlb/telemetry.hpp"

namespace oranlb {

enum class CouplingMode { Aggregated, PerEdge };

std::string_view to_string(CouplingMode mode);
CouplingMode coupling_mode_from_string(std::string_view text);

struct LibrarySpec {
  int degree_self = 3;      // columns 1, l, ..., l^d_f
  int degree_coupling = 3;  // powers 1..d_g of the load gap
  CouplingMode coupling_mode = CouplingMode::Aggregated;

  void validate() const;
  std::size_t self_columns() const { return static_cast<std::size_t>(degree_self) + 1; }
  /// Coupling columns of an RU with `degree` neighbours.
  std::size_t coupling_columns(std::size_t degree) const;
  bool operator==(const LibrarySpec&) const = default;
};

enum class DiffScheme { Forward, Central };

std::string_view to_string(DiffScheme scheme);
DiffScheme diff_scheme_from_string(std::string_view text);

struct DerivativeMatrix {
  Eigen::MatrixXd ldot;             // one row per aligned sample
  std::vector<double> times;        // aligned sample instants
  std::vector<Eigen::Index> rows;   // series row each derivative is aligned to
  DiffScheme scheme = DiffScheme::Forward;
};

DerivativeMatrix estimate_derivatives(const TelemetrySeries& series, DiffScheme scheme);

/// Column labels of RU i's library, e.g. "l^2" or "(l_i-l_3)^1".
std::vector<std::string> library_terms(const LibrarySpec& spec, const Topology& topology, std::size_t i);

/// One library row of RU i at the load vector `l`.
Eigen::RowVectorXd library_row(const Eigen::Ref<const Eigen::RowVectorXd>& l, const Topology& topology,
                               const LibrarySpec& spec, std::size_t i);

/// Regressor matrix per RU with one row per entry of `deriv.rows`.
std::vector<Eigen::MatrixXd> build_library(const TelemetrySeries& series, const Topology& topology,
                                           const LibrarySpec& spec, const DerivativeMatrix& deriv);

struct RegressOptions {
  double tolerance = 1e-8;
  int max_sweeps = 10000;
  bool debias = true;
  /// Sequential thresholding after the refit: coefficients with magnitude
  /// below this are dropped and the support refitted until nothing changes.
  double threshold = 0.0;
};

struct SparseFit {
  Eigen::VectorXd coef;       // final coefficients, original units
  Eigen::VectorXd penalized;  // coordinate-descent solution, original units
  std::vector<char> support;
  int sweeps = 0;
  bool converged = false;
  double objective = 0.0;       // penalized objective at `penalized`, standardized units
  double zero_objective = 0.0;  // same objective at xi = 0
};

/// Minimizes 0.5 |y - Z w|^2 + gamma |w|_1 over RMS-standardized columns Z,
/// then refits the support by least squares.
SparseFit sparse_regress(const Eigen::MatrixXd& theta, const Eigen::VectorXd& y, double gamma,
                         const RegressOptions& options = {});

/// Smallest gamma that zeroes every coefficient.
double gamma_max(const Eigen::MatrixXd& theta, const Eigen::VectorXd& y);

struct RuModel {
  std::size_t id = 0;
  Eigen::VectorXd xi_f;
  Eigen::VectorXd xi_g;
  std::optional<double> r2;  // empty when the response is constant
  double residual_norm = 0.0;
  std::size_t samples = 0;
  int sweeps = 0;
  bool converged = true;
};

struct IdentifiedModel {
  LibrarySpec library;
  double gamma = 0.0;
  Topology topology;
  std::vector<RuModel> rus;

  std::size_t size() const { return rus.size(); }

  double self(std::size_t i, double l) const;
  double self_prime(std::size_t i, double l) const;
  /// Coupling polynomial of edge (i, j) at gap d.
  double coupling(std::size_t i, std::size_t j, double d) const;
  /// Linear coefficient of edge (i, j).
  double coupling_slope(std::size_t i, std::size_t j) const;

  Eigen::VectorXd vector_field(const Eigen::Ref<const Eigen::VectorXd>& l) const;
  /// Model coefficients of RU i laid out like its library row.
  Eigen::VectorXd coefficients(std::size_t i) const;

  void validate() const;
};

struct IdentifyOptions {
  std::optional<double> gamma;  // unset: time-blocked cross-validation
  DiffScheme scheme = DiffScheme::Forward;
  bool mask_saturated = false;
  std::vector<int> prb_min;  // per RU; needed only with mask_saturated
  std::vector<int> prb_max;
  int cv_folds = 5;
  int cv_grid = 24;
  RegressOptions regress;
};

/// Rows of `deriv` at which RU i is clipped by a capacity bound.
std::vector<char> saturation_mask(const TelemetrySeries& series, const DerivativeMatrix& deriv, std::size_t ru,
                                  const IdentifyOptions& options);

IdentifiedModel identify_network(const TelemetrySeries& series, const Topology& topology, const LibrarySpec& spec,
                                 const IdentifyOptions& options = {});

/// Pools samples of several experiments on the same network.
IdentifiedModel identify_network(std::span<const TelemetrySeries> experiments, const Topology& topology,
                                 const LibrarySpec& spec, const IdentifyOptions& options = {});

struct CvResult {
  std::vector<double> grid;
  std::vector<double> mean_error;
  std::vector<double> std_error;
  double best = 0.0;      // minimum mean error
  double selected = 0.0;  // one-standard-error choice
};

/// Network-wide gamma by blocked cross-validation, the sum of per-RU errors
/// being the score.
CvResult cross_validate_gamma(const std::vector<Eigen::MatrixXd>& thetas, const std::vector<Eigen::VectorXd>& ys,
                              int folds, int grid_size, const RegressOptions& options);

Eigen::MatrixXd simulate_model(const IdentifiedModel& model, const Eigen::Ref<const Eigen::VectorXd>& l0,
                               double horizon, double step);

struct FitDiagnostics {
  std::size_t ru = 0;
  std::optional<double> r2;
  double residual_norm = 0.0;
  std::size_t samples = 0;
};

std::vector<FitDiagnostics> fit_diagnostics(const IdentifiedModel& model, const TelemetrySeries& series,
                                            const IdentifyOptions& options = {});

/// R^2 of a prediction; empty for a constant response.
std::optional<double> r_squared(const Eigen::Ref<const Eigen::VectorXd>& observed,
                                const Eigen::Ref<const Eigen::VectorXd>& predicted);

struct ScatterPoint {
  std::size_t ru = 0;
  double time = 0.0;
  double load = 0.0;
  double observed = 0.0;
  double predicted = 0.0;
};

/// Observed vs model derivative at every usable sample.
std::vector<ScatterPoint> derivative_scatter(const IdentifiedModel& model, const TelemetrySeries& series,
                                             const IdentifyOptions& options = {});

std::string model_to_json(const IdentifiedModel& model);
IdentifiedModel model_from_json(std::string_view text);

}  // namespace oranlb
