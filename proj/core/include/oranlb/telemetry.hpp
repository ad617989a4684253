#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace oranlb {

/// One RU's observables at one simulator step.
struct TelemetryRow {
  std::int64_t step = 0;
  double time = 0.0;
  std::size_t ru_id = 0;
  double demand_prbs = 0.0;
  double allocated_prbs = 0.0;
  int provisioned_prbs = 0;
  double load = 0.0;
  int ue_count = 0;

  bool operator==(const TelemetryRow&) const = default;
};

/// Dense sample grid: row k of each matrix is step `steps[k]`, column i is RU i.
/// Only `times` and `load` are required; the counter matrices are either empty
/// or the same shape as `load`.
struct TelemetrySeries {
  std::vector<std::int64_t> steps;
  std::vector<double> times;
  Eigen::MatrixXd load;
  Eigen::MatrixXd demand;
  Eigen::MatrixXd allocated;
  Eigen::MatrixXi provisioned;
  Eigen::MatrixXi ue_count;

  std::size_t samples() const noexcept { return times.size(); }
  std::size_t rus() const noexcept { return static_cast<std::size_t>(load.cols()); }
  bool has_counters() const noexcept { return provisioned.size() != 0; }

  /// Builds a load-only series; steps are 0..m-1.
  static TelemetrySeries from_loads(std::vector<double> times, Eigen::MatrixXd load);

  /// Throws if times are not strictly increasing, shapes disagree, or any
  /// value is non-finite.
  void validate() const;

  bool operator==(const TelemetrySeries& other) const;
};

/// Rows ordered by (step, ru_id). Requires counters.
std::vector<TelemetryRow> to_rows(const TelemetrySeries& series);

}  // namespace oranlb
