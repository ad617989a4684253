#include "oranlb/telemetry.hpp"

#include <cmath>

#include "oranlb/error.hpp"

namespace oranlb {

TelemetrySeries TelemetrySeries::from_loads(std::vector<double> times, Eigen::MatrixXd load) {
  TelemetrySeries s;
  s.steps.resize(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) s.steps[k] = static_cast<std::int64_t>(k);
  s.times = std::move(times);
  s.load = std::move(load);
  s.validate();
  return s;
}

void TelemetrySeries::validate() const {
  const auto m = static_cast<Eigen::Index>(times.size());
  if (load.rows() != m) throw DimensionError("series: load rows != number of times");
  if (steps.size() != times.size()) throw DimensionError("series: steps and times differ in length");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!std::isfinite(times[k])) throw NumericError("series: non-finite time");
    if (k > 0 && !(times[k] > times[k - 1])) throw ConfigError("series: times must be strictly increasing");
  }
  if (!load.allFinite()) throw NumericError("series: non-finite load sample");
  auto check_shape = [&](Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (rows * cols != 0 && (rows != load.rows() || cols != load.cols())) {
      throw DimensionError(std::string("series: ") + name + " shape differs from load");
    }
  };
  check_shape(demand.rows(), demand.cols(), "demand");
  check_shape(allocated.rows(), allocated.cols(), "allocated");
  check_shape(provisioned.rows(), provisioned.cols(), "provisioned");
  check_shape(ue_count.rows(), ue_count.cols(), "ue_count");
}

bool TelemetrySeries::operator==(const TelemetrySeries& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
  };
  return steps == o.steps && times == o.times && same(load, o.load) && same(demand, o.demand) &&
         same(allocated, o.allocated) && same(provisioned, o.provisioned) && same(ue_count, o.ue_count);
}

std::vector<TelemetryRow> to_rows(const TelemetrySeries& series) {
  if (!series.has_counters() && series.samples() > 0) {
    throw ConfigError("to_rows: series carries loads only");
  }
  std::vector<TelemetryRow> rows;
  rows.reserve(series.samples() * series.rus());
  for (std::size_t k = 0; k < series.samples(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    for (std::size_t i = 0; i < series.rus(); ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      rows.push_back({series.steps[k], series.times[k], i, series.demand(r, c), series.allocated(r, c),
                      series.provisioned(r, c), series.load(r, c), series.ue_count(r, c)});
    }
  }
  return rows;
}

}  // namespace oranlb
