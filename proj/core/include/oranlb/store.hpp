#pragma once

// Canonical CSV wire format for telemetry:
//   step,time,ru_id,demand_prbs,allocated_prbs,provisioned_prbs,load,ue_count
// Reals are written with 17 significant digits so doubles survive a round trip.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>

#include "oranlb/error.hpp"
#include "oranlb/telemetry.hpp"

namespace oranlb::store {

inline constexpr const char* kTelemetryHeader =
    "step,time,ru_id,demand_prbs,allocated_prbs,provisioned_prbs,load,ue_count";

class TelemetryError : public Error {
 public:
  using Error::Error;
};

/// Wrong header, wrong column count or an unparsable field.
class SchemaError : public TelemetryError {
 public:
  using TelemetryError::TelemetryError;
};

/// Steps decrease between rows, or two steps share a time stamp.
class OrderError : public TelemetryError {
 public:
  using TelemetryError::TelemetryError;
};

class MissingCellError : public TelemetryError {
 public:
  MissingCellError(std::int64_t step, std::size_t ru);
  std::int64_t step() const noexcept { return step_; }
  std::size_t ru() const noexcept { return ru_; }

 private:
  std::int64_t step_;
  std::size_t ru_;
};

/// A row whose load disagrees with demand / provisioned, or a duplicate cell.
class RowInvariantError : public TelemetryError {
 public:
  using TelemetryError::TelemetryError;
};

std::size_t write_telemetry(std::span<const TelemetryRow> rows, std::ostream& out);
std::size_t write_telemetry(std::span<const TelemetryRow> rows, const std::filesystem::path& path);

TelemetrySeries read_telemetry(std::istream& in);
TelemetrySeries read_telemetry(const std::filesystem::path& path);

/// Regroups rows (any order within a step) into a dense series.
TelemetrySeries series_from_rows(std::span<const TelemetryRow> rows);

/// Samples [start, end) of the series.
TelemetrySeries window(const TelemetrySeries& series, std::size_t start, std::size_t end);

}  // namespace oranlb::store
