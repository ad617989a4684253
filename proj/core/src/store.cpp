#include "oranlb/store.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace oranlb::store {

namespace {

void append_real(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

template <typename Int>
Int parse_int(std::string_view field, std::size_t line, const char* column) {
  Int value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw SchemaError("line " + std::to_string(line) + ": bad integer in column " + column + ": '" +
                      std::string(field) + "'");
  }
  return value;
}

double parse_real(std::string_view field, std::size_t line, const char* column) {
  const std::string tmp(field);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size() || errno == ERANGE || !std::isfinite(v)) {
    throw SchemaError("line " + std::to_string(line) + ": bad real in column " + column + ": '" + tmp + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

}  // namespace

MissingCellError::MissingCellError(std::int64_t step, std::size_t ru)
    : TelemetryError("missing cell: step " + std::to_string(step) + ", RU " + std::to_string(ru)),
      step_(step),
      ru_(ru) {}

std::size_t write_telemetry(std::span<const TelemetryRow> rows, std::ostream& out) {
  std::string text(kTelemetryHeader);
  text.push_back('\n');
  for (const auto& r : rows) {
    text += std::to_string(r.step);
    text.push_back(',');
    append_real(text, r.time);
    text.push_back(',');
    text += std::to_string(r.ru_id);
    text.push_back(',');
    append_real(text, r.demand_prbs);
    text.push_back(',');
    append_real(text, r.allocated_prbs);
    text.push_back(',');
    text += std::to_string(r.provisioned_prbs);
    text.push_back(',');
    append_real(text, r.load);
    text.push_back(',');
    text += std::to_string(r.ue_count);
    text.push_back('\n');
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("telemetry write failed");
  return text.size();
}

std::size_t write_telemetry(std::span<const TelemetryRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  try {
    return write_telemetry(rows, out);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

TelemetrySeries series_from_rows(std::span<const TelemetryRow> rows) {
  TelemetrySeries s;
  if (rows.empty()) {
    s.load.resize(0, 0);
    return s;
  }
  std::size_t n = 0;
  for (const auto& r : rows) n = std::max(n, r.ru_id + 1);

  // Distinct steps in first-seen order; the reader has already enforced that
  // this order is nondecreasing.
  std::map<std::int64_t, std::size_t> step_index;
  for (const auto& r : rows) {
    if (step_index.emplace(r.step, step_index.size()).second) {
      s.steps.push_back(r.step);
      s.times.push_back(r.time);
    }
  }
  std::sort(s.steps.begin(), s.steps.end());
  for (std::size_t k = 0; k < s.steps.size(); ++k) step_index[s.steps[k]] = k;
  const auto m = static_cast<Eigen::Index>(s.steps.size());
  const auto cols = static_cast<Eigen::Index>(n);
  s.load.setZero(m, cols);
  s.demand.setZero(m, cols);
  s.allocated.setZero(m, cols);
  s.provisioned.setZero(m, cols);
  s.ue_count.setZero(m, cols);
  std::vector<char> seen(s.steps.size() * n, 0);
  std::vector<char> time_set(s.steps.size(), 0);
  for (const auto& r : rows) {
    const auto k = step_index[r.step];
    if (!time_set[k]) {
      s.times[k] = r.time;
      time_set[k] = 1;
    } else if (s.times[k] != r.time) {
      throw RowInvariantError("step " + std::to_string(r.step) + " has inconsistent time stamps");
    }
    auto& cell = seen[k * n + r.ru_id];
    if (cell) {
      throw RowInvariantError("duplicate cell: step " + std::to_string(r.step) + ", RU " +
                              std::to_string(r.ru_id));
    }
    cell = 1;
    if (r.provisioned_prbs > 0 && std::abs(r.load - r.demand_prbs / r.provisioned_prbs) > 1e-9) {
      throw RowInvariantError("step " + std::to_string(r.step) + ", RU " + std::to_string(r.ru_id) +
                              ": load != demand / provisioned");
    }
    const auto ri = static_cast<Eigen::Index>(k);
    const auto ci = static_cast<Eigen::Index>(r.ru_id);
    s.load(ri, ci) = r.load;
    s.demand(ri, ci) = r.demand_prbs;
    s.allocated(ri, ci) = r.allocated_prbs;
    s.provisioned(ri, ci) = r.provisioned_prbs;
    s.ue_count(ri, ci) = r.ue_count;
  }
  for (std::size_t k = 0; k < s.steps.size(); ++k)
    for (std::size_t i = 0; i < n; ++i)
      if (!seen[k * n + i]) throw MissingCellError(s.steps[k], i);
  for (std::size_t k = 1; k < s.times.size(); ++k) {
    if (!(s.times[k] > s.times[k - 1])) {
      throw OrderError("times not strictly increasing at step " + std::to_string(s.steps[k]));
    }
  }
  return s;
}

TelemetrySeries read_telemetry(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty telemetry stream (no header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTelemetryHeader) throw SchemaError("unexpected telemetry header: '" + line + "'");
  std::vector<TelemetryRow> rows;
  std::size_t lineno = 1;
  std::int64_t last_step = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 8) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected 8 columns, got " + std::to_string(f.size()));
    }
    TelemetryRow r;
    r.step = parse_int<std::int64_t>(f[0], lineno, "step");
    r.time = parse_real(f[1], lineno, "time");
    const auto ru = parse_int<long long>(f[2], lineno, "ru_id");
    if (ru < 0) throw SchemaError("line " + std::to_string(lineno) + ": negative ru_id");
    r.ru_id = static_cast<std::size_t>(ru);
    r.demand_prbs = parse_real(f[3], lineno, "demand_prbs");
    r.allocated_prbs = parse_real(f[4], lineno, "allocated_prbs");
    r.provisioned_prbs = parse_int<int>(f[5], lineno, "provisioned_prbs");
    r.load = parse_real(f[6], lineno, "load");
    r.ue_count = parse_int<int>(f[7], lineno, "ue_count");
    if (!rows.empty() && r.step < last_step) {
      throw OrderError("line " + std::to_string(lineno) + ": step " + std::to_string(r.step) +
                       " after step " + std::to_string(last_step));
    }
    last_step = r.step;
    rows.push_back(r);
  }
  return series_from_rows(rows);
}

TelemetrySeries read_telemetry(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_telemetry(in);
}

TelemetrySeries window(const TelemetrySeries& series, std::size_t start, std::size_t end) {
  if (!(start < end && end <= series.samples())) {
    throw ConfigError("window [" + std::to_string(start) + ", " + std::to_string(end) +
                      ") out of range for " + std::to_string(series.samples()) + " samples");
  }
  const auto r0 = static_cast<Eigen::Index>(start);
  const auto len = static_cast<Eigen::Index>(end - start);
  TelemetrySeries out;
  out.steps.assign(series.steps.begin() + r0, series.steps.begin() + r0 + len);
  out.times.assign(series.times.begin() + r0, series.times.begin() + r0 + len);
  out.load = series.load.middleRows(r0, len);
  if (series.demand.size()) out.demand = series.demand.middleRows(r0, len);
  if (series.allocated.size()) out.allocated = series.allocated.middleRows(r0, len);
  if (series.provisioned.size()) out.provisioned = series.provisioned.middleRows(r0, len);
  if (series.ue_count.size()) out.ue_count = series.ue_count.middleRows(r0, len);
  return out;
}

}  // namespace oranlb::store
