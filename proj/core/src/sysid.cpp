#include "oranlb/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include <json.hpp>

#include "oranlb/error.hpp"

namespace oranlb {

using nlohmann::json;

std::string_view to_string(CouplingMode mode) { return mode == CouplingMode::Aggregated ? "aggregated" : "per-edge"; }

CouplingMode coupling_mode_from_string(std::string_view text) {
  if (text == "aggregated") return CouplingMode::Aggregated;
  if (text == "per-edge" || text == "per_edge") return CouplingMode::PerEdge;
  throw ConfigError("unknown coupling mode \"" + std::string(text) + "\" (aggregated | per-edge)");
}

std::string_view to_string(DiffScheme scheme) { return scheme == DiffScheme::Forward ? "forward" : "central"; }

DiffScheme diff_scheme_from_string(std::string_view text) {
  if (text == "forward") return DiffScheme::Forward;
  if (text == "central") return DiffScheme::Central;
  throw ConfigError("unknown difference scheme \"" + std::string(text) + "\" (forward | central)");
}

void LibrarySpec::validate() const {
  if (degree_self < 1) throw ConfigError("library: degree_self must be >= 1");
  if (degree_coupling < 1) throw ConfigError("library: degree_coupling must be >= 1");
}

std::size_t LibrarySpec::coupling_columns(std::size_t degree) const {
  const auto d = static_cast<std::size_t>(degree_coupling);
  return coupling_mode == CouplingMode::Aggregated ? d : d * degree;
}

// ---------------------------------------------------------------------------
// Derivatives and library

DerivativeMatrix estimate_derivatives(const TelemetrySeries& series, DiffScheme scheme) {
  series.validate();
  const auto m = static_cast<Eigen::Index>(series.samples());
  const auto n = series.load.cols();
  const auto& t = series.times;
  DerivativeMatrix d;
  d.scheme = scheme;
  if (scheme == DiffScheme::Forward) {
    if (m < 2) throw InsufficientDataError("forward differences need at least 2 samples");
    d.ldot.resize(m - 1, n);
    for (Eigen::Index k = 0; k + 1 < m; ++k) {
      const double h = t[k + 1] - t[k];
      d.ldot.row(k) = (series.load.row(k + 1) - series.load.row(k)) / h;
      d.times.push_back(t[k]);
      d.rows.push_back(k);
    }
    return d;
  }
  if (m < 3) throw InsufficientDataError("central differences need at least 3 samples");
  const double h0 = t[1] - t[0];
  for (Eigen::Index k = 1; k < m; ++k) {
    if (std::abs((t[k] - t[k - 1]) - h0) > 1e-9 * std::max(1.0, std::abs(h0))) {
      throw ConfigError("central differences need uniformly spaced samples");
    }
  }
  d.ldot.resize(m - 2, n);
  for (Eigen::Index k = 1; k + 1 < m; ++k) {
    d.ldot.row(k - 1) = (series.load.row(k + 1) - series.load.row(k - 1)) / (t[k + 1] - t[k - 1]);
    d.times.push_back(t[k]);
    d.rows.push_back(k);
  }
  return d;
}

std::vector<std::string> library_terms(const LibrarySpec& spec, const Topology& topology, std::size_t i) {
  std::vector<std::string> out;
  out.emplace_back("1");
  for (int p = 1; p <= spec.degree_self; ++p) out.push_back(p == 1 ? "l" : "l^" + std::to_string(p));
  if (spec.coupling_mode == CouplingMode::Aggregated) {
    for (int p = 1; p <= spec.degree_coupling; ++p) out.push_back("sum_j(l_i-l_j)^" + std::to_string(p));
  } else {
    for (auto j : topology.neighbors(i))
      for (int p = 1; p <= spec.degree_coupling; ++p)
        out.push_back("(l_i-l_" + std::to_string(j) + ")^" + std::to_string(p));
  }
  return out;
}

Eigen::RowVectorXd library_row(const Eigen::Ref<const Eigen::RowVectorXd>& l, const Topology& topology,
                               const LibrarySpec& spec, std::size_t i) {
  const auto& nb = topology.neighbors(i);
  const auto cols = spec.self_columns() + spec.coupling_columns(nb.size());
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(cols));
  const double li = l(static_cast<Eigen::Index>(i));
  double power = 1.0;
  for (int p = 0; p <= spec.degree_self; ++p) {
    row(p) = power;
    power *= li;
  }
  const auto base = static_cast<Eigen::Index>(spec.self_columns());
  const int dg = spec.degree_coupling;
  for (std::size_t e = 0; e < nb.size(); ++e) {
    const double gap = li - l(static_cast<Eigen::Index>(nb[e]));
    const auto off = spec.coupling_mode == CouplingMode::Aggregated ? base : base + static_cast<Eigen::Index>(e) * dg;
    double g = gap;
    for (int p = 0; p < dg; ++p) {
      row(off + p) += g;
      g *= gap;
    }
  }
  return row;
}

std::vector<Eigen::MatrixXd> build_library(const TelemetrySeries& series, const Topology& topology,
                                           const LibrarySpec& spec, const DerivativeMatrix& deriv) {
  spec.validate();
  if (series.rus() != topology.size()) {
    throw DimensionError("library: series has " + std::to_string(series.rus()) + " RUs, topology " +
                         std::to_string(topology.size()));
  }
  const auto rows = static_cast<Eigen::Index>(deriv.rows.size());
  std::vector<Eigen::MatrixXd> out;
  out.reserve(topology.size());
  for (std::size_t i = 0; i < topology.size(); ++i) {
    const auto cols = spec.self_columns() + spec.coupling_columns(topology.degree(i));
    Eigen::MatrixXd theta(rows, static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto k = deriv.rows[static_cast<std::size_t>(r)];
      if (k < 0 || k >= series.load.rows()) throw DimensionError("library: derivative row outside the series");
      theta.row(r) = library_row(series.load.row(k), topology, spec, i);
    }
    out.push_back(std::move(theta));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sparse regression

namespace {

double soft(double x, double gamma) {
  if (x > gamma) return x - gamma;
  if (x < -gamma) return x + gamma;
  return 0.0;
}

struct Standardized {
  Eigen::VectorXd scale;
  std::vector<char> active;
};

Standardized standardize(const Eigen::MatrixXd& theta) {
  Standardized s;
  const auto m = static_cast<double>(theta.rows());
  s.scale.resize(theta.cols());
  for (Eigen::Index j = 0; j < theta.cols(); ++j) s.scale(j) = std::sqrt(theta.col(j).squaredNorm() / m);
  const double top = s.scale.size() ? s.scale.maxCoeff() : 0.0;
  s.active.resize(static_cast<std::size_t>(theta.cols()));
  for (Eigen::Index j = 0; j < theta.cols(); ++j) {
    const bool on = s.scale(j) > 1e-12 * top && s.scale(j) > 0.0;
    s.active[static_cast<std::size_t>(j)] = on;
    if (!on) s.scale(j) = 1.0;
  }
  return s;
}

struct CdResult {
  Eigen::VectorXd w;
  int sweeps = 0;
  bool converged = false;
};

// Coordinate descent on the Gram form of the standardized problem.
CdResult coordinate_descent(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, double gamma,
                            const std::vector<char>& active, const RegressOptions& opt) {
  const auto p = c.size();
  CdResult r;
  r.w = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd Gw = Eigen::VectorXd::Zero(p);
  while (r.sweeps < opt.max_sweeps) {
    ++r.sweeps;
    double delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!active[static_cast<std::size_t>(j)] || !(G(j, j) > 0.0)) continue;
      const double old = r.w(j);
      const double rho = c(j) - Gw(j) + G(j, j) * old;
      const double next = soft(rho, gamma) / G(j, j);
      if (next != old) {
        Gw += G.col(j) * (next - old);
        r.w(j) = next;
        delta = std::max(delta, std::abs(next - old));
      }
    }
    if (delta < opt.tolerance) {
      r.converged = true;
      break;
    }
  }
  return r;
}

std::vector<Eigen::Index> support_of(const Eigen::VectorXd& w) {
  std::vector<Eigen::Index> s;
  for (Eigen::Index j = 0; j < w.size(); ++j)
    if (w(j) != 0.0) s.push_back(j);
  return s;
}

// Least-squares refit of Z w = y restricted to `support`; min-norm when rank deficient.
Eigen::VectorXd refit(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, const std::vector<Eigen::Index>& support) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(Z.cols());
  if (support.empty()) return w;
  Eigen::MatrixXd Zs(Z.rows(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t k = 0; k < support.size(); ++k) Zs.col(static_cast<Eigen::Index>(k)) = Z.col(support[k]);
  const Eigen::VectorXd ws = Zs.completeOrthogonalDecomposition().solve(y);
  for (std::size_t k = 0; k < support.size(); ++k) w(support[k]) = ws(static_cast<Eigen::Index>(k));
  return w;
}

// Same refit from the normal equations; used inside cross-validation.
Eigen::VectorXd refit_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& c,
                           const std::vector<Eigen::Index>& support) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(c.size());
  if (support.empty()) return w;
  const auto s = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd Gs(s, s);
  Eigen::VectorXd cs(s);
  for (Eigen::Index a = 0; a < s; ++a) {
    cs(a) = c(support[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < s; ++b) Gs(a, b) = G(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(b)]);
  }
  const Eigen::VectorXd ws = Gs.completeOrthogonalDecomposition().solve(cs);
  for (Eigen::Index a = 0; a < s; ++a) w(support[static_cast<std::size_t>(a)]) = ws(a);
  return w;
}

// Sequential thresholding in original units, refitting after each pruning pass.
template <typename Refit>
Eigen::VectorXd prune(Eigen::VectorXd w, const Eigen::VectorXd& scale, double threshold, Refit&& fit) {
  if (!(threshold > 0.0)) return w;
  for (int pass = 0; pass < 64; ++pass) {
    auto support = support_of(w);
    const auto before = support.size();
    std::erase_if(support, [&](Eigen::Index j) { return std::abs(w(j) / scale(j)) < threshold; });
    if (support.size() == before) break;
    w = fit(support);
  }
  return w;
}

void check_inputs(const Eigen::MatrixXd& theta, const Eigen::VectorXd& y, double gamma) {
  if (theta.rows() != y.size()) {
    throw DimensionError("sparse_regress: " + std::to_string(theta.rows()) + " library rows vs " +
                         std::to_string(y.size()) + " responses");
  }
  if (theta.cols() < 1) throw DimensionError("sparse_regress: empty library");
  if (theta.rows() < 1) throw InsufficientDataError("sparse_regress: no samples");
  if (!theta.allFinite() || !y.allFinite()) throw NumericError("sparse_regress: non-finite data");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("sparse_regress: gamma must be finite and >= 0");
}

}  // namespace

double gamma_max(const Eigen::MatrixXd& theta, const Eigen::VectorXd& y) {
  check_inputs(theta, y, 0.0);
  const auto st = standardize(theta);
  double g = 0.0;
  for (Eigen::Index j = 0; j < theta.cols(); ++j)
    if (st.active[static_cast<std::size_t>(j)]) g = std::max(g, std::abs(theta.col(j).dot(y)) / st.scale(j));
  return g;
}

SparseFit sparse_regress(const Eigen::MatrixXd& theta, const Eigen::VectorXd& y, double gamma,
                         const RegressOptions& options) {
  check_inputs(theta, y, gamma);
  const auto st = standardize(theta);
  Eigen::MatrixXd Z = theta;
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    if (st.active[static_cast<std::size_t>(j)]) {
      Z.col(j) /= st.scale(j);
    } else {
      Z.col(j).setZero();
    }
  }
  const Eigen::MatrixXd G = Z.transpose() * Z;
  const Eigen::VectorXd c = Z.transpose() * y;
  auto cd = coordinate_descent(G, c, gamma, st.active, options);

  SparseFit fit;
  fit.sweeps = cd.sweeps;
  fit.converged = cd.converged;
  const double yy = y.squaredNorm();
  fit.zero_objective = 0.5 * yy;
  fit.objective = 0.5 * (y - Z * cd.w).squaredNorm() + gamma * cd.w.lpNorm<1>();
  fit.penalized = cd.w.cwiseQuotient(st.scale);

  Eigen::VectorXd w = cd.w;
  if (options.debias || options.threshold > 0.0) {
    w = refit(Z, y, support_of(cd.w));
    w = prune(w, st.scale, options.threshold, [&](const std::vector<Eigen::Index>& s) { return refit(Z, y, s); });
  }
  fit.coef = w.cwiseQuotient(st.scale);
  fit.support.resize(static_cast<std::size_t>(w.size()));
  for (Eigen::Index j = 0; j < w.size(); ++j) fit.support[static_cast<std::size_t>(j)] = fit.coef(j) != 0.0;
  return fit;
}

CvResult cross_validate_gamma(const std::vector<Eigen::MatrixXd>& thetas, const std::vector<Eigen::VectorXd>& ys,
                              int folds, int grid_size, const RegressOptions& options) {
  if (thetas.size() != ys.size()) throw DimensionError("cross-validation: library and response counts differ");
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (grid_size < 2) throw ConfigError("cross-validation grid needs at least 2 points");

  struct Prepared {
    Eigen::MatrixXd Z;
    Standardized st;
    std::vector<Eigen::MatrixXd> G_train;
    std::vector<Eigen::VectorXd> c_train;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> test;  // [begin, end)
  };
  std::vector<Prepared> prep(thetas.size());
  double top = 0.0;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    check_inputs(thetas[i], ys[i], 0.0);
    const auto m = thetas[i].rows();
    if (m < 2 * folds) {
      throw InsufficientDataError("cross-validation: RU " + std::to_string(i) + " has " + std::to_string(m) +
                                  " samples for " + std::to_string(folds) + " folds");
    }
    auto& p = prep[i];
    p.st = standardize(thetas[i]);
    p.Z = thetas[i];
    for (Eigen::Index j = 0; j < p.Z.cols(); ++j) {
      if (p.st.active[static_cast<std::size_t>(j)]) {
        p.Z.col(j) /= p.st.scale(j);
      } else {
        p.Z.col(j).setZero();
      }
    }
    const Eigen::MatrixXd G = p.Z.transpose() * p.Z;
    const Eigen::VectorXd c = p.Z.transpose() * ys[i];
    top = std::max(top, c.cwiseAbs().maxCoeff());
    for (int f = 0; f < folds; ++f) {
      const Eigen::Index b = m * f / folds;
      const Eigen::Index e = m * (f + 1) / folds;
      const auto Zt = p.Z.middleRows(b, e - b);
      p.G_train.push_back(G - Zt.transpose() * Zt);
      p.c_train.push_back(c - Zt.transpose() * ys[i].segment(b, e - b));
      p.test.emplace_back(b, e);
    }
  }

  CvResult out;
  if (!(top > 0.0)) {
    out.grid = {0.0};
    out.mean_error = {0.0};
    out.std_error = {0.0};
    return out;
  }
  const double lo = std::log(top * 1e-7);
  const double hi = std::log(top);
  for (int g = 0; g < grid_size; ++g) out.grid.push_back(std::exp(lo + (hi - lo) * g / (grid_size - 1)));

  for (double gamma : out.grid) {
    std::vector<double> err(static_cast<std::size_t>(folds), 0.0);
    for (std::size_t i = 0; i < prep.size(); ++i) {
      const auto& p = prep[i];
      for (int f = 0; f < folds; ++f) {
        const auto& G = p.G_train[static_cast<std::size_t>(f)];
        const auto& c = p.c_train[static_cast<std::size_t>(f)];
        auto w = coordinate_descent(G, c, gamma, p.st.active, options).w;
        if (options.debias || options.threshold > 0.0) {
          w = refit_gram(G, c, support_of(w));
          w = prune(w, p.st.scale, options.threshold,
                    [&](const std::vector<Eigen::Index>& s) { return refit_gram(G, c, s); });
        }
        const auto [b, e] = p.test[static_cast<std::size_t>(f)];
        const Eigen::VectorXd resid = ys[i].segment(b, e - b) - p.Z.middleRows(b, e - b) * w;
        err[static_cast<std::size_t>(f)] += resid.squaredNorm() / static_cast<double>(e - b);
      }
    }
    const double mean = std::accumulate(err.begin(), err.end(), 0.0) / folds;
    double var = 0.0;
    for (double e : err) var += (e - mean) * (e - mean);
    var /= (folds - 1);
    out.mean_error.push_back(mean);
    out.std_error.push_back(std::sqrt(var / folds));
  }
  const auto best = static_cast<std::size_t>(
      std::min_element(out.mean_error.begin(), out.mean_error.end()) - out.mean_error.begin());
  out.best = out.grid[best];
  const double limit = out.mean_error[best] + out.std_error[best];
  out.selected = out.best;
  for (std::size_t g = best; g < out.grid.size(); ++g)
    if (out.mean_error[g] <= limit) out.selected = out.grid[g];
  return out;
}

// ---------------------------------------------------------------------------
// Model

double IdentifiedModel::self(std::size_t i, double l) const {
  const auto& xi = rus.at(i).xi_f;
  double v = 0.0;
  for (Eigen::Index p = xi.size() - 1; p >= 0; --p) v = v * l + xi(p);
  return v;
}

double IdentifiedModel::self_prime(std::size_t i, double l) const {
  const auto& xi = rus.at(i).xi_f;
  double v = 0.0;
  for (Eigen::Index p = xi.size() - 1; p >= 1; --p) v = v * l + static_cast<double>(p) * xi(p);
  return v;
}

namespace {

Eigen::Index edge_block(const Topology& t, std::size_t i, std::size_t j) {
  const auto& nb = t.neighbors(i);
  const auto it = std::find(nb.begin(), nb.end(), j);
  return it == nb.end() ? -1 : static_cast<Eigen::Index>(it - nb.begin());
}

}  // namespace

double IdentifiedModel::coupling(std::size_t i, std::size_t j, double d) const {
  const auto e = edge_block(topology, i, j);
  if (e < 0) return 0.0;
  const auto dg = static_cast<Eigen::Index>(library.degree_coupling);
  const auto off = library.coupling_mode == CouplingMode::Aggregated ? 0 : e * dg;
  const auto& xi = rus.at(i).xi_g;
  double v = 0.0;
  for (Eigen::Index p = dg - 1; p >= 0; --p) v = v * d + xi(off + p);
  return v * d;
}

double IdentifiedModel::coupling_slope(std::size_t i, std::size_t j) const {
  const auto e = edge_block(topology, i, j);
  if (e < 0) return 0.0;
  const auto off = library.coupling_mode == CouplingMode::Aggregated ? 0 : e * library.degree_coupling;
  return rus.at(i).xi_g(off);
}

Eigen::VectorXd IdentifiedModel::vector_field(const Eigen::Ref<const Eigen::VectorXd>& l) const {
  const auto n = rus.size();
  if (static_cast<std::size_t>(l.size()) != n) throw DimensionError("vector_field: state size mismatch");
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double li = l(static_cast<Eigen::Index>(i));
    double v = self(i, li);
    for (auto j : topology.neighbors(i)) v += coupling(i, j, li - l(static_cast<Eigen::Index>(j)));
    out(static_cast<Eigen::Index>(i)) = v;
  }
  return out;
}

Eigen::VectorXd IdentifiedModel::coefficients(std::size_t i) const {
  const auto& r = rus.at(i);
  Eigen::VectorXd v(r.xi_f.size() + r.xi_g.size());
  v << r.xi_f, r.xi_g;
  return v;
}

void IdentifiedModel::validate() const {
  library.validate();
  if (rus.size() != topology.size()) throw DimensionError("model: RU count differs from topology");
  if (!(gamma >= 0.0)) throw ConfigError("model: gamma must be >= 0");
  for (std::size_t i = 0; i < rus.size(); ++i) {
    const auto& r = rus[i];
    if (r.id != i) throw ConfigError("model: RU entries must be ordered by id");
    if (static_cast<std::size_t>(r.xi_f.size()) != library.self_columns()) {
      throw DimensionError("model: RU " + std::to_string(i) + " xi_f length does not match degree_self");
    }
    if (static_cast<std::size_t>(r.xi_g.size()) != library.coupling_columns(topology.degree(i))) {
      throw DimensionError("model: RU " + std::to_string(i) + " xi_g length does not match the coupling library");
    }
    if (!r.xi_f.allFinite() || !r.xi_g.allFinite()) throw NumericError("model: non-finite coefficient");
  }
}

// ---------------------------------------------------------------------------
// Identification

std::vector<char> saturation_mask(const TelemetrySeries& series, const DerivativeMatrix& deriv, std::size_t ru,
                                  const IdentifyOptions& options) {
  std::vector<char> mask(deriv.rows.size(), 0);
  if (!options.mask_saturated) return mask;
  if (!series.has_counters()) throw ConfigError("saturation mask needs provisioned PRB counts in the series");
  if (options.prb_max.size() != series.rus() || options.prb_min.size() != series.rus()) {
    throw ConfigError("saturation mask needs prb_min and prb_max for every RU");
  }
  const auto c = static_cast<Eigen::Index>(ru);
  auto clipped = [&](Eigen::Index k) {
    const int b = series.provisioned(k, c);
    const double l = series.load(k, c);
    return (b >= options.prb_max[ru] && l > 1.0) || (b <= options.prb_min[ru] && l < 1.0);
  };
  for (std::size_t r = 0; r < deriv.rows.size(); ++r) {
    const auto k = deriv.rows[r];
    const bool sat = deriv.scheme == DiffScheme::Forward ? clipped(k) || clipped(k + 1)
                                                         : clipped(k - 1) || clipped(k) || clipped(k + 1);
    mask[r] = sat ? 1 : 0;
  }
  return mask;
}

namespace {

struct Pooled {
  std::vector<Eigen::MatrixXd> thetas;
  std::vector<Eigen::VectorXd> ys;
};

Pooled pool(std::span<const TelemetrySeries> experiments, const Topology& topology, const LibrarySpec& spec,
            const IdentifyOptions& options) {
  const auto n = topology.size();
  std::vector<std::vector<Eigen::MatrixXd>> th(n);
  std::vector<std::vector<Eigen::VectorXd>> yv(n);
  for (const auto& series : experiments) {
    if (series.rus() != n) {
      throw DimensionError("identify: series has " + std::to_string(series.rus()) + " RUs, topology " +
                           std::to_string(n));
    }
    const auto deriv = estimate_derivatives(series, options.scheme);
    const auto lib = build_library(series, topology, spec, deriv);
    for (std::size_t i = 0; i < n; ++i) {
      const auto mask = saturation_mask(series, deriv, i, options);
      const auto keep = static_cast<Eigen::Index>(std::count(mask.begin(), mask.end(), 0));
      Eigen::MatrixXd t(keep, lib[i].cols());
      Eigen::VectorXd y(keep);
      Eigen::Index r = 0;
      for (std::size_t k = 0; k < mask.size(); ++k) {
        if (mask[k]) continue;
        t.row(r) = lib[i].row(static_cast<Eigen::Index>(k));
        y(r) = deriv.ldot(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
        ++r;
      }
      th[i].push_back(std::move(t));
      yv[i].push_back(std::move(y));
    }
  }
  Pooled out;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index rows = 0;
    for (const auto& t : th[i]) rows += t.rows();
    const auto cols = static_cast<Eigen::Index>(spec.self_columns() + spec.coupling_columns(topology.degree(i)));
    Eigen::MatrixXd t(rows, cols);
    Eigen::VectorXd y(rows);
    Eigen::Index r = 0;
    for (std::size_t e = 0; e < th[i].size(); ++e) {
      t.middleRows(r, th[i][e].rows()) = th[i][e];
      y.segment(r, th[i][e].rows()) = yv[i][e];
      r += th[i][e].rows();
    }
    out.thetas.push_back(std::move(t));
    out.ys.push_back(std::move(y));
  }
  return out;
}

}  // namespace

std::optional<double> r_squared(const Eigen::Ref<const Eigen::VectorXd>& observed,
                                const Eigen::Ref<const Eigen::VectorXd>& predicted) {
  if (observed.size() != predicted.size()) throw DimensionError("r_squared: length mismatch");
  if (observed.size() == 0) return std::nullopt;
  const double mean = observed.mean();
  const double total = (observed.array() - mean).square().sum();
  const double scale = std::max(1.0, observed.cwiseAbs().maxCoeff());
  if (!(total > 1e-24 * scale * scale * static_cast<double>(observed.size()))) return std::nullopt;
  return 1.0 - (observed - predicted).squaredNorm() / total;
}

IdentifiedModel identify_network(std::span<const TelemetrySeries> experiments, const Topology& topology,
                                 const LibrarySpec& spec, const IdentifyOptions& options) {
  spec.validate();
  if (experiments.empty()) throw InsufficientDataError("identify: no telemetry");
  const auto data = pool(experiments, topology, spec, options);
  const auto n = topology.size();

  IdentifiedModel model;
  model.library = spec;
  model.topology = topology;
  if (options.gamma) {
    if (!(*options.gamma >= 0.0)) throw ConfigError("identify: gamma must be >= 0");
    model.gamma = *options.gamma;
  } else {
    model.gamma = cross_validate_gamma(data.thetas, data.ys, options.cv_folds, options.cv_grid, options.regress).selected;
  }

  for (std::size_t i = 0; i < n; ++i) {
    RuModel ru;
    ru.id = i;
    try {
      if (data.ys[i].size() == 0) throw InsufficientDataError("no usable samples");
      const auto fit = sparse_regress(data.thetas[i], data.ys[i], model.gamma, options.regress);
      const auto nf = static_cast<Eigen::Index>(spec.self_columns());
      ru.xi_f = fit.coef.head(nf);
      ru.xi_g = fit.coef.tail(fit.coef.size() - nf);
      const Eigen::VectorXd pred = data.thetas[i] * fit.coef;
      ru.r2 = r_squared(data.ys[i], pred);
      ru.residual_norm = (data.ys[i] - pred).norm();
      ru.samples = static_cast<std::size_t>(data.ys[i].size());
      ru.sweeps = fit.sweeps;
      ru.converged = fit.converged;
    } catch (const Error& e) {
      std::throw_with_nested(IdentificationError(i, e.what()));
    }
    model.rus.push_back(std::move(ru));
  }
  return model;
}

IdentifiedModel identify_network(const TelemetrySeries& series, const Topology& topology, const LibrarySpec& spec,
                                 const IdentifyOptions& options) {
  return identify_network(std::span<const TelemetrySeries>(&series, 1), topology, spec, options);
}

Eigen::MatrixXd simulate_model(const IdentifiedModel& model, const Eigen::Ref<const Eigen::VectorXd>& l0,
                               double horizon, double step) {
  if (!(step > 0.0)) throw ConfigError("simulate_model: step must be > 0");
  if (!(horizon >= step)) throw ConfigError("simulate_model: horizon must be >= step");
  if (static_cast<std::size_t>(l0.size()) != model.size()) throw DimensionError("simulate_model: initial state size");
  const auto steps = static_cast<Eigen::Index>(std::llround(horizon / step));
  Eigen::MatrixXd out(steps + 1, l0.size());
  Eigen::VectorXd x = l0;
  out.row(0) = x.transpose();
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::VectorXd k1 = model.vector_field(x);
    const Eigen::VectorXd k2 = model.vector_field(x + 0.5 * step * k1);
    const Eigen::VectorXd k3 = model.vector_field(x + 0.5 * step * k2);
    const Eigen::VectorXd k4 = model.vector_field(x + step * k3);
    x += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) {
      throw NumericError("simulate_model: state diverged at step " + std::to_string(k + 1) + " (t = " +
                         std::to_string(static_cast<double>(k + 1) * step) + ")");
    }
    out.row(k + 1) = x.transpose();
  }
  return out;
}

std::vector<ScatterPoint> derivative_scatter(const IdentifiedModel& model, const TelemetrySeries& series,
                                             const IdentifyOptions& options) {
  model.validate();
  const auto deriv = estimate_derivatives(series, options.scheme);
  const auto lib = build_library(series, model.topology, model.library, deriv);
  std::vector<ScatterPoint> out;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto mask = saturation_mask(series, deriv, i, options);
    const Eigen::VectorXd pred = lib[i] * model.coefficients(i);
    for (std::size_t r = 0; r < mask.size(); ++r) {
      if (mask[r]) continue;
      const auto k = static_cast<Eigen::Index>(r);
      out.push_back({i, deriv.times[r], series.load(deriv.rows[r], static_cast<Eigen::Index>(i)),
                     deriv.ldot(k, static_cast<Eigen::Index>(i)), pred(k)});
    }
  }
  return out;
}

std::vector<FitDiagnostics> fit_diagnostics(const IdentifiedModel& model, const TelemetrySeries& series,
                                            const IdentifyOptions& options) {
  const auto pts = derivative_scatter(model, series, options);
  std::vector<FitDiagnostics> out;
  for (std::size_t i = 0; i < model.size(); ++i) {
    std::vector<double> obs, pred;
    for (const auto& p : pts) {
      if (p.ru != i) continue;
      obs.push_back(p.observed);
      pred.push_back(p.predicted);
    }
    const Eigen::Map<const Eigen::VectorXd> o(obs.data(), static_cast<Eigen::Index>(obs.size()));
    const Eigen::Map<const Eigen::VectorXd> q(pred.data(), static_cast<Eigen::Index>(pred.size()));
    out.push_back({i, r_squared(o, q), (o - q).norm(), obs.size()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string model_to_json(const IdentifiedModel& model) {
  json j;
  j["library"] = {{"degree_self", model.library.degree_self},
                  {"degree_coupling", model.library.degree_coupling},
                  {"coupling_mode", std::string(to_string(model.library.coupling_mode))}};
  j["gamma"] = model.gamma;
  j["topology"] = json::parse(topology_to_json(model.topology));
  j["rus"] = json::array();
  for (const auto& r : model.rus) {
    json e;
    e["id"] = r.id;
    e["xi_f"] = vec_json(r.xi_f);
    e["xi_g"] = vec_json(r.xi_g);
    e["r2"] = r.r2 ? json(*r.r2) : json(nullptr);
    e["residual_norm"] = r.residual_norm;
    e["samples"] = r.samples;
    j["rus"].push_back(e);
  }
  return j.dump(2);
}

IdentifiedModel model_from_json(std::string_view text) {
  IdentifiedModel m;
  try {
    const auto j = json::parse(text);
    const auto& lib = j.at("library");
    m.library.degree_self = lib.at("degree_self").get<int>();
    m.library.degree_coupling = lib.at("degree_coupling").get<int>();
    m.library.coupling_mode = coupling_mode_from_string(lib.value("coupling_mode", std::string("aggregated")));
    m.gamma = j.at("gamma").get<double>();
    m.topology = topology_from_json(j.at("topology").dump());
    for (const auto& e : j.at("rus")) {
      RuModel r;
      r.id = e.at("id").get<std::size_t>();
      r.xi_f = vec_from(e.at("xi_f"));
      r.xi_g = vec_from(e.at("xi_g"));
      if (e.contains("r2") && !e["r2"].is_null()) r.r2 = e["r2"].get<double>();
      r.residual_norm = e.value("residual_norm", 0.0);
      r.samples = e.value("samples", std::size_t{0});
      m.rus.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model JSON: ") + e.what());
  }
  m.validate();
  return m;
}

}  // namespace oranlb
