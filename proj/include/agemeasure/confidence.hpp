#ifndef AGEMEASURE_CONFIDENCE_HPP
#define AGEMEASURE_CONFIDENCE_HPP

// Confidence intervals and 2-D confidence regions from the martingale CLT.
//
// Every statement here has the form
//     | a . theta - v |  <=  c_alpha / sqrt(K) * sqrt( q . theta + r )
// where a, v are the estimating-equation coefficients, and q . theta + r is
// the predictable quadratic variation (V_T^f)^2, linear in the parameters.
// Direct mode keeps theta inside the variance; plug-in mode freezes it at the
// estimate. Plug-in regions therefore change the nominal coverage, and every
// result carries its mode.

#include <boost/math/distributions/normal.hpp>

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agemeasure/errors.hpp"
#include "agemeasure/estimators.hpp"
#include "agemeasure/format.hpp"
#include "agemeasure/pathfn.hpp"
#include "agemeasure/popcore.hpp"

namespace agemeasure {

enum class CiMode { Direct, PlugIn };

inline std::string_view to_string(CiMode mode) { return mode == CiMode::Direct ? "direct" : "plugin"; }

inline CiMode parse_mode(std::string_view text) {
  text = trim(text);
  if (text == "direct") return CiMode::Direct;
  if (text == "plugin" || text == "plug-in") return CiMode::PlugIn;
  throw ContractError("mode must be 'direct' or 'plugin', got '" + std::string(text) + "'");
}

/// Two-sided standard-normal critical value z_{alpha/2}; alpha = 1 gives 0.
inline double critical_value(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in (0,1]");
  return boost::math::quantile(boost::math::complement(boost::math::normal_distribution<double>(), alpha / 2.0));
}

struct ConfidenceInterval {
  std::string parameter;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  CiMode mode = CiMode::Direct;
  /// No parameter value satisfies the inequality (negative discriminant).
  bool empty = false;

  bool contains(double value) const noexcept { return !empty && lower <= value && value <= upper; }
  double center() const noexcept { return 0.5 * (lower + upper); }
  double half_width() const noexcept { return 0.5 * (upper - lower); }
};

/// One scalar CLT inequality |a theta - v| <= c/sqrt(K) sqrt(q theta + r).
struct ScalarBand {
  double coefficient = 0.0;  // a
  double rhs = 0.0;          // v
  double var_slope = 0.0;    // q
  double var_offset = 0.0;   // r
};

/// Closed-form interval of a ScalarBand. Direct: roots of the quadratic in theta,
/// centred at estimate + c^2 q / (2 K a^2). Plug-in: estimate +- c V_hat / (sqrt(K) |a|).
inline ConfidenceInterval band_interval(const ScalarBand& band, double estimate, double c, int K, CiMode mode,
                                        std::string name, double level) {
  if (!(band.coefficient != 0.0)) throw DegeneratePathError("confidence interval: zero coefficient");
  ConfidenceInterval ci;
  ci.parameter = std::move(name);
  ci.estimate = estimate;
  ci.level = level;
  ci.mode = mode;
  const double a = band.coefficient;
  const double scale = c / (std::sqrt(static_cast<double>(K)) * std::abs(a));
  const double base = band.var_slope * estimate + band.var_offset;
  if (mode == CiMode::PlugIn) {
    const double half = scale * std::sqrt(std::max(0.0, base));
    ci.lower = estimate - half;
    ci.upper = estimate + half;
    return ci;
  }
  const double shift = c * c * band.var_slope / (2.0 * K * a * a);
  const double disc = base + c * c * band.var_slope * band.var_slope / (4.0 * K * a * a);
  if (disc < 0.0) {
    ci.empty = true;
    ci.lower = ci.upper = std::numeric_limits<double>::quiet_NaN();
    return ci;
  }
  const double half = scale * std::sqrt(disc);
  ci.lower = estimate + shift - half;
  ci.upper = estimate + shift + half;
  return ci;
}

// ---------------------------------------------------------------------------
// Quadratic covariation
// ---------------------------------------------------------------------------

/// <M^f, M^g>_T = int (f(0) g(0) b + h f g, A_s/K) ds, with `rates` (usually the fitted model).
inline double qv_cov(const SegmentedPath& path, const TestFn& f, const TestFn& g, const RateModel& rates) {
  return int_rate_weighted(path, rates, f.at_age_zero() * g.at_age_zero(), Rate::Birth) +
         int_rate_weighted(path, rates, f * g, Rate::Death);
}

inline IntervalSet supports_of(const TestFn& f) {
  IntervalSet out;
  for (const auto& t : f.terms())
    if (t.support) out.insert(out.end(), t.support->begin(), t.support->end());
  return out;
}

inline double qv_cov(const EventLog& log, const TestFn& f, const TestFn& g, const RateModel& rates) {
  auto intervals = model_intervals(rates);
  for (const auto* fn : {&f, &g}) {
    const auto s = supports_of(*fn);
    intervals.insert(intervals.end(), s.begin(), s.end());
  }
  return qv_cov(segment(log, intervals), f, g, rates);
}

struct VarianceFunctional {
  double value = 0.0;  // (V_T^f)^2
  TestFn f;
  CiMode mode = CiMode::PlugIn;
};

/// Plug-in (V_hat_T^f)^2 = int (b_hat f(0)^2 + h_hat f^2, A_s/K) ds, clamped at 0.
inline VarianceFunctional plugin_variance(const EventLog& log, const TestFn& f, const RateModel& fitted) {
  return {std::max(0.0, qv_cov(log, f, f, fitted)), f, CiMode::PlugIn};
}

// ---------------------------------------------------------------------------
// Intervals for the scalar families
// ---------------------------------------------------------------------------

/// Intervals for (h, b) under constant rates. The b interval substitutes h_hat.
inline std::pair<ConfidenceInterval, ConfidenceInterval> ci_constant(const EventLog& log, double alpha, CiMode mode) {
  const double c = critical_value(alpha);
  const auto report = estimate_constant(log);
  const auto path = segment(log, {});
  const double h = report.values[0];
  const double b = report.values[1];
  const auto& ds = report.systems[0];
  const auto& bs = report.systems[1];
  const double age_sq = int_pair(path, TestFn::monomial(2, 0));
  const double occupancy = bs.matrix(0, 0);
  const ScalarBand hb{ds.matrix(0, 0), ds.rhs(0), age_sq, 0.0};
  const ScalarBand bb{occupancy, bs.rhs(0), occupancy, h * occupancy};
  return {band_interval(hb, h, c, log.K, mode, "h", 1.0 - alpha),
          band_interval(bb, b, c, log.K, mode, "b", 1.0 - alpha)};
}

/// Intervals for (lambda, eta) under h_A = lambda (1_{J2}, A/K), b_A = eta (1_{J1}, A/K).
inline std::pair<ConfidenceInterval, ConfidenceInterval> ci_popdep(const EventLog& log, const IntervalSet& birth_window,
                                                                   const IntervalSet& death_window, double alpha,
                                                                   CiMode mode) {
  const double c = critical_value(alpha);
  const auto report = estimate_popdep(log, birth_window, death_window);
  IntervalSet intervals = birth_window;
  intervals.insert(intervals.end(), death_window.begin(), death_window.end());
  const auto path = segment(log, intervals);
  const double lambda = report.values[0];
  const double eta = report.values[1];
  const auto& ds = report.systems[0];
  const auto& bs = report.systems[1];
  const double death_age_sq = int_product(path, death_window, TestFn::monomial(2, 0));  // I^{x^2}_{J2}
  const double death_occ = int_product(path, death_window, tf::one());                  // I^1_{J2}
  const double birth_occ = bs.matrix(0, 0);                                             // I^1_{J1}
  const ScalarBand lb{ds.matrix(0, 0), ds.rhs(0), death_age_sq, 0.0};
  const ScalarBand eb{birth_occ, bs.rhs(0), birth_occ, lambda * death_occ};
  return {band_interval(lb, lambda, c, log.K, mode, "lambda", 1.0 - alpha),
          band_interval(eb, eta, c, log.K, mode, "eta", 1.0 - alpha)};
}

// ---------------------------------------------------------------------------
// Two-parameter regions
// ---------------------------------------------------------------------------

/// Grid representation of a confidence region; cell (ix, iy) is stored at iy * nx + ix.
struct ConfRegion2D {
  std::array<std::string, 2> names;
  std::array<double, 2> lower{};
  std::array<double, 2> upper{};
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> mask;
  double level = 0.95;
  CiMode mode = CiMode::Direct;
  std::array<double, 2> estimate{};

  double cell_width(int axis) const { return (upper[axis] - lower[axis]) / (axis == 0 ? nx : ny); }
  double center(int axis, int index) const { return lower[axis] + (index + 0.5) * cell_width(axis); }
  bool feasible(int ix, int iy) const { return mask[static_cast<std::size_t>(iy) * nx + ix] != 0; }

  std::optional<std::array<int, 2>> cell_of(std::array<double, 2> p) const {
    std::array<int, 2> idx{};
    for (int a = 0; a < 2; ++a) {
      if (!(p[a] >= lower[a] && p[a] <= upper[a])) return std::nullopt;
      const int n = a == 0 ? nx : ny;
      idx[a] = std::min(n - 1, static_cast<int>((p[a] - lower[a]) / cell_width(a)));
    }
    return idx;
  }

  /// True when the grid cell holding `p` is feasible.
  bool contains(std::array<double, 2> p) const {
    const auto idx = cell_of(p);
    return idx && feasible((*idx)[0], (*idx)[1]);
  }

  std::size_t feasible_cells() const {
    std::size_t n = 0;
    for (auto v : mask) n += v;
    return n;
  }
};

/// One row per grid cell: <param1>,<param2>,feasible.
inline void write_region_csv(std::ostream& os, const ConfRegion2D& region) {
  os << region.names[0] << ',' << region.names[1] << ",feasible\n";
  for (int iy = 0; iy < region.ny; ++iy)
    for (int ix = 0; ix < region.nx; ++ix)
      os << format_exact(region.center(0, ix)) << ',' << format_exact(region.center(1, iy)) << ','
         << (region.feasible(ix, iy) ? 1 : 0) << '\n';
}

struct RegionOptions {
  int resolution = 200;
  /// Half-width of the default box in plug-in standard errors (at least 1.5 c_alpha is used).
  double se_multiplier = 6.0;
  /// Explicit box {lo1, hi1, lo2, hi2}; must contain the point estimate.
  std::optional<std::array<double, 4>> box;
};

/// Two CLT inequalities in two parameters.
struct InequalityPair {
  Eigen::Matrix2d coefficients;  // row m: a_m
  Eigen::Vector2d rhs;           // v_m
  Eigen::Matrix2d var_slope;     // row m: q_m
  Eigen::Vector2d var_offset;    // r_m
};

namespace detail {

inline bool inequalities_hold(const InequalityPair& sys, const Eigen::Vector2d& theta, const Eigen::Vector2d& frozen,
                              double c, int K, CiMode mode) {
  const Eigen::Vector2d& var_at = mode == CiMode::Direct ? theta : frozen;
  for (int m = 0; m < 2; ++m) {
    const double var = sys.var_slope.row(m).dot(var_at) + sys.var_offset(m);
    const double lhs = std::abs(sys.coefficients.row(m).dot(theta) - sys.rhs(m));
    const double bound = mode == CiMode::Direct ? (var < 0.0 ? -1.0 : c * std::sqrt(var / K))
                                                : c * std::sqrt(std::max(0.0, var) / K);
    if (!(lhs <= bound)) return false;
  }
  return true;
}

}  // namespace detail

/// Grid feasibility region of an InequalityPair around `estimate`.
inline ConfRegion2D feasible_region(const InequalityPair& sys, const Eigen::Vector2d& estimate,
                                    std::array<std::string, 2> names, double alpha, int K, CiMode mode,
                                    const RegionOptions& opt = {}) {
  if (opt.resolution < 50) throw ResolutionError("region grid must be at least 50 x 50");
  const double c = critical_value(alpha);
  ConfRegion2D region;
  region.names = std::move(names);
  region.nx = region.ny = opt.resolution;
  region.level = 1.0 - alpha;
  region.mode = mode;
  region.estimate = {estimate(0), estimate(1)};

  if (opt.box) {
    region.lower = {(*opt.box)[0], (*opt.box)[2]};
    region.upper = {(*opt.box)[1], (*opt.box)[3]};
  } else {
    // Plug-in standard errors: Cov ~ A^{-1} diag(V_hat^2) A^{-T} / K.
    Eigen::Vector2d var;
    for (int m = 0; m < 2; ++m) var(m) = std::max(0.0, sys.var_slope.row(m).dot(estimate) + sys.var_offset(m));
    const Eigen::Matrix2d inv = sys.coefficients.inverse();
    const Eigen::Matrix2d cov = inv * var.asDiagonal() * inv.transpose() / K;
    const double mult = std::max(opt.se_multiplier, 1.5 * c);
    for (int a = 0; a < 2; ++a) {
      double se = std::sqrt(std::max(0.0, cov(a, a)));
      if (!(se > 0.0) || !std::isfinite(se)) se = 1e-3 * std::max(1.0, std::abs(estimate(a)));
      region.lower[a] = estimate(a) - mult * se;
      region.upper[a] = estimate(a) + mult * se;
    }
  }
  for (int a = 0; a < 2; ++a)
    if (!(region.lower[a] < region.upper[a]))
      throw ResolutionError("region box is empty along " + region.names[a]);
  const auto home = region.cell_of(region.estimate);
  if (!home) throw ResolutionError("region grid does not contain the point estimate");

  region.mask.assign(static_cast<std::size_t>(region.nx) * region.ny, 0);
  for (int iy = 0; iy < region.ny; ++iy)
    for (int ix = 0; ix < region.nx; ++ix) {
      const Eigen::Vector2d theta(region.center(0, ix), region.center(1, iy));
      if (detail::inequalities_hold(sys, theta, estimate, c, K, mode))
        region.mask[static_cast<std::size_t>(iy) * region.nx + ix] = 1;
    }
  // The estimate satisfies every inequality with zero left-hand side.
  region.mask[static_cast<std::size_t>((*home)[1]) * region.nx + (*home)[0]] = 1;
  return region;
}

namespace detail {

// Inequalities from f = x, x t (death block) and f = 1, t (birth block), with
// the optional population weight (1_J, A_s/K) on every functional.
inline std::pair<ConfRegion2D, ConfRegion2D> piecewise_regions(const EventLog& log,
                                                               const std::optional<IntervalSet>& window,
                                                               const IntervalSet& cells, const EstimateReport& report,
                                                               double alpha, CiMode mode, const RegionOptions& opt) {
  if (cells.size() != 2) throw ContractError("confidence regions are defined for exactly two cells");
  IntervalSet intervals = cells;
  if (window) intervals.insert(intervals.end(), window->begin(), window->end());
  const auto path = segment(log, intervals);
  auto entry = [&](const TestFn& f, int m) {
    return window ? int_product(path, *window, f, m) : int_pair(path, f, m);
  };

  const auto& ds = report.systems[0];
  const auto& bs = report.systems[1];
  const Eigen::Vector2d death_hat(report.values[0], report.values[1]);
  const Eigen::Vector2d birth_hat(report.values[2], report.values[3]);

  InequalityPair death;
  InequalityPair birth;
  death.coefficients = ds.matrix;
  death.rhs = ds.rhs;
  birth.coefficients = bs.matrix;
  birth.rhs = bs.rhs;
  for (int m = 0; m < 2; ++m) {
    for (int i = 0; i < 2; ++i) {
      const IntervalSet cell{cells[static_cast<std::size_t>(i)]};
      // (V^{x t^m})^2 = sum_i h_i int s^{2m} (x^2 1_{B_i}) ; (V^{t^m})^2 = sum_i (b_i + h_i) int s^{2m} (1_{B_i})
      death.var_slope(m, i) = entry(TestFn::monomial(2, 0, 1.0, cell), 2 * m);
      birth.var_slope(m, i) = entry(TestFn::monomial(0, 0, 1.0, cell), 2 * m);
    }
    death.var_offset(m) = 0.0;
    birth.var_offset(m) = birth.var_slope.row(m).dot(death_hat);
  }
  return {feasible_region(death, death_hat, {report.names[0], report.names[1]}, alpha, log.K, mode, opt),
          feasible_region(birth, birth_hat, {report.names[2], report.names[3]}, alpha, log.K, mode, opt)};
}

}  // namespace detail

/// Regions for (h1, h2) and (b1, b2); the b region substitutes the h estimates.
inline std::pair<ConfRegion2D, ConfRegion2D> region_agedep(const EventLog& log, const IntervalSet& cells, double alpha,
                                                           CiMode mode, const RegionOptions& opt = {}) {
  const auto report = estimate_agedep(log, cells);
  return detail::piecewise_regions(log, std::nullopt, cells, report, alpha, mode, opt);
}

/// Regions for (alpha1, alpha2) and (gamma1, gamma2).
inline std::pair<ConfRegion2D, ConfRegion2D> region_popage(const EventLog& log, const IntervalSet& window,
                                                           const IntervalSet& cells, double alpha, CiMode mode,
                                                           const RegionOptions& opt = {}) {
  const auto report = estimate_popage(log, window, cells);
  return detail::piecewise_regions(log, window, cells, report, alpha, mode, opt);
}

}  // namespace agemeasure

#endif  // AGEMEASURE_CONFIDENCE_HPP
