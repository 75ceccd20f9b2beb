#ifndef AGEMEASURE_ESTIMATORS_HPP
#define AGEMEASURE_ESTIMATORS_HPP

// Rate estimators: the limit estimating equations with the observed path
// plugged in. Test functions x t^m isolate death rates (they vanish at age 0);
// t^m then recovers birth rates given the death-rate estimates.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agemeasure/errors.hpp"
#include "agemeasure/pathfn.hpp"
#include "agemeasure/popcore.hpp"
#include "agemeasure/simkernel.hpp"

namespace agemeasure {

inline constexpr double kConditionLimit = 1e12;
inline constexpr double kConditionWarning = 1e8;

/// matrix * theta = rhs; `condition` is the infinity-norm condition number once solved.
struct LinearSystem {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd rhs;
  double condition = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> labels;
};

/// Solves with full-pivot LU. Throws IllConditionedError when singular or when
/// the condition estimate exceeds kConditionLimit.
inline Eigen::VectorXd solve(LinearSystem& system) {
  const auto& M = system.matrix;
  if (M.rows() != M.cols() || M.rows() != system.rhs.size() || M.rows() == 0)
    throw ContractError("solve: system must be square and match the right-hand side");
  if (!M.allFinite() || !system.rhs.allFinite()) throw ContractError("solve: non-finite entries");

  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (!lu.isInvertible()) {
    system.condition = std::numeric_limits<double>::infinity();
    throw IllConditionedError("singular linear system", system.condition);
  }
  const Eigen::MatrixXd inverse = lu.inverse();
  system.condition = M.lpNorm<Eigen::Infinity>() == 0.0
                         ? std::numeric_limits<double>::infinity()
                         : M.cwiseAbs().rowwise().sum().maxCoeff() * inverse.cwiseAbs().rowwise().sum().maxCoeff();
  if (!(system.condition <= kConditionLimit))
    throw IllConditionedError("ill-conditioned linear system (condition " + format_short(system.condition) + ")",
                              system.condition);
  Eigen::VectorXd x = lu.solve(system.rhs);
  return x;
}

struct EstimateReport {
  std::string family;
  std::vector<std::string> names;
  std::vector<double> values;
  /// Death-rate system first, then birth-rate system.
  std::vector<LinearSystem> systems;
  std::vector<std::string> warnings;
  int K = 0;
  double T = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> extinction_time;
  bool has_negative = false;

  double value(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return values[i];
    throw ContractError("no estimate named '" + std::string(name) + "'");
  }
};

/// Time at which the population first hits zero, if it does.
inline std::optional<double> extinction_time(const EventLog& log) {
  long long n = static_cast<long long>(log.initial_ages.size());
  if (n == 0) return 0.0;
  for (const auto& e : log.events) {
    n += e.kind == EventKind::Birth ? 1 : -1;
    if (n == 0) return e.time;
  }
  return std::nullopt;
}

namespace detail {

/// Path plus the endpoint pairings every estimator needs.
struct Observation {
  const EventLog& log;
  SegmentedPath path;
  double age_start;    // (x, A_0/K)
  double age_end;      // (x, A_T/K)
  double count_start;  // (1, A_0/K)
  double count_end;    // (1, A_T/K)

  Observation(const EventLog& l, const IntervalSet& intervals)
      : log(l),
        path(segment(l, intervals)),
        age_start(endpoint_pair(l, tf::age(), 0.0)),
        age_end(endpoint_pair(l, tf::age(), l.T)),
        count_start(endpoint_pair(l, tf::one(), 0.0)),
        count_end(endpoint_pair(l, tf::one(), l.T)) {}
};

inline EstimateReport make_report(const EventLog& log, std::string family) {
  EstimateReport r;
  r.family = std::move(family);
  r.K = log.K;
  r.T = log.T;
  r.seed = log.seed;
  r.extinction_time = extinction_time(log);
  return r;
}

inline void finish(EstimateReport& r) {
  for (double v : r.values)
    if (!std::isfinite(v)) throw DegeneratePathError("non-finite estimate");
  r.has_negative = false;
  for (double v : r.values) r.has_negative = r.has_negative || v < 0.0;
  for (const auto& s : r.systems)
    if (s.condition >= kConditionWarning)
      r.warnings.push_back("condition number " + format_short(s.condition) + " in warning band");
}

inline LinearSystem scalar_system(double coefficient, double rhs, std::string label) {
  LinearSystem s;
  s.matrix = Eigen::MatrixXd::Constant(1, 1, coefficient);
  s.rhs = Eigen::VectorXd::Constant(1, rhs);
  s.labels = {std::move(label)};
  return s;
}

// Right-hand sides shared by the piecewise families (weight-free):
//   death, f = x t^m : [m=0](x,A_0) - T^m (x,A_T) + int s^m (1,A) + m int s^{m-1} (x,A)
//   birth, f = t^m   : T^m (1,A_T) - [m=0](1,A_0) - m int s^{m-1} (1,A)   (+ death-rate terms)
inline double death_rhs(const Observation& obs, int m) {
  const double T = obs.log.T;
  double v = (m == 0 ? obs.age_start : 0.0) - std::pow(T, m) * obs.age_end + int_pair(obs.path, tf::one(), m);
  if (m > 0) v += m * int_pair(obs.path, tf::age(), m - 1);
  return v;
}

inline double birth_rhs_base(const Observation& obs, int m) {
  const double T = obs.log.T;
  double v = std::pow(T, m) * obs.count_end - (m == 0 ? obs.count_start : 0.0);
  if (m > 0) v -= m * int_pair(obs.path, tf::one(), m - 1);
  return v;
}

// Rows m = 0..n-1 of the piecewise systems. With a window J every entry
// carries the weight (1_J, A_s/K).
inline EstimateReport estimate_piecewise(const EventLog& log, const std::optional<IntervalSet>& window,
                                         const IntervalSet& cells, const char* family, const char* death_stem,
                                         const char* birth_stem) {
  if (cells.empty()) throw ContractError("at least one cell is required");
  validate_disjoint_unordered(cells);
  if (window) validate_disjoint(*window);
  IntervalSet intervals = cells;
  if (window) intervals.insert(intervals.end(), window->begin(), window->end());
  const Observation obs(log, intervals);
  const auto n = static_cast<Eigen::Index>(cells.size());

  auto entry = [&](const TestFn& f, int m) {
    return window ? int_product(obs.path, *window, f, m) : int_pair(obs.path, f, m);
  };

  auto report = make_report(log, family);
  for (Eigen::Index i = 0; i < n; ++i) report.names.push_back(death_stem + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < n; ++i) report.names.push_back(birth_stem + std::to_string(i + 1));

  LinearSystem death;
  death.matrix.resize(n, n);
  death.rhs.resize(n);
  LinearSystem birth;
  birth.matrix.resize(n, n);
  birth.rhs.resize(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const int mi = static_cast<int>(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const IntervalSet cell{cells[static_cast<std::size_t>(i)]};
      death.matrix(m, i) = entry(TestFn::monomial(1, 0, 1.0, cell), mi);
      birth.matrix(m, i) = entry(TestFn::monomial(0, 0, 1.0, cell), mi);
    }
    death.rhs(m) = death_rhs(obs, mi);
  }
  death.labels.assign(report.names.begin(), report.names.begin() + n);
  birth.labels.assign(report.names.begin() + n, report.names.end());

  const Eigen::VectorXd d = solve(death);
  for (Eigen::Index m = 0; m < n; ++m) birth.rhs(m) = birth_rhs_base(obs, static_cast<int>(m)) + birth.matrix.row(m).dot(d);
  const Eigen::VectorXd b = solve(birth);

  for (Eigen::Index i = 0; i < n; ++i) report.values.push_back(d(i));
  for (Eigen::Index i = 0; i < n; ++i) report.values.push_back(b(i));
  report.systems = {std::move(death), std::move(birth)};
  finish(report);
  return report;
}

}  // namespace detail

/// Constant rates: f = x gives h, then f = 1 gives b.
inline EstimateReport estimate_constant(const EventLog& log) {
  const detail::Observation obs(log, {});
  const double occupancy = int_pair(obs.path, tf::one());  // int (1, A_s/K) ds
  const double age_mass = int_pair(obs.path, tf::age());   // int (x, A_s/K) ds
  if (!(occupancy > 0.0) || !(age_mass > 0.0))
    throw DegeneratePathError("constant-rate estimator: population has no age mass on [0,T]");

  auto report = detail::make_report(log, "constant");
  report.names = {"h", "b"};
  auto death = detail::scalar_system(age_mass, obs.age_start - obs.age_end + occupancy, "h");
  const double h = solve(death)(0);
  auto birth = detail::scalar_system(occupancy, obs.count_end - obs.count_start + h * occupancy, "b");
  const double b = solve(birth)(0);
  report.values = {h, b};
  report.systems = {std::move(death), std::move(birth)};
  detail::finish(report);
  return report;
}

/// h_A = lambda (1_{J2}, A/K), b_A = eta (1_{J1}, A/K).
inline EstimateReport estimate_popdep(const EventLog& log, const IntervalSet& birth_window,
                                      const IntervalSet& death_window) {
  validate_disjoint(birth_window);
  validate_disjoint(death_window);
  IntervalSet intervals = birth_window;
  intervals.insert(intervals.end(), death_window.begin(), death_window.end());
  const detail::Observation obs(log, intervals);

  const double occupancy = int_pair(obs.path, tf::one());
  const double death_den = int_product(obs.path, death_window, tf::age());  // I^x_{J2}
  const double birth_den = int_product(obs.path, birth_window, tf::one());  // I^1_{J1}
  const double death_occ = int_product(obs.path, death_window, tf::one());  // I^1_{J2}
  if (!(death_den > 0.0))
    throw DegeneratePathError("popdep estimator: death window " + to_string(death_window) + " is never occupied");
  if (!(birth_den > 0.0))
    throw DegeneratePathError("popdep estimator: birth window " + to_string(birth_window) + " is never occupied");

  auto report = detail::make_report(log, "popdep");
  report.names = {"lambda", "eta"};
  auto death = detail::scalar_system(death_den, obs.age_start - obs.age_end + occupancy, "lambda");
  const double lambda = solve(death)(0);
  auto birth = detail::scalar_system(birth_den, obs.count_end - obs.count_start + lambda * death_occ, "eta");
  const double eta = solve(birth)(0);
  report.values = {lambda, eta};
  report.systems = {std::move(death), std::move(birth)};
  detail::finish(report);
  return report;
}

/// Piecewise-constant rates on `cells`: n x n systems from f = x t^m and f = t^m, m < n.
inline EstimateReport estimate_agedep(const EventLog& log, const IntervalSet& cells) {
  return detail::estimate_piecewise(log, std::nullopt, cells, "agedep", "h", "b");
}

/// h_A(x) = sum alpha_i (1_J, A/K) 1_{B_i}(x); b likewise with gamma_i.
inline EstimateReport estimate_popage(const EventLog& log, const IntervalSet& window, const IntervalSet& cells) {
  return detail::estimate_piecewise(log, window, cells, "popage", "alpha", "gamma");
}

/// Estimates the parameters of `model`'s family using the model's intervals.
inline EstimateReport estimate(const EventLog& log, const RateModel& model) {
  return std::visit(
      overloaded{[&](const ConstantRates&) { return estimate_constant(log); },
                 [&](const PopulationLinearRates& m) { return estimate_popdep(log, m.birth_window, m.death_window); },
                 [&](const AgePiecewiseRates& m) { return estimate_agedep(log, cell_intervals(m.cells)); },
                 [&](const PopAgePiecewiseRates& m) {
                   return estimate_popage(log, m.window, cell_intervals(m.cells));
                 }},
      model);
}

/// The rate model with every parameter replaced by its estimate (same intervals).
inline RateModel fitted_model(const RateModel& shape, const EstimateReport& report) {
  const auto& v = report.values;
  return std::visit(overloaded{[&](ConstantRates) -> RateModel { return ConstantRates{v[0], v[1]}; },
                               [&](PopulationLinearRates m) -> RateModel {
                                 m.death_scale = v[0];
                                 m.birth_scale = v[1];
                                 return m;
                               },
                               [&](AgePiecewiseRates m) -> RateModel {
                                 const auto n = m.cells.size();
                                 for (std::size_t i = 0; i < n; ++i) {
                                   m.cells[i].death = v[i];
                                   m.cells[i].birth = v[n + i];
                                 }
                                 return m;
                               },
                               [&](PopAgePiecewiseRates m) -> RateModel {
                                 const auto n = m.cells.size();
                                 for (std::size_t i = 0; i < n; ++i) {
                                   m.cells[i].death_scale = v[i];
                                   m.cells[i].birth_scale = v[n + i];
                                 }
                                 return m;
                               }},
                    shape);
}

}  // namespace agemeasure

#endif  // AGEMEASURE_ESTIMATORS_HPP
