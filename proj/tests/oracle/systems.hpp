#ifndef AGEMEASURE_TESTS_ORACLE_SYSTEMS_HPP
#define AGEMEASURE_TESTS_ORACLE_SYSTEMS_HPP

// Estimating-equation matrices and right-hand sides rebuilt from Riemann sums.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "oracle/riemann.hpp"

namespace oracle {

struct Systems {
  Eigen::MatrixXd death_matrix;
  Eigen::VectorXd death_rhs;
  Eigen::MatrixXd birth_matrix;
  Eigen::VectorXd birth_rhs;
};

namespace detail {

// Piecewise family on `cells`, optionally weighted by (1_J, A/K).
inline Systems piecewise(const EventLog& log, const std::vector<agemeasure::IntervalSet>& cells,
                         const std::optional<agemeasure::IntervalSet>& window) {
  const int n = static_cast<int>(cells.size());
  const int K = log.K;
  const double T = log.T;
  auto weight = [&](const std::vector<double>& a) { return window ? moment(a, 0, &*window, K) : 1.0; };
  auto tpow = [](double t, int m) { return m == 0 ? 1.0 : std::pow(t, m); };

  std::vector<Integrand> fs;
  for (int m = 0; m < n; ++m)
    for (int i = 0; i < n; ++i) {
      fs.push_back([&, m, i](double t, const auto& a) { return tpow(t, m) * weight(a) * moment(a, 1, &cells[i], K); });
      fs.push_back([&, m, i](double t, const auto& a) { return tpow(t, m) * weight(a) * moment(a, 0, &cells[i], K); });
    }
  for (int m = 0; m < n; ++m) {
    fs.push_back([&, m](double t, const auto& a) { return tpow(t, m) * moment(a, 0, nullptr, K); });
    fs.push_back([&, m](double t, const auto& a) { return tpow(t, m) * moment(a, 1, nullptr, K); });
  }
  const auto v = integrate(log, fs);
  auto death_entry = [&](int m, int i) { return v[2 * (m * n + i)]; };
  auto birth_entry = [&](int m, int i) { return v[2 * (m * n + i) + 1]; };
  auto count_int = [&](int m) { return v[2 * n * n + 2 * m]; };
  auto age_int = [&](int m) { return v[2 * n * n + 2 * m + 1]; };

  const auto people = lives(log);
  const auto a0 = ages_at(people, 0.0);
  const auto aT = ages_at(people, T);
  const double x0 = moment(a0, 1, nullptr, K), xT = moment(aT, 1, nullptr, K);
  const double n0 = moment(a0, 0, nullptr, K), nT = moment(aT, 0, nullptr, K);

  Systems s;
  s.death_matrix.resize(n, n);
  s.birth_matrix.resize(n, n);
  s.death_rhs.resize(n);
  s.birth_rhs.resize(n);
  for (int m = 0; m < n; ++m) {
    for (int i = 0; i < n; ++i) {
      s.death_matrix(m, i) = death_entry(m, i);
      s.birth_matrix(m, i) = birth_entry(m, i);
    }
    s.death_rhs(m) = (m == 0 ? x0 : 0.0) - tpow(T, m) * xT + count_int(m) + (m > 0 ? m * age_int(m - 1) : 0.0);
  }
  const Eigen::VectorXd h = s.death_matrix.fullPivLu().solve(s.death_rhs);
  for (int m = 0; m < n; ++m)
    s.birth_rhs(m) = tpow(T, m) * nT - (m == 0 ? n0 : 0.0) - (m > 0 ? m * count_int(m - 1) : 0.0) +
                     s.birth_matrix.row(m).dot(h);
  return s;
}

inline Systems popdep(const EventLog& log, const agemeasure::IntervalSet& J1, const agemeasure::IntervalSet& J2) {
  const int K = log.K;
  const std::vector<Integrand> fs{
      [&](double, const auto& a) { return moment(a, 0, &J2, K) * moment(a, 1, nullptr, K); },
      [&](double, const auto& a) { return moment(a, 0, &J1, K) * moment(a, 0, nullptr, K); },
      [&](double, const auto& a) { return moment(a, 0, &J2, K) * moment(a, 0, nullptr, K); },
      [&](double, const auto& a) { return moment(a, 0, nullptr, K); },
  };
  const auto v = integrate(log, fs);
  const auto people = lives(log);
  const auto a0 = ages_at(people, 0.0);
  const auto aT = ages_at(people, log.T);
  Systems s;
  s.death_matrix = Eigen::MatrixXd::Constant(1, 1, v[0]);
  s.death_rhs = Eigen::VectorXd::Constant(1, moment(a0, 1, nullptr, K) - moment(aT, 1, nullptr, K) + v[3]);
  s.birth_matrix = Eigen::MatrixXd::Constant(1, 1, v[1]);
  const double lambda = s.death_rhs(0) / v[0];
  s.birth_rhs =
      Eigen::VectorXd::Constant(1, moment(aT, 0, nullptr, K) - moment(a0, 0, nullptr, K) + lambda * v[2]);
  return s;
}

}  // namespace detail

/// Oracle systems in the same layout as the library's EstimateReport::systems.
inline Systems systems(const EventLog& log, const agemeasure::RateModel& model) {
  using namespace agemeasure;
  return std::visit(
      overloaded{[&](const ConstantRates&) {
                   return detail::piecewise(log, {IntervalSet{{0.0, std::numeric_limits<double>::infinity()}}}, std::nullopt);
                 },
                 [&](const PopulationLinearRates& m) { return detail::popdep(log, m.birth_window, m.death_window); },
                 [&](const AgePiecewiseRates& m) {
                   std::vector<IntervalSet> cells;
                   for (const auto& c : m.cells) cells.push_back({c.cell});
                   return detail::piecewise(log, cells, std::nullopt);
                 },
                 [&](const PopAgePiecewiseRates& m) {
                   std::vector<IntervalSet> cells;
                   for (const auto& c : m.cells) cells.push_back({c.cell});
                   return detail::piecewise(log, cells, m.window);
                 }},
      model);
}

}  // namespace oracle

#endif  // AGEMEASURE_TESTS_ORACLE_SYSTEMS_HPP
