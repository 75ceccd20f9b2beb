#ifndef AGEMEASURE_TESTS_FIXTURES_HPP
#define AGEMEASURE_TESTS_FIXTURES_HPP

#include <cstdint>
#include <vector>

#include "agemeasure/agemeasure.hpp"

namespace fixtures {

using namespace agemeasure;

inline IntervalSet J1() { return {{0.5, 1.5, true}}; }
inline IntervalSet J2() { return {{0.0, 0.5}, {1.5, 2.0, true, false}}; }
inline IntervalSet two_cells() { return {{0.0, 1.0}, {1.0, 2.0, true}}; }

inline RateModel constant_model() { return ConstantRates{0.2, 0.4}; }
inline RateModel popdep_model() { return PopulationLinearRates{0.04, J2(), 0.08, J1()}; }
inline RateModel agedep_model() { return AgePiecewiseRates{{{{0.0, 1.0}, 0.2, 0.1}, {{1.0, 2.0, true}, 0.4, 0.5}}}; }
inline RateModel popage_model() {
  return PopAgePiecewiseRates{J1(), {{{0.0, 1.0}, 0.02, 0.03}, {{1.0, 2.0, true}, 0.06, 0.09}}};
}

/// U[0,1] initial ages and a path, both derived from one seed.
inline EventLog uniform_path(const RateModel& model, int K, double T, std::uint64_t seed) {
  const auto ages = sample_initial_ages(UniformAges{0.0, 1.0}, K, seed);
  return simulate(model, ages, K, T, splitmix64(seed));
}

/// Hand-built log with no model echo.
inline EventLog make_log(std::vector<double> init, int K, double T, std::vector<Event> events = {}) {
  EventLog log;
  log.initial_ages = std::move(init);
  log.K = K;
  log.T = T;
  log.events = std::move(events);
  return log;
}

inline Event birth(double t, std::uint64_t id) { return Event{t, EventKind::Birth, id, std::nullopt}; }
inline Event death(double t, std::uint64_t id) { return Event{t, EventKind::Death, id, std::nullopt}; }

}  // namespace fixtures

#endif  // AGEMEASURE_TESTS_FIXTURES_HPP
