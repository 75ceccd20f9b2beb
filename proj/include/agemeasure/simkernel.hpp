#ifndef AGEMEASURE_SIMKERNEL_HPP
#define AGEMEASURE_SIMKERNEL_HPP

// Exact continuous-time simulation of the age- and population-dependent
// birth-death process, and the event-log trajectory format.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "agemeasure/errors.hpp"
#include "agemeasure/format.hpp"
#include "agemeasure/popcore.hpp"
#include "agemeasure/rng.hpp"

namespace agemeasure {

enum class EventKind : char { Birth = 'B', Death = 'D' };

/// Birth: `subject` is the newborn (age 0). Death: `subject` is the individual removed.
struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Birth;
  std::uint64_t subject = 0;
  std::optional<double> parent_age;  // diagnostic only, not persisted

  friend bool operator==(const Event& a, const Event& b) {
    return a.time == b.time && a.kind == b.kind && a.subject == b.subject;
  }
};

/// Full trajectory on [0, T]. Initial individuals have ids 0..N0-1 in list
/// order; newborns take the next free id in birth order.
struct EventLog {
  std::vector<double> initial_ages;
  int K = 1;
  double T = 1.0;
  std::vector<Event> events;
  std::uint64_t seed = 0;
  std::optional<RateModel> model;
};

/// One individual's presence in the log: alive on [entry_time, exit_time).
struct Lineage {
  double entry_time = 0.0;
  double entry_age = 0.0;
  double exit_time = 0.0;
  bool died = false;

  /// Time at which this individual had (or would have had) age 0.
  double birth_date() const noexcept { return entry_time - entry_age; }
};

/// Validates the log and returns one Lineage per individual id.
inline std::vector<Lineage> lineages(const EventLog& log) {
  if (log.K < 1) throw LogFormatError("event log: K must be >= 1");
  if (!(log.T > 0.0)) throw LogFormatError("event log: T must be > 0");
  std::vector<Lineage> out;
  out.reserve(log.initial_ages.size() + log.events.size());
  for (double a : log.initial_ages) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw LogFormatError("event log: negative or non-finite initial age");
    out.push_back({0.0, a, log.T, false});
  }
  double last = 0.0;
  for (const auto& e : log.events) {
    if (!(e.time > last) || e.time > log.T)
      throw LogFormatError("event log: event times must be strictly increasing in (0,T], got " +
                           format_exact(e.time));
    last = e.time;
    if (e.kind == EventKind::Birth) {
      if (e.subject != out.size())
        throw LogFormatError("event log: newborn id " + std::to_string(e.subject) + " expected " +
                             std::to_string(out.size()));
      out.push_back({e.time, 0.0, log.T, false});
    } else {
      if (e.subject >= out.size() || out[e.subject].died)
        throw LogFormatError("event log: death of individual " + std::to_string(e.subject) +
                             " who is not alive");
      out[e.subject].died = true;
      out[e.subject].exit_time = e.time;
    }
  }
  return out;
}

/// A_t (right-continuous: events at exactly t are applied). Ages in id order.
inline AgeMeasure replay(const EventLog& log, double t) {
  if (!(t >= 0.0 && t <= log.T)) throw ContractError("replay: t outside [0,T]");
  AgeMeasure a;
  a.carrying_capacity = log.K;
  for (const auto& l : lineages(log))
    if (l.entry_time <= t && !(l.died && l.exit_time <= t)) a.ages.push_back(t - l.birth_date());
  return a;
}

/// Earliest time after `now` at which some age crosses a model interval endpoint, capped at T.
inline double next_epoch(std::span<const double> ages, const RateModel& model, double now, double T) {
  if (!(now < T)) throw ContractError("next_epoch: requires now < T");
  const auto endpoints = model_endpoints(model);
  double best = T;
  for (double x : ages) {
    auto it = std::upper_bound(endpoints.begin(), endpoints.end(), x);
    if (it != endpoints.end()) best = std::min(best, now + (*it - x));
  }
  return best;
}

namespace detail {

// Individuals live in one array ordered by birth date (oldest first), so each
// age region [edge_{r}, edge_{r+1}) is a contiguous slot range and crossings
// only move region boundaries. Dead slots stay in place as tombstones.
class Simulation {
 public:
  Simulation(const RateModel& model, std::span<const double> initial_ages, int K, double T,
             std::uint64_t seed)
      : model_(model), K_(K), T_(T), rng_(seed), edges_(model_endpoints(model)) {
    const auto n0 = initial_ages.size();
    std::vector<std::uint64_t> order(n0);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return initial_ages[a] > initial_ages[b]; });
    for (auto i : order) {
      birth_date_.push_back(-initial_ages[i]);
      id_.push_back(i);
      alive_.push_back(1);
    }
    next_id_ = n0;

    const std::size_t regions = edges_.size() + 1;
    count_.assign(regions, 0);
    rate_.assign(regions, Hazards{});
    midpoint_.resize(regions);
    for (std::size_t r = 0; r < regions; ++r) {
      const double lo = r == 0 ? 0.0 : edges_[r - 1];
      midpoint_[r] = r < edges_.size() ? 0.5 * (lo + edges_[r]) : lo + 1.0;
    }
    // ptr_[r] = number of slots with age >= lower edge of region r.
    ptr_.assign(regions + 1, 0);
    ptr_[0] = n0;
    for (std::size_t r = 1; r < regions; ++r)
      ptr_[r] = static_cast<std::size_t>(
          std::count_if(initial_ages.begin(), initial_ages.end(), [&](double a) { return a >= edges_[r - 1]; }));
    for (std::size_t r = 0; r < regions; ++r) count_[r] = ptr_[r] - ptr_[r + 1];

    population_dependent_ = std::holds_alternative<PopulationLinearRates>(model_) ||
                            std::holds_alternative<PopAgePiecewiseRates>(model_);
    refresh_rates(true);
  }

  std::vector<Event> run() {
    std::vector<Event> events;
    double t = 0.0;
    double budget = rng_.exponential();
    while (true) {
      const double total = total_rate();
      std::size_t boundary = 0;
      const double crossing = next_crossing(boundary);
      const double epoch = std::min(crossing, T_);
      if (total > 0.0) {
        const double t_event = t + budget / total;
        if (t_event < epoch) {
          t = t_event;
          events.push_back(fire(t));
          budget = rng_.exponential();
          continue;
        }
        budget = std::max(0.0, budget - total * (epoch - t));
      }
      t = epoch;
      if (crossing >= T_) break;
      cross(boundary);
    }
    return events;
  }

 private:
  double window_mass(const IntervalSet& window) const {
    double n = 0.0;
    for (std::size_t r = 0; r < count_.size(); ++r)
      if (contains(window, midpoint_[r])) n += static_cast<double>(count_[r]);
    return n / K_;
  }

  void refresh_rates(bool force = false) {
    if (!force && !population_dependent_) return;
    for (std::size_t r = 0; r < rate_.size(); ++r)
      rate_[r] = hazards_at(model_, midpoint_[r], [this](const IntervalSet& w) { return window_mass(w); });
  }

  double total_rate() const {
    double s = 0.0;
    for (std::size_t r = 0; r < rate_.size(); ++r)
      s += static_cast<double>(count_[r]) * (rate_[r].death + rate_[r].birth);
    return s;
  }

  double next_crossing(std::size_t& boundary) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 1; r <= edges_.size(); ++r) {
      if (ptr_[r] >= birth_date_.size()) continue;
      const double tc = birth_date_[ptr_[r]] + edges_[r - 1];
      if (tc < best) {
        best = tc;
        boundary = r;
      }
    }
    return best;
  }

  void cross(std::size_t r) {
    const auto slot = ptr_[r]++;
    if (alive_[slot]) {
      --count_[r - 1];
      ++count_[r];
      refresh_rates();
    }
  }

  std::size_t pick_slot(std::size_t region) {
    const auto lo = ptr_[region + 1];
    const auto hi = ptr_[region];
    while (true) {
      const auto slot = lo + rng_.index(hi - lo);
      if (alive_[slot]) return slot;
    }
  }

  Event fire(double t) {
    double target = rng_.uniform() * total_rate();
    std::size_t region = 0;
    bool death = true;
    std::size_t last_positive = 0;
    bool chosen = false;
    for (std::size_t r = 0; r < count_.size() && !chosen; ++r) {
      const double n = static_cast<double>(count_[r]);
      const double d = n * rate_[r].death;
      const double b = n * rate_[r].birth;
      if (d + b > 0.0) last_positive = r;
      if (target < d) {
        region = r;
        death = true;
        chosen = true;
      } else if (target < d + b) {
        region = r;
        death = false;
        chosen = true;
      } else {
        target -= d + b;
      }
    }
    if (!chosen) {  // rounding at the top of the cumulative sum
      region = last_positive;
      death = count_[region] * rate_[region].birth == 0.0;
    }

    const auto slot = pick_slot(region);
    const double age = t - birth_date_[slot];
    Event e;
    e.time = t;
    e.parent_age = age;
    if (death) {
      e.kind = EventKind::Death;
      e.subject = id_[slot];
      alive_[slot] = 0;
      --count_[region];
      maybe_compact(region);
    } else {
      e.kind = EventKind::Birth;
      e.subject = next_id_++;
      birth_date_.push_back(t);
      id_.push_back(e.subject);
      alive_.push_back(1);
      ptr_[0] = birth_date_.size();
      ++count_[0];
    }
    refresh_rates();
    return e;
  }

  // Stable compaction of one region when tombstones dominate; keeps birth
  // dates non-decreasing so crossing pointers stay valid.
  void maybe_compact(std::size_t region) {
    const auto lo = ptr_[region + 1];
    const auto hi = ptr_[region];
    const auto n = count_[region];
    if (n == 0 || hi - lo < 2 * n + 16) return;
    auto w = lo;
    for (auto s = lo; s < hi; ++s) {
      if (!alive_[s]) continue;
      birth_date_[w] = birth_date_[s];
      id_[w] = id_[s];
      alive_[w] = 1;
      ++w;
    }
    const double fill = birth_date_[w - 1];
    for (auto s = w; s < hi; ++s) {
      birth_date_[s] = fill;
      alive_[s] = 0;
    }
  }

  RateModel model_;
  int K_;
  double T_;
  Rng rng_;
  std::vector<double> edges_;
  std::vector<double> birth_date_;
  std::vector<std::uint64_t> id_;
  std::vector<char> alive_;
  std::vector<std::size_t> ptr_;
  std::vector<std::size_t> count_;
  std::vector<Hazards> rate_;
  std::vector<double> midpoint_;
  std::uint64_t next_id_ = 0;
  bool population_dependent_ = false;
};

}  // namespace detail

/// Samples an exact path on [0, T]. Between structure-change epochs (events and
/// age crossings of model interval endpoints) all hazards are constant, so the
/// event clock is an integrated-hazard inversion with one Exp(1) draw per event.
inline EventLog simulate(const RateModel& model, std::span<const double> initial_ages, int K, double T,
                         std::uint64_t seed) {
  if (K < 1) throw ContractError("simulate: K must be >= 1");
  if (!(T > 0.0) || !std::isfinite(T)) throw ContractError("simulate: T must be > 0");
  if (initial_ages.empty()) throw ContractError("simulate: initial population is empty");
  for (double a : initial_ages)
    if (!(a >= 0.0) || !std::isfinite(a)) throw ContractError("simulate: ages must be finite and >= 0");
  validate(model);

  EventLog log;
  log.initial_ages.assign(initial_ages.begin(), initial_ages.end());
  log.K = K;
  log.T = T;
  log.seed = seed;
  log.model = model;
  log.events = detail::Simulation(model, initial_ages, K, T, seed).run();
  return log;
}

// ---------------------------------------------------------------------------
// Line-oriented event-log file format
// ---------------------------------------------------------------------------

inline void write_event_log(std::ostream& os, const EventLog& log) {
  os << "K=" << log.K << '\n';
  os << "T=" << format_exact(log.T) << '\n';
  os << "SEED=" << log.seed << '\n';
  if (log.model) os << "MODEL=" << model_descriptor(*log.model) << '\n';
  os << "INIT=";
  for (std::size_t i = 0; i < log.initial_ages.size(); ++i) {
    if (i) os << ',';
    os << format_exact(log.initial_ages[i]);
  }
  os << '\n';
  for (const auto& e : log.events)
    os << format_exact(e.time) << ' ' << static_cast<char>(e.kind) << ' ' << e.subject << '\n';
}

inline std::string to_string(const EventLog& log) {
  std::ostringstream os;
  write_event_log(os, log);
  return os.str();
}

inline EventLog read_event_log(std::istream& is) {
  EventLog log;
  bool have_k = false, have_t = false, have_init = false;
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(is, line)) {
      ++lineno;
      const auto text = trim(line);
      if (text.empty()) continue;
      const auto eq = text.find('=');
      if (eq != std::string_view::npos) {
        const auto key = text.substr(0, eq);
        const auto value = text.substr(eq + 1);
        if (key == "K") {
          log.K = parse_integer<int>(value);
          have_k = true;
        } else if (key == "T") {
          log.T = parse_double(value);
          have_t = true;
        } else if (key == "SEED") {
          log.seed = parse_integer<std::uint64_t>(value);
        } else if (key == "MODEL") {
          log.model = parse_model_descriptor(value);
        } else if (key == "INIT") {
          log.initial_ages = parse_double_list(value);
          have_init = true;
        } else {
          throw LogFormatError("unknown header '" + std::string(key) + "'");
        }
        continue;
      }
      const auto parts = split(text, ' ');
      if (parts.size() != 3 || (parts[1] != "B" && parts[1] != "D"))
        throw LogFormatError("malformed event line '" + std::string(text) + "'");
      Event e;
      e.time = parse_double(parts[0]);
      e.kind = parts[1] == "B" ? EventKind::Birth : EventKind::Death;
      e.subject = parse_integer<std::uint64_t>(parts[2]);
      log.events.push_back(e);
    }
  } catch (const LogFormatError& e) {
    throw LogFormatError("line " + std::to_string(lineno) + ": " + e.what());
  } catch (const std::exception& e) {
    throw LogFormatError("line " + std::to_string(lineno) + ": " + e.what());
  }
  if (!(have_k && have_t && have_init)) throw LogFormatError("event log is missing K, T or INIT header");
  lineages(log);
  return log;
}

}  // namespace agemeasure

#endif  // AGEMEASURE_SIMKERNEL_HPP
