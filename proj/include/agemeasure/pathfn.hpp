#ifndef AGEMEASURE_PATHFN_HPP
#define AGEMEASURE_PATHFN_HPP

// Exact time integrals of pairings along an observed path.
//
// The horizon is cut at every event and at every time an individual's age
// crosses an endpoint of a referenced interval. Inside such a segment each
// individual's interval memberships are fixed and its age is affine in time,
// so (x^p 1_S, A_s) is a polynomial in s whose coefficients follow from the
// per-region power sums of ages at the segment start. All integrals below are
// closed-form sums of polynomial antiderivatives.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "agemeasure/errors.hpp"
#include "agemeasure/popcore.hpp"
#include "agemeasure/simkernel.hpp"

namespace agemeasure {

class SegmentedPath {
 public:
  static constexpr int kMaxPower = TestFn::kMaxAgePower;
  static constexpr std::size_t kStride = kMaxPower + 1;

  int K() const noexcept { return K_; }
  double T() const noexcept { return T_; }

  /// 0 = t_0 < t_1 < ... < t_M = T.
  std::span<const double> breakpoints() const noexcept { return breakpoints_; }
  /// Sorted positive interval endpoints; region r is [edge_{r-1}, edge_r) with edge_{-1} = 0.
  std::span<const double> edges() const noexcept { return edges_; }

  std::size_t segments() const noexcept { return breakpoints_.size() - 1; }
  std::size_t regions() const noexcept { return edges_.size() + 1; }

  /// sum over alive individuals in `region` of age^k, at the start of `seg` (k = 0 is the count).
  double power_sum(std::size_t seg, std::size_t region, int k) const {
    return sums_[(seg * regions() + region) * kStride + static_cast<std::size_t>(k)];
  }

  /// Representative age of a region, used for interval-membership tests.
  double region_probe(std::size_t region) const noexcept {
    const double lo = region == 0 ? 0.0 : edges_[region - 1];
    return region < edges_.size() ? 0.5 * (lo + edges_[region]) : lo + 1.0;
  }

  /// Region-membership mask of a union of intervals; throws if an endpoint is not an edge.
  std::vector<char> region_mask(const IntervalSet& set) const {
    const double tol = 1e-12 * std::max(1.0, edges_.empty() ? 1.0 : edges_.back());
    for (const auto& iv : set) {
      for (double e : {iv.lo, iv.hi}) {
        if (e == 0.0) continue;
        auto it = std::lower_bound(edges_.begin(), edges_.end(), e - tol);
        if (it == edges_.end() || std::abs(*it - e) > tol)
          throw ContractError("interval endpoint " + format_short(e) +
                              " was not supplied when the path was segmented");
      }
    }
    std::vector<char> mask(regions());
    for (std::size_t r = 0; r < regions(); ++r) mask[r] = contains(set, region_probe(r)) ? 1 : 0;
    return mask;
  }

 private:
  friend SegmentedPath segment(const EventLog& log, const IntervalSet& intervals);

  int K_ = 1;
  double T_ = 0.0;
  std::vector<double> breakpoints_;
  std::vector<double> edges_;
  std::vector<double> sums_;
};

namespace detail {

inline double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

using PowerSums = std::array<double, SegmentedPath::kStride>;

inline void shift_sums(PowerSums& s, double delta) {
  if (delta == 0.0 || s[0] == 0.0) return;
  PowerSums out{};
  for (int k = 0; k <= SegmentedPath::kMaxPower; ++k) {
    double acc = 0.0;
    for (int j = 0; j <= k; ++j) acc += binomial(k, j) * std::pow(delta, k - j) * s[j];
    out[k] = acc;
  }
  s = out;
}

inline void add_age(PowerSums& s, double x, double sign) {
  double p = 1.0;
  for (auto& v : s) {
    v += sign * p;
    p *= x;
  }
  if (s[0] < 0.5) s.fill(0.0);
}

}  // namespace detail

/// Cuts [0, T] at every event and every crossing of an endpoint in `intervals`.
inline SegmentedPath segment(const EventLog& log, const IntervalSet& intervals) {
  const auto lives = lineages(log);
  SegmentedPath path;
  path.K_ = log.K;
  path.T_ = log.T;
  path.edges_ = interval_endpoints(intervals);
  const auto& edges = path.edges_;
  const double T = log.T;
  const double tol = 1e-12 * T;

  enum class Kind : std::uint8_t { Cross, Birth, Death };
  struct Change {
    double time;
    Kind kind;
    std::uint32_t to_region;
    std::uint64_t id;
  };
  std::vector<Change> changes;
  changes.reserve(log.events.size() + lives.size());
  for (const auto& e : log.events)
    changes.push_back({e.time, e.kind == EventKind::Birth ? Kind::Birth : Kind::Death, 0, e.subject});
  for (std::uint64_t id = 0; id < lives.size(); ++id) {
    const auto& l = lives[id];
    const double bd = l.birth_date();
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const double c = bd + edges[k];
      if (c > l.entry_time && c < l.exit_time && c < T)
        changes.push_back({c, Kind::Cross, static_cast<std::uint32_t>(k + 1), id});
    }
  }
  std::stable_sort(changes.begin(), changes.end(),
                   [](const Change& a, const Change& b) { return a.time < b.time; });

  const std::size_t R = path.regions();
  auto region_of_age = [&](double x) {
    return static_cast<std::uint32_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
  };
  std::vector<std::uint32_t> region(lives.size(), 0);
  std::vector<detail::PowerSums> sums(R, detail::PowerSums{});
  for (std::uint64_t id = 0; id < log.initial_ages.size(); ++id) {
    region[id] = region_of_age(log.initial_ages[id]);
    detail::add_age(sums[region[id]], log.initial_ages[id], 1.0);
  }

  auto apply = [&](const Change& c, double now) {
    const double bd = lives[c.id].birth_date();
    switch (c.kind) {
      case Kind::Birth:
        region[c.id] = 0;
        detail::add_age(sums[0], 0.0, 1.0);
        break;
      case Kind::Death:
        detail::add_age(sums[region[c.id]], std::max(0.0, now - bd), -1.0);
        break;
      case Kind::Cross: {
        const double x = edges[c.to_region - 1];
        detail::add_age(sums[region[c.id]], x, -1.0);
        region[c.id] = c.to_region;
        detail::add_age(sums[c.to_region], x, 1.0);
        break;
      }
    }
  };
  auto record = [&](double start) {
    path.breakpoints_.push_back(start);
    for (const auto& s : sums) path.sums_.insert(path.sums_.end(), s.begin(), s.end());
  };

  double now = 0.0;
  std::size_t i = 0;
  // Changes within tol of 0 belong to the initial state.
  while (i < changes.size() && changes[i].time <= tol) apply(changes[i++], 0.0);
  while (i < changes.size()) {
    const double g = changes[i].time;
    if (g >= T - tol) break;
    record(now);
    for (auto& s : sums) detail::shift_sums(s, g - now);
    now = g;
    while (i < changes.size() && changes[i].time <= g + tol) apply(changes[i++], now);
  }
  record(now);
  path.breakpoints_.push_back(T);
  return path;
}

namespace detail {

// Integral over u in [0, L] of (a + u)^n u^j, j = 0..jmax. All terms are
// nonnegative for a >= 0.
inline std::array<double, SegmentedPath::kStride> time_moments(double a, double L, int n, int jmax) {
  std::array<double, SegmentedPath::kStride> out{};
  for (int j = 0; j <= jmax; ++j) {
    double acc = 0.0;
    for (int i = 0; i <= n; ++i)
      acc += binomial(n, i) * std::pow(a, n - i) * std::pow(L, i + j + 1) / (i + j + 1);
    out[j] = acc;
  }
  return out;
}

// Integral over [from, to] within one segment of s^n (x^p 1_mask, A_s), unnormalized.
inline double segment_term(const SegmentedPath& path, std::size_t seg, const std::vector<char>& mask,
                           int p, int n, double from, double to) {
  const double start = path.breakpoints()[seg];
  const auto moments = time_moments(from, to - from, n, p);
  double total = 0.0;
  for (std::size_t r = 0; r < path.regions(); ++r) {
    if (!mask[r] || path.power_sum(seg, r, 0) == 0.0) continue;
    PowerSums s{};
    for (int k = 0; k <= SegmentedPath::kMaxPower; ++k) s[k] = path.power_sum(seg, r, k);
    shift_sums(s, from - start);
    // (x^p, A_{from+u}) = sum_k C(p,k) u^{p-k} S_k
    for (int k = 0; k <= p; ++k) total += binomial(p, k) * s[k] * moments[p - k];
  }
  return total;
}

template <typename Weight>
double integrate(const SegmentedPath& path, const TestFn& f, int m, double from, double to, Weight&& weight) {
  if (m < 0 || m > 2 * TestFn::kMaxTimePower) throw ContractError("time power out of range");
  from = std::max(from, 0.0);
  to = std::min(to, path.T());
  if (!(from < to)) return 0.0;
  struct Prepared {
    double coef;
    int p;
    int n;
    std::vector<char> mask;
  };
  std::vector<Prepared> terms;
  const std::vector<char> everywhere(path.regions(), 1);
  for (const auto& t : f.terms())
    terms.push_back({t.coef, t.age_power, t.time_power + m, t.support ? path.region_mask(*t.support) : everywhere});

  const auto bp = path.breakpoints();
  auto first = static_cast<std::size_t>(std::upper_bound(bp.begin(), bp.end(), from) - bp.begin());
  first = first == 0 ? 0 : first - 1;
  double total = 0.0;
  for (std::size_t seg = first; seg < path.segments() && bp[seg] < to; ++seg) {
    const double lo = std::max(from, bp[seg]);
    const double hi = std::min(to, bp[seg + 1]);
    if (!(lo < hi)) continue;
    const double w = weight(seg);
    if (w == 0.0) continue;
    double s = 0.0;
    for (const auto& t : terms) s += t.coef * segment_term(path, seg, t.mask, t.p, t.n, lo, hi);
    total += w * s;
  }
  return total;
}

}  // namespace detail

/// Integral over [from, to] of s^m (f_s, A_s / K) ds.
inline double int_pair(const SegmentedPath& path, const TestFn& f, int m, double from, double to) {
  return detail::integrate(path, f, m, from, to, [](std::size_t) { return 1.0; }) / path.K();
}

/// Integral over [0, T] of s^m (f_s, A_s / K) ds.
inline double int_pair(const SegmentedPath& path, const TestFn& f, int m = 0) {
  return int_pair(path, f, m, 0.0, path.T());
}

/// Integral over [from, to] of s^m (1_J, A_s / K) (f_s, A_s / K) ds.
inline double int_product(const SegmentedPath& path, const IntervalSet& window, const TestFn& f, int m,
                          double from, double to) {
  const auto mask = path.region_mask(window);
  auto weight = [&](std::size_t seg) {
    double n = 0.0;
    for (std::size_t r = 0; r < path.regions(); ++r)
      if (mask[r]) n += path.power_sum(seg, r, 0);
    return n;
  };
  const double K = path.K();
  return detail::integrate(path, f, m, from, to, weight) / (K * K);
}

inline double int_product(const SegmentedPath& path, const IntervalSet& window, const TestFn& f, int m = 0) {
  return int_product(path, window, f, m, 0.0, path.T());
}

/// (f_t, A_t / K) from the replayed population.
inline double endpoint_pair(const EventLog& log, const TestFn& f, double t) {
  return pair(f, replay(log, t), t, true);
}

enum class Rate { Death, Birth };

/// Integral over [0, T] of (rate_{A_s/K} * w_s, A_s / K) ds for the death or birth rate of `model`.
/// The path must have been segmented with model_intervals(model) and w's supports.
inline double int_rate_weighted(const SegmentedPath& path, const RateModel& model, const TestFn& w, Rate which) {
  if (w.empty()) return 0.0;
  const bool death = which == Rate::Death;
  return std::visit(
      overloaded{[&](const ConstantRates& m) { return (death ? m.death : m.birth) * int_pair(path, w); },
                 [&](const PopulationLinearRates& m) {
                   return death ? m.death_scale * int_product(path, m.death_window, w)
                                : m.birth_scale * int_product(path, m.birth_window, w);
                 },
                 [&](const AgePiecewiseRates& m) {
                   double s = 0.0;
                   for (const auto& c : m.cells) {
                     const double k = death ? c.death : c.birth;
                     if (k != 0.0) s += k * int_pair(path, w.restricted_to({c.cell}));
                   }
                   return s;
                 },
                 [&](const PopAgePiecewiseRates& m) {
                   double s = 0.0;
                   for (const auto& c : m.cells) {
                     const double k = death ? c.death_scale : c.birth_scale;
                     if (k != 0.0) s += k * int_product(path, m.window, w.restricted_to({c.cell}));
                   }
                   return s;
                 }},
      model);
}

/// Integral over [0, T] of (d_x f + d_t f - f h + f(0) b, A_s / K) ds: the drift of (f_t, A_t / K).
inline double drift_integral(const SegmentedPath& path, const RateModel& model, const TestFn& f) {
  const auto transport = f.d_age() + f.d_time();
  const double flow = transport.empty() ? 0.0 : int_pair(path, transport);
  return flow - int_rate_weighted(path, model, f, Rate::Death) +
         int_rate_weighted(path, model, f.at_age_zero(), Rate::Birth);
}

/// (f_T, A_T/K) - (f_0, A_0/K) - drift: the martingale part of the pairing, scaled by 1/K.
inline double martingale_residual(const EventLog& log, const SegmentedPath& path, const RateModel& model,
                                  const TestFn& f) {
  return endpoint_pair(log, f, log.T) - endpoint_pair(log, f, 0.0) - drift_integral(path, model, f);
}

}  // namespace agemeasure

#endif  // AGEMEASURE_PATHFN_HPP
