#ifndef AGEMEASURE_POPCORE_HPP
#define AGEMEASURE_POPCORE_HPP

// Domain types: age intervals, age measures, the four rate families and the
// closed family of polynomial test functions x^p t^m 1_S(x).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "agemeasure/errors.hpp"
#include "agemeasure/format.hpp"

namespace agemeasure {

// ---------------------------------------------------------------------------
// Intervals
// ---------------------------------------------------------------------------

/// Age interval. Left-closed/right-open unless flagged otherwise.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool closed_right = false;
  bool closed_left = true;

  bool contains(double x) const noexcept {
    const bool above = closed_left ? x >= lo : x > lo;
    const bool below = closed_right ? x <= hi : x < hi;
    return above && below;
  }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Finite union of intervals; also used for ordered partitions (cells).
using IntervalSet = std::vector<Interval>;

inline void validate(const Interval& iv) {
  if (!(std::isfinite(iv.lo) && std::isfinite(iv.hi)) || iv.lo < 0.0 || !(iv.lo < iv.hi))
    throw ContractError("interval requires 0 <= lo < hi, got [" + format_short(iv.lo) + "," +
                        format_short(iv.hi) + "]");
}

inline bool contains(const IntervalSet& set, double x) noexcept {
  return std::any_of(set.begin(), set.end(), [x](const Interval& iv) { return iv.contains(x); });
}

/// Throws unless the intervals are valid, ordered and pairwise disjoint.
inline void validate_disjoint(const IntervalSet& set) {
  for (const auto& iv : set) validate(iv);
  for (std::size_t i = 1; i < set.size(); ++i) {
    const auto& a = set[i - 1];
    const auto& b = set[i];
    const bool touching_ok = a.hi == b.lo && !(a.closed_right && b.closed_left);
    if (!(a.hi < b.lo || touching_ok))
      throw ContractError("intervals must be ordered and pairwise disjoint");
  }
}

/// As validate_disjoint, for intervals given in any order.
inline void validate_disjoint_unordered(IntervalSet set) {
  std::sort(set.begin(), set.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  validate_disjoint(set);
}

inline std::optional<Interval> intersect(const Interval& a, const Interval& b) {
  Interval out;
  if (a.lo > b.lo) {
    out.lo = a.lo;
    out.closed_left = a.closed_left;
  } else if (b.lo > a.lo) {
    out.lo = b.lo;
    out.closed_left = b.closed_left;
  } else {
    out.lo = a.lo;
    out.closed_left = a.closed_left && b.closed_left;
  }
  if (a.hi < b.hi) {
    out.hi = a.hi;
    out.closed_right = a.closed_right;
  } else if (b.hi < a.hi) {
    out.hi = b.hi;
    out.closed_right = b.closed_right;
  } else {
    out.hi = a.hi;
    out.closed_right = a.closed_right && b.closed_right;
  }
  if (!(out.lo < out.hi)) return std::nullopt;
  return out;
}

inline IntervalSet intersect(const IntervalSet& a, const IntervalSet& b) {
  IntervalSet out;
  for (const auto& x : a)
    for (const auto& y : b)
      if (auto z = intersect(x, y)) out.push_back(*z);
  std::sort(out.begin(), out.end(), [](const Interval& l, const Interval& r) { return l.lo < r.lo; });
  return out;
}

inline std::string to_string(const Interval& iv) {
  return std::string(iv.closed_left ? "[" : "(") + format_short(iv.lo) + "," + format_short(iv.hi) +
         (iv.closed_right ? "]" : ")");
}

/// Joins intervals with `sep`; unions use " U ", cell lists use ", ".
inline std::string to_string(const IntervalSet& set, std::string_view sep = " U ") {
  std::string out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i) out += sep;
    out += to_string(set[i]);
  }
  return out;
}

/// Parses every bracketed interval token, e.g. "[0,0.5) U (1.5,2]" or "[0,1), [1,2]".
inline IntervalSet parse_intervals(std::string_view text) {
  static const std::regex token(R"(([\[\(])\s*([^,\s\[\]\(\)]+)\s*,\s*([^,\s\[\]\(\)]+)\s*([\]\)]))");
  IntervalSet out;
  const std::string s(text);
  std::string rest;
  auto it = std::sregex_iterator(s.begin(), s.end(), token);
  std::size_t last = 0;
  for (; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    rest += s.substr(last, static_cast<std::size_t>(m.position()) - last);
    last = static_cast<std::size_t>(m.position() + m.length());
    Interval iv;
    iv.closed_left = m[1] == "[";
    iv.lo = parse_double(m[2].str());
    iv.hi = parse_double(m[3].str());
    iv.closed_right = m[4] == "]";
    validate(iv);
    out.push_back(iv);
  }
  rest += s.substr(last);
  for (char c : rest)
    if (!(c == ' ' || c == ',' || c == 'U' || c == '\t'))
      throw ContractError("cannot parse interval list: '" + s + "'");
  if (out.empty()) throw ContractError("no interval in '" + s + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Age measure
// ---------------------------------------------------------------------------

/// Atomic measure: one unit mass per alive individual's age, plus carrying capacity K.
struct AgeMeasure {
  std::vector<double> ages;
  int carrying_capacity = 1;

  std::size_t count() const noexcept { return ages.size(); }
};

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

/// coef * x^age_power * t^time_power * 1_support(x); no support means all ages.
struct TestTerm {
  double coef = 1.0;
  int age_power = 0;
  int time_power = 0;
  std::optional<IntervalSet> support;
};

/// Finite sum of TestTerms. Closed under sums, scalar and pointwise products,
/// restriction to an interval set, and partial derivatives in age and time.
class TestFn {
 public:
  static constexpr int kMaxAgePower = 4;
  static constexpr int kMaxTimePower = 16;

  TestFn() = default;
  explicit TestFn(std::vector<TestTerm> terms) : terms_(std::move(terms)) {
    for (const auto& t : terms_) check(t);
  }

  static TestFn monomial(int age_power, int time_power, double coef = 1.0,
                         std::optional<IntervalSet> support = std::nullopt) {
    return TestFn({TestTerm{coef, age_power, time_power, std::move(support)}});
  }

  const std::vector<TestTerm>& terms() const noexcept { return terms_; }
  bool empty() const noexcept { return terms_.empty(); }

  double operator()(double x, double t) const {
    double v = 0.0;
    for (const auto& term : terms_) {
      if (term.support && !contains(*term.support, x)) continue;
      v += term.coef * std::pow(x, term.age_power) * std::pow(t, term.time_power);
    }
    return v;
  }

  /// Same function multiplied by 1_S(x).
  TestFn restricted_to(const IntervalSet& s) const {
    std::vector<TestTerm> out;
    for (auto term : terms_) {
      term.support = term.support ? intersect(*term.support, s) : s;
      if (!term.support->empty()) out.push_back(std::move(term));
    }
    return TestFn(std::move(out));
  }

  TestFn d_age() const {
    std::vector<TestTerm> out;
    for (auto term : terms_) {
      if (term.age_power == 0) continue;
      term.coef *= term.age_power;
      --term.age_power;
      out.push_back(std::move(term));
    }
    return TestFn(std::move(out));
  }

  TestFn d_time() const {
    std::vector<TestTerm> out;
    for (auto term : terms_) {
      if (term.time_power == 0) continue;
      term.coef *= term.time_power;
      --term.time_power;
      out.push_back(std::move(term));
    }
    return TestFn(std::move(out));
  }

  /// t -> f(0, t), returned as an age-independent member of the family.
  TestFn at_age_zero() const {
    std::vector<TestTerm> out;
    for (const auto& term : terms_) {
      if (term.age_power != 0) continue;
      if (term.support && !contains(*term.support, 0.0)) continue;
      out.push_back(TestTerm{term.coef, 0, term.time_power, std::nullopt});
    }
    return TestFn(std::move(out));
  }

  friend TestFn operator+(const TestFn& a, const TestFn& b) {
    auto terms = a.terms_;
    terms.insert(terms.end(), b.terms_.begin(), b.terms_.end());
    return TestFn(std::move(terms));
  }

  friend TestFn operator*(double s, const TestFn& f) {
    auto terms = f.terms_;
    for (auto& t : terms) t.coef *= s;
    return TestFn(std::move(terms));
  }

  friend TestFn operator-(const TestFn& a, const TestFn& b) { return a + (-1.0) * b; }

  /// Pointwise product; throws ContractError if powers leave the family.
  friend TestFn operator*(const TestFn& f, const TestFn& g) {
    std::vector<TestTerm> out;
    for (const auto& a : f.terms_) {
      for (const auto& b : g.terms_) {
        TestTerm t{a.coef * b.coef, a.age_power + b.age_power, a.time_power + b.time_power, {}};
        if (a.support && b.support)
          t.support = intersect(*a.support, *b.support);
        else if (a.support)
          t.support = a.support;
        else
          t.support = b.support;
        if (t.support && t.support->empty()) continue;
        out.push_back(std::move(t));
      }
    }
    return TestFn(std::move(out));
  }

 private:
  static void check(const TestTerm& t) {
    if (t.age_power < 0 || t.age_power > kMaxAgePower || t.time_power < 0 ||
        t.time_power > kMaxTimePower || !std::isfinite(t.coef))
      throw ContractError("test function term outside the supported family");
    if (t.support)
      for (const auto& iv : *t.support) validate(iv);
  }

  std::vector<TestTerm> terms_;
};

namespace tf {
inline TestFn one() { return TestFn::monomial(0, 0); }
inline TestFn age() { return TestFn::monomial(1, 0); }
/// x * t^m
inline TestFn age_times(int m) { return TestFn::monomial(1, m); }
/// t^m
inline TestFn time_pow(int m) { return TestFn::monomial(0, m); }
inline TestFn indicator(const IntervalSet& s) { return TestFn::monomial(0, 0, 1.0, s); }
}  // namespace tf

/// (f_t, A) = sum_i f(age_i, t), divided by K when normalized.
inline double pair(const TestFn& f, const AgeMeasure& a, double t, bool normalized) {
  double s = 0.0;
  for (double x : a.ages) s += f(x, t);
  return normalized ? s / a.carrying_capacity : s;
}

// ---------------------------------------------------------------------------
// Rate models
// ---------------------------------------------------------------------------

struct ConstantRates {
  double death = 0.0;
  double birth = 0.0;
};

/// h_A = lambda (1_{J2}, A/K), b_A = eta (1_{J1}, A/K), constant in age.
struct PopulationLinearRates {
  double death_scale = 0.0;  // lambda
  IntervalSet death_window;  // J2
  double birth_scale = 0.0;  // eta
  IntervalSet birth_window;  // J1
};

struct AgeCell {
  Interval cell;
  double death = 0.0;
  double birth = 0.0;
};

struct AgePiecewiseRates {
  std::vector<AgeCell> cells;
};

/// h_A(x) = sum_i alpha_i (1_J, A/K) 1_{B_i}(x); b likewise with gamma_i.
struct PopAgeCell {
  Interval cell;
  double death_scale = 0.0;  // alpha_i
  double birth_scale = 0.0;  // gamma_i
};

struct PopAgePiecewiseRates {
  IntervalSet window;  // J
  std::vector<PopAgeCell> cells;
};

using RateModel =
    std::variant<ConstantRates, PopulationLinearRates, AgePiecewiseRates, PopAgePiecewiseRates>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline std::string family_name(const RateModel& model) {
  return std::visit(overloaded{[](const ConstantRates&) { return "constant"; },
                               [](const PopulationLinearRates&) { return "popdep"; },
                               [](const AgePiecewiseRates&) { return "agedep"; },
                               [](const PopAgePiecewiseRates&) { return "popage"; }},
                    model);
}

template <typename Cell>
IntervalSet cell_intervals(const std::vector<Cell>& cells) {
  IntervalSet out;
  for (const auto& c : cells) out.push_back(c.cell);
  return out;
}

inline void validate(const RateModel& model) {
  auto nonneg = [](double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ContractError(std::string("rate coefficient ") + what + " must be finite and >= 0");
  };
  std::visit(overloaded{[&](const ConstantRates& m) {
                          nonneg(m.death, "h");
                          nonneg(m.birth, "b");
                        },
                        [&](const PopulationLinearRates& m) {
                          nonneg(m.death_scale, "lambda");
                          nonneg(m.birth_scale, "eta");
                          validate_disjoint(m.death_window);
                          validate_disjoint(m.birth_window);
                        },
                        [&](const AgePiecewiseRates& m) {
                          if (m.cells.empty()) throw ContractError("agedep model needs cells");
                          for (const auto& c : m.cells) {
                            nonneg(c.death, "h_i");
                            nonneg(c.birth, "b_i");
                          }
                          validate_disjoint(cell_intervals(m.cells));
                        },
                        [&](const PopAgePiecewiseRates& m) {
                          if (m.cells.empty()) throw ContractError("popage model needs cells");
                          for (const auto& c : m.cells) {
                            nonneg(c.death_scale, "alpha_i");
                            nonneg(c.birth_scale, "gamma_i");
                          }
                          validate_disjoint(m.window);
                          validate_disjoint(cell_intervals(m.cells));
                        }},
             model);
}

/// Every interval the model's hazards depend on (cells and population windows).
inline IntervalSet model_intervals(const RateModel& model) {
  return std::visit(overloaded{[](const ConstantRates&) { return IntervalSet{}; },
                               [](const PopulationLinearRates& m) {
                                 auto s = m.death_window;
                                 s.insert(s.end(), m.birth_window.begin(), m.birth_window.end());
                                 return s;
                               },
                               [](const AgePiecewiseRates& m) { return cell_intervals(m.cells); },
                               [](const PopAgePiecewiseRates& m) {
                                 auto s = m.window;
                                 auto c = cell_intervals(m.cells);
                                 s.insert(s.end(), c.begin(), c.end());
                                 return s;
                               }},
                    model);
}

/// Sorted distinct positive endpoints of the given intervals.
inline std::vector<double> interval_endpoints(const IntervalSet& set) {
  std::vector<double> e;
  for (const auto& iv : set) {
    if (iv.lo > 0.0) e.push_back(iv.lo);
    e.push_back(iv.hi);
  }
  std::sort(e.begin(), e.end());
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return e;
}

inline std::vector<double> model_endpoints(const RateModel& model) {
  return interval_endpoints(model_intervals(model));
}

struct Hazards {
  double death = 0.0;
  double birth = 0.0;
  friend bool operator==(const Hazards&, const Hazards&) = default;
};

/// Per-capita hazards at age x; `window_mass(J)` must return (1_J, A/K).
template <typename WindowMass>
Hazards hazards_at(const RateModel& model, double x, WindowMass&& window_mass) {
  return std::visit(
      overloaded{[](const ConstantRates& m) { return Hazards{m.death, m.birth}; },
                 [&](const PopulationLinearRates& m) {
                   return Hazards{m.death_scale * window_mass(m.death_window),
                                  m.birth_scale * window_mass(m.birth_window)};
                 },
                 [&](const AgePiecewiseRates& m) {
                   for (const auto& c : m.cells)
                     if (c.cell.contains(x)) return Hazards{c.death, c.birth};
                   return Hazards{};
                 },
                 [&](const PopAgePiecewiseRates& m) {
                   for (const auto& c : m.cells) {
                     if (!c.cell.contains(x)) continue;
                     const double w = window_mass(m.window);
                     return Hazards{c.death_scale * w, c.birth_scale * w};
                   }
                   return Hazards{};
                 }},
      model);
}

/// (h_{A/K}(x), b_{A/K}(x)). Ages outside every cell get zero hazards.
inline Hazards hazards(const RateModel& model, const AgeMeasure& a, double x) {
  return hazards_at(model, x, [&](const IntervalSet& window) {
    return pair(tf::indicator(window), a, 0.0, true);
  });
}

/// Parameter names in estimator order: (h,b), (lambda,eta), (h1..hn,b1..bn), (alpha1..,gamma1..).
inline std::vector<std::string> parameter_names(const RateModel& model) {
  auto indexed = [](const char* stem, std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 1; i <= n; ++i) v.push_back(stem + std::to_string(i));
    return v;
  };
  return std::visit(overloaded{[](const ConstantRates&) { return std::vector<std::string>{"h", "b"}; },
                               [](const PopulationLinearRates&) {
                                 return std::vector<std::string>{"lambda", "eta"};
                               },
                               [&](const AgePiecewiseRates& m) {
                                 auto v = indexed("h", m.cells.size());
                                 auto w = indexed("b", m.cells.size());
                                 v.insert(v.end(), w.begin(), w.end());
                                 return v;
                               },
                               [&](const PopAgePiecewiseRates& m) {
                                 auto v = indexed("alpha", m.cells.size());
                                 auto w = indexed("gamma", m.cells.size());
                                 v.insert(v.end(), w.begin(), w.end());
                                 return v;
                               }},
                    model);
}

inline std::vector<double> parameter_values(const RateModel& model) {
  return std::visit(overloaded{[](const ConstantRates& m) { return std::vector<double>{m.death, m.birth}; },
                               [](const PopulationLinearRates& m) {
                                 return std::vector<double>{m.death_scale, m.birth_scale};
                               },
                               [](const AgePiecewiseRates& m) {
                                 std::vector<double> v;
                                 for (const auto& c : m.cells) v.push_back(c.death);
                                 for (const auto& c : m.cells) v.push_back(c.birth);
                                 return v;
                               },
                               [](const PopAgePiecewiseRates& m) {
                                 std::vector<double> v;
                                 for (const auto& c : m.cells) v.push_back(c.death_scale);
                                 for (const auto& c : m.cells) v.push_back(c.birth_scale);
                                 return v;
                               }},
                    model);
}

// ---------------------------------------------------------------------------
// Text form shared by config files ([model] section) and event-log headers
// ---------------------------------------------------------------------------

using KeyValues = std::map<std::string, std::string>;

inline std::string join_numbers(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_short(v[i]);
  }
  return out;
}

inline KeyValues model_to_kv(const RateModel& model) {
  KeyValues kv;
  kv["family"] = family_name(model);
  std::visit(overloaded{[&](const ConstantRates& m) {
                          kv["h"] = format_short(m.death);
                          kv["b"] = format_short(m.birth);
                        },
                        [&](const PopulationLinearRates& m) {
                          kv["lambda"] = format_short(m.death_scale);
                          kv["J2"] = to_string(m.death_window);
                          kv["eta"] = format_short(m.birth_scale);
                          kv["J1"] = to_string(m.birth_window);
                        },
                        [&](const AgePiecewiseRates& m) {
                          std::vector<double> h, b;
                          for (const auto& c : m.cells) {
                            h.push_back(c.death);
                            b.push_back(c.birth);
                          }
                          kv["cells"] = to_string(cell_intervals(m.cells), ", ");
                          kv["h"] = join_numbers(h);
                          kv["b"] = join_numbers(b);
                        },
                        [&](const PopAgePiecewiseRates& m) {
                          std::vector<double> a, g;
                          for (const auto& c : m.cells) {
                            a.push_back(c.death_scale);
                            g.push_back(c.birth_scale);
                          }
                          kv["J"] = to_string(m.window);
                          kv["cells"] = to_string(cell_intervals(m.cells), ", ");
                          kv["alpha"] = join_numbers(a);
                          kv["gamma"] = join_numbers(g);
                        }},
             model);
  return kv;
}

inline RateModel model_from_kv(const KeyValues& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("model is missing key '" + key + "'");
    return it->second;
  };
  const auto family = std::string(trim(get("family")));
  RateModel model;
  try {
    if (family == "constant") {
      model = ConstantRates{parse_double(get("h")), parse_double(get("b"))};
    } else if (family == "popdep") {
      model = PopulationLinearRates{parse_double(get("lambda")), parse_intervals(get("J2")),
                                    parse_double(get("eta")), parse_intervals(get("J1"))};
    } else if (family == "agedep" || family == "popage") {
      const auto cells = parse_intervals(get("cells"));
      const bool age_only = family == "agedep";
      const auto d = parse_double_list(get(age_only ? "h" : "alpha"));
      const auto b = parse_double_list(get(age_only ? "b" : "gamma"));
      if (d.size() != cells.size() || b.size() != cells.size())
        throw ConfigError("model coefficient lists must match the number of cells");
      if (age_only) {
        AgePiecewiseRates m;
        for (std::size_t i = 0; i < cells.size(); ++i) m.cells.push_back({cells[i], d[i], b[i]});
        model = m;
      } else {
        PopAgePiecewiseRates m;
        m.window = parse_intervals(get("J"));
        for (std::size_t i = 0; i < cells.size(); ++i) m.cells.push_back({cells[i], d[i], b[i]});
        model = m;
      }
    } else {
      throw ConfigError("unknown model family '" + family + "'");
    }
  } catch (const ContractError& e) {
    throw ConfigError(std::string("bad model: ") + e.what());
  }
  try {
    validate(model);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid model: ") + e.what());
  }
  return model;
}

/// Single-line form "family=...;key=value;..." used in event-log headers.
inline std::string model_descriptor(const RateModel& model) {
  const auto kv = model_to_kv(model);
  std::string out = "family=" + kv.at("family");
  for (const auto& [k, v] : kv)
    if (k != "family") out += ";" + k + "=" + v;
  return out;
}

inline RateModel parse_model_descriptor(std::string_view text) {
  KeyValues kv;
  for (auto item : split(text, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ConfigError("bad model descriptor item '" + std::string(item) + "'");
    kv[std::string(trim(item.substr(0, eq)))] = std::string(trim(item.substr(eq + 1)));
  }
  return model_from_kv(kv);
}

}  // namespace agemeasure

#endif  // AGEMEASURE_POPCORE_HPP
