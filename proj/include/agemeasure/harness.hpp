#ifndef AGEMEASURE_HARNESS_HPP
#define AGEMEASURE_HARNESS_HPP

// Monte Carlo experiment orchestration: config files, seeded replicates,
// summary statistics and the CSV files consumed by the plotting scripts.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "agemeasure/confidence.hpp"
#include "agemeasure/errors.hpp"
#include "agemeasure/estimators.hpp"
#include "agemeasure/format.hpp"
#include "agemeasure/popcore.hpp"
#include "agemeasure/rng.hpp"
#include "agemeasure/simkernel.hpp"

namespace agemeasure {

// ---------------------------------------------------------------------------
// Initial ages
// ---------------------------------------------------------------------------

struct UniformAges {
  double lo = 0.0;
  double hi = 1.0;
};

struct ExplicitAges {
  std::vector<double> ages;
};

using InitialAgeLaw = std::variant<UniformAges, ExplicitAges>;

/// K independent Uniform(lo, hi) draws, or the explicit list verbatim.
inline std::vector<double> sample_initial_ages(const InitialAgeLaw& law, int K, std::uint64_t seed) {
  if (K < 1) throw ContractError("sample_initial_ages: K must be >= 1");
  return std::visit(overloaded{[&](const UniformAges& u) {
                                 Rng rng(seed);
                                 std::vector<double> ages(static_cast<std::size_t>(K));
                                 for (auto& a : ages) a = u.lo + (u.hi - u.lo) * rng.uniform();
                                 return ages;
                               },
                               [](const ExplicitAges& e) { return e.ages; }},
                    law);
}

/// "uniform 0 1" or "explicit 0.1, 0.7, ...".
inline InitialAgeLaw parse_initial_law(std::string_view text) {
  text = trim(text);
  if (text.rfind("uniform", 0) == 0) {
    std::istringstream is(std::string(text.substr(7)));
    std::string lo, hi;
    is >> lo >> hi;
    UniformAges u{parse_double(lo), parse_double(hi)};
    if (!(u.lo >= 0.0 && u.hi >= u.lo)) throw ConfigError("uniform initial law needs 0 <= lo <= hi");
    return u;
  }
  if (text.rfind("explicit", 0) == 0) {
    ExplicitAges e{parse_double_list(text.substr(8))};
    if (e.ages.empty()) throw ConfigError("explicit initial law needs at least one age");
    return e;
  }
  throw ConfigError("initial law must be 'uniform <lo> <hi>' or 'explicit <a1>, <a2>, ...'");
}

inline std::string to_string(const InitialAgeLaw& law) {
  return std::visit(overloaded{[](const UniformAges& u) { return "uniform " + format_short(u.lo) + " " + format_short(u.hi); },
                               [](const ExplicitAges& e) { return "explicit " + join_numbers(e.ages); }},
                    law);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string name = "experiment";
  RateModel model = ConstantRates{};
  InitialAgeLaw initial = UniformAges{};
  std::vector<int> Ks;
  double T = 1.0;
  int replicates = 1;
  std::uint64_t base_seed = 0;
  std::vector<double> alphas;  // empty: no confidence statements
  std::vector<CiMode> modes{CiMode::Direct};
  bool regions = false;
  int region_resolution = 200;
  int strip_samples = 20;
  std::string out_dir = "out";
};

inline void validate(const ExperimentConfig& c) {
  if (c.replicates < 1) throw ConfigError("replicates must be >= 1");
  if (c.Ks.empty()) throw ConfigError("K list is empty");
  for (int k : c.Ks)
    if (k < 1) throw ConfigError("K values must be positive");
  if (!(c.T > 0.0)) throw ConfigError("T must be > 0");
  if (c.replicates > (1 << 20)) throw ConfigError("replicates must not exceed 2^20");
  for (double a : c.alphas)
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha levels must lie in (0,1)");
  validate(c.model);
}

/// Reads the [model], [experiment] and optional [confidence] sections.
/// Seed precedence: `seed_override`, then experiment.seed, then $AGEMEASURE_SEED.
inline ExperimentConfig parse_config(std::istream& is, std::optional<std::uint64_t> seed_override = std::nullopt) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  try {
    const auto& model = tree.get_child("model");
    KeyValues kv;
    for (const auto& [k, v] : model) kv[k] = v.data();
    c.model = model_from_kv(kv);

    const auto& exp = tree.get_child("experiment");
    c.name = exp.get<std::string>("name", c.name);
    c.initial = parse_initial_law(exp.get<std::string>("initial", "uniform 0 1"));
    for (double k : parse_double_list(exp.get<std::string>("K"))) c.Ks.push_back(static_cast<int>(k));
    c.T = parse_double(exp.get<std::string>("T", "1"));
    c.replicates = parse_integer<int>(exp.get<std::string>("replicates", "1"));
    c.out_dir = exp.get<std::string>("out", "out/" + c.name);
    c.strip_samples = parse_integer<int>(exp.get<std::string>("strip_samples", "20"));

    std::optional<std::uint64_t> seed = seed_override;
    if (!seed) {
      if (auto s = exp.get_optional<std::string>("seed")) seed = parse_integer<std::uint64_t>(*s);
    }
    if (!seed) {
      if (const char* env = std::getenv("AGEMEASURE_SEED")) seed = parse_integer<std::uint64_t>(env);
    }
    if (!seed) throw ConfigError("no base seed: pass --seed, set experiment.seed or AGEMEASURE_SEED");
    c.base_seed = *seed;

    if (auto conf = tree.get_child_optional("confidence")) {
      c.alphas = parse_double_list(conf->get<std::string>("alpha", "0.05"));
      c.modes.clear();
      for (auto m : split(conf->get<std::string>("modes", "direct"), ',')) c.modes.push_back(parse_mode(m));
      c.regions = conf->get<std::string>("regions", "false") == "true";
      c.region_resolution = parse_integer<int>(conf->get<std::string>("resolution", "200"));
    }
  } catch (const pt::ptree_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& file,
                                    std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config " + file.string());
  return parse_config(is, seed_override);
}

/// Seed of replicate r at carrying capacity K. The mix is injective for
/// r < 2^20 and K < 2^44, and XOR with the base keeps it injective.
inline std::uint64_t replicate_seed(std::uint64_t base, int K, int r) {
  return base ^ splitmix64((static_cast<std::uint64_t>(K) << 20) | static_cast<std::uint64_t>(r));
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct ReplicateResult {
  int K = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failure;
  std::optional<double> extinction_time;
  bool has_negative = false;
  std::vector<double> estimates;
  std::vector<ConfidenceInterval> intervals;
  /// Per mode: whether the truth lies in the death- and birth-parameter regions.
  std::vector<std::array<bool, 2>> region_covers;
  /// Region grids, kept for replicate 0 only (death then birth, per mode).
  std::vector<ConfRegion2D> regions;
};

struct SummaryStats {
  std::string parameter;
  int K = 0;
  std::string subset = "all";
  std::size_t n = 0;
  std::size_t failed = 0;
  double mean = 0.0;
  std::optional<double> variance;  // divisor n-1; undefined for n = 1
  double mse = 0.0;                // divisor n
  double bias = 0.0;
  double truth = 0.0;
};

inline SummaryStats summarize(std::string parameter, int K, const std::vector<double>& values, double truth) {
  SummaryStats s;
  s.parameter = std::move(parameter);
  s.K = K;
  s.truth = truth;
  s.n = values.size();
  if (values.empty()) {
    s.mean = s.mse = s.bias = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / values.size();
  double ss = 0.0, se = 0.0;
  for (double v : values) {
    ss += (v - s.mean) * (v - s.mean);
    se += (v - truth) * (v - truth);
  }
  if (values.size() > 1) s.variance = ss / (values.size() - 1);
  s.mse = se / values.size();
  s.bias = s.mean - truth;
  return s;
}

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<std::string> names;
  std::vector<double> truths;
  std::vector<ReplicateResult> replicates;  // ordered by (K index, replicate)
  std::vector<SummaryStats> summary;

  const SummaryStats& stats(std::string_view parameter, int K, std::string_view subset = "all") const {
    for (const auto& s : summary)
      if (s.parameter == parameter && s.K == K && s.subset == subset) return s;
    throw ContractError("no summary for " + std::string(parameter) + " at K=" + std::to_string(K));
  }
};

/// One replicate: initial ages from the replicate seed, simulation seeded with splitmix64(seed).
inline EventLog simulate_replicate(const ExperimentConfig& c, int K, int r) {
  const auto seed = replicate_seed(c.base_seed, K, r);
  const auto ages = sample_initial_ages(c.initial, K, seed);
  return simulate(c.model, ages, K, c.T, splitmix64(seed));
}

namespace detail {

inline ReplicateResult run_replicate(const ExperimentConfig& c, const std::vector<double>& truths, int K, int r) {
  ReplicateResult out;
  out.K = K;
  out.replicate = r;
  out.seed = replicate_seed(c.base_seed, K, r);
  const auto log = simulate_replicate(c, K, r);
  out.extinction_time = extinction_time(log);
  try {
    const auto report = estimate(log, c.model);
    out.estimates = report.values;
    out.has_negative = report.has_negative;
    if (!c.alphas.empty()) {
      const double alpha = c.alphas.front();
      for (auto mode : c.modes) {
        std::visit(overloaded{[&](const ConstantRates&) {
                                auto [h, b] = ci_constant(log, alpha, mode);
                                out.intervals.push_back(h);
                                out.intervals.push_back(b);
                              },
                              [&](const PopulationLinearRates& m) {
                                auto [l, e] = ci_popdep(log, m.birth_window, m.death_window, alpha, mode);
                                out.intervals.push_back(l);
                                out.intervals.push_back(e);
                              },
                              [&](const auto& m) {
                                if (!c.regions || m.cells.size() != 2) return;
                                RegionOptions opt;
                                opt.resolution = c.region_resolution;
                                const auto cells = cell_intervals(m.cells);
                                std::pair<ConfRegion2D, ConfRegion2D> regions;
                                if constexpr (std::is_same_v<std::decay_t<decltype(m)>, AgePiecewiseRates>)
                                  regions = region_agedep(log, cells, alpha, mode, opt);
                                else
                                  regions = region_popage(log, m.window, cells, alpha, mode, opt);
                                out.region_covers.push_back(
                                    {regions.first.contains({truths[0], truths[1]}),
                                     regions.second.contains({truths[2], truths[3]})});
                                if (r == 0) {
                                  out.regions.push_back(std::move(regions.first));
                                  out.regions.push_back(std::move(regions.second));
                                }
                              }},
                   c.model);
      }
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.failure = e.what();
    std::replace(out.failure.begin(), out.failure.end(), ',', ';');
    std::replace(out.failure.begin(), out.failure.end(), '\n', ' ');
  }
  return out;
}

}  // namespace detail

/// Runs every (K, replicate) pair, in parallel up to `jobs` threads. Results are
/// stored in deterministic order. Failed replicates are kept as flagged rows and
/// excluded from the summary.
inline ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1) {
  validate(config);
  ExperimentResult result;
  result.config = config;
  result.names = parameter_names(config.model);
  result.truths = parameter_values(config.model);

  const auto R = static_cast<std::size_t>(config.replicates);
  const std::size_t total = config.Ks.size() * R;
  result.replicates.resize(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const int K = config.Ks[i / R];
      const int r = static_cast<int>(i % R);
      result.replicates[i] = detail::run_replicate(config, result.truths, K, r);
    }
  };
  jobs = std::max(1, jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  for (std::size_t ki = 0; ki < config.Ks.size(); ++ki) {
    const int K = config.Ks[ki];
    std::size_t failed = 0;
    bool any_extinct = false;
    for (std::size_t r = 0; r < R; ++r) {
      const auto& rep = result.replicates[ki * R + r];
      failed += rep.ok ? 0 : 1;
      any_extinct = any_extinct || (rep.ok && rep.extinction_time);
    }
    for (std::size_t p = 0; p < result.names.size(); ++p) {
      for (bool drop_extinct : {false, true}) {
        if (drop_extinct && !any_extinct) continue;
        std::vector<double> values;
        for (std::size_t r = 0; r < R; ++r) {
          const auto& rep = result.replicates[ki * R + r];
          if (rep.ok && !(drop_extinct && rep.extinction_time)) values.push_back(rep.estimates[p]);
        }
        auto s = summarize(result.names[p], K, values, result.truths[p]);
        s.failed = failed;
        s.subset = drop_extinct ? "non_extinct" : "all";
        result.summary.push_back(std::move(s));
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

enum class FigureKind { Boxplot, CiStrip };

inline void write_replicates_csv(std::ostream& os, const ExperimentResult& res) {
  os << "K,replicate,seed,status,extinct,extinction_time,negative";
  for (const auto& n : res.names) os << ',' << n;
  const bool with_ci = !res.replicates.empty() && std::any_of(res.replicates.begin(), res.replicates.end(),
                                                              [](const auto& r) { return !r.intervals.empty(); });
  if (with_ci)
    for (auto mode : res.config.modes)
      for (std::size_t p = 0; p < std::min<std::size_t>(2, res.names.size()); ++p)
        os << ',' << res.names[p] << '_' << to_string(mode) << "_lower," << res.names[p] << '_' << to_string(mode)
           << "_upper";
  const bool with_regions = std::any_of(res.replicates.begin(), res.replicates.end(),
                                        [](const auto& r) { return !r.region_covers.empty(); });
  if (with_regions)
    for (auto mode : res.config.modes)
      os << ",death_region_" << to_string(mode) << "_covers,birth_region_" << to_string(mode) << "_covers";
  os << '\n';
  for (const auto& r : res.replicates) {
    os << r.K << ',' << r.replicate << ',' << r.seed << ',' << (r.ok ? "ok" : "failed:" + r.failure) << ','
       << (r.extinction_time ? 1 : 0) << ',' << (r.extinction_time ? format_exact(*r.extinction_time) : "") << ','
       << (r.has_negative ? 1 : 0);
    for (std::size_t p = 0; p < res.names.size(); ++p)
      os << ',' << (r.ok ? format_exact(r.estimates[p]) : "");
    if (with_ci) {
      for (std::size_t i = 0; i < 2 * res.config.modes.size(); ++i) {
        if (r.ok && i < r.intervals.size() && !r.intervals[i].empty)
          os << ',' << format_exact(r.intervals[i].lower) << ',' << format_exact(r.intervals[i].upper);
        else
          os << ",,";
      }
    }
    if (with_regions) {
      for (std::size_t i = 0; i < res.config.modes.size(); ++i) {
        if (r.ok && i < r.region_covers.size())
          os << ',' << int(r.region_covers[i][0]) << ',' << int(r.region_covers[i][1]);
        else
          os << ",,";
      }
    }
    os << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const ExperimentResult& res) {
  os << "parameter,K,subset,n,failed,mean,variance,mse,bias,truth\n";
  for (const auto& s : res.summary)
    os << s.parameter << ',' << s.K << ',' << s.subset << ',' << s.n << ',' << s.failed << ','
       << format_exact(s.mean) << ',' << (s.variance ? format_exact(*s.variance) : "") << ','
       << format_exact(s.mse) << ',' << format_exact(s.bias) << ',' << format_exact(s.truth) << '\n';
}

/// boxplot: parameter,K,replicate,estimate (successful replicates only).
/// ci_strip: parameter,K,mode,sample,lower,upper,truth for the first strip_samples replicates per K.
inline void emit_figure_data(std::ostream& os, const ExperimentResult& res, FigureKind kind) {
  if (kind == FigureKind::Boxplot) {
    os << "parameter,K,replicate,estimate\n";
    for (std::size_t p = 0; p < res.names.size(); ++p)
      for (const auto& r : res.replicates)
        if (r.ok) os << res.names[p] << ',' << r.K << ',' << r.replicate << ',' << format_exact(r.estimates[p]) << '\n';
    return;
  }
  os << "parameter,K,mode,sample,lower,upper,truth\n";
  const auto& modes = res.config.modes;
  for (std::size_t mi = 0; mi < modes.size(); ++mi)
    for (std::size_t p = 0; p < std::min<std::size_t>(2, res.names.size()); ++p)
      for (const auto& r : res.replicates) {
        const auto idx = 2 * mi + p;
        if (!r.ok || idx >= r.intervals.size() || r.intervals[idx].empty) continue;
        if (r.replicate >= res.config.strip_samples) continue;
        const auto& ci = r.intervals[idx];
        os << res.names[p] << ',' << r.K << ',' << to_string(modes[mi]) << ',' << r.replicate << ','
           << format_exact(ci.lower) << ',' << format_exact(ci.upper) << ',' << format_exact(res.truths[p]) << '\n';
      }
}

/// Text table: one block per parameter, rows mean/variance/MSE/bias, columns K.
inline std::string format_table(const ExperimentResult& res) {
  std::ostringstream os;
  char buf[64];
  for (const auto& name : res.names) {
    os << name << " (truth " << format_short(res.truths[&name - res.names.data()]) << ")\n";
    os << std::left << std::setw(16) << "K";
    for (int K : res.config.Ks) os << std::right << std::setw(12) << K;
    os << '\n';
    auto row = [&](const char* label, auto field) {
      os << std::left << std::setw(16) << label;
      for (int K : res.config.Ks) {
        const auto& s = res.stats(name, K);
        const auto v = field(s);
        if (v) {
          std::snprintf(buf, sizeof buf, "%.5f", *v);
          os << std::right << std::setw(12) << buf;
        } else {
          os << std::right << std::setw(12) << "-";
        }
      }
      os << '\n';
    };
    row("Sample Mean", [](const SummaryStats& s) { return std::optional<double>(s.mean); });
    row("Sample Variance", [](const SummaryStats& s) { return s.variance; });
    row("MSE", [](const SummaryStats& s) { return std::optional<double>(s.mse); });
    row("Bias", [](const SummaryStats& s) { return std::optional<double>(s.bias); });
    os << std::left << std::setw(16) << "failed";
    for (int K : res.config.Ks) os << std::right << std::setw(12) << res.stats(name, K).failed;
    os << "\n\n";
  }
  return os.str();
}

/// Writes replicates.csv, summary.csv, boxplot.csv and (with intervals) ci_strip.csv under `dir`.
inline void write_outputs(const ExperimentResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* file) {
    std::ofstream os(dir / file, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + (dir / file).string());
    return os;
  };
  {
    auto os = open("replicates.csv");
    write_replicates_csv(os, res);
  }
  {
    auto os = open("summary.csv");
    write_summary_csv(os, res);
  }
  {
    auto os = open("boxplot.csv");
    emit_figure_data(os, res, FigureKind::Boxplot);
  }
  if (!res.config.alphas.empty() && (std::holds_alternative<ConstantRates>(res.config.model) ||
                                     std::holds_alternative<PopulationLinearRates>(res.config.model))) {
    auto os = open("ci_strip.csv");
    emit_figure_data(os, res, FigureKind::CiStrip);
  }
  for (const auto& r : res.replicates)
    for (const auto& region : r.regions) {
      const auto file = "region_K" + std::to_string(r.K) + "_" + region.names[0] + "_" + region.names[1] + "_" +
                        std::string(to_string(region.mode)) + ".csv";
      auto os = open(file.c_str());
      write_region_csv(os, region);
    }
}

}  // namespace agemeasure

#endif  // AGEMEASURE_HARNESS_HPP
