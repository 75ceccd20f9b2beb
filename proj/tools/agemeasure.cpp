// Command-line front end: simulate, estimate, ci, region, experiment, tables.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "agemeasure/agemeasure.hpp"

namespace fs = std::filesystem;
using namespace agemeasure;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
  std::string mode = "direct";
  std::string model;
  double alpha = 0.05;
  std::vector<std::string> logs;
  int resolution = 200;
};

ExperimentConfig need_config(const Common& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  auto c = load_config(o.config, o.seed);
  if (!o.out.empty()) c.out_dir = o.out;
  return c;
}

EventLog load_log(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw LogFormatError("cannot open " + file);
  return read_event_log(is);
}

// Model shape for a log: --model, then --config, then the log's MODEL header.
RateModel model_for(const Common& o, const EventLog& log) {
  if (!o.model.empty()) return parse_model_descriptor(o.model);
  if (!o.config.empty()) return load_config(o.config, o.seed.value_or(0)).model;
  if (log.model) return *log.model;
  throw ConfigError("no model: pass --model, --config or use a log with a MODEL header");
}

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + file.string());
  return os;
}

int run_simulate(const Common& o) {
  const auto c = need_config(o);
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  for (int K : c.Ks)
    for (int r = 0; r < c.replicates; ++r) {
      const auto log = simulate_replicate(c, K, r);
      auto os = open_out(dir / ("log_K" + std::to_string(K) + "_r" + std::to_string(r) + ".txt"));
      write_event_log(os, log);
    }
  std::cout << "wrote " << c.Ks.size() * static_cast<std::size_t>(c.replicates) << " logs to " << dir.string() << '\n';
  return 0;
}

int run_estimate(const Common& o) {
  bool header = true;
  for (const auto& file : o.logs) {
    const auto log = load_log(file);
    const auto report = estimate(log, model_for(o, log));
    if (header) {
      std::cout << "log,family";
      for (const auto& n : report.names) std::cout << ',' << n;
      std::cout << ",condition,negative\n";
      header = false;
    }
    std::cout << file << ',' << report.family;
    for (double v : report.values) std::cout << ',' << format_exact(v);
    double cond = 0.0;
    for (const auto& s : report.systems) cond = std::max(cond, s.condition);
    std::cout << ',' << format_exact(cond) << ',' << (report.has_negative ? 1 : 0) << '\n';
    for (const auto& w : report.warnings) std::cerr << file << ": warning: " << w << '\n';
  }
  return 0;
}

int run_ci(const Common& o) {
  const auto mode = parse_mode(o.mode);
  std::cout << "log,parameter,mode,level,estimate,lower,upper,empty\n";
  for (const auto& file : o.logs) {
    const auto log = load_log(file);
    const auto model = model_for(o, log);
    std::pair<ConfidenceInterval, ConfidenceInterval> cis;
    if (std::holds_alternative<ConstantRates>(model)) {
      cis = ci_constant(log, o.alpha, mode);
    } else if (const auto* m = std::get_if<PopulationLinearRates>(&model)) {
      cis = ci_popdep(log, m->birth_window, m->death_window, o.alpha, mode);
    } else {
      throw ConfigError("ci is defined for the constant and popdep families; use region for the others");
    }
    for (const auto* ci : {&cis.first, &cis.second})
      std::cout << file << ',' << ci->parameter << ',' << to_string(ci->mode) << ',' << format_exact(ci->level) << ','
                << format_exact(ci->estimate) << ',' << (ci->empty ? "" : format_exact(ci->lower)) << ','
                << (ci->empty ? "" : format_exact(ci->upper)) << ',' << (ci->empty ? 1 : 0) << '\n';
  }
  return 0;
}

int run_region(const Common& o) {
  const auto mode = parse_mode(o.mode);
  const fs::path dir = o.out.empty() ? fs::path("regions") : fs::path(o.out);
  RegionOptions opt;
  opt.resolution = o.resolution;
  for (const auto& file : o.logs) {
    const auto log = load_log(file);
    const auto model = model_for(o, log);
    std::pair<ConfRegion2D, ConfRegion2D> regions;
    if (const auto* a = std::get_if<AgePiecewiseRates>(&model)) {
      regions = region_agedep(log, cell_intervals(a->cells), o.alpha, mode, opt);
    } else if (const auto* p = std::get_if<PopAgePiecewiseRates>(&model)) {
      regions = region_popage(log, p->window, cell_intervals(p->cells), o.alpha, mode, opt);
    } else {
      throw ConfigError("region is defined for the agedep and popage families");
    }
    const auto stem = fs::path(file).stem().string();
    for (const auto* r : {&regions.first, &regions.second}) {
      const auto name = stem + "_" + r->names[0] + "_" + r->names[1] + "_" + std::string(to_string(mode)) + ".csv";
      auto os = open_out(dir / name);
      write_region_csv(os, *r);
      std::cout << (dir / name).string() << ": " << r->feasible_cells() << " feasible cells\n";
    }
  }
  return 0;
}

int run_experiment_cmd(const Common& o, bool print_table) {
  const auto c = need_config(o);
  const auto res = run_experiment(c, o.jobs);
  write_outputs(res, c.out_dir);
  if (print_table) {
    std::cout << c.name << " (" << family_name(c.model) << ", R=" << c.replicates << ", T=" << format_short(c.T)
              << ", seed=" << c.base_seed << ")\n\n"
              << format_table(res);
  } else {
    std::cout << "wrote " << c.out_dir << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and inference for age-structured birth-death processes"};
  app.require_subcommand(1);
  Common o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (INI)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Base seed (default: config, then $AGEMEASURE_SEED)");
  };
  auto add_logs = [&](CLI::App* sub) {
    sub->add_option("logs", o.logs, "Event-log files")->required()->check(CLI::ExistingFile);
    sub->add_option("--model", o.model, "Model descriptor, e.g. 'family=constant;h=0.2;b=0.4'");
  };

  auto* sim = app.add_subcommand("simulate", "Simulate replicate paths and write event logs");
  add_config(sim);
  sim->add_option("--out", o.out, "Output directory");

  auto* est = app.add_subcommand("estimate", "Estimate rate parameters from event logs");
  add_logs(est);
  add_config(est);

  auto* ci = app.add_subcommand("ci", "Confidence intervals (constant and popdep families)");
  add_logs(ci);
  add_config(ci);
  ci->add_option("--alpha", o.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  ci->add_option("--mode", o.mode, "direct|plugin")->check(CLI::IsMember({"direct", "plugin"}));

  auto* reg = app.add_subcommand("region", "Confidence regions (agedep and popage families, two cells)");
  add_logs(reg);
  add_config(reg);
  reg->add_option("--alpha", o.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  reg->add_option("--mode", o.mode, "direct|plugin")->check(CLI::IsMember({"direct", "plugin"}));
  reg->add_option("--resolution", o.resolution, "Grid cells per axis");
  reg->add_option("--out", o.out, "Output directory");

  auto* exp = app.add_subcommand("experiment", "Run a Monte Carlo experiment and write CSV outputs");
  auto* tab = app.add_subcommand("tables", "Run an experiment and print the summary tables");
  for (auto* sub : {exp, tab}) {
    add_config(sub);
    sub->get_option("--config")->required();
    sub->add_option("--jobs", o.jobs, "Parallel replicate workers")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "Output directory");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return run_simulate(o);
    if (*est) return run_estimate(o);
    if (*ci) return run_ci(o);
    if (*reg) return run_region(o);
    if (*exp) return run_experiment_cmd(o, false);
    if (*tab) return run_experiment_cmd(o, true);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
