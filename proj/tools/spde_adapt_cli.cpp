#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "spde_adapt/spde_adapt.hpp"

using namespace spde_adapt;

namespace {

constexpr int kUsageError = 2;

struct Options {
  std::string config;
  std::string outdir;
  std::vector<std::string> overrides;
  std::string scheme = "asetd1";
  int trial = 0;
  double dt_max = 0.0;
};

ExperimentConfig load(const Options& opt) {
  std::string text;
  if (!opt.config.empty()) {
    std::ifstream in(opt.config);
    if (!in) throw ConfigError("cannot open config file " + opt.config);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  for (const auto& kv : opt.overrides) text += "\n" + kv;
  std::istringstream in(text);
  ExperimentConfig cfg = parse_config(in);
  if (!opt.outdir.empty()) cfg.outdir = opt.outdir;
  return cfg;
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

int finish_study(const ErrorReport& report, const ExperimentConfig& cfg, const std::string& name,
                 void (*writer)(const ErrorReport&, std::ostream&), const std::string& command) {
  const auto csv = write_file(cfg.outdir, name + ".csv", [&](std::ostream& os) { writer(report, os); });
  write_file(cfg.outdir, name + ".meta.txt", [&](std::ostream& os) { write_metadata(cfg, command, os); });
  std::cout << "wrote " << csv.string() << "\n";
  for (const auto& [scheme, fit] : report.slopes) {
    std::cout << to_string(scheme) << ": slope " << fit.slope << " +- " << fit.half_width << "\n";
  }
  if (report.reference_diverged > 0) std::cout << report.reference_diverged << " reference solves diverged\n";
  for (const auto& p : report.points) {
    if (p.used == 0) {
      std::cerr << "every trial diverged for " << to_string(p.scheme) << " at dt_max " << p.dt_max << "\n";
      return 1;
    }
  }
  return 0;
}

int run_trace(const Options& opt, const std::string& command) {
  const ExperimentConfig cfg = load(opt);
  const Scheme scheme = parse_scheme(opt.scheme);
  const double dt_max = opt.dt_max > 0.0 ? opt.dt_max : cfg.dt_max_list.front();
  ExperimentConfig checked = cfg;
  checked.dt_max_list = {dt_max};
  validate(checked);
  const auto diag = realization_trace(scheme, checked, opt.trial, dt_max);
  const std::string stem = "trace_" + std::string(to_string(scheme)) + "_" + std::to_string(opt.trial);
  const auto csv = write_file(checked.outdir, stem + ".csv", [&](std::ostream& os) { write_trace_csv(diag, os); });
  write_file(checked.outdir, stem + ".meta.txt", [&](std::ostream& os) { write_metadata(checked, command, os); });
  std::cout << "wrote " << csv.string() << ": " << diag.steps.size() << " steps, mean dt " << diag.mean_dt() << ", "
            << diag.backstop_count() << " backstop, " << diag.drift_excluded_count() << " drift-excluded\n";
  if (diag.diverged) {
    std::cerr << diag.divergence_reason << "\n";
    return 1;
  }
  return 0;
}

int run_selftest() {
  struct Item {
    const char* name;
    checks::Outcome outcome;
  };
  const Item items[] = {
      {"transforms", checks::transform_suite()},
      {"oracle equivalence", checks::oracle_equivalence(20)},
      {"linear exactness", checks::linear_exactness()},
      {"taming bound", checks::taming_bound(1000)},
  };
  bool ok = true;
  for (const auto& it : items) {
    std::cout << (it.outcome.pass ? "PASS " : "FAIL ") << it.name << ": " << it.outcome.detail << "\n";
    ok = ok && it.outcome.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive exponential integrators for SPDEs"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Options opt;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "key = value experiment config")->check(CLI::ExistingFile);
    sub->add_option("--outdir", opt.outdir, "output directory (overrides the config)");
    sub->add_option("--set", opt.overrides, "extra key=value setting, applied after the config file");
  };

  auto* converge = app.add_subcommand("converge", "strong-convergence table");
  add_common(converge);
  auto* efficiency = app.add_subcommand("efficiency", "error against CPU time");
  add_common(efficiency);
  auto* trace = app.add_subcommand("trace", "per-step diagnostics of one realization");
  add_common(trace);
  trace->add_option("--scheme", opt.scheme, "asetd1 | asetd0 | nsee | tem | tsetd0");
  trace->add_option("--trial", opt.trial, "trial index")->check(CLI::NonNegativeNumber);
  trace->add_option("--dt-max", opt.dt_max, "step size (defaults to the first dt_max of the config)");
  auto* selftest = app.add_subcommand("selftest", "oracle and property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  const std::string command = command_line(argc, argv);
  try {
    if (*selftest) return run_selftest();
    if (*trace) return run_trace(opt, command);
    const ExperimentConfig cfg = load(opt);
    if (*converge) return finish_study(run_study(cfg), cfg, "converge", write_converge_csv, command);
    return finish_study(efficiency_study(cfg), cfg, "efficiency", write_efficiency_csv, command);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kUsageError;
  } catch (const EmptyResultError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
