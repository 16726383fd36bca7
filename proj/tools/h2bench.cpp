// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 verification failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "h2dist/bench.hpp"

namespace {

using namespace h2dist;
using namespace h2dist::bench;

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;
constexpr int kVerificationFailure = 3;

// Flag values as given on the command line; only flags that were present are applied.
struct FlagSet {
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::map<std::string, CLI::Option*> options;
  std::string config_file;
  CLI::Option* config_option = nullptr;
};

void add_common(CLI::App& app, FlagSet& f) {
  f.config_option = app.add_option("--config", f.config_file, "JSON file with settings (keys as flag names)");
  const std::vector<std::pair<std::string, std::string>> valued = {
      {"level", "Sphere refinement level, n = 8 * 4^level"},
      {"kernel", "laplace or helmholtz"},
      {"kappa", "Helmholtz wavenumber"},
      {"m", "Interpolation order per axis"},
      {"eta", "Admissibility parameter"},
      {"leaf-limit", "Largest leaf cluster"},
      {"p", "Number of simulated nodes"},
      {"variant", "dense, h2, distributed or shared"},
      {"fanout", "point-to-point or collective (shared variant)"},
      {"seed", "Seed of the random input vector"},
      {"threads", "Assembly threads per matrix"},
      {"repeats", "Timed products (median reported, at least 3)"},
      {"quadrature-order", "Gauss order of the triangle rules"},
      {"tolerance", "Bound for the dense-oracle error"},
      {"out", "Output path"},
  };
  for (const auto& [key, help] : valued) f.options[key] = app.add_option("--" + key, f.values[key], help);
  for (const std::string key : {"verify-dense", "verify-sequential"}) {
    f.options[key] = app.add_flag("--" + key, f.switches[key],
                                  key == "verify-dense" ? "Compare with the dense product"
                                                        : "Compare with the sequential H2 product");
  }
}

// defaults < config file < H2BENCH_* environment < flags.  Layers are merged
// before parsing so an overridden value is never interpreted.
RunConfig resolve(const FlagSet& f) {
  std::map<std::string, std::string> merged;
  auto overlay = [&](const std::map<std::string, std::string>& layer) {
    for (const auto& [k, v] : layer) merged[k] = v;
  };
  std::string config_file = f.config_file;
  if (f.config_option->count() == 0) {
    if (const char* env = std::getenv("H2BENCH_CONFIG")) config_file = env;
  }
  if (!config_file.empty()) overlay(settings_from_file(config_file));
  overlay(settings_from_env([](const char* name) { return std::getenv(name); }));
  for (const auto& [key, opt] : f.options) {
    if (opt->count() == 0) continue;
    auto it = f.switches.find(key);
    merged[key] = it != f.switches.end() ? (it->second ? "true" : "false") : f.values.at(key);
  }
  RunConfig c;
  for (const auto& [k, v] : merged) apply_setting(c, k, v);
  return c;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text << '\n';
}

int report_failures(const std::vector<std::string>& failures) {
  for (const auto& f : failures) std::cerr << "verification failed: " << f << '\n';
  return failures.empty() ? 0 : kVerificationFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Assemble, verify and time H2 matrices for the single-layer operator on the unit sphere"};
  app.require_subcommand(1);

  FlagSet run_flags, sweep_flags, dump_flags;
  auto* run_cmd = app.add_subcommand("run", "Run one configuration and write a JSON report");
  add_common(*run_cmd, run_flags);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a configuration for several values of one parameter");
  add_common(*sweep_cmd, sweep_flags);
  std::string axis = "m";
  std::vector<double> values;
  sweep_cmd->add_option("--axis", axis, "level, m or p")->check(CLI::IsMember({"level", "m", "p"}));
  sweep_cmd->add_option("--values", values, "Comma-separated values")->delimiter(',')->required();

  auto* dump_cmd = app.add_subcommand("dump-trees", "Write the cluster trees of a configuration as JSON");
  add_common(*dump_cmd, dump_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (run_cmd->parsed()) {
      const auto config = resolve(run_flags);
      const auto report = run(config);
      emit(config.out, report.to_json().dump(2));
      return report_failures(report.failures());
    }
    if (sweep_cmd->parsed()) {
      const auto config = resolve(sweep_flags);
      validate(config);
      const auto result = sweep(config, parse_axis(axis), values);
      if (config.out.empty()) {
        std::cout << result.to_csv();
      } else {
        std::filesystem::path csv(config.out);
        csv.replace_extension(".csv");
        emit(config.out, result.to_json().dump(2));
        emit(csv.string(), result.to_csv());
      }
      return report_failures(result.violations);
    }
    const auto config = resolve(dump_flags);
    emit(config.out, dump_trees(config).dump(2));
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}
