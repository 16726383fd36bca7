#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "h2dist/geometry.hpp"
#include "h2dist/h2matrix.hpp"
#include "h2dist/shared.hpp"
#include "h2dist/transport.hpp"

namespace h2dist::bench {

enum class Variant { dense, h2, distributed, shared };

const char* to_string(Variant variant);

// Invalid parameters or parameter combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  int level = 2;
  KernelKind kernel = KernelKind::laplace;
  double kappa = 0.0;
  int m = 4;
  double eta = 1.0;
  std::size_t leaf_limit = 16;
  int p = 1;
  Variant variant = Variant::h2;
  FanOut fanout = FanOut::point_to_point;
  bool verify_dense = false;
  bool verify_sequential = false;
  std::uint64_t seed = 1;
  int threads = 1;  // assembly workers per matrix (per node for the simulated variants)
  int repeats = 3;
  int quadrature_order = 4;
  std::optional<double> tolerance;  // overrides dense_tolerance(m)
  std::string out;

  KernelSpec kernel_spec() const;
  H2Options h2_options() const;
};

// Keys accepted by apply_setting, spelled like the command-line flags without
// the leading dashes.
const std::vector<std::string>& setting_keys();

// Parses `value` for `key` into the config.  Booleans accept true/false/1/0/on/off.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

// Flat JSON object whose keys are setting keys; values may be strings, numbers or booleans.
std::map<std::string, std::string> settings_from_json(const nlohmann::json& doc);
std::map<std::string, std::string> settings_from_file(const std::string& path);

// H2BENCH_<KEY> with dashes as underscores, e.g. H2BENCH_LEAF_LIMIT.
std::string env_name(const std::string& key);
std::map<std::string, std::string> settings_from_env(const std::function<const char*(const char*)>& getenv);

// Throws ConfigError on out-of-range values and unsupported combinations.
void validate(const RunConfig& config);

nlohmann::json to_json(const RunConfig& config);

// Dense-oracle bound for order m: about 3x or more above the error measured
// on the level-3 sphere with eta = 1 and leaf_limit 16.
double dense_tolerance(int m);
inline constexpr double kSequentialTolerance = 1e-12;

struct NodeReport {
  Rank rank = 0;
  std::size_t size = 0;
  StorageCensus storage;
  TrafficCensus setup_traffic;
  TrafficCensus mvm_traffic;  // one product
};

struct RunReport {
  RunConfig config;
  std::size_t n = 0;
  std::size_t dense_entries = 0;  // stored by the dense variant
  StorageCensus storage;          // summed over nodes
  std::vector<NodeReport> nodes;  // simulated variants only
  std::optional<double> dense_error;
  std::optional<double> sequential_error;
  double setup_seconds = 0.0;
  double mvm_seconds = 0.0;  // median over repeats
  Eigen::VectorXcd output;   // y = G x, global numbering

  std::size_t stored_scalars() const { return dense_entries + storage.total(); }
  double scalars_per_index() const { return static_cast<double>(stored_scalars()) / static_cast<double>(n); }
  // Every oracle that ran met its bound.
  bool passed() const;
  std::vector<std::string> failures() const;
  nlohmann::json to_json(bool with_timing = true) const;
};

RunReport run(const RunConfig& config);

enum class SweepAxis { level, m, p };

const char* to_string(SweepAxis axis);
SweepAxis parse_axis(const std::string& name);

struct SweepResult {
  SweepAxis axis = SweepAxis::m;
  std::vector<double> values;
  std::vector<RunReport> rows;
  std::vector<std::string> violations;  // failed row oracles and failed sweep properties

  bool passed() const { return violations.empty(); }
  std::string to_csv() const;
  nlohmann::json to_json(bool with_timing = true) const;
};

// One run per value.  The m axis turns on the dense oracle and requires
// strictly decreasing errors; the p axis requires all outputs to agree within
// kSequentialTolerance; the level axis requires stored scalars per index to
// grow by at most 1.6x per level.
SweepResult sweep(const RunConfig& base, SweepAxis axis, const std::vector<double>& values);

// Cluster trees of the configured variant: the sequential tree, or every
// node's local tree plus the composed global tree.
nlohmann::json dump_trees(const RunConfig& config);

}  // namespace h2dist::bench
