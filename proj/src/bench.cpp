#include "h2dist/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "h2dist/clustering.hpp"
#include "h2dist/distributed.hpp"

namespace h2dist::bench {

const char* to_string(Variant variant) {
  switch (variant) {
    case Variant::dense: return "dense";
    case Variant::h2: return "h2";
    case Variant::distributed: return "distributed";
    case Variant::shared: return "shared";
  }
  return "unknown";
}

KernelSpec RunConfig::kernel_spec() const {
  return kernel == KernelKind::laplace ? KernelSpec::laplace() : KernelSpec::helmholtz(kappa);
}

H2Options RunConfig::h2_options() const {
  H2Options o;
  o.m = m;
  o.eta = eta;
  o.quadrature_order = quadrature_order;
  o.threads = threads;
  return o;
}

namespace {

const std::vector<std::string> kKeys = {"level",   "kernel",        "kappa",         "m",          "eta",
                                        "leaf-limit", "p",          "variant",       "fanout",     "verify-dense",
                                        "verify-sequential", "seed", "threads",      "repeats",    "quadrature-order",
                                        "tolerance", "out"};

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + v + "'");
  return out;
}

long long parse_integer(const std::string& key, const std::string& v) {
  const auto d = parse_number<double>(key, v);
  if (d != std::floor(d) || std::abs(d) > 9.0e15) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<long long>(d);
}

}  // namespace

const std::vector<std::string>& setting_keys() { return kKeys; }

void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "level") {
    c.level = static_cast<int>(parse_integer(key, v));
  } else if (key == "kernel") {
    if (v == "laplace") {
      c.kernel = KernelKind::laplace;
    } else if (v == "helmholtz") {
      c.kernel = KernelKind::helmholtz;
    } else {
      throw ConfigError("kernel: expected laplace or helmholtz, got '" + v + "'");
    }
  } else if (key == "kappa") {
    c.kappa = parse_number<double>(key, v);
  } else if (key == "m") {
    c.m = static_cast<int>(parse_integer(key, v));
  } else if (key == "eta") {
    c.eta = parse_number<double>(key, v);
  } else if (key == "leaf-limit") {
    const auto l = parse_integer(key, v);
    if (l < 1) throw ConfigError("leaf-limit must be positive");
    c.leaf_limit = static_cast<std::size_t>(l);
  } else if (key == "p") {
    c.p = static_cast<int>(parse_integer(key, v));
  } else if (key == "variant") {
    if (v == "dense") {
      c.variant = Variant::dense;
    } else if (v == "h2") {
      c.variant = Variant::h2;
    } else if (v == "distributed") {
      c.variant = Variant::distributed;
    } else if (v == "shared") {
      c.variant = Variant::shared;
    } else {
      throw ConfigError("variant: expected dense, h2, distributed or shared, got '" + v + "'");
    }
  } else if (key == "fanout") {
    if (v == "point_to_point" || v == "point-to-point") {
      c.fanout = FanOut::point_to_point;
    } else if (v == "collective") {
      c.fanout = FanOut::collective;
    } else {
      throw ConfigError("fanout: expected point-to-point or collective, got '" + v + "'");
    }
  } else if (key == "verify-dense") {
    c.verify_dense = parse_bool(key, v);
  } else if (key == "verify-sequential") {
    c.verify_sequential = parse_bool(key, v);
  } else if (key == "seed") {
    const auto s = parse_integer(key, v);
    if (s < 0) throw ConfigError("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (key == "threads") {
    c.threads = static_cast<int>(parse_integer(key, v));
  } else if (key == "repeats") {
    c.repeats = static_cast<int>(parse_integer(key, v));
  } else if (key == "quadrature-order") {
    c.quadrature_order = static_cast<int>(parse_integer(key, v));
  } else if (key == "tolerance") {
    c.tolerance = parse_number<double>(key, v);
  } else if (key == "out") {
    c.out = v;
  } else {
    throw ConfigError("unknown setting '" + key + "'");
  }
}

std::map<std::string, std::string> settings_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : doc.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError("config: unknown setting '" + key + "'");
    }
    if (value.is_string()) {
      out[key] = value.get<std::string>();
    } else if (value.is_boolean() || value.is_number()) {
      out[key] = value.dump();
    } else {
      throw ConfigError("config: setting '" + key + "' must be a string, number or boolean");
    }
  }
  return out;
}

std::map<std::string, std::string> settings_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return settings_from_json(doc);
}

std::string env_name(const std::string& key) {
  std::string name = "H2BENCH_";
  for (char ch : key) name += ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return name;
}

std::map<std::string, std::string> settings_from_env(const std::function<const char*(const char*)>& getenv) {
  std::map<std::string, std::string> out;
  for (const auto& key : kKeys) {
    if (const char* v = getenv(env_name(key).c_str())) out[key] = v;
  }
  return out;
}

void validate(const RunConfig& c) {
  if (c.level < 0 || c.level > kMaxSphereLevel) {
    throw ConfigError("level must lie in [0, " + std::to_string(kMaxSphereLevel) + "]");
  }
  if (c.m < 1) throw ConfigError("m must be positive");
  if (!(c.eta > 0.0)) throw ConfigError("eta must be positive");
  if (c.leaf_limit < 1) throw ConfigError("leaf-limit must be positive");
  if (c.threads < 1) throw ConfigError("threads must be positive");
  if (c.repeats < 3) throw ConfigError("repeats must be at least 3");
  if (c.quadrature_order < 1) throw ConfigError("quadrature-order must be positive");
  if (c.tolerance && !(*c.tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (c.kernel == KernelKind::laplace && c.kappa != 0.0) throw ConfigError("kappa applies to the helmholtz kernel");
  if (c.kappa < 0.0 || !std::isfinite(c.kappa)) throw ConfigError("kappa must be finite and non-negative");
  if (c.p < 1) throw ConfigError("p must be positive");
  const std::size_t n = std::size_t{8} << (2 * c.level);
  const bool simulated = c.variant == Variant::distributed || c.variant == Variant::shared;
  if (!simulated && c.p != 1) throw ConfigError("p applies to the distributed and shared variants");
  if (static_cast<std::size_t>(c.p) > n) throw ConfigError("p exceeds the number of basis functions");
  if (c.verify_sequential && !simulated) {
    throw ConfigError("verify-sequential applies to the distributed and shared variants");
  }
  if ((c.variant == Variant::dense || c.verify_dense) && n > DenseOptions{}.max_size) {
    throw ConfigError("dense assembly is limited to n <= " + std::to_string(DenseOptions{}.max_size) + " (level 5)");
  }
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["level"] = c.level;
  j["kernel"] = c.kernel == KernelKind::laplace ? "laplace" : "helmholtz";
  j["kappa"] = c.kappa;
  j["m"] = c.m;
  j["eta"] = c.eta;
  j["leaf-limit"] = c.leaf_limit;
  j["p"] = c.p;
  j["variant"] = to_string(c.variant);
  j["fanout"] = to_string(c.fanout);
  j["verify-dense"] = c.verify_dense;
  j["verify-sequential"] = c.verify_sequential;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["repeats"] = c.repeats;
  j["quadrature-order"] = c.quadrature_order;
  j["tolerance"] = c.tolerance ? nlohmann::json(*c.tolerance) : nlohmann::json(nullptr);
  return j;
}

double dense_tolerance(int m) {
  // Measured: m=2 6.0e-3, m=3 6.7e-4, m=4 9.9e-5, m=5 1.1e-5.
  switch (m) {
    case 1: return 2e-1;
    case 2: return 2e-2;
    case 3: return 3e-3;
    case 4: return 1e-3;
    default: return 1e-4;
  }
}

bool RunReport::passed() const { return failures().empty(); }

std::vector<std::string> RunReport::failures() const {
  std::vector<std::string> out;
  const double tol = config.tolerance.value_or(dense_tolerance(config.m));
  if (dense_error && !(*dense_error <= tol)) {
    std::ostringstream s;
    s << "dense error " << *dense_error << " exceeds " << tol;
    out.push_back(s.str());
  }
  if (sequential_error && !(*sequential_error <= kSequentialTolerance)) {
    std::ostringstream s;
    s << "sequential error " << *sequential_error << " exceeds " << kSequentialTolerance;
    out.push_back(s.str());
  }
  return out;
}

namespace {

nlohmann::json storage_json(const StorageCensus& s) {
  return {{"leaf_basis", s.leaf_basis},
          {"transfer", s.transfer},
          {"coupling", s.coupling},
          {"nearfield", s.nearfield},
          {"admissible_blocks", s.admissible_leaves},
          {"inadmissible_blocks", s.inadmissible_leaves},
          {"total", s.total()}};
}

}  // namespace

nlohmann::json RunReport::to_json(bool with_timing) const {
  nlohmann::json j;
  j["config"] = bench::to_json(config);
  j["n"] = n;
  auto storage_j = storage_json(storage);
  storage_j["dense"] = dense_entries;
  storage_j["stored_scalars"] = stored_scalars();
  storage_j["scalars_per_index"] = scalars_per_index();
  storage_j["fraction_of_dense"] = static_cast<double>(stored_scalars()) / (static_cast<double>(n) * n);
  j["storage"] = storage_j;
  nlohmann::json errors = nlohmann::json::object();
  if (dense_error) {
    errors["dense"] = *dense_error;
    errors["dense_tolerance"] = config.tolerance.value_or(dense_tolerance(config.m));
  }
  if (sequential_error) {
    errors["sequential"] = *sequential_error;
    errors["sequential_tolerance"] = kSequentialTolerance;
  }
  j["errors"] = errors;
  j["passed"] = passed();
  j["output"] = {{"norm", output.norm()}, {"sum_real", output.real().sum()}, {"sum_imag", output.imag().sum()}};
  if (!nodes.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& node : nodes) {
      arr.push_back({{"rank", node.rank},
                     {"size", node.size},
                     {"storage", storage_json(node.storage)},
                     {"setup_traffic", node.setup_traffic.to_json()},
                     {"setup_messages", node.setup_traffic.total().messages},
                     {"setup_bytes", node.setup_traffic.total().bytes},
                     {"mvm_traffic", node.mvm_traffic.to_json()},
                     {"mvm_messages", node.mvm_traffic.total().messages},
                     {"mvm_bytes", node.mvm_traffic.total().bytes}});
    }
    j["nodes"] = arr;
  }
  if (with_timing) j["timing"] = {{"setup_seconds", setup_seconds}, {"mvm_seconds_median", mvm_seconds}};
  return j;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

template <class Scalar>
Vector<Scalar> random_input(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector<Scalar> x(static_cast<Eigen::Index>(n));
  for (auto& v : x) {
    if constexpr (is_complex_v<Scalar>) {
      const double re = dist(rng);
      v = Scalar(re, dist(rng));
    } else {
      v = dist(rng);
    }
  }
  return x;
}

template <class Scalar>
double relative_error(const Vector<Scalar>& y, const Vector<Scalar>& ref) {
  const double denom = ref.norm();
  return denom == 0.0 ? (y - ref).norm() : (y - ref).norm() / denom;
}

TrafficCensus difference(const TrafficCensus& after, const TrafficCensus& before) {
  TrafficCensus d;
  for (const auto& [tag, c] : after.sent) {
    const auto b = before.of(tag);
    if (c.messages == b.messages) continue;
    d.sent[tag] = {c.messages - b.messages, c.bytes - b.bytes};
  }
  return d;
}

void barrier(Transport& t) { t.reduce_or(false); }

// Per-node outcome of a simulated run.
template <class Scalar, class H2>
struct NodeOutcome {
  LocalProblem local;
  H2 h2;
  Vector<Scalar> y;
  NodeReport report;
  double setup_seconds = 0.0;
  std::vector<double> mvm_seconds;
  TreeLayout layout;
};

// Shared timing and census protocol for both simulated variants: barrier,
// setup, then `repeats` products each preceded by a barrier.  Traffic of the
// first product is recorded; y holds that product.
template <class Scalar, class H2, class Setup, class Mvm>
std::vector<NodeOutcome<Scalar, H2>> simulate(const RunConfig& c, const TriangleMesh& mesh, const Vector<Scalar>& x,
                                              Setup&& setup, Mvm&& mvm) {
  const auto parts = partition_indices(mesh, c.p);
  return run_nodes(c.p, [&](Transport& t) {
    NodeOutcome<Scalar, H2> out;
    barrier(t);
    const auto before_setup = t.census();
    const auto t0 = Clock::now();
    out.local = make_local_problem(mesh, parts[t.rank()], t.rank(), c.p, ClusterOptions{c.leaf_limit});
    out.h2 = setup(t, out.local, out.layout);
    out.setup_seconds = seconds_since(t0);
    out.report.setup_traffic = difference(t.census(), before_setup);

    Vector<Scalar> xl(static_cast<Eigen::Index>(out.local.size()));
    for (std::size_t i = 0; i < out.local.size(); ++i) xl[static_cast<Eigen::Index>(i)] = x[out.local.global_ids[i]];
    for (int r = 0; r < c.repeats; ++r) {
      barrier(t);
      const auto before = t.census();
      Vector<Scalar> y = Vector<Scalar>::Zero(xl.size());
      const auto t1 = Clock::now();
      mvm(t, out.local, out.h2, xl, y);
      out.mvm_seconds.push_back(seconds_since(t1));
      if (r == 0) {
        out.report.mvm_traffic = difference(t.census(), before);
        out.y = std::move(y);
      }
    }
    out.report.rank = t.rank();
    out.report.size = out.local.size();
    out.report.storage = out.h2.census();
    return out;
  });
}

template <class Scalar>
Eigen::VectorXcd widen(const Vector<Scalar>& v) {
  return v.template cast<Complex>();
}

template <class Scalar, class Outcomes>
void collect(RunReport& report, const Outcomes& outcomes, Vector<Scalar>& y) {
  y = Vector<Scalar>::Zero(static_cast<Eigen::Index>(report.n));
  std::vector<double> mvm(report.config.repeats, 0.0);
  for (const auto& o : outcomes) {
    for (std::size_t i = 0; i < o.local.size(); ++i) y[o.local.global_ids[i]] = o.y[static_cast<Eigen::Index>(i)];
    report.nodes.push_back(o.report);
    const auto& s = o.report.storage;
    report.storage.leaf_basis += s.leaf_basis;
    report.storage.transfer += s.transfer;
    report.storage.coupling += s.coupling;
    report.storage.nearfield += s.nearfield;
    report.storage.admissible_leaves += s.admissible_leaves;
    report.storage.inadmissible_leaves += s.inadmissible_leaves;
    report.setup_seconds = std::max(report.setup_seconds, o.setup_seconds);
    for (int r = 0; r < report.config.repeats; ++r) mvm[r] = std::max(mvm[r], o.mvm_seconds[r]);
  }
  report.mvm_seconds = median(mvm);
}

template <class Scalar>
RunReport run_typed(const RunConfig& c) {
  RunReport report;
  report.config = c;
  const auto mesh = build_sphere_mesh(c.level);
  report.n = mesh.size();
  const auto kernel = c.kernel_spec();
  const auto x = random_input<Scalar>(mesh.size(), c.seed);
  const auto options = c.h2_options();
  const auto rule = triangle_rule(c.quadrature_order);
  DenseOptions dense_options;
  dense_options.threads = c.threads;

  std::optional<Matrix<Scalar>> dense;
  Vector<Scalar> y;
  if (c.variant == Variant::dense) {
    const auto t0 = Clock::now();
    dense = assemble_dense<Scalar>(mesh, kernel, rule, dense_options);
    report.setup_seconds = seconds_since(t0);
    report.dense_entries = static_cast<std::size_t>(dense->size());
    std::vector<double> times;
    for (int r = 0; r < c.repeats; ++r) {
      const auto t1 = Clock::now();
      Vector<Scalar> yr = (*dense) * x;
      times.push_back(seconds_since(t1));
      if (r == 0) y = std::move(yr);
    }
    report.mvm_seconds = median(times);
  } else if (c.variant == Variant::h2) {
    std::vector<Vec3> points;
    std::vector<Box> supports;
    for (Index i = 0; i < mesh.size(); ++i) {
      points.push_back(mesh.centroid(i));
      supports.push_back(mesh.support(i));
    }
    const auto t0 = Clock::now();
    auto tree = std::make_shared<const ClusterTree>(build_cluster_tree(points, supports, {c.leaf_limit}));
    const auto h2 = assemble_h2<Scalar>(mesh, kernel, tree, tree, options);
    report.setup_seconds = seconds_since(t0);
    report.storage = h2.census();
    std::vector<double> times;
    for (int r = 0; r < c.repeats; ++r) {
      const auto t1 = Clock::now();
      Vector<Scalar> yr = h2.apply(x);
      times.push_back(seconds_since(t1));
      if (r == 0) y = std::move(yr);
    }
    report.mvm_seconds = median(times);
  } else if (c.variant == Variant::distributed) {
    auto outcomes = simulate<Scalar, DistributedH2<Scalar>>(
        c, mesh, x,
        [&](Transport& t, const LocalProblem& local, TreeLayout&) {
          auto skeleton = build_block_distributed(t, local.tree, local.tree, c.eta);
          return setup_matrix_distributed<Scalar>(t, local, std::move(skeleton), kernel, options);
        },
        [](Transport& t, const LocalProblem& local, const DistributedH2<Scalar>& h2, const Vector<Scalar>& xl,
           Vector<Scalar>& yl) { mvm_distributed(t, local, h2, xl, yl); });
    collect(report, outcomes, y);
    if (c.verify_sequential) {
      std::vector<const LocalProblem*> locals;
      for (const auto& o : outcomes) locals.push_back(&o.local);
      const auto ref = sequential_reference<Scalar>(mesh, kernel, locals, options).apply(x);
      report.sequential_error = relative_error(y, ref);
    }
  } else {
    auto outcomes = simulate<Scalar, SharedH2<Scalar>>(
        c, mesh, x,
        [&](Transport& t, const LocalProblem& local, TreeLayout& layout) {
          auto rows = build_shared_cluster_tree(t, local.tree, local.characteristic_point);
          layout = rows.layout;
          auto cols = rows;
          auto skeleton = build_shared(t, std::move(rows), std::move(cols), c.eta, c.fanout);
          return setup_matrix_shared<Scalar>(t, local, std::move(skeleton), kernel, options);
        },
        [](Transport& t, const LocalProblem& local, const SharedH2<Scalar>& h2, const Vector<Scalar>& xl,
           Vector<Scalar>& yl) { mvm_shared(t, local, h2, xl, yl); });
    collect(report, outcomes, y);
    if (c.verify_sequential) {
      std::vector<const LocalProblem*> locals;
      for (const auto& o : outcomes) locals.push_back(&o.local);
      const auto ref =
          shared_sequential_reference<Scalar>(mesh, kernel, outcomes.front().layout, locals, options).apply(x);
      report.sequential_error = relative_error(y, ref);
    }
  }

  if (c.verify_dense) {
    if (!dense) dense = assemble_dense<Scalar>(mesh, kernel, rule, dense_options);
    const Vector<Scalar> ref = (*dense) * x;
    report.dense_error = relative_error(y, ref);
  }
  report.output = widen(y);
  return report;
}

}  // namespace

RunReport run(const RunConfig& config) {
  validate(config);
  return config.kernel_spec().is_real() ? run_typed<double>(config) : run_typed<Complex>(config);
}

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::level: return "level";
    case SweepAxis::m: return "m";
    case SweepAxis::p: return "p";
  }
  return "unknown";
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "level") return SweepAxis::level;
  if (name == "m") return SweepAxis::m;
  if (name == "p") return SweepAxis::p;
  throw ConfigError("axis: expected level, m or p, got '" + name + "'");
}

SweepResult sweep(const RunConfig& base, SweepAxis axis, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  std::vector<RunConfig> configs;
  for (double v : values) {
    if (v != std::floor(v)) throw ConfigError(std::string("sweep: ") + to_string(axis) + " values must be integers");
    RunConfig c = base;
    const int iv = static_cast<int>(v);
    switch (axis) {
      case SweepAxis::level: c.level = iv; break;
      case SweepAxis::m:
        c.m = iv;
        c.verify_dense = true;
        break;
      case SweepAxis::p: c.p = iv; break;
    }
    validate(c);
    configs.push_back(c);
  }

  SweepResult result;
  result.axis = axis;
  result.values = values;
  auto label = [&](std::size_t i) {
    std::ostringstream s;
    s << to_string(axis) << "=" << values[i];
    return s.str();
  };
  for (std::size_t i = 0; i < configs.size(); ++i) {
    result.rows.push_back(run(configs[i]));
    for (const auto& f : result.rows.back().failures()) result.violations.push_back(label(i) + ": " + f);
  }

  const auto& rows = result.rows;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::ostringstream msg;
    switch (axis) {
      case SweepAxis::m:
        if (!(*rows[i].dense_error < *rows[i - 1].dense_error)) {
          msg << "error does not decrease from " << label(i - 1) << " (" << *rows[i - 1].dense_error << ") to "
              << label(i) << " (" << *rows[i].dense_error << ")";
        }
        break;
      case SweepAxis::p: {
        const double d = (rows[i].output - rows[0].output).norm() / rows[0].output.norm();
        if (!(d <= kSequentialTolerance)) msg << label(i) << " output differs from " << label(0) << " by " << d;
        break;
      }
      case SweepAxis::level: {
        const double growth = rows[i].scalars_per_index() / rows[i - 1].scalars_per_index();
        if (!(growth <= 1.6)) {
          msg << "scalars per index grow " << growth << "x from " << label(i - 1) << " to " << label(i);
        }
        break;
      }
    }
    if (!msg.str().empty()) result.violations.push_back(msg.str());
  }
  return result;
}

std::string SweepResult::to_csv() const {
  std::ostringstream s;
  s.precision(17);
  s << to_string(axis)
    << ",n,variant,p,m,level,stored_scalars,scalars_per_index,admissible_blocks,inadmissible_blocks,dense_error,"
       "sequential_error,setup_seconds,mvm_seconds\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    s << values[i] << ',' << r.n << ',' << to_string(r.config.variant) << ',' << r.config.p << ',' << r.config.m << ','
      << r.config.level << ',' << r.stored_scalars() << ',' << r.scalars_per_index() << ','
      << r.storage.admissible_leaves << ',' << r.storage.inadmissible_leaves << ',';
    if (r.dense_error) s << *r.dense_error;
    s << ',';
    if (r.sequential_error) s << *r.sequential_error;
    s << ',' << r.setup_seconds << ',' << r.mvm_seconds << '\n';
  }
  return s.str();
}

nlohmann::json SweepResult::to_json(bool with_timing) const {
  nlohmann::json j;
  j["axis"] = to_string(axis);
  j["values"] = values;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) j["rows"].push_back(r.to_json(with_timing));
  j["violations"] = violations;
  j["passed"] = passed();
  return j;
}

nlohmann::json dump_trees(const RunConfig& c) {
  validate(c);
  const auto mesh = build_sphere_mesh(c.level);
  nlohmann::json j;
  j["config"] = to_json(c);
  j["n"] = mesh.size();
  if (c.variant == Variant::dense || c.variant == Variant::h2) {
    std::vector<Vec3> points;
    std::vector<Box> supports;
    for (Index i = 0; i < mesh.size(); ++i) {
      points.push_back(mesh.centroid(i));
      supports.push_back(mesh.support(i));
    }
    j["tree"] = dump_tree_json(build_cluster_tree(points, supports, {c.leaf_limit}));
    return j;
  }
  const auto parts = partition_indices(mesh, c.p);
  std::vector<LocalProblem> locals;
  std::vector<const LocalProblem*> ptrs;
  for (int r = 0; r < c.p; ++r) locals.push_back(make_local_problem(mesh, parts[r], r, c.p, {c.leaf_limit}));
  for (const auto& l : locals) ptrs.push_back(&l);
  j["local_trees"] = nlohmann::json::array();
  for (const auto& l : locals) {
    j["local_trees"].push_back({{"rank", l.rank}, {"global_ids", l.global_ids}, {"tree", dump_tree_json(l.tree)}});
  }
  if (c.variant == Variant::distributed) {
    j["global_tree"] = dump_tree_json(composed_tree(ptrs));
  } else {
    std::vector<Vec3> points;
    std::vector<Box> boxes;
    for (const auto& l : locals) {
      points.push_back(l.characteristic_point);
      boxes.push_back(l.tree[0].box);
    }
    const auto layout = bisection_layout(points, boxes);
    nlohmann::json top = nlohmann::json::array();
    for (const auto& node : layout.nodes) {
      top.push_back({{"shareholders", node.shareholders}, {"manager", node.manager}, {"children", node.children}});
    }
    j["shared_top"] = top;
    j["global_tree"] = dump_tree_json(shared_composed_tree(layout, ptrs));
  }
  return j;
}

}  // namespace h2dist::bench
