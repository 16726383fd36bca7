#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <string>

#include "h2dist/bench.hpp"

using namespace h2dist;
using namespace h2dist::bench;

TEST_CASE("settings parse into the run config") {
  RunConfig c;
  apply_setting(c, "level", "3");
  apply_setting(c, "kernel", "helmholtz");
  apply_setting(c, "kappa", "2.5");
  apply_setting(c, "leaf-limit", "32");
  apply_setting(c, "variant", "shared");
  apply_setting(c, "fanout", "collective");
  apply_setting(c, "verify-sequential", "on");
  apply_setting(c, "p", "4");
  CHECK(c.level == 3);
  CHECK(c.kernel == KernelKind::helmholtz);
  CHECK(c.kappa == 2.5);
  CHECK(c.leaf_limit == 32);
  CHECK(c.variant == Variant::shared);
  CHECK(c.fanout == FanOut::collective);
  CHECK(c.verify_sequential);
  CHECK_NOTHROW(validate(c));

  CHECK_THROWS_AS(apply_setting(c, "level", "two"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "m", "2.5"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "variant", "sparse"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "verify-dense", "maybe"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "colour", "red"), ConfigError);
}

TEST_CASE("config documents and environment use the flag names") {
  const auto doc = nlohmann::json{{"level", 1}, {"variant", "dense"}, {"verify-dense", true}, {"eta", 0.5}};
  const auto settings = settings_from_json(doc);
  CHECK(settings.at("level") == "1");
  CHECK(settings.at("verify-dense") == "true");
  RunConfig c;
  for (const auto& [k, v] : settings) apply_setting(c, k, v);
  CHECK(c.eta == 0.5);
  CHECK(c.variant == Variant::dense);
  CHECK_THROWS_AS(settings_from_json(nlohmann::json{{"levels", 1}}), ConfigError);
  CHECK_THROWS_AS(settings_from_json(nlohmann::json::array()), ConfigError);

  CHECK(env_name("leaf-limit") == "H2BENCH_LEAF_LIMIT");
  const std::map<std::string, std::string> env = {{"H2BENCH_M", "5"}, {"H2BENCH_VERIFY_DENSE", "1"}};
  const auto from_env = settings_from_env([&](const char* name) -> const char* {
    auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  CHECK(from_env.size() == 2);
  CHECK(from_env.at("m") == "5");
  CHECK(from_env.at("verify-dense") == "1");
}

TEST_CASE("validation rejects unsupported combinations") {
  auto rejects = [](auto edit) {
    RunConfig c;
    edit(c);
    CHECK_THROWS_AS(validate(c), ConfigError);
  };
  rejects([](RunConfig& c) { c.level = -1; });
  rejects([](RunConfig& c) { c.level = kMaxSphereLevel + 1; });
  rejects([](RunConfig& c) { c.m = 0; });
  rejects([](RunConfig& c) { c.eta = 0.0; });
  rejects([](RunConfig& c) { c.repeats = 2; });
  rejects([](RunConfig& c) { c.kappa = 1.0; });  // laplace
  rejects([](RunConfig& c) { c.p = 2; });        // h2 variant
  rejects([](RunConfig& c) { c.verify_sequential = true; });
  rejects([](RunConfig& c) {
    c.variant = Variant::distributed;
    c.level = 0;
    c.p = 9;
  });
  rejects([](RunConfig& c) {
    c.variant = Variant::dense;
    c.level = 6;
  });
  rejects([](RunConfig& c) {
    c.level = 6;
    c.verify_dense = true;
  });
  CHECK_THROWS_AS(run(RunConfig{.level = -1}), ConfigError);
}

TEST_CASE("dense run at level 0 stores the 8 x 8 matrix and nothing compressed") {
  RunConfig c;
  c.level = 0;
  c.variant = Variant::dense;
  c.verify_dense = true;
  const auto r = run(c);
  CHECK(r.n == 8);
  CHECK(r.dense_entries == 64);
  CHECK(r.storage.total() == 0);
  CHECK(r.stored_scalars() == 64);
  REQUIRE(r.dense_error);
  CHECK(*r.dense_error == 0.0);
  CHECK_FALSE(r.sequential_error);
  CHECK(r.passed());
  const auto j = r.to_json();
  CHECK(j["storage"]["fraction_of_dense"] == 1.0);
  CHECK(j["errors"].contains("dense"));
  CHECK_FALSE(j["errors"].contains("sequential"));
  CHECK(j.contains("timing"));
  CHECK_FALSE(r.to_json(false).contains("timing"));
}

TEST_CASE("h2 run on the level-3 sphere meets the dense bound for m = 4") {
  RunConfig c;
  c.level = 3;
  c.verify_dense = true;
  const auto r = run(c);
  REQUIRE(r.dense_error);
  CHECK(*r.dense_error < dense_tolerance(4));
  CHECK(r.storage.admissible_leaves > 0);
  CHECK(r.dense_entries == 0);
}

TEST_CASE("distributed run at level 2 with p = 4 matches the sequential product") {
  RunConfig c;
  c.level = 2;
  c.variant = Variant::distributed;
  c.p = 4;
  c.verify_sequential = true;
  const auto r = run(c);
  REQUIRE(r.sequential_error);
  CHECK(*r.sequential_error <= 1e-12);
  REQUIRE(r.nodes.size() == 4);
  std::size_t sizes = 0;
  for (const auto& node : r.nodes) {
    sizes += node.size;
    CHECK(node.setup_traffic.total().messages > 0);
    CHECK(node.mvm_traffic.of(Tag::vote).messages == 0);  // barriers are not product traffic
  }
  CHECK(sizes == r.n);
}

TEST_CASE("shared run with helmholtz kernel and both fan-out modes") {
  for (auto fanout : {FanOut::point_to_point, FanOut::collective}) {
    RunConfig c;
    c.level = 2;
    c.kernel = KernelKind::helmholtz;
    c.kappa = 2.0;
    c.variant = Variant::shared;
    c.p = 3;
    c.m = 3;
    c.fanout = fanout;
    c.verify_sequential = true;
    c.verify_dense = true;
    const auto r = run(c);
    CAPTURE(to_string(fanout));
    REQUIRE(r.sequential_error);
    CHECK(*r.sequential_error <= 1e-12);
    CHECK(r.passed());
    CHECK(r.output.imag().norm() > 0.0);
  }
}

TEST_CASE("reports are byte-stable without timing") {
  RunConfig c;
  c.level = 2;
  c.variant = Variant::shared;
  c.p = 4;
  c.verify_sequential = true;
  const auto a = run(c).to_json(false).dump();
  const auto b = run(c).to_json(false).dump();
  CHECK(a == b);
}

TEST_CASE("failed oracles are reported") {
  RunConfig c;
  c.level = 3;
  c.m = 2;
  c.verify_dense = true;
  c.tolerance = 1e-9;
  const auto r = run(c);
  CHECK_FALSE(r.passed());
  REQUIRE(r.failures().size() == 1);
  CHECK(r.failures()[0].find("dense error") != std::string::npos);
}

TEST_CASE("sweep over m at level 3 decreases") {
  RunConfig c;
  c.level = 3;
  const auto s = sweep(c, SweepAxis::m, {2, 3, 4});
  CHECK(s.passed());
  REQUIRE(s.rows.size() == 3);
  for (const auto& row : s.rows) CHECK(row.dense_error);
  const auto csv = s.to_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(s.to_json()["rows"].size() == 3);
}

TEST_CASE("sweep over p at level 3 gives identical outputs") {
  RunConfig c;
  c.level = 3;
  c.m = 3;
  c.variant = Variant::distributed;
  const auto s = sweep(c, SweepAxis::p, {1, 2, 4, 8});
  CHECK(s.passed());
  for (const auto& row : s.rows) CHECK((row.output - s.rows[0].output).norm() <= 1e-12 * s.rows[0].output.norm());
}

TEST_CASE("sweep rejects bad values before running") {
  RunConfig c;
  CHECK_THROWS_AS(sweep(c, SweepAxis::m, {}), ConfigError);
  CHECK_THROWS_AS(sweep(c, SweepAxis::m, {2.5}), ConfigError);
  CHECK_THROWS_AS(sweep(c, SweepAxis::level, {2, 11}), ConfigError);
  CHECK_THROWS_AS(parse_axis("kappa"), ConfigError);
}

TEST_CASE("tree dumps") {
  RunConfig c;
  c.level = 1;
  auto j = dump_trees(c);
  CHECK(j.contains("tree"));
  c.variant = Variant::shared;
  c.p = 4;
  j = dump_trees(c);
  CHECK(j["local_trees"].size() == 4);
  CHECK(j["shared_top"].size() == 3);  // root plus two pairs
  c.variant = Variant::distributed;
  j = dump_trees(c);
  CHECK(j.contains("global_tree"));
  CHECK_FALSE(j.contains("shared_top"));
}
