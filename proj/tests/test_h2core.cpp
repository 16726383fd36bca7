#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"

using namespace h2dist;
using h2test::random_vector;
using h2test::rel_error;

namespace {

const Box kBox{Vec3(-0.3, 0.1, 2.0), Vec3(0.9, 0.6, 2.4)};

Vec3 random_point_in(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return box.lo + (box.hi - box.lo).cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
}

struct Level2 {
  h2test::SphereProblem p = h2test::sphere(2);
  std::shared_ptr<const ClusterTree> tree = h2test::sphere_tree(p, 16);
  Eigen::MatrixXd dense = assemble_dense<double>(p.mesh, KernelSpec::laplace(), triangle_rule(4));
};

const Level2& level2() {
  static const Level2 fixture;
  return fixture;
}

// Level 2 has no admissible blocks at eta = 1; compression starts at level 3.
struct Level3 {
  h2test::SphereProblem p = h2test::sphere(3);
  std::shared_ptr<const ClusterTree> tree = h2test::sphere_tree(p, 16);
  Eigen::MatrixXd dense = assemble_dense<double>(p.mesh, KernelSpec::laplace(), triangle_rule(4));
};

const Level3& level3() {
  static const Level3 fixture;
  return fixture;
}

}  // namespace

TEST_CASE("interpolation points") {
  CHECK_THROWS(interpolation_points(kBox, 0));
  auto one = interpolation_points(kBox, 1);
  REQUIRE(one.size() == 1);
  CHECK((one[0] - kBox.center()).norm() < 1e-15);
  auto eight = interpolation_points(kBox, 2);
  REQUIRE(eight.size() == 8);
  for (const auto& x : eight) {
    CHECK((x.array() > kBox.lo.array()).all());
    CHECK((x.array() < kBox.hi.array()).all());
  }
  const Vec3 shift(1.5, -2.0, 0.25);
  Box moved{kBox.lo + shift, kBox.hi + shift};
  auto a = interpolation_points(kBox, 3), b = interpolation_points(moved, 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK((b[i] - a[i] - shift).norm() < 1e-14);
  // Lexicographic order: the third axis varies fastest.
  CHECK(a[1][0] == a[0][0]);
  CHECK(a[1][2] > a[0][2]);
  CHECK(a[3][1] > a[0][1]);
  CHECK(a[9][0] > a[0][0]);
}

TEST_CASE("Lagrange functions") {
  const int m = 3;
  auto pts = interpolation_points(kBox, m);
  for (int nu = 0; nu < m * m * m; ++nu)
    for (int mu = 0; mu < m * m * m; ++mu)
      CHECK(lagrange_eval(kBox, m, nu, pts[mu]) == doctest::Approx(nu == mu ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
  CHECK_THROWS_AS(lagrange_eval(kBox, m, 27, pts[0]), std::out_of_range);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) CHECK(lagrange_values(kBox, 4, random_point_in(kBox, rng)).sum() == doctest::Approx(1.0));

  auto q = [](const Vec3& x) { return x[0] * x[0] * x[0] * x[1] * x[1] * x[2]; };
  auto nodes = interpolation_points(kBox, 4);
  for (int i = 0; i < 20; ++i) {
    Vec3 x = random_point_in(kBox, rng);
    auto l = lagrange_values(kBox, 4, x);
    double interp = 0.0;
    for (int nu = 0; nu < 64; ++nu) interp += l[nu] * q(nodes[nu]);
    CHECK(std::abs(interp - q(x)) <= 1e-12);
  }
}

TEST_CASE("degenerate boxes are widened for interpolation") {
  Box flat{Vec3(0, 0, 1), Vec3(1, 2, 1)};
  auto pts = interpolation_points(flat, 3);
  for (int nu = 0; nu < 27; ++nu) CHECK(std::isfinite(lagrange_eval(flat, 3, nu, Vec3(0.5, 0.5, 1.0))));
  CHECK(transfer_matrix(flat, flat, 3).isIdentity(1e-12));
}

TEST_CASE("leaf matrices") {
  const auto& f = level2();
  const auto& tree = *f.tree;
  auto leaf = tree.leaves().front();
  const auto& c = tree[leaf];
  std::vector<Triangle> tris;
  for (Index i : c.indices) tris.push_back(f.p.mesh.triangle(i));

  auto v1 = leaf_matrix(tris, c.box, 1, triangle_rule(2));
  for (std::size_t i = 0; i < tris.size(); ++i) CHECK(v1(i, 0) == doctest::Approx(tris[i].area()).epsilon(1e-14));

  const int m = 4;
  auto v = leaf_matrix(tris, c.box, m, triangle_rule(basis_rule_order(m, 4)));
  for (std::size_t i = 0; i < tris.size(); ++i) CHECK(std::abs(v.row(i).sum() - tris[i].area()) <= 1e-12);

  // Spot entries against refinement with an unrelated rule.
  for (int nu : {0, 21, 63}) {
    const double oracle = h2test::refined_integral(
        tris[2], [&](const Vec3& x) { return lagrange_eval(c.box, m, nu, x); }, 2, 7);
    CHECK(std::abs(v(2, nu) - oracle) <= 1e-10 * tris[2].area());
  }
}

TEST_CASE("transfer matrices and nestedness") {
  CHECK(transfer_matrix(kBox, kBox, 3).isIdentity(1e-12));
  Box child{kBox.lo, kBox.center()};
  auto e = transfer_matrix(kBox, child, 4);
  for (int r = 0; r < e.rows(); ++r) CHECK(e.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));

  const auto& f = level2();
  const auto& tree = *f.tree;
  for (int m : {2, 3, 4}) {
    const int order = basis_rule_order(m, 4);
    for (std::uint32_t v = 0; v < tree.size(); ++v) {
      const auto& parent = tree[v];
      if (parent.is_leaf()) continue;
      const auto vp = h2test::direct_cluster_matrix(f.p.mesh, parent, m, order);
      for (auto ch : parent.children) {
        const auto& child = tree[ch];
        const auto vc = h2test::direct_cluster_matrix(f.p.mesh, child, m, order);
        Eigen::MatrixXd restricted(child.indices.size(), vp.cols());
        std::size_t row = 0;
        for (std::size_t i = 0; i < parent.indices.size(); ++i)
          if (std::binary_search(child.indices.begin(), child.indices.end(), parent.indices[i]))
            restricted.row(row++) = vp.row(i);
        const double res = (restricted - vc * transfer_matrix(parent.box, child.box, m)).norm() / restricted.norm();
        CHECK(res <= 1e-12);
      }
    }
  }
}

TEST_CASE("coupling matrices") {
  const auto laplace = KernelSpec::laplace();
  Box a{Vec3(-2, 0, 0), Vec3(-1, 1, 1)}, b{Vec3(1, 0, 0), Vec3(2, 1, 1)};  // mirrored through x = 0
  const int m = 3;
  auto s = coupling_matrix<double>(laplace, a, b, m);
  // Mirroring flips the first-axis index: nu = (i1, i2, i3) -> (m-1-i1, i2, i3).
  auto mirror = [&](int nu) { return ((m - 1 - nu / (m * m)) * m + (nu / m) % m) * m + nu % m; };
  for (int nu = 0; nu < m * m * m; ++nu)
    for (int mu = 0; mu < m * m * m; ++mu) CHECK(s(nu, mu) == doctest::Approx(s(mirror(mu), mirror(nu))));
  auto s1 = coupling_matrix<double>(laplace, a, b, 1);
  CHECK(s1(0, 0) == doctest::Approx(kernel_eval(laplace, a.center(), b.center()).real()));
  CHECK_THROWS_AS(coupling_matrix<double>(laplace, a, a, 1), SingularityError);

  const auto& f = level3();
  auto h2 = assemble_h2<double>(f.p.mesh, laplace, f.tree, f.tree, H2Options{3, 1.0, 4, 1});
  const auto& tree = *f.tree;
  int checked = 0;
  for (auto b : h2.blocks.leaves()) {
    const auto& blk = h2.blocks[b];
    if (blk.status != BlockStatus::admissible || !tree[blk.row].is_leaf() || !tree[blk.col].is_leaf()) continue;
    const auto& tau = tree[blk.row];
    const auto& sigma = tree[blk.col];
    Eigen::MatrixXd exact(tau.indices.size(), sigma.indices.size());
    for (std::size_t i = 0; i < tau.indices.size(); ++i)
      for (std::size_t j = 0; j < sigma.indices.size(); ++j) exact(i, j) = f.dense(tau.indices[i], sigma.indices[j]);
    Eigen::MatrixXd approx = h2.row_basis.leaf[blk.row] * h2.data.coupling[b] * h2.row_basis.leaf[blk.col].transpose();
    CHECK((approx - exact).norm() / exact.norm() < 1e-2);
    if (++checked == 5) break;
  }
  CHECK(checked > 0);
}

TEST_CASE("H2 assembly") {
  const auto& f = level2();
  const auto laplace = KernelSpec::laplace();
  SUBCASE("single-leaf trees store the dense matrix") {
    auto single = std::make_shared<const ClusterTree>(build_cluster_tree(f.p.centroids, f.p.supports, {1000}));
    auto h2 = assemble_h2<double>(f.p.mesh, laplace, single, single, H2Options{4, 1e6, 4, 1});
    REQUIRE(h2.blocks.size() == 1);
    CHECK(h2.blocks[0].status == BlockStatus::inadmissible);
    CHECK((h2.data.nearfield[0] - f.dense).norm() == 0.0);
    auto x = random_vector(f.p.mesh.size(), 5);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    h2.mvm(x, y);
    CHECK((y - f.dense * x).norm() == 0.0);
  }
  SUBCASE("census matches the storage formula") {
    auto h2 = assemble_h2<double>(f.p.mesh, laplace, f.tree, f.tree, H2Options{3, 1.0, 4, 1});
    const auto& tree = *f.tree;
    const std::size_t k = 27;
    std::size_t expected = 0;
    for (auto leaf : tree.leaves()) expected += tree[leaf].indices.size() * k;
    expected += (tree.size() - 1) * k * k;
    for (auto b : h2.blocks.leaves()) {
      const auto& blk = h2.blocks[b];
      if (blk.status == BlockStatus::admissible) expected += k * k;
      else expected += tree[blk.row].indices.size() * tree[blk.col].indices.size();
    }
    CHECK(h2.census().total() == expected);
  }
  SUBCASE("nearfield blocks are bit-identical to the dense matrix") {
    auto h2 = assemble_h2<double>(f.p.mesh, laplace, f.tree, f.tree, H2Options{4, 1.0, 4, 3});
    const auto& tree = *f.tree;
    for (auto b : h2.blocks.leaves()) {
      const auto& blk = h2.blocks[b];
      if (blk.status != BlockStatus::inadmissible) continue;
      for (std::size_t i = 0; i < tree[blk.row].indices.size(); ++i)
        for (std::size_t j = 0; j < tree[blk.col].indices.size(); ++j)
          REQUIRE(h2.data.nearfield[b](i, j) == f.dense(tree[blk.row].indices[i], tree[blk.col].indices[j]));
    }
  }
  SUBCASE("dimension mismatch") {
    auto h2 = assemble_h2<double>(f.p.mesh, laplace, f.tree, f.tree, H2Options{2, 1.0, 4, 1});
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3), y = Eigen::VectorXd::Zero(f.p.mesh.size());
    CHECK_THROWS_AS(h2.mvm(x, y), DimensionError);
  }
}

TEST_CASE("level-3 storage census at m=4") {
  const auto p = h2test::sphere(3);
  auto tree = h2test::sphere_tree(p, 16);
  auto h2 = assemble_h2<double>(p.mesh, KernelSpec::laplace(), tree, tree, H2Options{4, 1.0, 4, 1});
  const double n = static_cast<double>(p.mesh.size());
  MESSAGE("stored scalars / n^2 = " << h2.census().total() / (n * n));
  CHECK(h2.census().total() < 0.25 * n * n);
}

TEST_CASE("forward and backward transformations") {
  const auto& f = level2();
  const auto& tree = *f.tree;
  const int m = 3;
  const auto basis = build_cluster_basis(tree, f.p.mesh.all_triangles(), m, triangle_rule(basis_rule_order(m, 4)));
  const std::size_t n = f.p.mesh.size();

  CoefficientMap<double> xhat(tree.size());
  forward(tree, basis, 0, Eigen::VectorXd::Zero(n).eval(), xhat);
  for (const auto& v : xhat) CHECK(v.norm() == 0.0);

  auto x = random_vector(n, 17);
  forward(tree, basis, 0, x, xhat);
  for (std::uint32_t v = 0; v < tree.size(); ++v) {
    const auto& c = tree[v];
    const auto w = h2test::direct_cluster_matrix(f.p.mesh, c, m, basis_rule_order(m, 4));
    Eigen::VectorXd xs(c.indices.size());
    for (std::size_t i = 0; i < c.indices.size(); ++i) xs[i] = x[c.indices[i]];
    const Eigen::VectorXd direct = w.transpose() * xs;
    CHECK((xhat[v] - direct).norm() <= 1e-12 * direct.norm());
  }

  // Single-leaf tree.
  auto single = build_cluster_tree(f.p.centroids, f.p.supports, {1000});
  const auto b1 = build_cluster_basis(single, f.p.mesh.all_triangles(), m, triangle_rule(basis_rule_order(m, 4)));
  CoefficientMap<double> xh1(1);
  forward(single, b1, 0, x, xh1);
  CHECK((xh1[0] - b1.leaf[0].transpose() * x).norm() == 0.0);
  CoefficientMap<double> yh1{random_vector(27, 2)};
  Eigen::VectorXd y1 = Eigen::VectorXd::Zero(n);
  backward(single, b1, 0, yh1, y1);
  CHECK((y1 - b1.leaf[0] * yh1[0]).norm() == 0.0);

  CoefficientMap<double> zero(tree.size(), Eigen::VectorXd::Zero(27));
  Eigen::VectorXd y = random_vector(n, 4), y0 = y;
  backward(tree, basis, 0, zero, y);
  CHECK((y - y0).norm() == 0.0);

  // Adjointness: <B yhat, x> = <yhat, F x> summed over all clusters.
  CoefficientMap<double> yhat(tree.size());
  for (std::uint32_t v = 0; v < tree.size(); ++v) yhat[v] = random_vector(27, 100 + v);
  auto yhat_copy = yhat;
  Eigen::VectorXd by = Eigen::VectorXd::Zero(n);
  backward(tree, basis, 0, yhat_copy, by);
  double rhs = 0.0;
  for (std::uint32_t v = 0; v < tree.size(); ++v) rhs += yhat[v].dot(xhat[v]);
  CHECK(by.dot(x) == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("matrix-vector multiplication") {
  const auto& f = level2();
  const auto laplace = KernelSpec::laplace();
  const std::size_t n = f.p.mesh.size();

  SUBCASE("accuracy against the dense matrix") {
    auto h2 = assemble_h2<double>(f.p.mesh, laplace, f.tree, f.tree, H2Options{4, 1.0, 4, 1});
    for (std::uint64_t s = 0; s < 10; ++s) {
      auto x = random_vector(n, s);
      CHECK(rel_error(h2.apply(x), f.dense * x) < 1e-3);
    }
  }
  SUBCASE("error decays with the order") {
    const auto& f3 = level3();
    auto x = random_vector(f3.p.mesh.size(), 99);
    const Eigen::VectorXd exact = f3.dense * x;
    double previous = 0.0;
    for (int m : {2, 3, 4}) {
      auto h2 = assemble_h2<double>(f3.p.mesh, laplace, f3.tree, f3.tree, H2Options{m, 1.0, 4, 1});
      const double err = rel_error(h2.apply(x), exact);
      MESSAGE("m=" << m << " error " << err);
      if (m > 2) CHECK(err * 2.0 <= previous);
      previous = err;
    }
  }
  SUBCASE("accuracy on the level-3 sphere") {
    const auto& f3 = level3();
    auto h2 = assemble_h2<double>(f3.p.mesh, laplace, f3.tree, f3.tree, H2Options{4, 1.0, 4, 1});
    REQUIRE(h2.blocks.count(BlockStatus::admissible) > 0);
    for (std::uint64_t s = 0; s < 10; ++s) {
      auto x = random_vector(f3.p.mesh.size(), s);
      CHECK(rel_error(h2.apply(x), f3.dense * x) < 1e-3);
    }
  }
  SUBCASE("linearity, determinism, symmetry") {
    const auto& f3 = level3();
    const std::size_t n = f3.p.mesh.size();
    auto h2 = assemble_h2<double>(f3.p.mesh, laplace, f3.tree, f3.tree, H2Options{3, 1.0, 4, 1});
    auto x1 = random_vector(n, 1), x2 = random_vector(n, 2);
    const double alpha = 0.37;
    const Eigen::VectorXd lhs = h2.apply((alpha * x1 + x2).eval());
    const Eigen::VectorXd rhs = alpha * h2.apply(x1) + h2.apply(x2);
    CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
    CHECK((h2.apply(x1) - h2.apply(x1)).norm() == 0.0);
    CHECK(h2.apply(x1).dot(x2) == doctest::Approx(x1.dot(h2.apply(x2))).epsilon(1e-10));
    CHECK(h2.apply(Eigen::VectorXd::Zero(n).eval()).norm() == 0.0);
  }
  SUBCASE("no admissible leaves reduces to dense products") {
    auto h2 = assemble_h2<double>(f.p.mesh, laplace, f.tree, f.tree, H2Options{2, 1e-6, 4, 1});
    CHECK(h2.blocks.count(BlockStatus::admissible) == 0);
    auto x = random_vector(n, 8);
    CHECK(rel_error(h2.apply(x), f.dense * x) <= 1e-14);
  }
  SUBCASE("Helmholtz kernel") {
    const auto helm = KernelSpec::helmholtz(2.0);
    const Eigen::MatrixXcd dense = assemble_dense<Complex>(f.p.mesh, helm, triangle_rule(4));
    auto h2 = assemble_h2<Complex>(f.p.mesh, helm, f.tree, f.tree, H2Options{4, 1.0, 4, 1});
    auto x = random_vector<Complex>(n, 12);
    const Eigen::VectorXcd exact = dense * x;
    CHECK((h2.apply(x) - exact).norm() / exact.norm() < 1e-3);
  }
}
