#pragma once
// Shared fixtures and independent oracles for the test suites.

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "h2dist/clustering.hpp"
#include "h2dist/geometry.hpp"
#include "h2dist/h2matrix.hpp"
#include "h2dist/interpolation.hpp"

namespace h2test {

using namespace h2dist;

struct SphereProblem {
  TriangleMesh mesh;
  std::vector<Vec3> centroids;
  std::vector<Box> supports;
};

inline SphereProblem sphere(int level) {
  SphereProblem p{build_sphere_mesh(level), {}, {}};
  for (Index i = 0; i < p.mesh.size(); ++i) {
    p.centroids.push_back(p.mesh.centroid(i));
    p.supports.push_back(p.mesh.support(i));
  }
  return p;
}

inline std::shared_ptr<const ClusterTree> sphere_tree(const SphereProblem& p, std::size_t leaf_limit = 16) {
  return std::make_shared<const ClusterTree>(build_cluster_tree(p.centroids, p.supports, {leaf_limit}));
}

template <class Scalar = double>
Vector<Scalar> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector<Scalar> x(static_cast<Eigen::Index>(n));
  for (auto& v : x) {
    if constexpr (is_complex_v<Scalar>) {
      double re = dist(rng);
      v = Scalar(re, dist(rng));
    } else {
      v = dist(rng);
    }
  }
  return x;
}

inline double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / b.norm(); }

// Integral of f over a triangle by uniform refinement into 4^depth pieces with a
// high-order rule on each piece.
template <class F>
double refined_integral(const Triangle& t, F&& f, int depth, int order) {
  if (depth == 0) {
    const auto rule = triangle_rule(order);
    double sum = 0.0;
    for (int q = 0; q < rule.size(); ++q) sum += rule.weights[q] * f(t.at(rule.points[q]));
    return sum * t.area();
  }
  const Vec3 ab = 0.5 * (t.a + t.b), bc = 0.5 * (t.b + t.c), ca = 0.5 * (t.c + t.a);
  return refined_integral(Triangle{t.a, ab, ca}, f, depth - 1, order) +
         refined_integral(Triangle{ab, t.b, bc}, f, depth - 1, order) +
         refined_integral(Triangle{ca, bc, t.c}, f, depth - 1, order) +
         refined_integral(Triangle{bc, ca, ab}, f, depth - 1, order);
}

// V for an arbitrary cluster assembled directly over all its indices.
inline Eigen::MatrixXd direct_cluster_matrix(const TriangleMesh& mesh, const ClusterNode& c, int m, int order) {
  std::vector<Triangle> tris;
  for (Index i : c.indices) tris.push_back(mesh.triangle(i));
  return leaf_matrix(tris, c.box, m, triangle_rule(order));
}

// Bitset cover check of leaf blocks against I x J, written independently of the library checker.
inline bool leaves_partition(const ClusterTree& rows, const ClusterTree& cols, const BlockTree& blocks) {
  const std::size_t nr = rows[0].indices.size(), nc = cols[0].indices.size();
  std::vector<int> hits(nr * nc, 0);
  for (std::uint32_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    if (blk.status != BlockStatus::admissible && blk.status != BlockStatus::inadmissible) continue;
    for (Index i : rows[blk.row].indices)
      for (Index j : cols[blk.col].indices) ++hits[i * nc + j];
  }
  for (int h : hits)
    if (h != 1) return false;
  return true;
}

}  // namespace h2test
