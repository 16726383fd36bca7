#include "h2dist/interpolation.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace h2dist {

namespace {

void check_order(int m) {
  if (m < 1) throw std::invalid_argument("interpolation order must be at least 1, got " + std::to_string(m));
}

// Per-axis nodes mapped to the interpolation box: nodes[axis][i].
std::array<std::vector<double>, 3> axis_nodes(const Box& box, int m) {
  const Box ib = interpolation_box(box);
  const auto roots = chebyshev_roots(m);
  std::array<std::vector<double>, 3> nodes;
  for (int d = 0; d < 3; ++d) {
    const double mid = 0.5 * (ib.lo[d] + ib.hi[d]);
    const double half = 0.5 * (ib.hi[d] - ib.lo[d]);
    nodes[d].resize(m);
    for (int i = 0; i < m; ++i) nodes[d][i] = mid + half * roots[i];
  }
  return nodes;
}

double lagrange_1d(const std::vector<double>& nodes, int i, double t) {
  double value = 1.0;
  for (int j = 0; j < static_cast<int>(nodes.size()); ++j) {
    if (j != i) value *= (t - nodes[j]) / (nodes[i] - nodes[j]);
  }
  return value;
}

Eigen::VectorXd values_from_nodes(const std::array<std::vector<double>, 3>& nodes, int m, const Vec3& x) {
  Eigen::MatrixXd factors(3, m);
  for (int d = 0; d < 3; ++d) {
    for (int i = 0; i < m; ++i) factors(d, i) = lagrange_1d(nodes[d], i, x[d]);
  }
  Eigen::VectorXd out(m * m * m);
  for (int i1 = 0; i1 < m; ++i1) {
    for (int i2 = 0; i2 < m; ++i2) {
      for (int i3 = 0; i3 < m; ++i3) out((i1 * m + i2) * m + i3) = factors(0, i1) * factors(1, i2) * factors(2, i3);
    }
  }
  return out;
}

std::vector<Vec3> points_from_nodes(const std::array<std::vector<double>, 3>& nodes, int m) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(m) * m * m);
  for (int i1 = 0; i1 < m; ++i1) {
    for (int i2 = 0; i2 < m; ++i2) {
      for (int i3 = 0; i3 < m; ++i3) pts.emplace_back(nodes[0][i1], nodes[1][i2], nodes[2][i3]);
    }
  }
  return pts;
}

}  // namespace

InterpolationScheme::InterpolationScheme(int order) : m(order) { check_order(order); }

std::vector<double> chebyshev_roots(int m) {
  check_order(m);
  std::vector<double> roots(m);
  // cos((2i+1)pi/(2m)) descends in i; store ascending.
  for (int i = 0; i < m; ++i) roots[m - 1 - i] = std::cos((2.0 * i + 1.0) * std::numbers::pi / (2.0 * m));
  if (m % 2 == 1) roots[m / 2] = 0.0;
  return roots;
}

Box interpolation_box(const Box& box) {
  Box out = box;
  const double widest = std::max({box.extent(0), box.extent(1), box.extent(2)});
  const double pad = widest > 0.0 ? 1e-3 * widest : 1e-6;
  for (int d = 0; d < 3; ++d) {
    if (box.extent(d) <= 1e-12 * widest || box.extent(d) == 0.0) {
      out.lo[d] = box.lo[d] - pad;
      out.hi[d] = box.hi[d] + pad;
    }
  }
  return out;
}

std::vector<Vec3> interpolation_points(const Box& box, int m) { return points_from_nodes(axis_nodes(box, m), m); }

double lagrange_eval(const Box& box, int m, int nu, const Vec3& x) {
  check_order(m);
  if (nu < 0 || nu >= m * m * m) throw std::out_of_range("lagrange_eval: point index " + std::to_string(nu));
  const auto nodes = axis_nodes(box, m);
  const int i3 = nu % m;
  const int i2 = (nu / m) % m;
  const int i1 = nu / (m * m);
  return lagrange_1d(nodes[0], i1, x[0]) * lagrange_1d(nodes[1], i2, x[1]) * lagrange_1d(nodes[2], i3, x[2]);
}

Eigen::VectorXd lagrange_values(const Box& box, int m, const Vec3& x) {
  return values_from_nodes(axis_nodes(box, m), m, x);
}

Eigen::MatrixXd transfer_matrix(const Box& parent, const Box& child, int m) {
  const auto parent_nodes = axis_nodes(parent, m);
  const auto child_points = interpolation_points(child, m);
  const int k = m * m * m;
  Eigen::MatrixXd e(k, k);
  for (int row = 0; row < k; ++row) e.row(row) = values_from_nodes(parent_nodes, m, child_points[row]).transpose();
  return e;
}

template <class Scalar>
Matrix<Scalar> coupling_matrix(const KernelSpec& kernel, const Box& row, const Box& col, int m) {
  const auto xs = interpolation_points(row, m);
  const auto ys = interpolation_points(col, m);
  Matrix<Scalar> s(xs.size(), ys.size());
  for (std::size_t a = 0; a < xs.size(); ++a) {
    for (std::size_t b = 0; b < ys.size(); ++b) s(a, b) = kernel_value<Scalar>(kernel, xs[a], ys[b]);
  }
  return s;
}

int basis_rule_order(int m, int quadrature_order) {
  check_order(m);
  return std::max(quadrature_order, (3 * m) / 2);
}

Eigen::MatrixXd leaf_matrix(std::span<const Triangle> triangles, const Box& box, int m,
                            const TriangleQuadRule& rule) {
  const auto nodes = axis_nodes(box, m);
  const int k = m * m * m;
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(triangles.size()), k);
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    const Triangle& t = triangles[i];
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(k);
    for (int q = 0; q < rule.size(); ++q) acc += rule.weights[q] * values_from_nodes(nodes, m, t.at(rule.points[q]));
    v.row(static_cast<Eigen::Index>(i)) = t.area() * acc.transpose();
  }
  return v;
}

template Matrix<double> coupling_matrix<double>(const KernelSpec&, const Box&, const Box&, int);
template Matrix<Complex> coupling_matrix<Complex>(const KernelSpec&, const Box&, const Box&, int);

}  // namespace h2dist
