#pragma once

#include <array>
#include <span>
#include <vector>

#include "h2dist/box.hpp"
#include "h2dist/geometry.hpp"
#include "h2dist/quadrature.hpp"
#include "h2dist/types.hpp"

namespace h2dist {

// Tensor Chebyshev interpolation of order m per axis, rank k = m^3.  Point
// nu = (i1 * m + i2) * m + i3 sits at the i-th root along each axis, roots in
// ascending order.
struct InterpolationScheme {
  int m = 4;

  explicit InterpolationScheme(int order = 4);
  int rank() const { return m * m * m; }
};

// Roots of the degree-m Chebyshev polynomial on [-1, 1], ascending.
std::vector<double> chebyshev_roots(int m);

// The box the interpolation grid is mapped to: the cluster box with
// zero-extent axes widened symmetrically so the Lagrange factors stay finite.
Box interpolation_box(const Box& box);

std::vector<Vec3> interpolation_points(const Box& box, int m);

// l_nu(x) for one point index; throws std::out_of_range for nu >= m^3.
double lagrange_eval(const Box& box, int m, int nu, const Vec3& x);

// All k Lagrange values at x, in point order.
Eigen::VectorXd lagrange_values(const Box& box, int m, const Vec3& x);

// E(nu', nu) = l_{parent,nu}(xi_{child,nu'}).
Eigen::MatrixXd transfer_matrix(const Box& parent, const Box& child, int m);

// S(nu, mu) = g(xi_{row,nu}, xi_{col,mu}).
template <class Scalar>
Matrix<Scalar> coupling_matrix(const KernelSpec& kernel, const Box& row, const Box& col, int m);

// Order of the regular rule used for leaf matrices: the Lagrange functions have
// total degree 3(m-1) on a flat triangle, so the rule is raised until exact.
int basis_rule_order(int m, int quadrature_order);

// V(i, nu) = integral of l_nu over triangle i (rows in the given triangle order).
Eigen::MatrixXd leaf_matrix(std::span<const Triangle> triangles, const Box& box, int m,
                            const TriangleQuadRule& rule);

}  // namespace h2dist
