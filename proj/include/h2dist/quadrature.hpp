#pragma once

#include <array>
#include <vector>

namespace h2dist {

// Gauss-Legendre rule on [0, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int size() const { return static_cast<int>(nodes.size()); }
};

GaussRule gauss_legendre(int points);

// Area-normalized rule on the reference triangle: weights sum to one and
// points are barycentric coordinates.  Built as a collapsed (Duffy) product of
// two `order`-point Gauss-Legendre rules, which is exact for total degree
// 2*order - 2.
struct TriangleQuadRule {
  int order = 0;
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;
  GaussRule line;  // the 1D factor, reused by the singular rules

  int degree() const { return 2 * order - 2; }
  int size() const { return static_cast<int>(weights.size()); }
};

TriangleQuadRule triangle_rule(int order);

}  // namespace h2dist
