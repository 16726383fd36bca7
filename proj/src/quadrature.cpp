#include "h2dist/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace h2dist {

GaussRule gauss_legendre(int points) {
  if (points < 1) throw std::invalid_argument("gauss_legendre: need at least one point");
  GaussRule rule;
  rule.nodes.resize(points);
  rule.weights.resize(points);
  const int n = points;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Newton iteration on P_n starting from the Chebyshev-like initial guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // map [-1, 1] -> [0, 1]
    rule.nodes[i] = 0.5 * (1.0 - x);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = 0.5 * w;
    rule.weights[n - 1 - i] = 0.5 * w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.5;
  return rule;
}

TriangleQuadRule triangle_rule(int order) {
  if (order < 1) throw std::invalid_argument("triangle_rule: order must be positive");
  TriangleQuadRule rule;
  rule.order = order;
  rule.line = gauss_legendre(order);
  const auto& g = rule.line;
  for (int a = 0; a < order; ++a) {
    for (int b = 0; b < order; ++b) {
      double u = g.nodes[a];
      double v = g.nodes[b];
      double xi = u;
      double eta = (1.0 - u) * v;
      rule.points.push_back({1.0 - xi - eta, xi, eta});
      // Jacobian (1-u); the factor 2 normalizes the reference area 1/2 to one.
      rule.weights.push_back(2.0 * g.weights[a] * g.weights[b] * (1.0 - u));
    }
  }
  return rule;
}

}  // namespace h2dist
