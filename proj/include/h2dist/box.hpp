#pragma once

#include <algorithm>
#include <cmath>

#include "h2dist/types.hpp"

namespace h2dist {

// Axis-parallel box given by its min and max corners.
struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  static Box around(const Vec3& p) { return {p, p}; }

  Vec3 center() const { return 0.5 * (lo + hi); }
  double extent(int axis) const { return hi[axis] - lo[axis]; }

  // Euclidean length of the diagonal.
  double diameter() const { return (hi - lo).norm(); }

  // Euclidean distance between the nearest points; zero iff the boxes intersect.
  double distance(const Box& other) const {
    double sum = 0.0;
    for (int d = 0; d < 3; ++d) {
      double gap = std::max({0.0, other.lo[d] - hi[d], lo[d] - other.hi[d]});
      sum += gap * gap;
    }
    return std::sqrt(sum);
  }

  bool contains(const Box& inner) const {
    return (lo.array() <= inner.lo.array()).all() && (inner.hi.array() <= hi.array()).all();
  }
  bool contains(const Vec3& p) const {
    return (lo.array() <= p.array()).all() && (p.array() <= hi.array()).all();
  }

  void expand(const Box& other) {
    lo = lo.cwiseMin(other.lo);
    hi = hi.cwiseMax(other.hi);
  }
  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }

  // First axis whose extent is within a relative 1e-9 of the largest one, so that
  // round-off between nearly equal extents does not flip the choice.
  int longest_axis() const {
    double widest = std::max({extent(0), extent(1), extent(2)});
    for (int d = 0; d < 3; ++d) {
      if (extent(d) >= widest * (1.0 - 1e-9)) return d;
    }
    return 0;
  }

  bool operator==(const Box& other) const { return lo == other.lo && hi == other.hi; }
};

}  // namespace h2dist
