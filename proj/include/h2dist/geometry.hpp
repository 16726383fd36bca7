#pragma once

#include <array>
#include <span>
#include <vector>

#include "h2dist/box.hpp"
#include "h2dist/quadrature.hpp"
#include "h2dist/types.hpp"

namespace h2dist {

struct Triangle {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  Vec3 c = Vec3::Zero();

  double area() const { return 0.5 * (b - a).cross(c - a).norm(); }
  Vec3 centroid() const { return (a + b + c) / 3.0; }
  Vec3 at(const std::array<double, 3>& bary) const { return bary[0] * a + bary[1] * b + bary[2] * c; }
  const Vec3& vertex(int k) const { return k == 0 ? a : (k == 1 ? b : c); }
  Box bounds() const {
    Box box = Box::around(a);
    box.expand(b);
    box.expand(c);
    return box;
  }
};

// Closed surface triangulation with one piecewise-constant basis function per
// triangle; basis index == triangle index.
class TriangleMesh {
 public:
  TriangleMesh() = default;
  // Validates distinct in-range vertex indices and positive areas.
  TriangleMesh(std::vector<Vec3> vertices, std::vector<std::array<Index, 3>> triangles);

  std::size_t size() const { return triangles_.size(); }
  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<Index, 3>>& triangles() const { return triangles_; }

  Triangle triangle(Index i) const;
  std::vector<Triangle> all_triangles() const;
  Vec3 centroid(Index i) const { return triangle(i).centroid(); }
  Box support(Index i) const { return triangle(i).bounds(); }

 private:
  std::vector<Vec3> vertices_;
  std::vector<std::array<Index, 3>> triangles_;
};

inline constexpr int kMaxSphereLevel = 10;

// Octahedron refined `level` times by edge-midpoint quadrisection with new
// vertices projected to the unit sphere: 8 * 4^level triangles.
TriangleMesh build_sphere_mesh(int level);

enum class KernelKind { laplace, helmholtz };

struct KernelSpec {
  KernelKind kind = KernelKind::laplace;
  double wavenumber = 0.0;

  static KernelSpec laplace() { return {}; }
  static KernelSpec helmholtz(double kappa) { return {KernelKind::helmholtz, kappa}; }
  // True when the kernel takes only real values (Laplace, or Helmholtz with kappa = 0).
  bool is_real() const { return kind == KernelKind::laplace || wavenumber == 0.0; }
};

// Laplace 1/(4 pi r), Helmholtz exp(i kappa r)/(4 pi r).  Throws SingularityError for x == y.
Complex kernel_eval(const KernelSpec& kernel, const Vec3& x, const Vec3& y);

// Kernel value in the requested scalar type; the real instantiation rejects
// kernels with a nonzero imaginary part.
template <class Scalar>
Scalar kernel_value(const KernelSpec& kernel, const Vec3& x, const Vec3& y);

// Number of vertices the two triangles have in common, compared by exact coordinates.
int shared_vertex_count(const Triangle& s, const Triangle& t);

// Galerkin entry for piecewise-constant test/trial functions.  The pair is
// evaluated in a canonical order (smaller global index as the outer integral) so
// that G is exactly symmetric.  Disjoint pairs use the tensor rule; pairs
// sharing a vertex, an edge or the whole triangle use a Duffy-regularized inner
// integral split at the point of the inner triangle closest to each outer node.
template <class Scalar>
Scalar galerkin_entry(const Triangle& ti, Index i, const Triangle& tj, Index j, const KernelSpec& kernel,
                      const TriangleQuadRule& rule);

template <class Scalar>
Scalar galerkin_entry(const TriangleMesh& mesh, const KernelSpec& kernel, Index i, Index j,
                      const TriangleQuadRule& rule);

// Dense block over the given rows and columns.
template <class Scalar>
Matrix<Scalar> galerkin_block(std::span<const Triangle> row_triangles, std::span<const Index> row_ids,
                              std::span<const Triangle> col_triangles, std::span<const Index> col_ids,
                              const KernelSpec& kernel, const TriangleQuadRule& rule);

struct DenseOptions {
  std::size_t max_size = 8192;
  bool allow_oversize = false;
  int threads = 1;
};

template <class Scalar>
Matrix<Scalar> assemble_dense(const TriangleMesh& mesh, const KernelSpec& kernel, const TriangleQuadRule& rule,
                              const DenseOptions& options = {});

}  // namespace h2dist
