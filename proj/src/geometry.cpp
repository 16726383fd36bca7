#include "h2dist/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

namespace h2dist {

namespace {

constexpr double kInvFourPi = 1.0 / (4.0 * std::numbers::pi);

// Closest point of triangle t to p (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_point(const Triangle& t, const Vec3& p) {
  const Vec3 ab = t.b - t.a;
  const Vec3 ac = t.c - t.a;
  const Vec3 ap = p - t.a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return t.a;
  const Vec3 bp = p - t.b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return t.b;
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return t.a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - t.c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return t.c;
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return t.a + (d2 / (d2 - d6)) * ac;
  double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return t.b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (t.c - t.b);
  }
  double denom = 1.0 / (va + vb + vc);
  return t.a + ab * (vb * denom) + ac * (vc * denom);
}

template <class Scalar>
Scalar regular_pair(const Triangle& s, const Triangle& t, const KernelSpec& kernel, const TriangleQuadRule& rule) {
  const int q = rule.size();
  std::vector<Vec3> xs(q), ys(q);
  for (int a = 0; a < q; ++a) {
    xs[a] = s.at(rule.points[a]);
    ys[a] = t.at(rule.points[a]);
  }
  Scalar sum = 0.0;
  for (int a = 0; a < q; ++a) {
    Scalar inner = 0.0;
    for (int b = 0; b < q; ++b) inner += rule.weights[b] * kernel_value<Scalar>(kernel, xs[a], ys[b]);
    sum += rule.weights[a] * inner;
  }
  return sum * (s.area() * t.area());
}

// Integral of g(x, .) over t, split into sub-triangles with apex at the point of t
// nearest to x; the Duffy map of each sub-triangle cancels the 1/r singularity.
template <class Scalar>
Scalar duffy_inner(const Vec3& x, const Triangle& t, const KernelSpec& kernel, const GaussRule& line) {
  const Vec3 apex = closest_point(t, x);
  const double tiny = 1e-14 * t.area();
  Scalar total = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Vec3& p1 = t.vertex(k);
    const Vec3& p2 = t.vertex((k + 1) % 3);
    double sub_area = 0.5 * (p1 - apex).cross(p2 - apex).norm();
    if (sub_area <= tiny) continue;
    Scalar part = 0.0;
    for (int a = 0; a < line.size(); ++a) {
      double u = line.nodes[a];
      Scalar row = 0.0;
      for (int b = 0; b < line.size(); ++b) {
        double v = line.nodes[b];
        Vec3 y = apex + u * (p1 - apex) + (u * v) * (p2 - p1);
        row += line.weights[b] * kernel_value<Scalar>(kernel, x, y);
      }
      part += line.weights[a] * u * row;
    }
    total += part * (2.0 * sub_area);
  }
  return total;
}

template <class Scalar>
Scalar singular_pair(const Triangle& s, const Triangle& t, const KernelSpec& kernel, const TriangleQuadRule& rule) {
  Scalar sum = 0.0;
  for (int a = 0; a < rule.size(); ++a) {
    sum += rule.weights[a] * duffy_inner<Scalar>(s.at(rule.points[a]), t, kernel, rule.line);
  }
  return sum * s.area();
}

}  // namespace

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<std::array<Index, 3>> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const auto& tri = triangles_[t];
    for (Index v : tri) {
      if (v >= vertices_.size()) throw std::invalid_argument("triangle " + std::to_string(t) + ": vertex out of range");
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw std::invalid_argument("triangle " + std::to_string(t) + ": repeated vertex");
    }
    if (!(triangle(static_cast<Index>(t)).area() > 0.0)) {
      throw std::invalid_argument("triangle " + std::to_string(t) + ": zero area");
    }
  }
}

Triangle TriangleMesh::triangle(Index i) const {
  const auto& tri = triangles_.at(i);
  return {vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]};
}

std::vector<Triangle> TriangleMesh::all_triangles() const {
  std::vector<Triangle> out;
  out.reserve(size());
  for (Index i = 0; i < size(); ++i) out.push_back(triangle(i));
  return out;
}

TriangleMesh build_sphere_mesh(int level) {
  if (level < 0) throw std::invalid_argument("build_sphere_mesh: negative level");
  if (level > kMaxSphereLevel) {
    throw CapacityError("build_sphere_mesh: level " + std::to_string(level) + " exceeds cap " +
                        std::to_string(kMaxSphereLevel));
  }
  std::vector<Vec3> vertices = {Vec3(1, 0, 0),  Vec3(-1, 0, 0), Vec3(0, 1, 0),
                                Vec3(0, -1, 0), Vec3(0, 0, 1),  Vec3(0, 0, -1)};
  std::vector<std::array<Index, 3>> triangles = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                                                 {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<Index, Index>, Index> midpoints;
    auto midpoint = [&](Index u, Index v) {
      auto key = std::minmax(u, v);
      auto [it, inserted] = midpoints.try_emplace({key.first, key.second}, static_cast<Index>(vertices.size()));
      if (inserted) vertices.push_back((0.5 * (vertices[u] + vertices[v])).normalized());
      return it->second;
    };
    std::vector<std::array<Index, 3>> refined;
    refined.reserve(4 * triangles.size());
    for (const auto& [p, q, r] : triangles) {
      Index pq = midpoint(p, q), qr = midpoint(q, r), rp = midpoint(r, p);
      refined.push_back({p, pq, rp});
      refined.push_back({pq, q, qr});
      refined.push_back({rp, qr, r});
      refined.push_back({pq, qr, rp});
    }
    triangles = std::move(refined);
  }
  return TriangleMesh(std::move(vertices), std::move(triangles));
}

Complex kernel_eval(const KernelSpec& kernel, const Vec3& x, const Vec3& y) {
  double r = (x - y).norm();
  if (r == 0.0) throw SingularityError("kernel evaluated at coincident points");
  if (kernel.kind == KernelKind::laplace) return {kInvFourPi / r, 0.0};
  return std::polar(kInvFourPi / r, kernel.wavenumber * r);
}

template <>
double kernel_value<double>(const KernelSpec& kernel, const Vec3& x, const Vec3& y) {
  if (!kernel.is_real()) throw std::invalid_argument("real kernel_value requested for a complex kernel");
  double r = (x - y).norm();
  if (r == 0.0) throw SingularityError("kernel evaluated at coincident points");
  return kInvFourPi / r;
}

template <>
Complex kernel_value<Complex>(const KernelSpec& kernel, const Vec3& x, const Vec3& y) {
  return kernel_eval(kernel, x, y);
}

int shared_vertex_count(const Triangle& s, const Triangle& t) {
  int count = 0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (s.vertex(a) == t.vertex(b)) {
        ++count;
        break;
      }
    }
  }
  return count;
}

template <class Scalar>
Scalar galerkin_entry(const Triangle& ti, Index i, const Triangle& tj, Index j, const KernelSpec& kernel,
                      const TriangleQuadRule& rule) {
  const Triangle& outer = i <= j ? ti : tj;
  const Triangle& inner = i <= j ? tj : ti;
  if (i == j || shared_vertex_count(outer, inner) > 0) return singular_pair<Scalar>(outer, inner, kernel, rule);
  return regular_pair<Scalar>(outer, inner, kernel, rule);
}

template <class Scalar>
Scalar galerkin_entry(const TriangleMesh& mesh, const KernelSpec& kernel, Index i, Index j,
                      const TriangleQuadRule& rule) {
  if (i >= mesh.size() || j >= mesh.size()) throw std::out_of_range("galerkin_entry: basis index out of range");
  return galerkin_entry<Scalar>(mesh.triangle(i), i, mesh.triangle(j), j, kernel, rule);
}

template <class Scalar>
Matrix<Scalar> galerkin_block(std::span<const Triangle> row_triangles, std::span<const Index> row_ids,
                              std::span<const Triangle> col_triangles, std::span<const Index> col_ids,
                              const KernelSpec& kernel, const TriangleQuadRule& rule) {
  Matrix<Scalar> block(row_ids.size(), col_ids.size());
  for (std::size_t c = 0; c < col_ids.size(); ++c) {
    for (std::size_t r = 0; r < row_ids.size(); ++r) {
      block(r, c) = galerkin_entry<Scalar>(row_triangles[r], row_ids[r], col_triangles[c], col_ids[c], kernel, rule);
    }
  }
  return block;
}

template <class Scalar>
Matrix<Scalar> assemble_dense(const TriangleMesh& mesh, const KernelSpec& kernel, const TriangleQuadRule& rule,
                              const DenseOptions& options) {
  const std::size_t n = mesh.size();
  if (n > options.max_size && !options.allow_oversize) {
    throw CapacityError("assemble_dense: n = " + std::to_string(n) + " exceeds guard " +
                        std::to_string(options.max_size));
  }
  const auto triangles = mesh.all_triangles();
  Matrix<Scalar> dense(n, n);
  // Each entry is computed independently with a fixed summation order, so the
  // row split across threads does not change any value.
  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        dense(i, j) = galerkin_entry<Scalar>(triangles[i], static_cast<Index>(i), triangles[j],
                                             static_cast<Index>(j), kernel, rule);
      }
    }
  };
  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(n)));
  if (threads == 1) {
    fill_rows(0, n);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(fill_rows, n * t / threads, n * (t + 1) / threads);
    for (auto& th : pool) th.join();
  }
  return dense;
}

#define H2DIST_INSTANTIATE(S)                                                                                  \
  template S galerkin_entry<S>(const Triangle&, Index, const Triangle&, Index, const KernelSpec&,            \
                               const TriangleQuadRule&);                                                     \
  template S galerkin_entry<S>(const TriangleMesh&, const KernelSpec&, Index, Index, const TriangleQuadRule&); \
  template Matrix<S> galerkin_block<S>(std::span<const Triangle>, std::span<const Index>,                    \
                                       std::span<const Triangle>, std::span<const Index>, const KernelSpec&,  \
                                       const TriangleQuadRule&);                                              \
  template Matrix<S> assemble_dense<S>(const TriangleMesh&, const KernelSpec&, const TriangleQuadRule&,       \
                                       const DenseOptions&);
H2DIST_INSTANTIATE(double)
H2DIST_INSTANTIATE(Complex)
#undef H2DIST_INSTANTIATE

}  // namespace h2dist
