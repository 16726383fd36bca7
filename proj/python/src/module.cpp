#include <map>
#include <memory>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "h2dist/bench.hpp"
#include "h2dist/distributed.hpp"
#include "h2dist/shared.hpp"

namespace py = pybind11;
using namespace h2dist;

namespace {

using Settings = std::map<std::string, std::string>;

bench::RunConfig make_config(const Settings& settings) {
  bench::RunConfig c;
  for (const auto& [k, v] : settings) bench::apply_setting(c, k, v);
  return c;
}

template <class Scalar>
Vector<Scalar> product(const bench::RunConfig& c, const TriangleMesh& mesh, const Vector<Scalar>& x) {
  const auto kernel = c.kernel_spec();
  const auto options = c.h2_options();
  switch (c.variant) {
    case bench::Variant::dense: {
      DenseOptions d;
      d.threads = c.threads;
      return assemble_dense<Scalar>(mesh, kernel, triangle_rule(c.quadrature_order), d) * x;
    }
    case bench::Variant::h2: {
      std::vector<Vec3> points;
      std::vector<Box> supports;
      for (Index i = 0; i < mesh.size(); ++i) {
        points.push_back(mesh.centroid(i));
        supports.push_back(mesh.support(i));
      }
      auto tree = std::make_shared<const ClusterTree>(build_cluster_tree(points, supports, {c.leaf_limit}));
      return assemble_h2<Scalar>(mesh, kernel, tree, tree, options).apply(x);
    }
    case bench::Variant::distributed: {
      DistributedRunOptions o;
      o.p = c.p;
      o.cluster.leaf_limit = c.leaf_limit;
      o.h2 = options;
      return simulate_distributed<Scalar>(mesh, kernel, x, o).y;
    }
    case bench::Variant::shared: {
      SharedRunOptions o;
      o.p = c.p;
      o.cluster.leaf_limit = c.leaf_limit;
      o.h2 = options;
      o.fanout = c.fanout;
      return simulate_shared<Scalar>(mesh, kernel, x, o).y;
    }
  }
  throw Error("unknown variant");
}

py::object matvec(const Eigen::VectorXcd& x, const Settings& settings) {
  const auto c = make_config(settings);
  bench::validate(c);
  const auto mesh = build_sphere_mesh(c.level);
  if (static_cast<std::size_t>(x.size()) != mesh.size()) {
    throw DimensionError("x has length " + std::to_string(x.size()) + ", the level-" + std::to_string(c.level) +
                         " sphere has " + std::to_string(mesh.size()) + " basis functions");
  }
  py::gil_scoped_release release;
  if (c.kernel_spec().is_real()) {
    if (x.imag().cwiseAbs().maxCoeff() != 0.0) throw DimensionError("complex input needs the helmholtz kernel");
    Eigen::VectorXd y = product<double>(c, mesh, x.real());
    py::gil_scoped_acquire acquire;
    return py::cast(y);
  }
  Eigen::VectorXcd y = product<Complex>(c, mesh, x);
  py::gil_scoped_acquire acquire;
  return py::cast(y);
}

py::object dense_matrix(const Settings& settings) {
  const auto c = make_config(settings);
  const auto mesh = build_sphere_mesh(c.level);
  if (mesh.size() > DenseOptions{}.max_size) throw bench::ConfigError("dense matrix too large");
  const auto rule = triangle_rule(c.quadrature_order);
  if (c.kernel_spec().is_real()) return py::cast(assemble_dense<double>(mesh, c.kernel_spec(), rule));
  return py::cast(assemble_dense<Complex>(mesh, c.kernel_spec(), rule));
}

py::tuple sphere_mesh(int level) {
  const auto mesh = build_sphere_mesh(level);
  py::array_t<double> vertices({static_cast<py::ssize_t>(mesh.vertices().size()), py::ssize_t{3}});
  py::array_t<std::uint32_t> triangles({static_cast<py::ssize_t>(mesh.size()), py::ssize_t{3}});
  auto v = vertices.mutable_unchecked<2>();
  auto t = triangles.mutable_unchecked<2>();
  for (std::size_t i = 0; i < mesh.vertices().size(); ++i)
    for (int k = 0; k < 3; ++k) v(i, k) = mesh.vertices()[i][k];
  for (std::size_t i = 0; i < mesh.size(); ++i)
    for (int k = 0; k < 3; ++k) t(i, k) = mesh.triangles()[i][k];
  return py::make_tuple(vertices, triangles);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "H2-matrix compression of Galerkin boundary element matrices on the unit sphere";

  py::register_exception<bench::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  m.def("setting_keys", &bench::setting_keys);
  m.def("sphere_mesh", &sphere_mesh, py::arg("level"), "Vertices (nv, 3) and triangles (n, 3) of the refined octahedron.");
  m.def("matvec", &matvec, py::arg("x"), py::arg("settings"), "y = G x for the configured variant.");
  m.def("dense_matrix", &dense_matrix, py::arg("settings"));
  m.def(
      "run_json",
      [](const Settings& settings, bool with_timing) {
        const auto c = make_config(settings);
        py::gil_scoped_release release;
        return bench::run(c).to_json(with_timing).dump();
      },
      py::arg("settings"), py::arg("with_timing") = true);
  m.def(
      "sweep_json",
      [](const Settings& settings, const std::string& axis, const std::vector<double>& values) {
        const auto c = make_config(settings);
        const auto a = bench::parse_axis(axis);
        py::gil_scoped_release release;
        const auto result = bench::sweep(c, a, values);
        return std::make_pair(result.to_json().dump(), result.to_csv());
      },
      py::arg("settings"), py::arg("axis"), py::arg("values"));
  m.def(
      "dump_trees_json", [](const Settings& settings) { return bench::dump_trees(make_config(settings)).dump(); },
      py::arg("settings"));
}
