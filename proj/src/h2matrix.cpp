#include "h2dist/h2matrix.hpp"

#include <string>

#include "h2dist/parallel.hpp"

namespace h2dist {

ClusterBasis build_cluster_basis(const ClusterTree& tree, std::span<const Triangle> triangles, int m,
                                 const TriangleQuadRule& basis_rule) {
  ClusterBasis basis;
  basis.m = m;
  basis.leaf.resize(tree.size());
  basis.transfer.resize(tree.size());
  for (std::uint32_t v = 0; v < tree.size(); ++v) {
    const auto& node = tree[v];
    if (node.parent != kNone) basis.transfer[v] = transfer_matrix(tree[node.parent].box, node.box, m);
    if (node.is_leaf() && !node.indices.empty()) {
      std::vector<Triangle> tris;
      tris.reserve(node.indices.size());
      for (Index i : node.indices) tris.push_back(triangles[i]);
      basis.leaf[v] = leaf_matrix(tris, node.box, m, basis_rule);
    }
  }
  return basis;
}

template <class Scalar>
std::vector<Vector<Scalar>> gather_leaf_inputs(const ClusterTree& tree, const Vector<Scalar>& x) {
  std::vector<Vector<Scalar>> out(tree.size());
  for (std::uint32_t v = 0; v < tree.size(); ++v) {
    const auto& node = tree[v];
    if (!node.is_leaf()) continue;
    Vector<Scalar> xs(static_cast<Eigen::Index>(node.indices.size()));
    for (std::size_t i = 0; i < node.indices.size(); ++i) xs[static_cast<Eigen::Index>(i)] = x[node.indices[i]];
    out[v] = std::move(xs);
  }
  return out;
}

template <class Scalar>
void forward(const ClusterTree& tree, const ClusterBasis& basis, std::uint32_t node, const Vector<Scalar>& x,
             CoefficientMap<Scalar>& xhat) {
  const auto& c = tree[node];
  if (c.is_leaf()) {
    Vector<Scalar> xs(static_cast<Eigen::Index>(c.indices.size()));
    for (std::size_t i = 0; i < c.indices.size(); ++i) xs[static_cast<Eigen::Index>(i)] = x[c.indices[i]];
    xhat[node] = basis.leaf[node].transpose() * xs;
    return;
  }
  xhat[node] = Vector<Scalar>::Zero(basis.rank());
  for (auto child : c.children) {
    forward(tree, basis, child, x, xhat);
    Vector<Scalar> tmp = basis.transfer[child].transpose() * xhat[child];
    xhat[node] += tmp;
  }
}

template <class Scalar>
void backward(const ClusterTree& tree, const ClusterBasis& basis, std::uint32_t node, CoefficientMap<Scalar>& yhat,
              Vector<Scalar>& y) {
  const auto& c = tree[node];
  if (c.is_leaf()) {
    Vector<Scalar> tmp = basis.leaf[node] * yhat[node];
    for (std::size_t i = 0; i < c.indices.size(); ++i) y[c.indices[i]] += tmp[static_cast<Eigen::Index>(i)];
    return;
  }
  for (auto child : c.children) {
    Vector<Scalar> tmp = basis.transfer[child] * yhat[node];
    yhat[child] += tmp;
    backward(tree, basis, child, yhat, y);
  }
}

template <class Scalar>
void interaction(const BlockTree& blocks, std::uint32_t block, const BlockData<Scalar>& data,
                 const ClusterTree& rows, const CoefficientMap<Scalar>& xhat,
                 const std::vector<Vector<Scalar>>& xleaf, CoefficientMap<Scalar>& yhat, Vector<Scalar>& y,
                 const std::vector<std::uint8_t>* row_filter) {
  const auto& b = blocks[block];
  switch (b.status) {
    case BlockStatus::subdivided:
      for (auto child : b.children) interaction(blocks, child, data, rows, xhat, xleaf, yhat, y, row_filter);
      return;
    case BlockStatus::admissible: {
      if (row_filter && !(*row_filter)[b.row]) return;
      Vector<Scalar> tmp = data.coupling[block] * xhat[b.col];
      yhat[b.row] += tmp;
      return;
    }
    case BlockStatus::inadmissible: {
      if (row_filter && !(*row_filter)[b.row]) return;
      Vector<Scalar> tmp = data.nearfield[block] * xleaf[b.col];
      const auto& idx = rows[b.row].indices;
      for (std::size_t i = 0; i < idx.size(); ++i) y[idx[i]] += tmp[static_cast<Eigen::Index>(i)];
      return;
    }
    case BlockStatus::pending:
    case BlockStatus::foreign:
      return;
  }
}

template <class Scalar>
void H2Matrix<Scalar>::mvm(const Vector<Scalar>& x, Vector<Scalar>& y) const {
  if (static_cast<std::size_t>(x.size()) != cols() || static_cast<std::size_t>(y.size()) != rows()) {
    throw DimensionError("H2Matrix::mvm: expected x of length " + std::to_string(cols()) + " and y of length " +
                         std::to_string(rows()));
  }
  const auto& cbasis = column_basis();
  CoefficientMap<Scalar> xhat(col_tree->size());
  forward(*col_tree, cbasis, ClusterTree::root(), x, xhat);
  auto xleaf = gather_leaf_inputs(*col_tree, x);
  CoefficientMap<Scalar> yhat(row_tree->size(), Vector<Scalar>::Zero(row_basis.rank()));
  interaction(blocks, BlockTree::root(), data, *row_tree, xhat, xleaf, yhat, y);
  backward(*row_tree, row_basis, ClusterTree::root(), yhat, y);
}

template <class Scalar>
Vector<Scalar> H2Matrix<Scalar>::apply(const Vector<Scalar>& x) const {
  Vector<Scalar> y = Vector<Scalar>::Zero(static_cast<Eigen::Index>(rows()));
  mvm(x, y);
  return y;
}

namespace {

void count_basis(const ClusterBasis& basis, StorageCensus& census) {
  for (const auto& v : basis.leaf) census.leaf_basis += static_cast<std::size_t>(v.size());
  for (const auto& e : basis.transfer) census.transfer += static_cast<std::size_t>(e.size());
}

}  // namespace

template <class Scalar>
StorageCensus H2Matrix<Scalar>::census() const {
  StorageCensus census;
  count_basis(row_basis, census);
  if (!shares_basis()) count_basis(col_basis, census);
  for (std::uint32_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].status == BlockStatus::admissible) {
      ++census.admissible_leaves;
      census.coupling += static_cast<std::size_t>(data.coupling[b].size());
    } else if (blocks[b].status == BlockStatus::inadmissible) {
      ++census.inadmissible_leaves;
      census.nearfield += static_cast<std::size_t>(data.nearfield[b].size());
    }
  }
  return census;
}

template <class Scalar>
H2Matrix<Scalar> assemble_h2(const TriangleMesh& mesh, const KernelSpec& kernel,
                             std::shared_ptr<const ClusterTree> row_tree, std::shared_ptr<const ClusterTree> col_tree,
                             BlockTree blocks, const H2Options& options) {
  const auto triangles = mesh.all_triangles();
  const auto rule = triangle_rule(options.quadrature_order);
  const auto basis_rule = triangle_rule(basis_rule_order(options.m, options.quadrature_order));

  H2Matrix<Scalar> h2;
  h2.row_tree = std::move(row_tree);
  h2.col_tree = std::move(col_tree);
  h2.blocks = std::move(blocks);
  h2.row_basis = build_cluster_basis(*h2.row_tree, triangles, options.m, basis_rule);
  if (!h2.shares_basis()) h2.col_basis = build_cluster_basis(*h2.col_tree, triangles, options.m, basis_rule);

  h2.data.resize(h2.blocks.size());
  const auto leaves = h2.blocks.leaves();
  parallel_for(leaves.size(), options.threads, [&](std::size_t i) {
    const auto b = leaves[i];
    const auto& blk = h2.blocks[b];
    const auto& tau = (*h2.row_tree)[blk.row];
    const auto& sigma = (*h2.col_tree)[blk.col];
    if (blk.status == BlockStatus::admissible) {
      h2.data.coupling[b] = coupling_matrix<Scalar>(kernel, tau.box, sigma.box, options.m);
    } else {
      std::vector<Triangle> rt, ct;
      for (Index r : tau.indices) rt.push_back(triangles[r]);
      for (Index c : sigma.indices) ct.push_back(triangles[c]);
      h2.data.nearfield[b] = galerkin_block<Scalar>(rt, tau.indices, ct, sigma.indices, kernel, rule);
    }
  });
  return h2;
}

template <class Scalar>
H2Matrix<Scalar> assemble_h2(const TriangleMesh& mesh, const KernelSpec& kernel,
                             std::shared_ptr<const ClusterTree> row_tree, std::shared_ptr<const ClusterTree> col_tree,
                             const H2Options& options) {
  auto blocks = build_block_tree(*row_tree, *col_tree, options.eta);
  return assemble_h2<Scalar>(mesh, kernel, std::move(row_tree), std::move(col_tree), std::move(blocks), options);
}

#define H2DIST_INSTANTIATE(S)                                                                                      \
  template std::vector<Vector<S>> gather_leaf_inputs<S>(const ClusterTree&, const Vector<S>&);                     \
  template void forward<S>(const ClusterTree&, const ClusterBasis&, std::uint32_t, const Vector<S>&,               \
                           CoefficientMap<S>&);                                                                    \
  template void backward<S>(const ClusterTree&, const ClusterBasis&, std::uint32_t, CoefficientMap<S>&,            \
                            Vector<S>&);                                                                           \
  template void interaction<S>(const BlockTree&, std::uint32_t, const BlockData<S>&, const ClusterTree&,          \
                               const CoefficientMap<S>&, const std::vector<Vector<S>>&, CoefficientMap<S>&,        \
                               Vector<S>&, const std::vector<std::uint8_t>*);                                      \
  template class H2Matrix<S>;                                                                                      \
  template H2Matrix<S> assemble_h2<S>(const TriangleMesh&, const KernelSpec&, std::shared_ptr<const ClusterTree>, \
                                      std::shared_ptr<const ClusterTree>, BlockTree, const H2Options&);           \
  template H2Matrix<S> assemble_h2<S>(const TriangleMesh&, const KernelSpec&, std::shared_ptr<const ClusterTree>, \
                                      std::shared_ptr<const ClusterTree>, const H2Options&);
H2DIST_INSTANTIATE(double)
H2DIST_INSTANTIATE(Complex)
#undef H2DIST_INSTANTIATE

}  // namespace h2dist
