#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "h2dist/clustering.hpp"
#include "h2dist/geometry.hpp"
#include "h2dist/interpolation.hpp"
#include "h2dist/quadrature.hpp"
#include "h2dist/types.hpp"

namespace h2dist {

// Nested cluster basis over one tree, indexed by arena position.  `leaf` is set
// for leaves with an index set, `transfer` for every node whose transfer matrix
// is stored (all non-root nodes of a sequential tree).
struct ClusterBasis {
  int m = 0;
  std::vector<Eigen::MatrixXd> leaf;
  std::vector<Eigen::MatrixXd> transfer;

  int rank() const { return m * m * m; }
};

// `triangles[i]` is the support of the basis function with tree index i.
ClusterBasis build_cluster_basis(const ClusterTree& tree, std::span<const Triangle> triangles, int m,
                                 const TriangleQuadRule& basis_rule);

template <class Scalar>
using CoefficientMap = std::vector<Vector<Scalar>>;

// Per block-tree node: a coupling matrix for admissible leaves, a dense block
// for inadmissible leaves, nothing otherwise.
template <class Scalar>
struct BlockData {
  std::vector<Matrix<Scalar>> coupling;
  std::vector<Matrix<Scalar>> nearfield;

  void resize(std::size_t blocks) {
    coupling.resize(blocks);
    nearfield.resize(blocks);
  }
};

struct StorageCensus {
  std::size_t leaf_basis = 0;
  std::size_t transfer = 0;
  std::size_t coupling = 0;
  std::size_t nearfield = 0;
  std::size_t admissible_leaves = 0;
  std::size_t inadmissible_leaves = 0;

  std::size_t total() const { return leaf_basis + transfer + coupling + nearfield; }
  std::size_t stored_blocks() const { return admissible_leaves + inadmissible_leaves; }
};

struct H2Options {
  int m = 4;
  double eta = 1.0;
  int quadrature_order = 4;
  int threads = 1;
};

// Input restricted to each leaf, in the leaf's index order; empty for inner nodes.
template <class Scalar>
std::vector<Vector<Scalar>> gather_leaf_inputs(const ClusterTree& tree, const Vector<Scalar>& x);

// x_hat for `node` and its descendants; children are accumulated in child order.
template <class Scalar>
void forward(const ClusterTree& tree, const ClusterBasis& basis, std::uint32_t node, const Vector<Scalar>& x,
             CoefficientMap<Scalar>& xhat);

// Pushes y_hat down from `node`, parents before children, and adds leaf contributions to y.
template <class Scalar>
void backward(const ClusterTree& tree, const ClusterBasis& basis, std::uint32_t node, CoefficientMap<Scalar>& yhat,
              Vector<Scalar>& y);

// Depth-first over block children.  `xhat` and `xleaf` are indexed by the
// column tree's arena positions; `row_filter`, when given, restricts the
// leaves visited to rows with a nonzero entry.
template <class Scalar>
void interaction(const BlockTree& blocks, std::uint32_t block, const BlockData<Scalar>& data,
                 const ClusterTree& rows, const CoefficientMap<Scalar>& xhat,
                 const std::vector<Vector<Scalar>>& xleaf, CoefficientMap<Scalar>& yhat, Vector<Scalar>& y,
                 const std::vector<std::uint8_t>* row_filter = nullptr);

template <class Scalar>
class H2Matrix {
 public:
  std::shared_ptr<const ClusterTree> row_tree;
  std::shared_ptr<const ClusterTree> col_tree;
  BlockTree blocks;
  ClusterBasis row_basis;
  ClusterBasis col_basis;  // unused when the trees are the same object
  BlockData<Scalar> data;

  bool shares_basis() const { return row_tree == col_tree; }
  const ClusterBasis& column_basis() const { return shares_basis() ? row_basis : col_basis; }
  std::size_t rows() const { return (*row_tree)[ClusterTree::root()].indices.size(); }
  std::size_t cols() const { return (*col_tree)[ClusterTree::root()].indices.size(); }

  // y += G x.  Throws DimensionError on size mismatch.
  void mvm(const Vector<Scalar>& x, Vector<Scalar>& y) const;
  Vector<Scalar> apply(const Vector<Scalar>& x) const;

  StorageCensus census() const;
};

// Builds the block tree and all matrices.  Tree indices refer to mesh triangles.
template <class Scalar>
H2Matrix<Scalar> assemble_h2(const TriangleMesh& mesh, const KernelSpec& kernel,
                             std::shared_ptr<const ClusterTree> row_tree, std::shared_ptr<const ClusterTree> col_tree,
                             const H2Options& options);

// Same with a block tree supplied by the caller.
template <class Scalar>
H2Matrix<Scalar> assemble_h2(const TriangleMesh& mesh, const KernelSpec& kernel,
                             std::shared_ptr<const ClusterTree> row_tree, std::shared_ptr<const ClusterTree> col_tree,
                             BlockTree blocks, const H2Options& options);

}  // namespace h2dist
