#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "h2dist/clustering.hpp"
#include "h2dist/distributed.hpp"
#include "h2dist/geometry.hpp"
#include "h2dist/h2matrix.hpp"
#include "h2dist/transport.hpp"

namespace h2dist {

// One node's view of a shared cluster tree.  It holds the shared clusters the
// node has a share in, all children of those (headers only when remote), the
// node's whole local tree, and remote clusters received later.  Clusters of
// the top tree use ClusterId{kSharedOwner, layout index}.
struct SharedView {
  ClusterTree tree;
  std::vector<std::vector<Rank>> shareholders;  // per arena node, sorted
  std::vector<Rank> manager;                    // per arena node, smallest shareholder
  TreeLayout layout;                            // replicated top tree
  std::vector<Box> root_boxes;                  // per node
  std::uint32_t local_root = 0;                 // arena index of this node's local root
  std::uint32_t own_size = 0;                   // nodes present before any exchange

  bool holds(std::uint32_t v, Rank r) const;
  std::uint32_t add(ClusterNode node, std::vector<Rank> holders, std::uint32_t parent);
};

// Collective.  Every node broadcasts its root header and characteristic point;
// the top tree is the geometric bisection of those points.  For p = 1 the view
// is the local tree.
SharedView build_shared_cluster_tree(Transport& transport, const ClusterTree& local, const Vec3& point);

// How a manager forwards received children to the other shareholders.
enum class FanOut { point_to_point, collective };

const char* to_string(FanOut fanout);

// Vertex (cluster, peer) of a shared send tree: this node sends data on the
// cluster (arena index in the view) to the peer.
struct SendVertex {
  std::uint32_t cluster = 0;
  Rank peer = 0;
  bool operator==(const SendVertex&) const = default;
};

struct SharedSkeleton {
  SharedView rows;
  SharedView cols;
  // Blocks (tau, sigma) with this node in shareholders(tau); children outside
  // that filter are kept as `foreign` leaves.
  BlockTree row_blocks;
  // Blocks with this node in shareholders(sigma).
  BlockTree col_blocks;
  std::vector<SendVertex> send_rows;       // (tau, manager(sigma)) for tau managed here
  std::vector<SendVertex> send_cols;       // (sigma, manager(tau)) for sigma managed here
  std::vector<std::uint32_t> recv_rows;    // tau met by blocks whose sigma is managed here
  std::vector<std::uint32_t> recv_cols;    // sigma met by blocks whose tau is managed here
  int rounds = 0;
  double eta = 1.0;
  FanOut fanout = FanOut::point_to_point;
};

// Collective block-tree construction over shared cluster trees.  Each round:
// managers exchange the children needed for their inadmissible blocks in one
// all-to-all, forward them to the other shareholders, split, and vote.
SharedSkeleton build_shared(Transport& transport, SharedView rows, SharedView cols, double eta,
                            FanOut fanout = FanOut::point_to_point);

template <class Scalar>
struct SharedH2 {
  SharedSkeleton skeleton;
  // Over the view arena (identical prefix in both views): leaf matrices for
  // local leaves, transfer matrices for local non-root clusters and for the
  // children of shared clusters managed here.
  ClusterBasis basis;
  BlockData<Scalar> data;                  // over row_blocks, leaves with managed rows only
  std::vector<std::uint8_t> managed_rows;  // per row-view node
  std::size_t geometry_messages_received = 0;

  StorageCensus census() const;
};

template <class Scalar>
SharedH2<Scalar> setup_matrix_shared(Transport& transport, const LocalProblem& local, SharedSkeleton skeleton,
                                     const KernelSpec& kernel, const H2Options& options);

// Collective.  Only the manager of a cluster holds its completed coefficients;
// children managed elsewhere send theirs up.  xhat is indexed by the column view.
template <class Scalar>
void forward_shared(Transport& transport, const SharedView& view, const ClusterBasis& basis, std::uint32_t node,
                    const Vector<Scalar>& x, CoefficientMap<Scalar>& xhat);

// Collective.  The parent's manager pushes E * yhat to child managers; receivers add.
template <class Scalar>
void backward_shared(Transport& transport, const SharedView& view, const ClusterBasis& basis, std::uint32_t node,
                     CoefficientMap<Scalar>& yhat, Vector<Scalar>& y);

// Collective.  y += (G x) restricted to this node's indices.
template <class Scalar>
void mvm_shared(Transport& transport, const LocalProblem& local, const SharedH2<Scalar>& h2, const Vector<Scalar>& x,
                Vector<Scalar>& y);

struct SharedRunOptions {
  int p = 1;
  ClusterOptions cluster;
  H2Options h2;
  FanOut fanout = FanOut::point_to_point;
};

template <class Scalar>
struct SharedNode {
  LocalProblem local;
  SharedH2<Scalar> h2;
  Vector<Scalar> y;
  TrafficCensus traffic;
};

template <class Scalar>
struct SharedRun {
  std::vector<SharedNode<Scalar>> nodes;
  Vector<Scalar> y;  // gathered, global numbering
};

template <class Scalar>
SharedRun<Scalar> simulate_shared(const TriangleMesh& mesh, const KernelSpec& kernel, const Vector<Scalar>& x,
                                  const SharedRunOptions& options);

// Global tree with the bisection top tree above the local trees; indices are global.
ClusterTree shared_composed_tree(const TreeLayout& layout, std::span<const LocalProblem* const> locals);

template <class Scalar>
H2Matrix<Scalar> shared_sequential_reference(const TriangleMesh& mesh, const KernelSpec& kernel,
                                             const TreeLayout& layout, std::span<const LocalProblem* const> locals,
                                             const H2Options& options);

// Shareholder conditions on the tree gathered from every node's view: local
// clusters have exactly their owner as shareholder, children of a shared
// cluster have disjoint shareholder sets, a parent's shareholders are the union
// of its children's, and all nodes agree on every set.  Empty on success.
std::string check_shareholders(std::span<const SharedView* const> views);

// Largest number of multi-shareholder clusters held by `rank` on one level.
std::size_t max_shared_per_level(const SharedView& view, Rank rank);

}  // namespace h2dist
