#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "h2dist/clustering.hpp"
#include "h2dist/geometry.hpp"
#include "h2dist/h2matrix.hpp"
#include "h2dist/transport.hpp"
#include "h2dist/wire.hpp"

namespace h2dist {

// Recursive median bisection of triangle centroids along the longest axis into
// p parts; a node count q is split into floor(q/2) and the rest, with index
// counts proportional to the node counts.  Each part is sorted ascending.
std::vector<std::vector<Index>> partition_indices(const TriangleMesh& mesh, int p);

// One node's share of the problem.  Local position i holds global index
// global_ids[i]; the tree serves as both row and column tree.
struct LocalProblem {
  Rank rank = 0;
  int nodes = 1;
  std::vector<Index> global_ids;
  std::vector<Triangle> triangles;
  ClusterTree tree;
  Vec3 characteristic_point = Vec3::Zero();  // mean of the local centroids

  std::size_t size() const { return global_ids.size(); }
};

LocalProblem make_local_problem(const TriangleMesh& mesh, std::vector<Index> global_ids, Rank rank, int nodes,
                                const ClusterOptions& options = {});

// Local clusters exported to one peer, in the order they were sent.
class SendTree {
 public:
  explicit SendTree(std::size_t tree_size = 0) : member_(tree_size, 0) {}
  void add(std::uint32_t v);
  bool contains(std::uint32_t v) const { return v < member_.size() && member_[v] != 0; }
  const std::vector<std::uint32_t>& nodes() const { return nodes_; }

 private:
  std::vector<std::uint32_t> nodes_;
  std::vector<std::uint8_t> member_;
};

// Everything the block construction leaves on node alpha, indexed by peer beta.
struct DistributedSkeleton {
  std::vector<ClusterTree> recv_rows;   // mirror of beta's row tree, as needed for T(I_beta x J_alpha)
  std::vector<ClusterTree> recv_cols;   // mirror of beta's column tree, as needed for T(I_alpha x J_beta)
  std::vector<SendTree> send_rows;      // local row clusters beta mirrors
  std::vector<SendTree> send_cols;      // local column clusters beta mirrors
  std::vector<BlockTree> row_blocks;    // T(I_alpha x J_beta): rows local, columns recv_cols[beta]
  std::vector<BlockTree> col_blocks;    // T(I_beta x J_alpha): rows recv_rows[beta], columns local
  int rounds = 0;
  double eta = 1.0;
};

// Collective.  Round 0 broadcasts every node's roots and eta; each further round
// checks the active blocks, exchanges the requested children with one
// all-to-all, splits, and votes on termination.
DistributedSkeleton build_block_distributed(Transport& transport, const ClusterTree& rows, const ClusterTree& cols,
                                            double eta);

// Structural record used to compare send trees with the peers' receive trees.
struct TreeEntry {
  std::uint64_t id = 0;
  std::uint64_t parent = ~std::uint64_t{0};
  Box box;
  std::uint32_t child_count = 0;
  bool operator==(const TreeEntry&) const = default;
  auto operator<=>(const TreeEntry& o) const { return id <=> o.id; }
};

std::vector<TreeEntry> describe_mirror(const ClusterTree& mirror);
std::vector<TreeEntry> describe_send_tree(const ClusterTree& local, const SendTree& send);

template <class Scalar>
struct DistributedH2 {
  DistributedSkeleton skeleton;
  ClusterBasis basis;                        // over the local tree
  std::vector<BlockData<Scalar>> data;       // per peer, over row_blocks[beta]
  std::size_t geometry_messages_received = 0;

  // Storage held by this node: its basis plus the owned block row.
  StorageCensus census() const;
};

// Collective.  Bases from local geometry, couplings from mirrored boxes, and
// nearfield blocks after receiving the geometry of every leaf in the column
// receive trees (one geometry message per leaf).
template <class Scalar>
DistributedH2<Scalar> setup_matrix_distributed(Transport& transport, const LocalProblem& local,
                                               DistributedSkeleton skeleton, const KernelSpec& kernel,
                                               const H2Options& options);

// Collective.  y += G x restricted to this node's block row; x and y are in
// local positions.
template <class Scalar>
void mvm_distributed(Transport& transport, const LocalProblem& local, const DistributedH2<Scalar>& h2,
                     const Vector<Scalar>& x, Vector<Scalar>& y);

// Whole-system driver: partitions the mesh, runs every node on its own thread
// and keeps each node's state.  x and the returned y are in global numbering.
struct DistributedRunOptions {
  int p = 1;
  ClusterOptions cluster;
  H2Options h2;
};

template <class Scalar>
struct DistributedNode {
  LocalProblem local;
  DistributedH2<Scalar> h2;
  Vector<Scalar> y;             // local positions
  TrafficCensus traffic;        // everything this node sent
};

template <class Scalar>
struct DistributedRun {
  std::vector<DistributedNode<Scalar>> nodes;
  Vector<Scalar> y;             // gathered, global numbering
};

template <class Scalar>
DistributedRun<Scalar> simulate_distributed(const TriangleMesh& mesh, const KernelSpec& kernel,
                                            const Vector<Scalar>& x, const DistributedRunOptions& options);

// Global tree with a single root above the local trees (the local tree itself
// for p = 1); indices are global.
ClusterTree composed_tree(std::span<const LocalProblem* const> locals);

// Sequential H2 matrix over composed_tree, for comparison with distributed runs.
template <class Scalar>
H2Matrix<Scalar> sequential_reference(const TriangleMesh& mesh, const KernelSpec& kernel,
                                      std::span<const LocalProblem* const> locals, const H2Options& options);

}  // namespace h2dist
