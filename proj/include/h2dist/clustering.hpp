#pragma once

#include <compare>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "h2dist/box.hpp"
#include "h2dist/types.hpp"

namespace h2dist {

// Stable cluster identifier: the owning node and the cluster's preorder index in
// the owner's tree.  Clusters of a shared top tree use owner == kSharedOwner.
struct ClusterId {
  static constexpr std::uint32_t kSharedOwner = 0xFFFFFFFFu;

  std::uint32_t owner = 0;
  std::uint32_t index = 0;

  std::uint64_t packed() const { return (std::uint64_t{owner} << 32) | index; }
  static ClusterId unpack(std::uint64_t v) {
    return {static_cast<std::uint32_t>(v >> 32), static_cast<std::uint32_t>(v & 0xFFFFFFFFu)};
  }
  bool is_shared() const { return owner == kSharedOwner; }
  auto operator<=>(const ClusterId&) const = default;
};

std::string to_string(const ClusterId& id);

struct ClusterNode {
  Box box;
  // Number of children the owner's tree has.  Mirror trees may know this count
  // before the children themselves have been transmitted.
  std::uint32_t child_count = 0;
  std::vector<std::uint32_t> children;  // materialized children (arena indices), in order
  std::uint32_t parent = kNone;
  std::uint32_t level = 0;
  ClusterId id;
  // Sorted vector positions of the basis functions in this cluster; empty for
  // mirrored remote clusters and for shared clusters.
  std::vector<Index> indices;

  bool is_leaf() const { return child_count == 0; }
  bool children_materialized() const { return children.size() == child_count; }
};

// Arena of clusters; node 0 is the root.  Trees built locally are stored in
// preorder so that the arena index equals ClusterId::index.
class ClusterTree {
 public:
  std::uint32_t add(ClusterNode node);
  void attach_child(std::uint32_t parent, std::uint32_t child);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const ClusterNode& operator[](std::uint32_t i) const { return nodes_[i]; }
  ClusterNode& mutable_node(std::uint32_t i) { return nodes_[i]; }
  const std::vector<ClusterNode>& nodes() const { return nodes_; }
  static constexpr std::uint32_t root() { return 0; }

  std::optional<std::uint32_t> find(const ClusterId& id) const;

  // Depth-first preorder over materialized children.
  std::vector<std::uint32_t> preorder() const;
  // Materialized nodes without children according to child_count.
  std::vector<std::uint32_t> leaves() const;
  std::uint32_t depth() const;  // number of levels

 private:
  std::vector<ClusterNode> nodes_;
  std::unordered_map<std::uint64_t, std::uint32_t> by_id_;
};

struct ClusterOptions {
  std::size_t leaf_limit = 16;
};

// Splits `members` (indices into `points`) into a lower and an upper part:
// bisection at the midpoint of the longest axis of the points' bounding box,
// falling back to a median split (coordinate, then index order) when one side
// would be empty.  Requires at least two members.
std::pair<std::vector<Index>, std::vector<Index>> bisect_points(std::span<const Vec3> points,
                                                                std::span<const Index> members);

// Geometric bisection cluster tree over characteristic points; cluster boxes are
// the minimal boxes containing the members' support boxes.  Indices are the
// positions 0..n-1 of `points`.
ClusterTree build_cluster_tree(std::span<const Vec3> points, std::span<const Box> supports,
                               const ClusterOptions& options = {}, std::uint32_t owner = 0);

// Standard admissibility: max(diam) <= 2 eta dist.
bool is_admissible(const Box& row, const Box& col, double eta);

enum class BlockStatus : std::uint8_t { pending, admissible, inadmissible, subdivided, foreign };

const char* to_string(BlockStatus status);

struct BlockNode {
  std::uint32_t row = 0;  // arena index in the row tree
  std::uint32_t col = 0;  // arena index in the column tree
  BlockStatus status = BlockStatus::pending;
  std::vector<std::uint32_t> children;
  std::uint32_t parent = kNone;

  bool is_leaf() const { return status == BlockStatus::admissible || status == BlockStatus::inadmissible; }
};

class BlockTree {
 public:
  std::uint32_t add(std::uint32_t row, std::uint32_t col, std::uint32_t parent = kNone);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const BlockNode& operator[](std::uint32_t i) const { return nodes_[i]; }
  BlockNode& mutable_node(std::uint32_t i) { return nodes_[i]; }
  static constexpr std::uint32_t root() { return 0; }

  // Leaves in depth-first order (the order the interaction phase visits them).
  std::vector<std::uint32_t> leaves() const;
  std::size_t count(BlockStatus status) const;

 private:
  std::vector<BlockNode> nodes_;
};

// Children of an inadmissible pair per the three-case rule; empty if both clusters are childless.
std::vector<std::pair<std::uint32_t, std::uint32_t>> block_children(const ClusterTree& rows, std::uint32_t row,
                                                                    const ClusterTree& cols, std::uint32_t col);

BlockTree build_block_tree(const ClusterTree& rows, const ClusterTree& cols, double eta);

// Nodes of a top tree placed above per-node subtrees.  A child entry c >= 0
// refers to another layout node, c < 0 to the subtree of rank -(c + 1).
struct TreeLayout {
  struct Node {
    Box box;
    std::vector<int> children;
    std::vector<Rank> shareholders;  // sorted
    Rank manager = 0;
  };
  std::vector<Node> nodes;  // preorder; empty means the tree is the single subtree of rank 0

  static int slot(Rank r) { return -(r + 1); }
  static Rank rank_of(int child) { return -child - 1; }
};

// Single root whose children are all subtrees.
TreeLayout flat_layout(std::span<const Box> subtree_boxes);
// Geometric bisection of one characteristic point per subtree down to singletons;
// box = union of the children's boxes, manager = smallest shareholder.
TreeLayout bisection_layout(std::span<const Vec3> points, std::span<const Box> subtree_boxes);

// Global tree assembled from a layout and per-rank subtrees; subtree indices are
// translated to global numbering through `global_ids[rank]`.
ClusterTree compose_cluster_tree(const TreeLayout& layout, std::span<const ClusterTree* const> subtrees,
                                 std::span<const std::vector<Index>> global_ids);

// Invariant checks; each returns an empty string on success, else a description.
std::string check_cluster_tree(const ClusterTree& tree, std::span<const Box> supports, std::size_t n);
std::string check_block_partition(const ClusterTree& rows, const ClusterTree& cols, const BlockTree& blocks,
                                  double eta);

// Debug dumps.
void dump_tree_text(std::ostream& out, const ClusterTree& tree);
nlohmann::json dump_tree_json(const ClusterTree& tree);

}  // namespace h2dist
