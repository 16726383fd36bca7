#include "h2dist/clustering.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace h2dist {

std::string to_string(const ClusterId& id) {
  std::ostringstream out;
  if (id.is_shared()) {
    out << "shared:" << id.index;
  } else {
    out << id.owner << ":" << id.index;
  }
  return out.str();
}

std::uint32_t ClusterTree::add(ClusterNode node) {
  auto idx = static_cast<std::uint32_t>(nodes_.size());
  auto [it, inserted] = by_id_.try_emplace(node.id.packed(), idx);
  if (!inserted) throw std::logic_error("ClusterTree: duplicate cluster id " + to_string(node.id));
  nodes_.push_back(std::move(node));
  return idx;
}

void ClusterTree::attach_child(std::uint32_t parent, std::uint32_t child) {
  nodes_[parent].children.push_back(child);
  nodes_[child].parent = parent;
  nodes_[child].level = nodes_[parent].level + 1;
}

std::optional<std::uint32_t> ClusterTree::find(const ClusterId& id) const {
  auto it = by_id_.find(id.packed());
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint32_t> ClusterTree::preorder() const {
  std::vector<std::uint32_t> order;
  if (nodes_.empty()) return order;
  std::vector<std::uint32_t> stack{root()};
  while (!stack.empty()) {
    auto v = stack.back();
    stack.pop_back();
    order.push_back(v);
    const auto& ch = nodes_[v].children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return order;
}

std::vector<std::uint32_t> ClusterTree::leaves() const {
  std::vector<std::uint32_t> out;
  for (auto v : preorder()) {
    if (nodes_[v].is_leaf()) out.push_back(v);
  }
  return out;
}

std::uint32_t ClusterTree::depth() const {
  std::uint32_t d = 0;
  for (auto v : preorder()) d = std::max(d, nodes_[v].level + 1);
  return d;
}

std::pair<std::vector<Index>, std::vector<Index>> bisect_points(std::span<const Vec3> points,
                                                                std::span<const Index> members) {
  if (members.size() < 2) throw std::invalid_argument("bisect_points: need at least two members");
  Box bounds = Box::around(points[members[0]]);
  for (Index m : members) bounds.expand(points[m]);
  const int axis = bounds.longest_axis();
  const double mid = bounds.center()[axis];

  std::vector<Index> lower, upper;
  if (bounds.extent(axis) > 0.0) {
    for (Index m : members) (points[m][axis] < mid ? lower : upper).push_back(m);
  }
  if (lower.empty() || upper.empty()) {
    std::vector<Index> sorted(members.begin(), members.end());
    std::stable_sort(sorted.begin(), sorted.end(), [&](Index a, Index b) {
      if (points[a][axis] != points[b][axis]) return points[a][axis] < points[b][axis];
      return a < b;
    });
    const std::size_t half = sorted.size() / 2;
    lower.assign(sorted.begin(), sorted.begin() + half);
    upper.assign(sorted.begin() + half, sorted.end());
    std::sort(lower.begin(), lower.end());
    std::sort(upper.begin(), upper.end());
  }
  return {std::move(lower), std::move(upper)};
}

namespace {

std::uint32_t build_recursive(ClusterTree& tree, std::span<const Vec3> points, std::span<const Box> supports,
                              std::vector<Index> members, std::size_t leaf_limit, std::uint32_t owner,
                              std::uint32_t parent) {
  ClusterNode node;
  node.box = supports[members[0]];
  for (Index m : members) node.box.expand(supports[m]);
  node.id = {owner, static_cast<std::uint32_t>(tree.size())};
  node.indices = members;
  const bool split = members.size() > leaf_limit;
  node.child_count = split ? 2 : 0;
  auto self = tree.add(std::move(node));
  if (parent != kNone) tree.attach_child(parent, self);
  if (split) {
    auto [lower, upper] = bisect_points(points, members);
    build_recursive(tree, points, supports, std::move(lower), leaf_limit, owner, self);
    build_recursive(tree, points, supports, std::move(upper), leaf_limit, owner, self);
  }
  return self;
}

}  // namespace

ClusterTree build_cluster_tree(std::span<const Vec3> points, std::span<const Box> supports,
                               const ClusterOptions& options, std::uint32_t owner) {
  if (points.empty()) throw std::invalid_argument("build_cluster_tree: empty input");
  if (points.size() != supports.size()) {
    throw std::invalid_argument("build_cluster_tree: points and supports differ in length");
  }
  if (options.leaf_limit == 0) throw std::invalid_argument("build_cluster_tree: leaf_limit must be positive");
  std::vector<Index> all(points.size());
  std::iota(all.begin(), all.end(), Index{0});
  ClusterTree tree;
  build_recursive(tree, points, supports, std::move(all), options.leaf_limit, owner, kNone);
  return tree;
}

bool is_admissible(const Box& row, const Box& col, double eta) {
  return std::max(row.diameter(), col.diameter()) <= 2.0 * eta * row.distance(col);
}

const char* to_string(BlockStatus status) {
  switch (status) {
    case BlockStatus::pending: return "pending";
    case BlockStatus::admissible: return "admissible";
    case BlockStatus::inadmissible: return "inadmissible";
    case BlockStatus::subdivided: return "subdivided";
    case BlockStatus::foreign: return "foreign";
  }
  return "?";
}

std::uint32_t BlockTree::add(std::uint32_t row, std::uint32_t col, std::uint32_t parent) {
  auto idx = static_cast<std::uint32_t>(nodes_.size());
  BlockNode node;
  node.row = row;
  node.col = col;
  node.parent = parent;
  nodes_.push_back(std::move(node));
  if (parent != kNone) nodes_[parent].children.push_back(idx);
  return idx;
}

std::vector<std::uint32_t> BlockTree::leaves() const {
  std::vector<std::uint32_t> out;
  if (nodes_.empty()) return out;
  std::vector<std::uint32_t> stack{root()};
  while (!stack.empty()) {
    auto b = stack.back();
    stack.pop_back();
    if (nodes_[b].is_leaf()) out.push_back(b);
    const auto& ch = nodes_[b].children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::size_t BlockTree::count(BlockStatus status) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [&](const BlockNode& b) { return b.status == status; }));
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> block_children(const ClusterTree& rows, std::uint32_t row,
                                                                    const ClusterTree& cols, std::uint32_t col) {
  const auto& tau = rows[row];
  const auto& sigma = cols[col];
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  if (tau.child_count > 0 && !tau.children_materialized()) {
    throw ProtocolError("block_children: row cluster " + to_string(tau.id) + " has unmaterialized children");
  }
  if (sigma.child_count > 0 && !sigma.children_materialized()) {
    throw ProtocolError("block_children: column cluster " + to_string(sigma.id) + " has unmaterialized children");
  }
  if (tau.child_count > 0 && sigma.child_count > 0) {
    for (auto r : tau.children) {
      for (auto c : sigma.children) out.emplace_back(r, c);
    }
  } else if (sigma.child_count > 0) {
    for (auto c : sigma.children) out.emplace_back(row, c);
  } else if (tau.child_count > 0) {
    for (auto r : tau.children) out.emplace_back(r, col);
  }
  return out;
}

namespace {

void build_block_recursive(BlockTree& blocks, const ClusterTree& rows, const ClusterTree& cols,
                           std::uint32_t b, double eta) {
  const auto row = blocks[b].row;
  const auto col = blocks[b].col;
  if (is_admissible(rows[row].box, cols[col].box, eta)) {
    blocks.mutable_node(b).status = BlockStatus::admissible;
    return;
  }
  auto children = block_children(rows, row, cols, col);
  if (children.empty()) {
    blocks.mutable_node(b).status = BlockStatus::inadmissible;
    return;
  }
  blocks.mutable_node(b).status = BlockStatus::subdivided;
  for (auto [r, c] : children) {
    auto child = blocks.add(r, c, b);
    build_block_recursive(blocks, rows, cols, child, eta);
  }
}

}  // namespace

BlockTree build_block_tree(const ClusterTree& rows, const ClusterTree& cols, double eta) {
  if (rows.empty() || cols.empty()) throw std::invalid_argument("build_block_tree: empty cluster tree");
  BlockTree blocks;
  blocks.add(ClusterTree::root(), ClusterTree::root());
  build_block_recursive(blocks, rows, cols, BlockTree::root(), eta);
  return blocks;
}

TreeLayout flat_layout(std::span<const Box> subtree_boxes) {
  TreeLayout layout;
  if (subtree_boxes.size() <= 1) return layout;
  TreeLayout::Node root;
  root.box = subtree_boxes[0];
  for (std::size_t r = 0; r < subtree_boxes.size(); ++r) {
    root.box.expand(subtree_boxes[r]);
    root.children.push_back(TreeLayout::slot(static_cast<Rank>(r)));
    root.shareholders.push_back(static_cast<Rank>(r));
  }
  root.manager = 0;
  layout.nodes.push_back(std::move(root));
  return layout;
}

namespace {

int bisection_recursive(TreeLayout& layout, std::span<const Vec3> points, std::span<const Box> boxes,
                        std::vector<Index> members) {
  if (members.size() == 1) return TreeLayout::slot(static_cast<Rank>(members[0]));
  const int self = static_cast<int>(layout.nodes.size());
  layout.nodes.emplace_back();
  auto [lower, upper] = bisect_points(points, members);
  int a = bisection_recursive(layout, points, boxes, std::move(lower));
  int b = bisection_recursive(layout, points, boxes, std::move(upper));
  auto& node = layout.nodes[self];
  node.children = {a, b};
  bool first = true;
  for (int c : node.children) {
    Box cb = c >= 0 ? layout.nodes[c].box : boxes[TreeLayout::rank_of(c)];
    if (first) {
      node.box = cb;
      first = false;
    } else {
      node.box.expand(cb);
    }
    if (c >= 0) {
      const auto& sh = layout.nodes[c].shareholders;
      node.shareholders.insert(node.shareholders.end(), sh.begin(), sh.end());
    } else {
      node.shareholders.push_back(TreeLayout::rank_of(c));
    }
  }
  std::sort(node.shareholders.begin(), node.shareholders.end());
  node.manager = node.shareholders.front();
  return self;
}

}  // namespace

TreeLayout bisection_layout(std::span<const Vec3> points, std::span<const Box> subtree_boxes) {
  if (points.size() != subtree_boxes.size() || points.empty()) {
    throw std::invalid_argument("bisection_layout: need one point and one box per subtree");
  }
  TreeLayout layout;
  std::vector<Index> all(points.size());
  std::iota(all.begin(), all.end(), Index{0});
  bisection_recursive(layout, points, subtree_boxes, std::move(all));
  return layout;
}

namespace {

std::uint32_t copy_subtree(ClusterTree& out, const ClusterTree& sub, std::uint32_t v, const std::vector<Index>& ids,
                           std::uint32_t parent) {
  const auto& src = sub[v];
  ClusterNode node;
  node.box = src.box;
  node.child_count = src.child_count;
  node.id = src.id;
  node.indices.reserve(src.indices.size());
  for (Index i : src.indices) node.indices.push_back(ids[i]);
  std::sort(node.indices.begin(), node.indices.end());
  auto self = out.add(std::move(node));
  if (parent != kNone) out.attach_child(parent, self);
  for (auto c : src.children) copy_subtree(out, sub, c, ids, self);
  return self;
}

std::uint32_t compose_recursive(ClusterTree& out, const TreeLayout& layout, int entry,
                                std::span<const ClusterTree* const> subtrees,
                                std::span<const std::vector<Index>> global_ids, std::uint32_t parent) {
  if (entry < 0) {
    Rank r = TreeLayout::rank_of(entry);
    return copy_subtree(out, *subtrees[r], ClusterTree::root(), global_ids[r], parent);
  }
  const auto& ln = layout.nodes[entry];
  ClusterNode node;
  node.box = ln.box;
  node.child_count = static_cast<std::uint32_t>(ln.children.size());
  node.id = {ClusterId::kSharedOwner, static_cast<std::uint32_t>(entry)};
  auto self = out.add(std::move(node));
  if (parent != kNone) out.attach_child(parent, self);
  std::vector<Index> indices;
  for (int c : ln.children) {
    auto child = compose_recursive(out, layout, c, subtrees, global_ids, self);
    const auto& ci = out[child].indices;
    indices.insert(indices.end(), ci.begin(), ci.end());
  }
  std::sort(indices.begin(), indices.end());
  out.mutable_node(self).indices = std::move(indices);
  return self;
}

}  // namespace

ClusterTree compose_cluster_tree(const TreeLayout& layout, std::span<const ClusterTree* const> subtrees,
                                 std::span<const std::vector<Index>> global_ids) {
  if (subtrees.size() != global_ids.size() || subtrees.empty()) {
    throw std::invalid_argument("compose_cluster_tree: need one id map per subtree");
  }
  ClusterTree out;
  compose_recursive(out, layout, layout.nodes.empty() ? TreeLayout::slot(0) : 0, subtrees, global_ids, kNone);
  return out;
}

std::string check_cluster_tree(const ClusterTree& tree, std::span<const Box> supports, std::size_t n) {
  std::ostringstream err;
  if (tree.empty()) return "empty tree";
  const auto& root = tree[ClusterTree::root()];
  if (root.indices.size() != n) {
    err << "root holds " << root.indices.size() << " indices, expected " << n;
    return err.str();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (root.indices[i] != i) return "root index set is not {0..n-1}";
  }
  for (auto v : tree.preorder()) {
    const auto& c = tree[v];
    if (!std::is_sorted(c.indices.begin(), c.indices.end())) {
      err << "cluster " << to_string(c.id) << ": index set not sorted";
      return err.str();
    }
    for (Index i : c.indices) {
      if (!c.box.contains(supports[i])) {
        err << "cluster " << to_string(c.id) << ": support of " << i << " not contained in box";
        return err.str();
      }
    }
    if (!c.children_materialized()) {
      err << "cluster " << to_string(c.id) << ": child count mismatch";
      return err.str();
    }
    if (c.children.empty()) continue;
    std::vector<Index> uni;
    for (auto ch : c.children) uni.insert(uni.end(), tree[ch].indices.begin(), tree[ch].indices.end());
    std::sort(uni.begin(), uni.end());
    if (std::adjacent_find(uni.begin(), uni.end()) != uni.end()) {
      err << "cluster " << to_string(c.id) << ": children overlap";
      return err.str();
    }
    if (uni != c.indices) {
      err << "cluster " << to_string(c.id) << ": children do not cover parent";
      return err.str();
    }
  }
  return {};
}

std::string check_block_partition(const ClusterTree& rows, const ClusterTree& cols, const BlockTree& blocks,
                                  double eta) {
  std::ostringstream err;
  const std::size_t nr = rows[ClusterTree::root()].indices.size();
  const std::size_t nc = cols[ClusterTree::root()].indices.size();
  std::vector<std::uint8_t> cover(nr * nc, 0);
  std::size_t covered = 0;
  for (auto b : blocks.leaves()) {
    const auto& blk = blocks[b];
    const auto& tau = rows[blk.row];
    const auto& sigma = cols[blk.col];
    if (blk.status == BlockStatus::admissible && !is_admissible(tau.box, sigma.box, eta)) {
      err << "admissible leaf " << b << " violates the admissibility condition";
      return err.str();
    }
    if (blk.status == BlockStatus::inadmissible && (tau.child_count > 0 || sigma.child_count > 0)) {
      err << "inadmissible leaf " << b << " has a cluster with children";
      return err.str();
    }
    for (Index i : tau.indices) {
      for (Index j : sigma.indices) {
        auto& cell = cover[static_cast<std::size_t>(i) * nc + j];
        if (cell) {
          err << "entry (" << i << "," << j << ") covered twice";
          return err.str();
        }
        cell = 1;
        ++covered;
      }
    }
  }
  if (covered != nr * nc) {
    err << "leaves cover " << covered << " of " << nr * nc << " entries";
    return err.str();
  }
  for (std::uint32_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    if (blk.status != BlockStatus::subdivided) continue;
    auto expected = block_children(rows, blk.row, cols, blk.col);
    if (expected.size() != blk.children.size()) {
      err << "block " << b << ": wrong number of children";
      return err.str();
    }
    for (std::size_t k = 0; k < expected.size(); ++k) {
      const auto& ch = blocks[blk.children[k]];
      if (ch.row != expected[k].first || ch.col != expected[k].second) {
        err << "block " << b << ": child " << k << " does not follow the subdivision rule";
        return err.str();
      }
    }
  }
  return {};
}

void dump_tree_text(std::ostream& out, const ClusterTree& tree) {
  for (auto v : tree.preorder()) {
    const auto& c = tree[v];
    out << std::string(2 * c.level, ' ') << to_string(c.id) << " n=" << c.indices.size() << " box=[" << c.box.lo[0]
        << "," << c.box.lo[1] << "," << c.box.lo[2] << "]-[" << c.box.hi[0] << "," << c.box.hi[1] << ","
        << c.box.hi[2] << "]\n";
  }
}

nlohmann::json dump_tree_json(const ClusterTree& tree) {
  auto clusters = nlohmann::json::array();
  for (auto v : tree.preorder()) {
    const auto& c = tree[v];
    nlohmann::json children = nlohmann::json::array();
    for (auto ch : c.children) children.push_back(tree[ch].id.packed());
    clusters.push_back({{"id", c.id.packed()},
                        {"owner", c.id.owner},
                        {"index", c.id.index},
                        {"lo", {c.box.lo[0], c.box.lo[1], c.box.lo[2]}},
                        {"hi", {c.box.hi[0], c.box.hi[1], c.box.hi[2]}},
                        {"count", c.indices.size()},
                        {"children", children}});
  }
  return {{"root", tree.empty() ? 0 : tree[ClusterTree::root()].id.packed()}, {"clusters", clusters}};
}

}  // namespace h2dist
