#include "h2dist/shared.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "h2dist/interpolation.hpp"
#include "h2dist/parallel.hpp"
#include "h2dist/quadrature.hpp"
#include "h2dist/wire.hpp"

namespace h2dist {

bool SharedView::holds(std::uint32_t v, Rank r) const {
  return std::binary_search(shareholders[v].begin(), shareholders[v].end(), r);
}

std::uint32_t SharedView::add(ClusterNode node, std::vector<Rank> holders, std::uint32_t parent) {
  if (holders.empty()) throw std::logic_error("SharedView: cluster without shareholders");
  const auto idx = tree.add(std::move(node));
  if (parent != kNone) tree.attach_child(parent, idx);
  manager.push_back(holders.front());
  shareholders.push_back(std::move(holders));
  return idx;
}

const char* to_string(FanOut fanout) {
  return fanout == FanOut::collective ? "collective" : "point-to-point";
}

namespace {

std::uint32_t copy_local(SharedView& view, const ClusterTree& local, std::uint32_t v, Rank self,
                         std::uint32_t parent) {
  const auto& src = local[v];
  ClusterNode node;
  node.box = src.box;
  node.child_count = src.child_count;
  node.id = src.id;
  node.indices = src.indices;
  const auto idx = view.add(std::move(node), {self}, parent);
  for (auto c : src.children) copy_local(view, local, c, self, idx);
  return idx;
}

ClusterNode shared_header(const TreeLayout& layout, int entry) {
  ClusterNode node;
  node.box = layout.nodes[entry].box;
  node.child_count = static_cast<std::uint32_t>(layout.nodes[entry].children.size());
  node.id = {ClusterId::kSharedOwner, static_cast<std::uint32_t>(entry)};
  return node;
}

void materialize(SharedView& view, const ClusterTree& local, const std::vector<ClusterHeader>& roots, int entry,
                 Rank self, std::uint32_t parent) {
  const auto& ln = view.layout.nodes[entry];
  const auto idx = view.add(shared_header(view.layout, entry), ln.shareholders, parent);
  for (int c : ln.children) {
    if (c >= 0) {
      const auto& sh = view.layout.nodes[c].shareholders;
      if (std::binary_search(sh.begin(), sh.end(), self)) {
        materialize(view, local, roots, c, self, idx);
      } else {
        view.add(shared_header(view.layout, c), sh, idx);
      }
      continue;
    }
    const Rank beta = TreeLayout::rank_of(c);
    if (beta == self) {
      view.local_root = copy_local(view, local, ClusterTree::root(), self, idx);
    } else {
      view.add(roots[beta].mirror(), {beta}, idx);
    }
  }
}

// Records: count, then per parent its id, child count, and per child a header
// followed by the child's shareholder set.
void write_records(ByteWriter& w, const SharedView& view, const std::vector<std::uint32_t>& parents) {
  w.u32(static_cast<std::uint32_t>(parents.size()));
  for (auto v : parents) {
    const auto& node = view.tree[v];
    w.u64(node.id.packed());
    w.u32(static_cast<std::uint32_t>(node.children.size()));
    for (auto c : node.children) {
      ClusterHeader::of(view.tree[c]).write(w);
      write_rank_set(w, view.shareholders[c]);
    }
  }
}

// Children already present are tolerated; they arrive when several routes
// deliver the same cluster.
void read_records(ByteReader& r, SharedView& view, Rank peer, int round) {
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto pid = ClusterId::unpack(r.u64());
    const std::uint32_t n = r.u32();
    const std::string where = "round " + std::to_string(round) + ", node " + std::to_string(peer) + ": ";
    const auto parent = view.tree.find(pid);
    if (!parent) throw ProtocolError(where + "children for unknown cluster " + to_string(pid));
    if (n != view.tree[*parent].child_count) {
      throw ProtocolError(where + "cluster " + to_string(pid) + " has " +
                          std::to_string(view.tree[*parent].child_count) + " children, record carries " +
                          std::to_string(n));
    }
    const bool known = view.tree[*parent].children_materialized();
    for (std::uint32_t c = 0; c < n; ++c) {
      const auto h = ClusterHeader::read(r);
      auto holders = read_rank_set(r);
      if (holders.empty() || !std::is_sorted(holders.begin(), holders.end())) {
        throw ProtocolError(where + "malformed shareholder set for " + to_string(h.id));
      }
      if (known) {
        if (view.tree[view.tree[*parent].children[c]].id != h.id) {
          throw ProtocolError(where + "children of " + to_string(pid) + " differ from an earlier delivery");
        }
        continue;
      }
      if (view.tree.find(h.id)) throw ProtocolError(where + "duplicate cluster " + to_string(h.id));
      view.add(h.mirror(), std::move(holders), *parent);
    }
  }
}

bool missing_children(const ClusterNode& node) { return node.child_count > 0 && !node.children_materialized(); }

std::vector<std::uint32_t> split(BlockTree& blocks, const std::vector<std::uint32_t>& active, const SharedView& rows,
                                 const SharedView& cols, double eta, Rank self, bool row_family) {
  std::vector<std::uint32_t> next;
  for (auto b : active) {
    const auto r = blocks[b].row, c = blocks[b].col;
    if (is_admissible(rows.tree[r].box, cols.tree[c].box, eta)) {
      blocks.mutable_node(b).status = BlockStatus::admissible;
      continue;
    }
    const auto kids = block_children(rows.tree, r, cols.tree, c);
    if (kids.empty()) {
      blocks.mutable_node(b).status = BlockStatus::inadmissible;
      continue;
    }
    blocks.mutable_node(b).status = BlockStatus::subdivided;
    for (const auto& [cr, cc] : kids) {
      const auto child = blocks.add(cr, cc, b);
      if (row_family ? rows.holds(cr, self) : cols.holds(cc, self)) {
        next.push_back(child);
      } else {
        blocks.mutable_node(child).status = BlockStatus::foreign;
      }
    }
  }
  return next;
}

}  // namespace

SharedView build_shared_cluster_tree(Transport& transport, const ClusterTree& local, const Vec3& point) {
  const int p = transport.size();
  const Rank self = transport.rank();
  std::vector<ClusterHeader> roots(p);
  std::vector<Vec3> points(p);
  SharedView view;
  view.root_boxes.resize(p);
  for (Rank beta = 0; beta < p; ++beta) {
    ByteWriter w;
    if (beta == self) {
      ClusterHeader::of(local[ClusterTree::root()]).write(w);
      w.vec3(point);
    }
    const Bytes bytes = transport.broadcast(beta, Tag::roots, w.take());
    ByteReader r(bytes);
    roots[beta] = ClusterHeader::read(r);
    points[beta] = r.vec3();
    r.expect_done("root header");
    view.root_boxes[beta] = roots[beta].box;
  }
  view.layout = bisection_layout(points, view.root_boxes);
  if (view.layout.nodes.empty()) {
    view.local_root = copy_local(view, local, ClusterTree::root(), self, kNone);
  } else {
    materialize(view, local, roots, 0, self, kNone);
  }
  view.own_size = static_cast<std::uint32_t>(view.tree.size());
  return view;
}

SharedSkeleton build_shared(Transport& transport, SharedView rows, SharedView cols, double eta, FanOut fanout) {
  const int p = transport.size();
  const Rank self = transport.rank();
  SharedSkeleton sk;
  sk.eta = eta;
  sk.fanout = fanout;
  sk.rows = std::move(rows);
  sk.cols = std::move(cols);
  auto& R = sk.rows;
  auto& C = sk.cols;

  // Same admissibility everywhere, checked before any block is formed.
  {
    ByteWriter w;
    if (self == 0) w.f64(eta);
    const Bytes b = transport.broadcast(0, Tag::eta, w.take());
    ByteReader r(b);
    const double eta0 = r.f64();
    if (eta0 != eta) {
      throw ProtocolError("inconsistent admissibility parameter: node 0 uses " + std::to_string(eta0) + ", node " +
                          std::to_string(self) + " uses " + std::to_string(eta));
    }
  }

  std::vector<std::uint32_t> active_row{sk.row_blocks.add(0, 0)};
  std::vector<std::uint32_t> active_col{sk.col_blocks.add(0, 0)};
  // (cluster id, destination) pairs whose children this node has delivered.
  std::set<std::pair<std::uint64_t, Rank>> sent_rows, sent_cols;
  auto offer = [](std::vector<std::vector<std::uint32_t>>& give, std::set<std::pair<std::uint64_t, Rank>>& sent,
                  const SharedView& view, std::uint32_t v, Rank dest) {
    if (view.holds(v, dest)) return;
    if (!sent.insert({view.tree[v].id.packed(), dest}).second) return;
    give[dest].push_back(v);
  };
  auto inadmissible = [&](const BlockTree& blocks, std::uint32_t b) {
    return !is_admissible(R.tree[blocks[b].row].box, C.tree[blocks[b].col].box, eta);
  };
  auto pack = [&](const std::vector<std::uint32_t>& row_parents, const std::vector<std::uint32_t>& col_parents) {
    ByteWriter w;
    write_records(w, R, row_parents);
    write_records(w, C, col_parents);
    return w.take();
  };
  auto unpack = [&](const Bytes& bytes, Rank peer, int round) {
    ByteReader r(bytes);
    read_records(r, R, peer, round);
    read_records(r, C, peer, round);
    r.expect_done("children records");
  };

  int round = 0;
  while (true) {
    ++round;
    // Managers exchange the children the opposite manager needs.
    std::vector<std::vector<std::uint32_t>> give_rows(p), give_cols(p);
    for (auto b : active_row) {
      const auto tau = sk.row_blocks[b].row, sigma = sk.row_blocks[b].col;
      if (R.manager[tau] != self || !inadmissible(sk.row_blocks, b)) continue;
      if (R.tree[tau].child_count > 0) offer(give_rows, sent_rows, R, tau, C.manager[sigma]);
    }
    for (auto b : active_col) {
      const auto tau = sk.col_blocks[b].row, sigma = sk.col_blocks[b].col;
      if (C.manager[sigma] != self || !inadmissible(sk.col_blocks, b)) continue;
      if (C.tree[sigma].child_count > 0) offer(give_cols, sent_cols, C, sigma, R.manager[tau]);
    }
    std::vector<Bytes> outgoing(p);
    for (Rank d = 0; d < p; ++d) outgoing[d] = pack(give_rows[d], give_cols[d]);
    const auto incoming = transport.all_to_all(Tag::children, std::move(outgoing));
    for (Rank s = 0; s < p; ++s) unpack(incoming[s], s, round);

    for (auto b : active_row) {
      const auto tau = sk.row_blocks[b].row, sigma = sk.row_blocks[b].col;
      if (R.manager[tau] == self && inadmissible(sk.row_blocks, b) && missing_children(C.tree[sigma])) {
        throw ProtocolError("round " + std::to_string(round) + ": manager " + std::to_string(self) +
                            " did not receive the children of column cluster " + to_string(C.tree[sigma].id));
      }
    }
    for (auto b : active_col) {
      const auto tau = sk.col_blocks[b].row, sigma = sk.col_blocks[b].col;
      if (C.manager[sigma] == self && inadmissible(sk.col_blocks, b) && missing_children(R.tree[tau])) {
        throw ProtocolError("round " + std::to_string(round) + ": manager " + std::to_string(self) +
                            " did not receive the children of row cluster " + to_string(R.tree[tau].id));
      }
    }

    // Managers pass the children on to the other shareholders.  One message
    // per (manager, shareholder) whenever a qualifying block exists, so both
    // ends know it is coming even if it carries no records.
    std::vector<std::vector<std::uint32_t>> relay_rows(p), relay_cols(p);
    std::vector<std::uint8_t> target(p, 0), expect(p, 0);
    for (auto b : active_row) {
      const auto tau = sk.row_blocks[b].row, sigma = sk.row_blocks[b].col;
      if (!inadmissible(sk.row_blocks, b) || C.tree[sigma].child_count == 0) continue;
      if (R.manager[tau] == self) {
        for (Rank d : R.shareholders[tau]) {
          if (d == self || C.holds(sigma, d)) continue;
          target[d] = 1;
          offer(relay_cols, sent_cols, C, sigma, d);
        }
      } else if (!C.holds(sigma, self)) {
        expect[R.manager[tau]] = 1;
      }
    }
    for (auto b : active_col) {
      const auto tau = sk.col_blocks[b].row, sigma = sk.col_blocks[b].col;
      if (!inadmissible(sk.col_blocks, b) || R.tree[tau].child_count == 0) continue;
      if (C.manager[sigma] == self) {
        for (Rank d : C.shareholders[sigma]) {
          if (d == self || R.holds(tau, d)) continue;
          target[d] = 1;
          offer(relay_rows, sent_rows, R, tau, d);
        }
      } else if (!R.holds(tau, self)) {
        expect[C.manager[sigma]] = 1;
      }
    }
    if (fanout == FanOut::collective) {
      std::vector<Bytes> out(p);
      for (Rank d = 0; d < p; ++d) out[d] = pack(relay_rows[d], relay_cols[d]);
      const auto in = transport.all_to_all(Tag::relay, std::move(out));
      for (Rank s = 0; s < p; ++s) unpack(in[s], s, round);
    } else {
      for (Rank d = 0; d < p; ++d) {
        if (target[d]) transport.send(d, Tag::relay, pack(relay_rows[d], relay_cols[d]));
      }
      for (Rank s = 0; s < p; ++s) {
        if (expect[s]) unpack(transport.recv(s, Tag::relay), s, round);
      }
    }

    for (auto b : active_row) {
      const auto sigma = sk.row_blocks[b].col;
      if (inadmissible(sk.row_blocks, b) && missing_children(C.tree[sigma])) {
        throw ProtocolError("round " + std::to_string(round) + ": node " + std::to_string(self) +
                            " lacks the children of column cluster " + to_string(C.tree[sigma].id));
      }
    }
    for (auto b : active_col) {
      const auto tau = sk.col_blocks[b].row;
      if (inadmissible(sk.col_blocks, b) && missing_children(R.tree[tau])) {
        throw ProtocolError("round " + std::to_string(round) + ": node " + std::to_string(self) +
                            " lacks the children of row cluster " + to_string(R.tree[tau].id));
      }
    }

    active_row = split(sk.row_blocks, active_row, R, C, eta, self, true);
    active_col = split(sk.col_blocks, active_col, R, C, eta, self, false);
    if (!transport.reduce_or(!active_row.empty() || !active_col.empty())) break;
  }
  sk.rounds = round;

  std::set<std::pair<std::uint32_t, Rank>> seen_send_rows, seen_send_cols;
  std::set<std::uint32_t> seen_recv_rows, seen_recv_cols;
  for (std::uint32_t b = 0; b < sk.row_blocks.size(); ++b) {
    const auto& blk = sk.row_blocks[b];
    if (blk.status == BlockStatus::foreign || R.manager[blk.row] != self) continue;
    if (seen_send_rows.insert({blk.row, C.manager[blk.col]}).second) {
      sk.send_rows.push_back({blk.row, C.manager[blk.col]});
    }
    if (seen_recv_cols.insert(blk.col).second) sk.recv_cols.push_back(blk.col);
  }
  for (std::uint32_t b = 0; b < sk.col_blocks.size(); ++b) {
    const auto& blk = sk.col_blocks[b];
    if (blk.status == BlockStatus::foreign || C.manager[blk.col] != self) continue;
    if (seen_send_cols.insert({blk.col, R.manager[blk.row]}).second) {
      sk.send_cols.push_back({blk.col, R.manager[blk.row]});
    }
    if (seen_recv_rows.insert(blk.row).second) sk.recv_rows.push_back(blk.row);
  }
  return sk;
}

template <class Scalar>
StorageCensus SharedH2<Scalar>::census() const {
  StorageCensus census;
  for (const auto& v : basis.leaf) census.leaf_basis += static_cast<std::size_t>(v.size());
  for (const auto& e : basis.transfer) census.transfer += static_cast<std::size_t>(e.size());
  const auto& blocks = skeleton.row_blocks;
  for (std::uint32_t b = 0; b < blocks.size(); ++b) {
    if (!managed_rows[blocks[b].row]) continue;
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
SharedH2<Scalar> setup_matrix_shared(Transport& transport, const LocalProblem& local, SharedSkeleton skeleton,
                                     const KernelSpec& kernel, const H2Options& options) {
  const Rank self = transport.rank();
  const int p = transport.size();
  SharedH2<Scalar> h2;
  h2.skeleton = std::move(skeleton);
  const auto& sk = h2.skeleton;
  const auto& R = sk.rows;
  const auto& C = sk.cols;
  if (R.own_size != C.own_size) throw std::invalid_argument("setup_matrix_shared: row and column views differ");
  for (std::uint32_t v = 0; v < R.own_size; ++v) {
    if (R.tree[v].id != C.tree[v].id) throw std::invalid_argument("setup_matrix_shared: row and column views differ");
  }

  const auto rule = triangle_rule(options.quadrature_order);
  const auto basis_rule = triangle_rule(basis_rule_order(options.m, options.quadrature_order));
  auto& basis = h2.basis;
  basis.m = options.m;
  basis.leaf.resize(R.own_size);
  basis.transfer.resize(R.own_size);
  for (std::uint32_t v = 0; v < R.own_size; ++v) {
    const auto& node = R.tree[v];
    const bool mine = !node.id.is_shared() && node.id.owner == static_cast<std::uint32_t>(self);
    if (node.parent != kNone) {
      const auto& parent = R.tree[node.parent];
      const bool local_pair = mine && !parent.id.is_shared();
      const bool managed_parent = parent.id.is_shared() && R.manager[node.parent] == self;
      if (local_pair || managed_parent) basis.transfer[v] = transfer_matrix(parent.box, node.box, options.m);
    }
    if (mine && node.is_leaf()) {
      std::vector<Triangle> tris;
      for (Index i : node.indices) tris.push_back(local.triangles[i]);
      basis.leaf[v] = leaf_matrix(tris, node.box, options.m, basis_rule);
    }
  }
  h2.managed_rows.assign(R.tree.size(), 0);
  for (std::uint32_t v = 0; v < R.tree.size(); ++v) h2.managed_rows[v] = R.manager[v] == self ? 1 : 0;

  auto local_geometry = [&](std::uint32_t v) {
    LeafGeometry g;
    g.id = C.tree[v].id;
    for (Index i : C.tree[v].indices) {
      g.global_ids.push_back(local.global_ids[i]);
      g.triangles.push_back(local.triangles[i]);
    }
    return g;
  };
  for (const auto& sv : sk.send_cols) {
    if (sv.peer == self || !C.tree[sv.cluster].is_leaf()) continue;
    ByteWriter w;
    local_geometry(sv.cluster).write(w);
    transport.send(sv.peer, Tag::geometry, w.take());
  }
  std::vector<LeafGeometry> geometry(C.tree.size());
  std::vector<std::uint8_t> expected(C.tree.size(), 0), have(C.tree.size(), 0);
  std::vector<std::size_t> count(p, 0);
  for (auto v : sk.recv_cols) {
    if (!C.tree[v].is_leaf()) continue;
    if (C.manager[v] == self) {
      geometry[v] = local_geometry(v);
      have[v] = 1;
    } else {
      expected[v] = 1;
      ++count[C.manager[v]];
    }
  }
  for (Rank s = 0; s < p; ++s) {
    for (std::size_t k = 0; k < count[s]; ++k) {
      const Bytes bytes = transport.recv(s, Tag::geometry);
      ByteReader r(bytes);
      auto g = LeafGeometry::read(r);
      r.expect_done("geometry message");
      const auto v = C.tree.find(g.id);
      if (!v || !expected[*v] || have[*v]) {
        throw ProtocolError("node " + std::to_string(s) + " sent unexpected geometry for " + to_string(g.id));
      }
      have[*v] = 1;
      geometry[*v] = std::move(g);
      ++h2.geometry_messages_received;
    }
  }

  const auto& blocks = sk.row_blocks;
  h2.data.resize(blocks.size());
  std::vector<std::uint32_t> leaves;
  for (auto b : blocks.leaves()) {
    if (h2.managed_rows[blocks[b].row]) leaves.push_back(b);
  }
  parallel_for(leaves.size(), options.threads, [&](std::size_t i) {
    const auto b = leaves[i];
    const auto& blk = blocks[b];
    const auto& tau = R.tree[blk.row];
    if (blk.status == BlockStatus::admissible) {
      h2.data.coupling[b] = coupling_matrix<Scalar>(kernel, tau.box, C.tree[blk.col].box, options.m);
      return;
    }
    if (!have[blk.col]) {
      throw ProtocolError("missing geometry for nearfield block (" + to_string(tau.id) + ", " +
                          to_string(C.tree[blk.col].id) + ")");
    }
    std::vector<Triangle> rt;
    std::vector<Index> rid;
    for (Index r : tau.indices) {
      rt.push_back(local.triangles[r]);
      rid.push_back(local.global_ids[r]);
    }
    const auto& g = geometry[blk.col];
    h2.data.nearfield[b] = galerkin_block<Scalar>(rt, rid, g.triangles, g.global_ids, kernel, rule);
  });
  return h2;
}

template <class Scalar>
void forward_shared(Transport& transport, const SharedView& view, const ClusterBasis& basis, std::uint32_t node,
                    const Vector<Scalar>& x, CoefficientMap<Scalar>& xhat) {
  const Rank self = transport.rank();
  const auto& c = view.tree[node];
  if (c.is_leaf()) {
    Vector<Scalar> xs(static_cast<Eigen::Index>(c.indices.size()));
    for (std::size_t i = 0; i < c.indices.size(); ++i) xs[static_cast<Eigen::Index>(i)] = x[c.indices[i]];
    xhat[node] = basis.leaf[node].transpose() * xs;
    return;
  }
  const bool manages = view.manager[node] == self;
  if (manages) xhat[node] = Vector<Scalar>::Zero(basis.rank());
  for (auto child : c.children) {
    if (view.holds(child, self)) forward_shared(transport, view, basis, child, x, xhat);
    const Rank cm = view.manager[child];
    if (manages && cm != self) {
      const Bytes bytes = transport.recv(cm, Tag::coefficients);
      ByteReader r(bytes);
      ClusterId id;
      xhat[child] = read_vector<Scalar>(r, id);
      if (id != view.tree[child].id) {
        throw ProtocolError("forward: expected coefficients of " + to_string(view.tree[child].id) + ", got " +
                            to_string(id));
      }
    } else if (!manages && cm == self) {
      ByteWriter w;
      write_vector(w, view.tree[child].id, xhat[child]);
      transport.send(view.manager[node], Tag::coefficients, w.take());
    }
    if (manages) {
      Vector<Scalar> tmp = basis.transfer[child].transpose() * xhat[child];
      xhat[node] += tmp;
    }
  }
}

template <class Scalar>
void backward_shared(Transport& transport, const SharedView& view, const ClusterBasis& basis, std::uint32_t node,
                     CoefficientMap<Scalar>& yhat, Vector<Scalar>& y) {
  const Rank self = transport.rank();
  const auto& c = view.tree[node];
  if (c.is_leaf()) {
    Vector<Scalar> tmp = basis.leaf[node] * yhat[node];
    for (std::size_t i = 0; i < c.indices.size(); ++i) y[c.indices[i]] += tmp[static_cast<Eigen::Index>(i)];
    return;
  }
  const bool manages = view.manager[node] == self;
  for (auto child : c.children) {
    const Rank cm = view.manager[child];
    if (manages) {
      Vector<Scalar> tmp = basis.transfer[child] * yhat[node];
      if (cm == self) {
        yhat[child] += tmp;
      } else {
        ByteWriter w;
        write_vector(w, view.tree[child].id, tmp);
        transport.send(cm, Tag::yhat, w.take());
      }
    } else if (cm == self) {
      const Bytes bytes = transport.recv(view.manager[node], Tag::yhat);
      ByteReader r(bytes);
      ClusterId id;
      Vector<Scalar> tmp = read_vector<Scalar>(r, id);
      if (id != view.tree[child].id) {
        throw ProtocolError("backward: expected coefficients of " + to_string(view.tree[child].id) + ", got " +
                            to_string(id));
      }
      yhat[child] += tmp;
    }
    if (view.holds(child, self)) backward_shared(transport, view, basis, child, yhat, y);
  }
}

template <class Scalar>
void mvm_shared(Transport& transport, const LocalProblem& local, const SharedH2<Scalar>& h2, const Vector<Scalar>& x,
                Vector<Scalar>& y) {
  const auto n = static_cast<Eigen::Index>(local.size());
  if (x.size() != n || y.size() != n) {
    throw DimensionError("mvm_shared: node " + std::to_string(transport.rank()) + " expects vectors of length " +
                         std::to_string(n));
  }
  const Rank self = transport.rank();
  const int p = transport.size();
  const auto& sk = h2.skeleton;
  const auto& C = sk.cols;
  const auto& R = sk.rows;

  CoefficientMap<Scalar> xhat(C.tree.size());
  forward_shared(transport, C, h2.basis, ClusterTree::root(), x, xhat);
  std::vector<Vector<Scalar>> xleaf(C.tree.size());
  for (std::uint32_t v = 0; v < C.own_size; ++v) {
    const auto& node = C.tree[v];
    if (!node.is_leaf() || node.id.is_shared() || node.id.owner != static_cast<std::uint32_t>(self)) continue;
    Vector<Scalar> xs(static_cast<Eigen::Index>(node.indices.size()));
    for (std::size_t i = 0; i < node.indices.size(); ++i) xs[static_cast<Eigen::Index>(i)] = x[node.indices[i]];
    xleaf[v] = std::move(xs);
  }

  for (const auto& sv : sk.send_cols) {
    if (sv.peer == self) continue;
    const auto& node = C.tree[sv.cluster];
    ByteWriter w;
    write_vector(w, node.id, xhat[sv.cluster]);
    transport.send(sv.peer, Tag::xhat, w.take());
    if (node.is_leaf()) {
      ByteWriter wl;
      write_vector(wl, node.id, xleaf[sv.cluster]);
      transport.send(sv.peer, Tag::xleaf, wl.take());
    }
  }
  std::vector<std::size_t> hat_count(p, 0), leaf_count(p, 0);
  std::vector<std::uint8_t> expected(C.tree.size(), 0);
  for (auto v : sk.recv_cols) {
    if (C.manager[v] == self) continue;
    expected[v] = 1;
    ++hat_count[C.manager[v]];
    if (C.tree[v].is_leaf()) ++leaf_count[C.manager[v]];
  }
  auto receive = [&](Rank s, Tag tag, std::size_t count, std::vector<Vector<Scalar>>& into) {
    for (std::size_t k = 0; k < count; ++k) {
      const Bytes bytes = transport.recv(s, tag);
      ByteReader r(bytes);
      ClusterId id;
      auto vec = read_vector<Scalar>(r, id);
      r.expect_done(to_string(tag));
      const auto v = C.tree.find(id);
      if (!v || !expected[*v]) {
        throw ProtocolError(std::string(to_string(tag)) + " from node " + std::to_string(s) +
                            " for unexpected cluster " + to_string(id));
      }
      into[*v] = std::move(vec);
    }
  };
  for (Rank s = 0; s < p; ++s) {
    receive(s, Tag::xhat, hat_count[s], xhat);
    receive(s, Tag::xleaf, leaf_count[s], xleaf);
  }

  CoefficientMap<Scalar> yhat(R.tree.size(), Vector<Scalar>::Zero(h2.basis.rank()));
  interaction(sk.row_blocks, BlockTree::root(), h2.data, R.tree, xhat, xleaf, yhat, y, &h2.managed_rows);
  backward_shared(transport, R, h2.basis, ClusterTree::root(), yhat, y);
}

template <class Scalar>
SharedRun<Scalar> simulate_shared(const TriangleMesh& mesh, const KernelSpec& kernel, const Vector<Scalar>& x,
                                  const SharedRunOptions& options) {
  if (static_cast<std::size_t>(x.size()) != mesh.size()) {
    throw DimensionError("simulate_shared: x has length " + std::to_string(x.size()) + ", mesh has " +
                         std::to_string(mesh.size()) + " basis functions");
  }
  const auto parts = partition_indices(mesh, options.p);
  auto nodes = run_nodes(options.p, [&](Transport& t) {
    SharedNode<Scalar> node;
    node.local = make_local_problem(mesh, parts[t.rank()], t.rank(), options.p, options.cluster);
    auto rows = build_shared_cluster_tree(t, node.local.tree, node.local.characteristic_point);
    auto cols = rows;
    auto skeleton = build_shared(t, std::move(rows), std::move(cols), options.h2.eta, options.fanout);
    node.h2 = setup_matrix_shared<Scalar>(t, node.local, std::move(skeleton), kernel, options.h2);
    Vector<Scalar> xl(static_cast<Eigen::Index>(node.local.size()));
    for (std::size_t i = 0; i < node.local.size(); ++i) xl[static_cast<Eigen::Index>(i)] = x[node.local.global_ids[i]];
    node.y = Vector<Scalar>::Zero(xl.size());
    mvm_shared(t, node.local, node.h2, xl, node.y);
    node.traffic = t.census();
    return node;
  });
  SharedRun<Scalar> run;
  run.y = Vector<Scalar>::Zero(x.size());
  for (const auto& node : nodes) {
    for (std::size_t i = 0; i < node.local.size(); ++i) run.y[node.local.global_ids[i]] = node.y[static_cast<Eigen::Index>(i)];
  }
  run.nodes = std::move(nodes);
  return run;
}

ClusterTree shared_composed_tree(const TreeLayout& layout, std::span<const LocalProblem* const> locals) {
  std::vector<const ClusterTree*> trees;
  std::vector<std::vector<Index>> ids;
  for (const auto* l : locals) {
    trees.push_back(&l->tree);
    ids.push_back(l->global_ids);
  }
  return compose_cluster_tree(layout, trees, ids);
}

template <class Scalar>
H2Matrix<Scalar> shared_sequential_reference(const TriangleMesh& mesh, const KernelSpec& kernel,
                                             const TreeLayout& layout, std::span<const LocalProblem* const> locals,
                                             const H2Options& options) {
  auto tree = std::make_shared<const ClusterTree>(shared_composed_tree(layout, locals));
  return assemble_h2<Scalar>(mesh, kernel, tree, tree, options);
}

std::string check_shareholders(std::span<const SharedView* const> views) {
  struct Entry {
    std::vector<Rank> holders;
    std::vector<std::uint64_t> children;
    std::uint32_t child_count = 0;
  };
  std::map<std::uint64_t, Entry> all;
  std::ostringstream err;
  for (std::size_t r = 0; r < views.size(); ++r) {
    const auto& view = *views[r];
    for (std::uint32_t v = 0; v < view.own_size; ++v) {
      const auto& node = view.tree[v];
      Entry e{view.shareholders[v], {}, node.child_count};
      if (view.holds(v, static_cast<Rank>(r))) {
        for (auto c : node.children) e.children.push_back(view.tree[c].id.packed());
      }
      auto [it, inserted] = all.try_emplace(node.id.packed(), e);
      if (!inserted) {
        if (it->second.holders != e.holders) err << to_string(node.id) << ": nodes disagree on shareholders; ";
        if (it->second.children.empty()) it->second.children = e.children;
      }
      if (view.manager[v] != view.shareholders[v].front()) err << to_string(node.id) << ": manager not smallest; ";
    }
  }
  for (const auto& [packed, e] : all) {
    const auto id = ClusterId::unpack(packed);
    if (!id.is_shared()) {
      if (e.holders != std::vector<Rank>{static_cast<Rank>(id.owner)}) {
        err << to_string(id) << ": local cluster with foreign shareholders; ";
      }
      continue;
    }
    if (e.children.size() != e.child_count) {
      err << to_string(id) << ": children not held by any shareholder; ";
      continue;
    }
    std::vector<Rank> uni;
    for (auto c : e.children) {
      const auto it = all.find(c);
      if (it == all.end()) {
        err << to_string(id) << ": child " << to_string(ClusterId::unpack(c)) << " unknown; ";
        continue;
      }
      for (Rank r : it->second.holders) {
        if (std::find(uni.begin(), uni.end(), r) != uni.end() && e.holders.size() > 1) {
          err << to_string(id) << ": children share node " << r << "; ";
        }
        uni.push_back(r);
      }
    }
    std::sort(uni.begin(), uni.end());
    if (uni != e.holders) err << to_string(id) << ": shareholders differ from the union over children; ";
  }
  return err.str();
}

std::size_t max_shared_per_level(const SharedView& view, Rank rank) {
  std::map<std::uint32_t, std::size_t> per_level;
  std::size_t worst = 0;
  for (std::uint32_t v = 0; v < view.tree.size(); ++v) {
    if (view.shareholders[v].size() < 2 || !view.holds(v, rank)) continue;
    worst = std::max(worst, ++per_level[view.tree[v].level]);
  }
  return worst;
}

#define H2DIST_INSTANTIATE(S)                                                                                     \
  template struct SharedH2<S>;                                                                                    \
  template SharedH2<S> setup_matrix_shared<S>(Transport&, const LocalProblem&, SharedSkeleton, const KernelSpec&, \
                                              const H2Options&);                                                  \
  template void forward_shared<S>(Transport&, const SharedView&, const ClusterBasis&, std::uint32_t,             \
                                  const Vector<S>&, CoefficientMap<S>&);                                          \
  template void backward_shared<S>(Transport&, const SharedView&, const ClusterBasis&, std::uint32_t,            \
                                   CoefficientMap<S>&, Vector<S>&);                                               \
  template void mvm_shared<S>(Transport&, const LocalProblem&, const SharedH2<S>&, const Vector<S>&, Vector<S>&); \
  template SharedRun<S> simulate_shared<S>(const TriangleMesh&, const KernelSpec&, const Vector<S>&,              \
                                           const SharedRunOptions&);                                              \
  template H2Matrix<S> shared_sequential_reference<S>(const TriangleMesh&, const KernelSpec&, const TreeLayout&,  \
                                                      std::span<const LocalProblem* const>, const H2Options&);
H2DIST_INSTANTIATE(double)
H2DIST_INSTANTIATE(Complex)
#undef H2DIST_INSTANTIATE

}  // namespace h2dist
