#include "h2dist/distributed.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "h2dist/interpolation.hpp"
#include "h2dist/parallel.hpp"
#include "h2dist/quadrature.hpp"

namespace h2dist {

namespace {

void split_parts(const std::vector<Vec3>& centroids, std::vector<Index> members, int p,
                 std::vector<std::vector<Index>>& out) {
  if (p == 1) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
    return;
  }
  const int p_low = p / 2;
  const std::size_t n_low = members.size() * static_cast<std::size_t>(p_low) / static_cast<std::size_t>(p);
  Box box = Box::around(centroids[members.front()]);
  for (Index i : members) box.expand(centroids[i]);
  const int axis = box.longest_axis();
  std::sort(members.begin(), members.end(), [&](Index a, Index b) {
    const double ca = centroids[a][axis], cb = centroids[b][axis];
    return ca != cb ? ca < cb : a < b;
  });
  std::vector<Index> low(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_low));
  std::vector<Index> high(members.begin() + static_cast<std::ptrdiff_t>(n_low), members.end());
  split_parts(centroids, std::move(low), p_low, out);
  split_parts(centroids, std::move(high), p - p_low, out);
}

std::string block_name(const ClusterTree& rows, std::uint32_t r, const ClusterTree& cols, std::uint32_t c) {
  return "(" + to_string(rows[r].id) + ", " + to_string(cols[c].id) + ")";
}

// Parent records of one family: parent id, child count, child headers.
void write_family(ByteWriter& w, const ClusterTree& tree, const std::vector<std::uint32_t>& parents) {
  w.u32(static_cast<std::uint32_t>(parents.size()));
  for (auto v : parents) {
    const auto& node = tree[v];
    w.u64(node.id.packed());
    w.u32(static_cast<std::uint32_t>(node.children.size()));
    for (auto c : node.children) ClusterHeader::of(tree[c]).write(w);
  }
}

// Attaches received children to `mirror`; returns how many parents were read.
std::size_t read_family(ByteReader& r, ClusterTree& mirror, Rank peer, int round) {
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto pid = ClusterId::unpack(r.u64());
    const std::uint32_t nchildren = r.u32();
    const auto parent = mirror.find(pid);
    const std::string where = "round " + std::to_string(round) + ", node " + std::to_string(peer) + ": ";
    if (!parent) throw ProtocolError(where + "children for unknown cluster " + to_string(pid));
    const auto& pnode = mirror[*parent];
    if (!pnode.children.empty()) throw ProtocolError(where + "children of " + to_string(pid) + " sent twice");
    if (nchildren != pnode.child_count) {
      throw ProtocolError(where + "cluster " + to_string(pid) + " announced " + std::to_string(pnode.child_count) +
                          " children but " + std::to_string(nchildren) + " arrived");
    }
    for (std::uint32_t c = 0; c < nchildren; ++c) {
      const auto h = ClusterHeader::read(r);
      if (mirror.find(h.id)) throw ProtocolError(where + "duplicate cluster " + to_string(h.id));
      const auto idx = mirror.add(h.mirror());
      mirror.attach_child(*parent, idx);
    }
  }
  return count;
}

bool needs_children(const ClusterNode& node) { return node.child_count > 0 && !node.children_materialized(); }

// Splits the active blocks of one tree; returns the new active set.
std::vector<std::uint32_t> split_active(BlockTree& blocks, const std::vector<std::uint32_t>& active,
                                        const ClusterTree& rows, const ClusterTree& cols, double eta) {
  std::vector<std::uint32_t> next;
  for (auto b : active) {
    const auto r = blocks[b].row, c = blocks[b].col;
    if (is_admissible(rows[r].box, cols[c].box, eta)) {
      blocks.mutable_node(b).status = BlockStatus::admissible;
      continue;
    }
    const auto kids = block_children(rows, r, cols, c);
    if (kids.empty()) {
      blocks.mutable_node(b).status = BlockStatus::inadmissible;
      continue;
    }
    blocks.mutable_node(b).status = BlockStatus::subdivided;
    for (const auto& [cr, cc] : kids) next.push_back(blocks.add(cr, cc, b));
  }
  return next;
}

}  // namespace

std::vector<std::vector<Index>> partition_indices(const TriangleMesh& mesh, int p) {
  if (p < 1) throw std::invalid_argument("partition_indices: need at least one part");
  if (static_cast<std::size_t>(p) > mesh.size()) {
    throw std::invalid_argument("partition_indices: " + std::to_string(p) + " parts for " +
                                std::to_string(mesh.size()) + " basis functions");
  }
  std::vector<Vec3> centroids(mesh.size());
  for (Index i = 0; i < mesh.size(); ++i) centroids[i] = mesh.centroid(i);
  std::vector<Index> all(mesh.size());
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<std::vector<Index>> out;
  out.reserve(static_cast<std::size_t>(p));
  split_parts(centroids, std::move(all), p, out);
  return out;
}

LocalProblem make_local_problem(const TriangleMesh& mesh, std::vector<Index> global_ids, Rank rank, int nodes,
                                const ClusterOptions& options) {
  if (global_ids.empty()) throw std::invalid_argument("make_local_problem: empty index set");
  if (!std::is_sorted(global_ids.begin(), global_ids.end())) {
    throw std::invalid_argument("make_local_problem: global indices must be ascending");
  }
  LocalProblem local;
  local.rank = rank;
  local.nodes = nodes;
  local.global_ids = std::move(global_ids);
  std::vector<Vec3> centroids;
  std::vector<Box> supports;
  for (Index g : local.global_ids) {
    if (g >= mesh.size()) throw std::out_of_range("make_local_problem: index outside the mesh");
    local.triangles.push_back(mesh.triangle(g));
    centroids.push_back(local.triangles.back().centroid());
    supports.push_back(local.triangles.back().bounds());
    local.characteristic_point += centroids.back();
  }
  local.characteristic_point /= static_cast<double>(local.global_ids.size());
  local.tree = build_cluster_tree(centroids, supports, options, static_cast<std::uint32_t>(rank));
  return local;
}

void SendTree::add(std::uint32_t v) {
  if (v >= member_.size()) member_.resize(v + 1, 0);
  if (member_[v]) return;
  member_[v] = 1;
  nodes_.push_back(v);
}

DistributedSkeleton build_block_distributed(Transport& transport, const ClusterTree& rows, const ClusterTree& cols,
                                            double eta) {
  const int p = transport.size();
  const Rank self = transport.rank();
  DistributedSkeleton sk;
  sk.eta = eta;
  sk.recv_rows.resize(p);
  sk.recv_cols.resize(p);
  sk.send_rows.assign(p, SendTree(rows.size()));
  sk.send_cols.assign(p, SendTree(cols.size()));
  sk.row_blocks.resize(p);
  sk.col_blocks.resize(p);
  std::vector<std::vector<std::uint32_t>> active_row(p), active_col(p);

  for (Rank beta = 0; beta < p; ++beta) {
    ByteWriter w;
    if (beta == self) {
      ClusterHeader::of(rows[0]).write(w);
      ClusterHeader::of(cols[0]).write(w);
      w.f64(eta);
    }
    const Bytes bytes = transport.broadcast(beta, Tag::roots, w.take());
    ByteReader r(bytes);
    const auto rho = ClusterHeader::read(r);
    const auto pi = ClusterHeader::read(r);
    const double eta_beta = r.f64();
    r.expect_done("root headers");
    if (eta_beta != eta) {
      throw ProtocolError("inconsistent admissibility parameter: node " + std::to_string(beta) + " uses " +
                          std::to_string(eta_beta) + ", node " + std::to_string(self) + " uses " +
                          std::to_string(eta));
    }
    sk.recv_rows[beta].add(rho.mirror());
    sk.recv_cols[beta].add(pi.mirror());
    sk.send_rows[beta].add(0);
    sk.send_cols[beta].add(0);
    active_row[beta].push_back(sk.row_blocks[beta].add(0, 0));
    active_col[beta].push_back(sk.col_blocks[beta].add(0, 0));
  }

  int round = 0;
  while (true) {
    ++round;
    std::vector<Bytes> outgoing(p);
    std::vector<std::vector<std::uint32_t>> expect_rows(p), expect_cols(p);
    for (Rank beta = 0; beta < p; ++beta) {
      // Row family: clusters of this node's row tree the peer needs for
      // T(I_alpha x J_beta) on its side, i.e. for its column-family blocks.
      std::vector<std::uint32_t> give_rows, give_cols;
      std::vector<std::uint8_t> marked_rows(rows.size(), 0), marked_cols(cols.size(), 0);
      std::vector<std::uint8_t> want_cols(sk.recv_cols[beta].size(), 0), want_rows(sk.recv_rows[beta].size(), 0);
      const auto& rc = sk.recv_cols[beta];
      for (auto b : active_row[beta]) {
        const auto tau = sk.row_blocks[beta][b].row, sigma = sk.row_blocks[beta][b].col;
        if (is_admissible(rows[tau].box, rc[sigma].box, eta)) continue;
        if (needs_children(rc[sigma]) && !want_cols[sigma]) {
          want_cols[sigma] = 1;
          expect_cols[beta].push_back(sigma);
        }
        if (rows[tau].child_count > 0 && !sk.send_rows[beta].contains(rows[tau].children.front()) &&
            !marked_rows[tau]) {
          marked_rows[tau] = 1;
          give_rows.push_back(tau);
        }
      }
      const auto& rr = sk.recv_rows[beta];
      for (auto b : active_col[beta]) {
        const auto tau = sk.col_blocks[beta][b].row, sigma = sk.col_blocks[beta][b].col;
        if (is_admissible(rr[tau].box, cols[sigma].box, eta)) continue;
        if (needs_children(rr[tau]) && !want_rows[tau]) {
          want_rows[tau] = 1;
          expect_rows[beta].push_back(tau);
        }
        if (cols[sigma].child_count > 0 && !sk.send_cols[beta].contains(cols[sigma].children.front()) &&
            !marked_cols[sigma]) {
          marked_cols[sigma] = 1;
          give_cols.push_back(sigma);
        }
      }
      ByteWriter w;
      write_family(w, rows, give_rows);
      write_family(w, cols, give_cols);
      for (auto v : give_rows)
        for (auto c : rows[v].children) sk.send_rows[beta].add(c);
      for (auto v : give_cols)
        for (auto c : cols[v].children) sk.send_cols[beta].add(c);
      outgoing[beta] = w.take();
    }

    const auto incoming = transport.all_to_all(Tag::children, std::move(outgoing));
    for (Rank beta = 0; beta < p; ++beta) {
      ByteReader r(incoming[beta]);
      // The peer's row section extends our mirror of its rows, its column section our mirror of its columns.
      const auto got_rows = read_family(r, sk.recv_rows[beta], beta, round);
      const auto got_cols = read_family(r, sk.recv_cols[beta], beta, round);
      r.expect_done("children message");
      for (auto v : expect_rows[beta]) {
        if (!sk.recv_rows[beta][v].children_materialized()) {
          throw ProtocolError("round " + std::to_string(round) + ": node " + std::to_string(beta) +
                              " did not send the children of row cluster " + to_string(sk.recv_rows[beta][v].id));
        }
      }
      for (auto v : expect_cols[beta]) {
        if (!sk.recv_cols[beta][v].children_materialized()) {
          throw ProtocolError("round " + std::to_string(round) + ": node " + std::to_string(beta) +
                              " did not send the children of column cluster " +
                              to_string(sk.recv_cols[beta][v].id));
        }
      }
      if (got_rows != expect_rows[beta].size() || got_cols != expect_cols[beta].size()) {
        throw ProtocolError("round " + std::to_string(round) + ": node " + std::to_string(beta) +
                            " sent children that were not requested");
      }
    }

    bool busy = false;
    for (Rank beta = 0; beta < p; ++beta) {
      active_row[beta] = split_active(sk.row_blocks[beta], active_row[beta], rows, sk.recv_cols[beta], eta);
      active_col[beta] = split_active(sk.col_blocks[beta], active_col[beta], sk.recv_rows[beta], cols, eta);
      busy = busy || !active_row[beta].empty() || !active_col[beta].empty();
    }
    if (!transport.reduce_or(busy)) break;
  }
  sk.rounds = round;
  return sk;
}

std::vector<TreeEntry> describe_mirror(const ClusterTree& mirror) {
  std::vector<TreeEntry> out;
  out.reserve(mirror.size());
  for (const auto& node : mirror.nodes()) {
    TreeEntry e{node.id.packed(), node.parent == kNone ? ~std::uint64_t{0} : mirror[node.parent].id.packed(),
                node.box, node.child_count};
    out.push_back(e);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<TreeEntry> describe_send_tree(const ClusterTree& local, const SendTree& send) {
  std::vector<TreeEntry> out;
  out.reserve(send.nodes().size());
  for (auto v : send.nodes()) {
    const auto& node = local[v];
    TreeEntry e{node.id.packed(), node.parent == kNone ? ~std::uint64_t{0} : local[node.parent].id.packed(),
                node.box, node.child_count};
    out.push_back(e);
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <class Scalar>
StorageCensus DistributedH2<Scalar>::census() const {
  StorageCensus census;
  for (const auto& v : basis.leaf) census.leaf_basis += static_cast<std::size_t>(v.size());
  for (const auto& e : basis.transfer) census.transfer += static_cast<std::size_t>(e.size());
  for (std::size_t beta = 0; beta < data.size(); ++beta) {
    const auto& blocks = skeleton.row_blocks[beta];
    for (std::uint32_t b = 0; b < blocks.size(); ++b) {
      if (blocks[b].status == BlockStatus::admissible) {
        ++census.admissible_leaves;
        census.coupling += static_cast<std::size_t>(data[beta].coupling[b].size());
      } else if (blocks[b].status == BlockStatus::inadmissible) {
        ++census.inadmissible_leaves;
        census.nearfield += static_cast<std::size_t>(data[beta].nearfield[b].size());
      }
    }
  }
  return census;
}

template <class Scalar>
DistributedH2<Scalar> setup_matrix_distributed(Transport& transport, const LocalProblem& local,
                                               DistributedSkeleton skeleton, const KernelSpec& kernel,
                                               const H2Options& options) {
  const int p = transport.size();
  const Rank self = transport.rank();
  if (static_cast<int>(skeleton.row_blocks.size()) != p) {
    throw std::invalid_argument("setup_matrix_distributed: skeleton built for a different node count");
  }
  const auto& tree = local.tree;
  const auto rule = triangle_rule(options.quadrature_order);
  const auto basis_rule = triangle_rule(basis_rule_order(options.m, options.quadrature_order));

  DistributedH2<Scalar> h2;
  h2.skeleton = std::move(skeleton);
  const auto& sk = h2.skeleton;
  h2.basis = build_cluster_basis(tree, local.triangles, options.m, basis_rule);

  auto local_geometry = [&](std::uint32_t v) {
    LeafGeometry g;
    g.id = tree[v].id;
    for (Index i : tree[v].indices) {
      g.global_ids.push_back(local.global_ids[i]);
      g.triangles.push_back(local.triangles[i]);
    }
    return g;
  };

  for (Rank beta = 0; beta < p; ++beta) {
    if (beta == self) continue;
    for (auto v : sk.send_cols[beta].nodes()) {
      if (!tree[v].is_leaf()) continue;
      ByteWriter w;
      local_geometry(v).write(w);
      transport.send(beta, Tag::geometry, w.take());
    }
  }

  // geometry[beta][u]: leaf geometry of recv_cols[beta] node u.
  std::vector<std::vector<LeafGeometry>> geometry(p);
  std::vector<std::vector<std::uint8_t>> have(p);
  for (Rank beta = 0; beta < p; ++beta) {
    const auto& mirror = sk.recv_cols[beta];
    geometry[beta].resize(mirror.size());
    have[beta].assign(mirror.size(), 0);
    if (beta == self) {
      for (std::uint32_t u = 0; u < mirror.size(); ++u) {
        if (!mirror[u].is_leaf()) continue;
        const auto v = tree.find(mirror[u].id);
        if (!v) throw ProtocolError("self mirror holds unknown cluster " + to_string(mirror[u].id));
        geometry[beta][u] = local_geometry(*v);
        have[beta][u] = 1;
      }
      continue;
    }
    std::size_t leaves = 0;
    for (const auto& node : mirror.nodes()) leaves += node.is_leaf() ? 1 : 0;
    for (std::size_t k = 0; k < leaves; ++k) {
      const Bytes bytes = transport.recv(beta, Tag::geometry);
      ByteReader r(bytes);
      auto g = LeafGeometry::read(r);
      r.expect_done("geometry message");
      const auto u = mirror.find(g.id);
      if (!u || !mirror[*u].is_leaf()) {
        throw ProtocolError("node " + std::to_string(beta) + " sent geometry for unexpected cluster " +
                            to_string(g.id));
      }
      if (have[beta][*u]) throw ProtocolError("duplicate geometry for cluster " + to_string(g.id));
      have[beta][*u] = 1;
      geometry[beta][*u] = std::move(g);
      ++h2.geometry_messages_received;
    }
  }

  h2.data.resize(p);
  for (Rank beta = 0; beta < p; ++beta) {
    const auto& blocks = sk.row_blocks[beta];
    const auto& mirror = sk.recv_cols[beta];
    auto& data = h2.data[beta];
    data.resize(blocks.size());
    const auto leaves = blocks.leaves();
    parallel_for(leaves.size(), options.threads, [&](std::size_t i) {
      const auto b = leaves[i];
      const auto& blk = blocks[b];
      const auto& tau = tree[blk.row];
      if (blk.status == BlockStatus::admissible) {
        data.coupling[b] = coupling_matrix<Scalar>(kernel, tau.box, mirror[blk.col].box, options.m);
        return;
      }
      if (!have[beta][blk.col]) {
        throw ProtocolError("missing geometry for nearfield block " + block_name(tree, blk.row, mirror, blk.col));
      }
      const auto& g = geometry[beta][blk.col];
      std::vector<Triangle> rt;
      std::vector<Index> rid;
      for (Index r : tau.indices) {
        rt.push_back(local.triangles[r]);
        rid.push_back(local.global_ids[r]);
      }
      data.nearfield[b] = galerkin_block<Scalar>(rt, rid, g.triangles, g.global_ids, kernel, rule);
    });
  }
  return h2;
}

template <class Scalar>
void mvm_distributed(Transport& transport, const LocalProblem& local, const DistributedH2<Scalar>& h2,
                     const Vector<Scalar>& x, Vector<Scalar>& y) {
  const auto n = static_cast<Eigen::Index>(local.size());
  if (x.size() != n || y.size() != n) {
    throw DimensionError("mvm_distributed: node " + std::to_string(transport.rank()) + " expects vectors of length " +
                         std::to_string(n));
  }
  const int p = transport.size();
  const Rank self = transport.rank();
  const auto& tree = local.tree;
  const auto& sk = h2.skeleton;

  CoefficientMap<Scalar> xhat(tree.size());
  forward(tree, h2.basis, ClusterTree::root(), x, xhat);
  const auto xleaf = gather_leaf_inputs(tree, x);

  for (Rank beta = 0; beta < p; ++beta) {
    if (beta == self) continue;
    for (auto v : sk.send_cols[beta].nodes()) {
      ByteWriter w;
      write_vector(w, tree[v].id, xhat[v]);
      transport.send(beta, Tag::xhat, w.take());
      if (tree[v].is_leaf()) {
        ByteWriter wl;
        write_vector(wl, tree[v].id, xleaf[v]);
        transport.send(beta, Tag::xleaf, wl.take());
      }
    }
  }

  std::vector<CoefficientMap<Scalar>> xhat_cols(p);
  std::vector<std::vector<Vector<Scalar>>> xleaf_cols(p);
  for (Rank beta = 0; beta < p; ++beta) {
    const auto& mirror = sk.recv_cols[beta];
    xhat_cols[beta].resize(mirror.size());
    xleaf_cols[beta].resize(mirror.size());
    if (beta == self) {
      for (std::uint32_t u = 0; u < mirror.size(); ++u) {
        const auto v = tree.find(mirror[u].id);
        if (!v) throw ProtocolError("self mirror holds unknown cluster " + to_string(mirror[u].id));
        xhat_cols[beta][u] = xhat[*v];
        if (mirror[u].is_leaf()) xleaf_cols[beta][u] = xleaf[*v];
      }
      continue;
    }
    std::size_t leaves = 0;
    for (const auto& node : mirror.nodes()) leaves += node.is_leaf() ? 1 : 0;
    auto receive = [&](Tag tag, std::size_t count, std::vector<Vector<Scalar>>& into) {
      std::vector<std::uint8_t> seen(mirror.size(), 0);
      for (std::size_t k = 0; k < count; ++k) {
        const Bytes bytes = transport.recv(beta, tag);
        ByteReader r(bytes);
        ClusterId id;
        auto v = read_vector<Scalar>(r, id);
        r.expect_done(to_string(tag));
        const auto u = mirror.find(id);
        if (!u || seen[*u]) {
          throw ProtocolError(std::string(to_string(tag)) + " from node " + std::to_string(beta) +
                              " for unexpected cluster " + to_string(id));
        }
        seen[*u] = 1;
        into[*u] = std::move(v);
      }
    };
    receive(Tag::xhat, mirror.size(), xhat_cols[beta]);
    receive(Tag::xleaf, leaves, xleaf_cols[beta]);
  }

  CoefficientMap<Scalar> yhat(tree.size(), Vector<Scalar>::Zero(h2.basis.rank()));
  for (Rank beta = 0; beta < p; ++beta) {
    interaction(sk.row_blocks[beta], BlockTree::root(), h2.data[beta], tree, xhat_cols[beta], xleaf_cols[beta], yhat,
                y);
  }
  backward(tree, h2.basis, ClusterTree::root(), yhat, y);
}

#define H2DIST_INSTANTIATE(S)                                                                                   \
  template struct DistributedH2<S>;                                                                             \
  template DistributedH2<S> setup_matrix_distributed<S>(Transport&, const LocalProblem&, DistributedSkeleton,   \
                                                        const KernelSpec&, const H2Options&);                   \
  template void mvm_distributed<S>(Transport&, const LocalProblem&, const DistributedH2<S>&, const Vector<S>&,  \
                                   Vector<S>&);
H2DIST_INSTANTIATE(double)
H2DIST_INSTANTIATE(Complex)
#undef H2DIST_INSTANTIATE

}  // namespace h2dist

namespace h2dist {

template <class Scalar>
DistributedRun<Scalar> simulate_distributed(const TriangleMesh& mesh, const KernelSpec& kernel,
                                            const Vector<Scalar>& x, const DistributedRunOptions& options) {
  if (static_cast<std::size_t>(x.size()) != mesh.size()) {
    throw DimensionError("simulate_distributed: x has length " + std::to_string(x.size()) + ", mesh has " +
                         std::to_string(mesh.size()) + " basis functions");
  }
  const auto parts = partition_indices(mesh, options.p);
  auto nodes = run_nodes(options.p, [&](Transport& t) {
    DistributedNode<Scalar> node;
    node.local = make_local_problem(mesh, parts[t.rank()], t.rank(), options.p, options.cluster);
    auto skeleton = build_block_distributed(t, node.local.tree, node.local.tree, options.h2.eta);
    node.h2 = setup_matrix_distributed<Scalar>(t, node.local, std::move(skeleton), kernel, options.h2);
    Vector<Scalar> xl(static_cast<Eigen::Index>(node.local.size()));
    for (std::size_t i = 0; i < node.local.size(); ++i) xl[static_cast<Eigen::Index>(i)] = x[node.local.global_ids[i]];
    node.y = Vector<Scalar>::Zero(xl.size());
    mvm_distributed(t, node.local, node.h2, xl, node.y);
    node.traffic = t.census();
    return node;
  });
  DistributedRun<Scalar> run;
  run.y = Vector<Scalar>::Zero(x.size());
  for (const auto& node : nodes) {
    for (std::size_t i = 0; i < node.local.size(); ++i) run.y[node.local.global_ids[i]] = node.y[static_cast<Eigen::Index>(i)];
  }
  run.nodes = std::move(nodes);
  return run;
}

ClusterTree composed_tree(std::span<const LocalProblem* const> locals) {
  std::vector<Box> boxes;
  std::vector<const ClusterTree*> trees;
  std::vector<std::vector<Index>> ids;
  for (const auto* l : locals) {
    boxes.push_back(l->tree[0].box);
    trees.push_back(&l->tree);
    ids.push_back(l->global_ids);
  }
  return compose_cluster_tree(flat_layout(boxes), trees, ids);
}

template <class Scalar>
H2Matrix<Scalar> sequential_reference(const TriangleMesh& mesh, const KernelSpec& kernel,
                                      std::span<const LocalProblem* const> locals, const H2Options& options) {
  auto tree = std::make_shared<const ClusterTree>(composed_tree(locals));
  return assemble_h2<Scalar>(mesh, kernel, tree, tree, options);
}

template DistributedRun<double> simulate_distributed<double>(const TriangleMesh&, const KernelSpec&,
                                                             const Vector<double>&, const DistributedRunOptions&);
template DistributedRun<Complex> simulate_distributed<Complex>(const TriangleMesh&, const KernelSpec&,
                                                               const Vector<Complex>&, const DistributedRunOptions&);
template H2Matrix<double> sequential_reference<double>(const TriangleMesh&, const KernelSpec&,
                                                       std::span<const LocalProblem* const>, const H2Options&);
template H2Matrix<Complex> sequential_reference<Complex>(const TriangleMesh&, const KernelSpec&,
                                                         std::span<const LocalProblem* const>, const H2Options&);

}  // namespace h2dist
