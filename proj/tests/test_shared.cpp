#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "h2dist/shared.hpp"
#include "support.hpp"

using namespace h2dist;
using h2test::random_vector;

namespace {

SharedRunOptions shared_options(int p, FanOut fanout = FanOut::point_to_point) {
  SharedRunOptions o;
  o.p = p;
  o.h2.m = 3;
  o.fanout = fanout;
  return o;
}

template <class S>
std::vector<const LocalProblem*> locals_of(const SharedRun<S>& run) {
  std::vector<const LocalProblem*> out;
  for (const auto& n : run.nodes) out.push_back(&n.local);
  return out;
}

std::vector<const SharedView*> row_views(const SharedRun<double>& run) {
  std::vector<const SharedView*> out;
  for (const auto& n : run.nodes) out.push_back(&n.h2.skeleton.rows);
  return out;
}

struct Entry {
  std::uint64_t id;
  Rank peer;
  Box box;
  std::uint32_t child_count;
  bool operator==(const Entry&) const = default;
  bool operator<(const Entry& o) const { return std::tie(id, peer) < std::tie(o.id, o.peer); }
};

// Send-tree vertices of `sender` addressed to `receiver`, and the receive-tree
// clusters at `receiver` managed by `sender`.
std::pair<std::vector<Entry>, std::vector<Entry>> pairing(const SharedView& sview, const std::vector<SendVertex>& send,
                                                          Rank sender, const SharedView& rview,
                                                          const std::vector<std::uint32_t>& recv, Rank receiver) {
  std::vector<Entry> s, r;
  for (const auto& v : send) {
    if (v.peer != receiver) continue;
    const auto& node = sview.tree[v.cluster];
    s.push_back({node.id.packed(), receiver, node.box, node.child_count});
  }
  for (auto v : recv) {
    if (rview.manager[v] != sender) continue;
    const auto& node = rview.tree[v];
    r.push_back({node.id.packed(), receiver, node.box, node.child_count});
  }
  std::sort(s.begin(), s.end());
  std::sort(r.begin(), r.end());
  return {s, r};
}

TriangleMesh two_spheres(int level, double offset) {
  const auto s = build_sphere_mesh(level);
  std::vector<Vec3> verts = s.vertices();
  std::vector<std::array<Index, 3>> tris = s.triangles();
  const auto nv = static_cast<Index>(verts.size());
  for (const auto& v : s.vertices()) verts.push_back(v + Vec3(offset, 0, 0));
  for (const auto& t : s.triangles()) tris.push_back({t[0] + nv, t[1] + nv, t[2] + nv});
  return TriangleMesh(std::move(verts), std::move(tris));
}

}  // namespace

TEST_CASE("shared cluster tree for two and four nodes") {
  const auto mesh = build_sphere_mesh(3);
  auto views_for = [&](int p) {
    const auto parts = partition_indices(mesh, p);
    return run_nodes(p, [&](Transport& t) {
      const auto local = make_local_problem(mesh, parts[t.rank()], t.rank(), p);
      return build_shared_cluster_tree(t, local.tree, local.characteristic_point);
    });
  };
  SUBCASE("p = 2") {
    const auto views = views_for(2);
    for (Rank r = 0; r < 2; ++r) {
      const auto& v = views[r];
      CHECK(v.tree[0].id.is_shared());
      CHECK(v.shareholders[0] == std::vector<Rank>{0, 1});
      CHECK(v.manager[0] == 0);
      REQUIRE(v.tree[0].children.size() == 2);
      CHECK(v.tree[v.tree[0].children[0]].id == ClusterId{0, 0});
      CHECK(v.tree[v.tree[0].children[1]].id == ClusterId{1, 0});
      CHECK(v.tree[v.local_root].id == ClusterId{static_cast<std::uint32_t>(r), 0});
    }
  }
  SUBCASE("p = 4") {
    const auto views = views_for(4);
    const auto& layout = views[0].layout;
    REQUIRE(layout.nodes.size() == 3);
    CHECK(layout.nodes[0].shareholders == std::vector<Rank>{0, 1, 2, 3});
    const auto& a = layout.nodes[layout.nodes[0].children[0]];
    const auto& b = layout.nodes[layout.nodes[0].children[1]];
    CHECK(a.shareholders == std::vector<Rank>{0, 1});
    CHECK(b.shareholders == std::vector<Rank>{2, 3});
    CHECK(a.children == std::vector<int>{TreeLayout::slot(0), TreeLayout::slot(1)});
    CHECK(b.children == std::vector<int>{TreeLayout::slot(2), TreeLayout::slot(3)});
    CHECK(a.manager == 0);
    CHECK(b.manager == 2);
    // Node 0 holds the root and tau_{1,2}; tau_{3,4} is a header without children.
    const auto& v0 = views[0];
    const auto other = v0.tree.find(ClusterId{ClusterId::kSharedOwner, 2});
    REQUIRE(other);
    CHECK(v0.tree[*other].children.empty());
    CHECK(v0.tree[*other].child_count == 2);
    CHECK_FALSE(v0.tree.find(ClusterId{2, 0}));
    CHECK(v0.tree.find(ClusterId{1, 0}));
    std::vector<const SharedView*> ptrs;
    for (const auto& v : views) ptrs.push_back(&v);
    CHECK(check_shareholders(ptrs) == "");
    for (Rank r = 0; r < 4; ++r) CHECK(max_shared_per_level(views[r], r) == 1);
  }
}

TEST_CASE("shareholder conditions hold for uneven node counts") {
  const auto mesh = build_sphere_mesh(3);
  for (int p : {2, 3, 4, 5, 8}) {
    CAPTURE(p);
    const auto run = simulate_shared<double>(mesh, KernelSpec::laplace(), random_vector(mesh.size(), 2), shared_options(p));
    CHECK(check_shareholders(row_views(run)) == "");
    for (Rank r = 0; r < p; ++r) CHECK(max_shared_per_level(run.nodes[r].h2.skeleton.rows, r) <= 1);
  }
}

TEST_CASE("the shareholder checker reports violations") {
  const auto mesh = build_sphere_mesh(2);
  const auto run = simulate_shared<double>(mesh, KernelSpec::laplace(), random_vector(mesh.size(), 2), shared_options(4));
  auto views = std::vector<SharedView>{};
  for (const auto& n : run.nodes) views.push_back(n.h2.skeleton.rows);
  // Claim node 3 shares node 0's local root.
  auto& v0 = views[0];
  v0.shareholders[v0.local_root] = {0, 3};
  std::vector<const SharedView*> ptrs;
  for (const auto& v : views) ptrs.push_back(&v);
  CHECK(check_shareholders(ptrs) != "");
}

TEST_CASE("p = 1 reproduces the sequential block tree and product") {
  const auto mesh = build_sphere_mesh(3);
  const auto x = random_vector(mesh.size(), 4);
  const auto run = simulate_shared<double>(mesh, KernelSpec::laplace(), x, shared_options(1));
  const auto& sk = run.nodes[0].h2.skeleton;
  const auto& tree = run.nodes[0].local.tree;
  const auto seq = build_block_tree(tree, tree, 1.0);
  REQUIRE(sk.row_blocks.size() == seq.size());
  auto same = [&](auto&& self, std::uint32_t d, std::uint32_t s) -> void {
    REQUIRE(sk.row_blocks[d].status == seq[s].status);
    REQUIRE(sk.rows.tree[sk.row_blocks[d].row].id == tree[seq[s].row].id);
    REQUIRE(sk.cols.tree[sk.row_blocks[d].col].id == tree[seq[s].col].id);
    REQUIRE(sk.row_blocks[d].children.size() == seq[s].children.size());
    for (std::size_t k = 0; k < seq[s].children.size(); ++k) self(self, sk.row_blocks[d].children[k], seq[s].children[k]);
  };
  same(same, 0, 0);
  const auto locals = locals_of(run);
  const auto ref = shared_sequential_reference<double>(mesh, KernelSpec::laplace(), sk.rows.layout, locals,
                                                       shared_options(1).h2);
  CHECK(run.y == ref.apply(x));
  CHECK(run.nodes[0].traffic.total().messages == 0);
}

TEST_CASE("far-apart halves store one admissible coupling each") {
  const auto mesh = two_spheres(1, 10.0);
  const auto run = simulate_shared<double>(mesh, KernelSpec::laplace(), random_vector(mesh.size(), 3), shared_options(2));
  for (Rank a = 0; a < 2; ++a) {
    const auto& sk = run.nodes[a].h2.skeleton;
    std::size_t cross = 0;
    for (std::uint32_t b = 0; b < sk.row_blocks.size(); ++b) {
      const auto& blk = sk.row_blocks[b];
      if (!run.nodes[a].h2.managed_rows[blk.row] || !blk.is_leaf()) continue;
      const auto col = sk.cols.tree[blk.col].id;
      if (col.owner == static_cast<std::uint32_t>(1 - a)) {
        ++cross;
        CHECK(blk.status == BlockStatus::admissible);
        CHECK(col.index == 0);
      }
    }
    CHECK(cross == 1);
    CHECK(run.nodes[a].traffic.of(Tag::geometry).messages == 0);
  }
}

TEST_CASE("level-3 shared structures and MVM") {
  const auto mesh = build_sphere_mesh(3);
  const std::size_t n = mesh.size();
  const auto x = random_vector(n, 21);
  for (int p : {2, 3, 4, 8}) {
    CAPTURE(p);
    const auto run = simulate_shared<double>(mesh, KernelSpec::laplace(), x, shared_options(p));
    const auto locals = locals_of(run);
    const auto& layout = run.nodes[0].h2.skeleton.rows.layout;
    const auto tree = shared_composed_tree(layout, locals);
    const auto ref = shared_sequential_reference<double>(mesh, KernelSpec::laplace(), layout, locals,
                                                         shared_options(p).h2);
    const Eigen::VectorXd y_ref = ref.apply(x);
    CHECK(h2test::rel_error(run.y, y_ref) <= 1e-12);

    for (const auto& node : run.nodes) CHECK(node.h2.skeleton.rounds == run.nodes[0].h2.skeleton.rounds);

    // Send vertices at the manager pair up with receive entries at the peer, both families.
    for (Rank a = 0; a < p; ++a) {
      for (Rank b = 0; b < p; ++b) {
        const auto& sa = run.nodes[a].h2.skeleton;
        const auto& sb = run.nodes[b].h2.skeleton;
        const auto [sc, rc] = pairing(sa.cols, sa.send_cols, a, sb.cols, sb.recv_cols, b);
        CHECK(sc == rc);
        const auto [sr, rr] = pairing(sa.rows, sa.send_rows, a, sb.rows, sb.recv_rows, b);
        CHECK(sr == rr);
      }
    }

    // Only managers send, and only about clusters they manage.
    for (Rank a = 0; a < p; ++a) {
      const auto& sk = run.nodes[a].h2.skeleton;
      for (const auto& v : sk.send_cols) CHECK(sk.cols.manager[v.cluster] == a);
      for (const auto& v : sk.send_rows) CHECK(sk.rows.manager[v.cluster] == a);
    }

    // Owned leaves (managed rows) partition I x J and match the reference block tree.
    std::vector<int> hits(n * n, 0);
    std::set<std::pair<std::uint64_t, std::uint64_t>> adm, adm_ref;
    for (const auto& node : run.nodes) {
      const auto& sk = node.h2.skeleton;
      for (std::uint32_t b = 0; b < sk.row_blocks.size(); ++b) {
        const auto& blk = sk.row_blocks[b];
        if (!blk.is_leaf() || !node.h2.managed_rows[blk.row]) continue;
        const auto rid = sk.rows.tree[blk.row].id, cid = sk.cols.tree[blk.col].id;
        for (Index i : tree[*tree.find(rid)].indices)
          for (Index j : tree[*tree.find(cid)].indices) ++hits[i * n + j];
        if (blk.status == BlockStatus::admissible) adm.insert({rid.packed(), cid.packed()});
      }
    }
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    for (std::uint32_t b = 0; b < ref.blocks.size(); ++b) {
      if (ref.blocks[b].status == BlockStatus::admissible) {
        adm_ref.insert({tree[ref.blocks[b].row].id.packed(), tree[ref.blocks[b].col].id.packed()});
      }
    }
    CHECK(adm == adm_ref);

    // Forward messages: one per child managed elsewhere than its parent, sent by the child's manager.
    std::vector<std::size_t> expected(p, 0);
    for (const auto& ln : layout.nodes) {
      for (int c : ln.children) {
        const Rank cm = c >= 0 ? layout.nodes[c].manager : TreeLayout::rank_of(c);
        if (cm != ln.manager) ++expected[cm];
      }
    }
    for (Rank a = 0; a < p; ++a) {
      CHECK(run.nodes[a].traffic.of(Tag::coefficients).messages == expected[a]);
      // The same pairs carry the backward updates in the other direction.
      std::size_t down = 0;
      for (const auto& ln : layout.nodes) {
        if (ln.manager != a) continue;
        for (int c : ln.children) {
          const Rank cm = c >= 0 ? layout.nodes[c].manager : TreeLayout::rank_of(c);
          if (cm != a) ++down;
        }
      }
      CHECK(run.nodes[a].traffic.of(Tag::yhat).messages == down);
    }
  }
}

TEST_CASE("shared forward and backward against the composed tree") {
  const auto mesh = build_sphere_mesh(3);
  const int p = 4;
  const auto parts = partition_indices(mesh, p);
  const auto x = random_vector(mesh.size(), 8);
  const auto yroot = random_vector(27, 9);
  struct Out {
    LocalProblem local;
    Eigen::VectorXd root_hat;
    Eigen::VectorXd y;
    Eigen::VectorXd y_zero;
  };
  const auto outs = run_nodes(p, [&](Transport& t) {
    Out o;
    o.local = make_local_problem(mesh, parts[t.rank()], t.rank(), p);
    auto rows = build_shared_cluster_tree(t, o.local.tree, o.local.characteristic_point);
    auto cols = rows;
    auto sk = build_shared(t, std::move(rows), std::move(cols), 1.0);
    H2Options opt;
    opt.m = 3;
    const auto h2 = setup_matrix_shared<double>(t, o.local, std::move(sk), KernelSpec::laplace(), opt);
    const auto& view = h2.skeleton.cols;
    Eigen::VectorXd xl(static_cast<Eigen::Index>(o.local.size()));
    for (std::size_t i = 0; i < o.local.size(); ++i) xl[static_cast<Eigen::Index>(i)] = x[o.local.global_ids[i]];
    CoefficientMap<double> xhat(view.tree.size());
    forward_shared(t, view, h2.basis, 0, xl, xhat);
    if (view.manager[0] == t.rank()) o.root_hat = xhat[0];

    CoefficientMap<double> yhat(view.tree.size(), Eigen::VectorXd::Zero(27));
    o.y_zero = Eigen::VectorXd::Ones(xl.size());
    backward_shared(t, h2.skeleton.rows, h2.basis, 0, yhat, o.y_zero);

    for (auto& v : yhat) v.setZero();
    if (view.manager[0] == t.rank()) yhat[0] = yroot;
    o.y = Eigen::VectorXd::Zero(xl.size());
    backward_shared(t, h2.skeleton.rows, h2.basis, 0, yhat, o.y);
    return o;
  });
  std::vector<const LocalProblem*> locals;
  for (const auto& o : outs) locals.push_back(&o.local);
  std::vector<Vec3> points;
  std::vector<Box> boxes;
  for (const auto& o : outs) {
    points.push_back(o.local.characteristic_point);
    boxes.push_back(o.local.tree[0].box);
  }
  const auto tree = shared_composed_tree(bisection_layout(points, boxes), locals);
  const auto basis = build_cluster_basis(tree, mesh.all_triangles(), 3, triangle_rule(basis_rule_order(3, 4)));
  CoefficientMap<double> xhat(tree.size());
  forward(tree, basis, 0, x, xhat);
  REQUIRE(outs[0].root_hat.size() == 27);
  CHECK((outs[0].root_hat - xhat[0]).norm() <= 1e-12 * xhat[0].norm());

  Eigen::VectorXd y(static_cast<Eigen::Index>(mesh.size()));
  for (const auto& o : outs) {
    CHECK(o.y_zero == Eigen::VectorXd::Ones(o.y_zero.size()));
    for (std::size_t i = 0; i < o.local.size(); ++i) y[o.local.global_ids[i]] = o.y[static_cast<Eigen::Index>(i)];
  }
  // <V^T x, yhat> = <x, V yhat>
  const double lhs = outs[0].root_hat.dot(yroot), rhs = x.dot(y);
  CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
}

TEST_CASE("both fan-out strategies build the same structures") {
  const auto mesh = build_sphere_mesh(3);
  const auto x = random_vector(mesh.size(), 6);
  for (int p : {3, 8}) {
    const auto a = simulate_shared<double>(mesh, KernelSpec::laplace(), x, shared_options(p, FanOut::point_to_point));
    const auto b = simulate_shared<double>(mesh, KernelSpec::laplace(), x, shared_options(p, FanOut::collective));
    CHECK(a.y == b.y);
    std::size_t relay_a = 0, relay_b = 0;
    for (Rank r = 0; r < p; ++r) {
      CHECK(a.nodes[r].h2.skeleton.row_blocks.size() == b.nodes[r].h2.skeleton.row_blocks.size());
      CHECK(a.nodes[r].h2.skeleton.send_cols == b.nodes[r].h2.skeleton.send_cols);
      relay_a += a.nodes[r].traffic.of(Tag::relay).messages;
      relay_b += b.nodes[r].traffic.of(Tag::relay).messages;
    }
    CHECK(relay_b == static_cast<std::size_t>(p * (p - 1) * a.nodes[0].h2.skeleton.rounds));
    CHECK(relay_a < relay_b);
  }
}

namespace {

// Eight unit spheres on the corners of a cube with the given edge length.
TriangleMesh sphere_grid(int level, double spacing) {
  const auto s = build_sphere_mesh(level);
  std::vector<Vec3> verts;
  std::vector<std::array<Index, 3>> tris;
  for (int k = 0; k < 8; ++k) {
    const Vec3 off(spacing * (k & 1), spacing * ((k >> 1) & 1), spacing * ((k >> 2) & 1));
    const auto nv = static_cast<Index>(verts.size());
    for (const auto& v : s.vertices()) verts.push_back(v + off);
    for (const auto& t : s.triangles()) tris.push_back({t[0] + nv, t[1] + nv, t[2] + nv});
  }
  return TriangleMesh(std::move(verts), std::move(tris));
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stored_blocks(const TriangleMesh& mesh, int p) {
  const auto x = random_vector(mesh.size(), 7);
  DistributedRunOptions d;
  d.p = p;
  d.h2.m = 3;
  const auto dist = simulate_distributed<double>(mesh, KernelSpec::laplace(), x, d);
  const auto shared = simulate_shared<double>(mesh, KernelSpec::laplace(), x, shared_options(p));
  std::vector<std::size_t> a, b;
  for (int r = 0; r < p; ++r) {
    a.push_back(dist.nodes[r].h2.census().stored_blocks());
    b.push_back(shared.nodes[r].h2.census().stored_blocks());
  }
  return {a, b};
}

}  // namespace

TEST_CASE("separated subdomains: shared trees remove the per-node floor of p blocks") {
  const auto [block_row, shared] = stored_blocks(sphere_grid(1, 10.0), 8);
  for (int r = 0; r < 8; ++r) {
    CAPTURE(r);
    CHECK(block_row[r] >= 8);  // one block per peer at least
    CHECK(shared[r] < block_row[r]);
  }
  CHECK(*std::max_element(shared.begin(), shared.end()) < *std::max_element(block_row.begin(), block_row.end()));
}

TEST_CASE("sphere: shared trees never store more blocks per node") {
  // Every subdomain box of the sphere contains the origin, so no block above
  // the local roots is admissible and both variants end with the same leaves.
  const auto [block_row, shared] = stored_blocks(build_sphere_mesh(3), 8);
  for (int r = 0; r < 8; ++r) CHECK(shared[r] <= block_row[r]);
}

TEST_CASE("helmholtz shared matches its reference") {
  const auto mesh = build_sphere_mesh(3);
  const auto kernel = KernelSpec::helmholtz(2.0);
  const auto x = random_vector<Complex>(mesh.size(), 5);
  const auto run = simulate_shared<Complex>(mesh, kernel, x, shared_options(4));
  const auto locals = locals_of(run);
  const auto ref = shared_sequential_reference<Complex>(mesh, kernel, run.nodes[0].h2.skeleton.rows.layout, locals,
                                                        shared_options(4).h2);
  const Vector<Complex> ys = ref.apply(x);
  CHECK((run.y - ys).norm() / ys.norm() <= 1e-12);
}

TEST_CASE("shared runs are deterministic") {
  const auto mesh = build_sphere_mesh(3);
  const auto x = random_vector(mesh.size(), 10);
  const auto a = simulate_shared<double>(mesh, KernelSpec::laplace(), x, shared_options(8));
  const auto b = simulate_shared<double>(mesh, KernelSpec::laplace(), x, shared_options(8));
  CHECK(a.y == b.y);
  for (int r = 0; r < 8; ++r) CHECK(a.nodes[r].traffic == b.nodes[r].traffic);
}

TEST_CASE("mismatched eta is rejected by the shared construction") {
  const auto mesh = build_sphere_mesh(1);
  const auto parts = partition_indices(mesh, 2);
  auto body = [&](Transport& t) {
    const auto local = make_local_problem(mesh, parts[t.rank()], t.rank(), 2);
    auto rows = build_shared_cluster_tree(t, local.tree, local.characteristic_point);
    auto cols = rows;
    build_shared(t, std::move(rows), std::move(cols), t.rank() == 0 ? 1.0 : 0.5);
    return 0;
  };
  CHECK_THROWS_AS(run_nodes(2, body), ProtocolError);
}
