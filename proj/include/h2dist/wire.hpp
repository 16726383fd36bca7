#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "h2dist/box.hpp"
#include "h2dist/clustering.hpp"
#include "h2dist/geometry.hpp"
#include "h2dist/transport.hpp"
#include "h2dist/types.hpp"

namespace h2dist {

// Little-endian encoder for message payloads.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void vec3(const Vec3& v) {
    f64(v[0]);
    f64(v[1]);
    f64(v[2]);
  }
  template <class Scalar>
  void scalar(const Scalar& v) {
    if constexpr (is_complex_v<Scalar>) {
      f64(v.real());
      f64(v.imag());
    } else {
      f64(v);
    }
  }

  std::size_t size() const { return bytes_.size(); }
  Bytes take() { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

// Bounds-checked decoder; overruns raise ProtocolError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Vec3 vec3() {
    const double x = f64(), y = f64(), z = f64();
    return {x, y, z};
  }
  template <class Scalar>
  Scalar scalar() {
    if constexpr (is_complex_v<Scalar>) {
      const double re = f64();
      return {re, f64()};
    } else {
      return f64();
    }
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void expect_done(const char* what) const {
    if (!done()) throw ProtocolError(std::string(what) + ": " + std::to_string(remaining()) + " trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ProtocolError("truncated message payload");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Box corners, number of children and stable id: 6 float64 + uint32 + uint64.
struct ClusterHeader {
  static constexpr std::size_t kWireSize = 6 * 8 + 4 + 8;

  Box box;
  std::uint32_t child_count = 0;
  ClusterId id;

  static ClusterHeader of(const ClusterNode& node) { return {node.box, node.child_count, node.id}; }
  void write(ByteWriter& w) const {
    w.vec3(box.lo);
    w.vec3(box.hi);
    w.u32(child_count);
    w.u64(id.packed());
  }
  static ClusterHeader read(ByteReader& r) {
    ClusterHeader h;
    h.box.lo = r.vec3();
    h.box.hi = r.vec3();
    h.child_count = r.u32();
    h.id = ClusterId::unpack(r.u64());
    return h;
  }
  // A cluster without index set, as mirrored on remote nodes.
  ClusterNode mirror() const {
    ClusterNode node;
    node.box = box;
    node.child_count = child_count;
    node.id = id;
    return node;
  }
};

// Cluster id + length + entries (real and imaginary parts for complex scalars).
template <class Scalar>
void write_vector(ByteWriter& w, ClusterId id, const Vector<Scalar>& v) {
  w.u64(id.packed());
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.scalar(v[i]);
}

template <class Scalar>
Vector<Scalar> read_vector(ByteReader& r, ClusterId& id) {
  id = ClusterId::unpack(r.u64());
  const std::uint32_t n = r.u32();
  const std::size_t width = is_complex_v<Scalar> ? 16 : 8;
  if (r.remaining() < n * width) throw ProtocolError("vector payload shorter than its length field");
  Vector<Scalar> v(n);
  for (std::uint32_t i = 0; i < n; ++i) v[i] = r.scalar<Scalar>();
  return v;
}

// Nearfield geometry of one leaf: id, count, ascending global indices, then
// the three vertices of each triangle (9 float64 per triangle).
struct LeafGeometry {
  ClusterId id;
  std::vector<Index> global_ids;
  std::vector<Triangle> triangles;

  void write(ByteWriter& w) const {
    w.u64(id.packed());
    w.u32(static_cast<std::uint32_t>(global_ids.size()));
    for (Index g : global_ids) w.u32(g);
    for (const auto& t : triangles) {
      w.vec3(t.a);
      w.vec3(t.b);
      w.vec3(t.c);
    }
  }
  static LeafGeometry read(ByteReader& r) {
    LeafGeometry g;
    g.id = ClusterId::unpack(r.u64());
    const std::uint32_t n = r.u32();
    if (r.remaining() < static_cast<std::size_t>(n) * (4 + 72)) throw ProtocolError("geometry payload truncated");
    g.global_ids.resize(n);
    for (auto& i : g.global_ids) i = r.u32();
    g.triangles.resize(n);
    for (auto& t : g.triangles) {
      t.a = r.vec3();
      t.b = r.vec3();
      t.c = r.vec3();
    }
    return g;
  }
};

// uint32 count + uint32 node ids.
inline void write_rank_set(ByteWriter& w, const std::vector<Rank>& ranks) {
  w.u32(static_cast<std::uint32_t>(ranks.size()));
  for (Rank r : ranks) w.u32(static_cast<std::uint32_t>(r));
}

inline std::vector<Rank> read_rank_set(ByteReader& r) {
  const std::uint32_t n = r.u32();
  if (r.remaining() < static_cast<std::size_t>(n) * 4) throw ProtocolError("rank set truncated");
  std::vector<Rank> out(n);
  for (auto& v : out) v = static_cast<Rank>(r.u32());
  return out;
}

}  // namespace h2dist
