#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gsray/geometry.hpp"

namespace gsray {

// ---------------------------------------------------------------------------
// Morton (Z-order) codes

inline constexpr int kMortonBits = 21;
inline constexpr std::uint32_t kMortonMax = (1u << kMortonBits) - 1;

using MortonCode = std::uint64_t;

/// Interleaves three 21-bit coordinates: x -> bit 0, y -> bit 1, z -> bit 2, ...
MortonCode morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z);
Eigen::Matrix<std::uint32_t, 3, 1> morton_decode(MortonCode code);

/// Quantizes `p` against `domain` (normalized per axis to [0,1), scaled by 2^21).
Eigen::Matrix<std::uint32_t, 3, 1> morton_quantize(const Eigen::Vector3d& p, const Aabbd& domain);

/// Stable ascending-code order of `points`; result[new_index] = old_index.
std::vector<std::uint32_t> morton_order(std::span<const Eigen::Vector3d> points);

// ---------------------------------------------------------------------------
// Ray / ellipsoid

/// sigma_eps isosurface of a primitive, ready for ray queries.
struct BoundingEllipsoid {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // local -> world
  Eigen::Vector3d semi_axes = Eigen::Vector3d::Ones();
};

struct Interval {
  double lo;
  double hi;
};

/// b^2 - a c with the product error recovered through fma.
double kahan_discriminant(double a, double b, double c);

/// Parametric interval where the line o + t d lies inside the ellipsoid.
std::optional<Interval> intersect_ellipsoid(const BoundingEllipsoid& e, const Eigen::Vector3d& origin,
                                            const Eigen::Vector3d& dir);

/// Closed slab test; handles zero direction components explicitly.
std::optional<Interval> intersect_aabb(const Aabbd& box, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);

// ---------------------------------------------------------------------------
// BVH

struct BvhNode {
  Aabbd bounds;
  std::uint32_t first = 0;  // leaf: first slot in Bvh::indices; interior: left child
  std::uint32_t count = 0;  // leaf: number of primitives; interior: 0
  std::uint32_t right = 0;  // interior: right child
  bool leaf() const { return count > 0; }
};

class Bvh {
 public:
  static constexpr std::uint32_t kMaxLeafSize = 4;

  Bvh() = default;

  bool empty() const { return nodes_.empty(); }
  const std::vector<BvhNode>& nodes() const { return nodes_; }
  /// Primitive ids referenced by leaves.
  const std::vector<std::uint32_t>& indices() const { return indices_; }
  Aabbd bounds() const { return empty() ? Aabbd{} : nodes_.front().bounds; }
  /// Box of primitive `id` as given at build time.
  const Aabbd& primitive_bounds(std::uint32_t id) const { return boxes_[id]; }
  std::size_t primitive_slots() const { return boxes_.size(); }

 private:
  friend Bvh bvh_build(std::span<const Aabbd>, std::span<const std::uint32_t>);
  std::vector<BvhNode> nodes_;
  std::vector<std::uint32_t> indices_;
  std::vector<Aabbd> boxes_;
};

/// Binned-SAH build. `ids` selects which boxes enter the tree (all when empty).
Bvh bvh_build(std::span<const Aabbd> boxes, std::span<const std::uint32_t> ids = {});

struct TraversalStats {
  std::uint64_t node_visits = 0;
  std::uint64_t aabb_hits = 0;
  std::uint64_t ellipsoid_hits = 0;

  TraversalStats& operator+=(const TraversalStats& o) {
    node_visits += o.node_visits;
    aabb_hits += o.aabb_hits;
    ellipsoid_hits += o.ellipsoid_hits;
    return *this;
  }
};

/// Smallest t in [t_lo, t_hi] at which the ray is inside some primitive's
/// ellipsoid. A ray starting inside reports t_lo.
std::optional<double> closest_hit(const Bvh& bvh, std::span<const BoundingEllipsoid> ellipsoids,
                                  const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t_lo, double t_hi,
                                  TraversalStats* stats = nullptr);

/// Fixed-capacity list of primitive indices overlapping a ray segment.
class HitBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 64;

  explicit HitBuffer(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) { indices_.reserve(capacity); }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  std::span<const std::uint32_t> indices() const { return indices_; }
  std::uint32_t operator[](std::size_t i) const { return indices_[i]; }

  void clear() { indices_.clear(); }
  /// Throws BufferOverflow when full.
  void push(std::uint32_t index);
  void sort();

 private:
  std::size_t capacity_;
  std::vector<std::uint32_t> indices_;
};

/// Collects every primitive whose box overlaps the parametric segment [t0, t1]
/// (segments fully inside a box included). Result is sorted ascending and
/// returns its count n_p.
std::size_t collect_segment(const Bvh& bvh, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t0,
                            double t1, HitBuffer& buffer, TraversalStats* stats = nullptr);

}  // namespace gsray
