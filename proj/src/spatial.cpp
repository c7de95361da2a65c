#include "gsray/spatial.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gsray/errors.hpp"

namespace gsray {

namespace {

std::uint64_t spread_bits(std::uint32_t v) {
  std::uint64_t x = v & kMortonMax;
  x = (x | x << 32) & 0x1f00000000ffffull;
  x = (x | x << 16) & 0x1f0000ff0000ffull;
  x = (x | x << 8) & 0x100f00f00f00f00full;
  x = (x | x << 4) & 0x10c30c30c30c30c3ull;
  x = (x | x << 2) & 0x1249249249249249ull;
  return x;
}

std::uint32_t compact_bits(std::uint64_t x) {
  x &= 0x1249249249249249ull;
  x = (x ^ (x >> 2)) & 0x10c30c30c30c30c3ull;
  x = (x ^ (x >> 4)) & 0x100f00f00f00f00full;
  x = (x ^ (x >> 8)) & 0x1f0000ff0000ffull;
  x = (x ^ (x >> 16)) & 0x1f00000000ffffull;
  x = (x ^ (x >> 32)) & 0x1fffffull;
  return static_cast<std::uint32_t>(x);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

bool overlaps(const std::optional<Interval>& iv, double t0, double t1) {
  return iv && iv->lo <= t1 && iv->hi >= t0;
}

}  // namespace

MortonCode morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  if (x > kMortonMax || y > kMortonMax || z > kMortonMax) {
    throw std::out_of_range("morton_encode: coordinate exceeds 21 bits");
  }
  return spread_bits(x) | (spread_bits(y) << 1) | (spread_bits(z) << 2);
}

Eigen::Matrix<std::uint32_t, 3, 1> morton_decode(MortonCode code) {
  return {compact_bits(code), compact_bits(code >> 1), compact_bits(code >> 2)};
}

Eigen::Matrix<std::uint32_t, 3, 1> morton_quantize(const Eigen::Vector3d& p, const Aabbd& domain) {
  Eigen::Matrix<std::uint32_t, 3, 1> q;
  const Eigen::Vector3d extent = domain.extent();
  for (int i = 0; i < 3; ++i) {
    if (!(extent[i] > 0.0)) {
      q[i] = 0;
      continue;
    }
    const double u = (p[i] - domain.min[i]) / extent[i] * static_cast<double>(1u << kMortonBits);
    q[i] = static_cast<std::uint32_t>(std::clamp(std::floor(u), 0.0, static_cast<double>(kMortonMax)));
  }
  return q;
}

std::vector<std::uint32_t> morton_order(std::span<const Eigen::Vector3d> points) {
  Aabbd domain;
  for (const auto& p : points) domain.extend(p);
  std::vector<MortonCode> codes(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto q = morton_quantize(points[i], domain);
    codes[i] = morton_encode(q[0], q[1], q[2]);
  }
  std::vector<std::uint32_t> order(points.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return codes[a] < codes[b]; });
  return order;
}

double kahan_discriminant(double a, double b, double c) {
  const double w = a * c;
  const double e = std::fma(-a, c, w);  // w - a*c, exactly
  const double f = std::fma(b, b, -w);
  return f + e;
}

std::optional<Interval> intersect_ellipsoid(const BoundingEllipsoid& e, const Eigen::Vector3d& origin,
                                            const Eigen::Vector3d& dir) {
  const Eigen::Vector3d inv = e.semi_axes.cwiseInverse();
  const Eigen::Vector3d o = (e.rotation.transpose() * (origin - e.center)).cwiseProduct(inv);
  const Eigen::Vector3d d = (e.rotation.transpose() * dir).cwiseProduct(inv);
  // a t^2 + 2 b t + c = 0
  const double a = d.squaredNorm();
  if (!(a > 0.0)) return std::nullopt;
  const double b = o.dot(d);
  const double c = o.squaredNorm() - 1.0;
  const double disc = kahan_discriminant(a, b, c);
  if (disc < 0.0) return std::nullopt;
  const double q = -(b + std::copysign(std::sqrt(disc), b));
  double t0;
  double t1;
  if (q == 0.0) {
    t0 = t1 = -b / a;
  } else {
    t0 = q / a;
    t1 = c / q;
  }
  if (t0 > t1) std::swap(t0, t1);
  return Interval{t0, t1};
}

std::optional<Interval> intersect_aabb(const Aabbd& box, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
  double lo = -kInf;
  double hi = kInf;
  for (int i = 0; i < 3; ++i) {
    if (dir[i] == 0.0) {
      if (origin[i] < box.min[i] || origin[i] > box.max[i]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / dir[i];
    double ta = (box.min[i] - origin[i]) * inv;
    double tb = (box.max[i] - origin[i]) * inv;
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
    if (lo > hi) return std::nullopt;
  }
  return Interval{lo, hi};
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kBins = 12;

struct BuildContext {
  std::span<const Aabbd> boxes;
  std::vector<Eigen::Vector3d> centroids;
  std::vector<BvhNode>& nodes;
  std::vector<std::uint32_t>& ids;
};

Aabbd range_bounds(const BuildContext& ctx, std::size_t begin, std::size_t end) {
  Aabbd b;
  for (std::size_t i = begin; i < end; ++i) b.extend(ctx.boxes[ctx.ids[i]]);
  return b;
}

std::uint32_t build_node(BuildContext& ctx, std::size_t begin, std::size_t end) {
  const auto node_index = static_cast<std::uint32_t>(ctx.nodes.size());
  ctx.nodes.emplace_back();
  const Aabbd bounds = range_bounds(ctx, begin, end);
  const std::size_t count = end - begin;
  if (count <= Bvh::kMaxLeafSize) {
    ctx.nodes[node_index] = BvhNode{bounds, static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(count), 0};
    return node_index;
  }

  Aabbd centroid_bounds;
  for (std::size_t i = begin; i < end; ++i) centroid_bounds.extend(ctx.centroids[ctx.ids[i]]);
  const Eigen::Vector3d cext = centroid_bounds.extent();

  int best_axis = -1;
  int best_split = -1;
  double best_cost = kInf;
  for (int axis = 0; axis < 3; ++axis) {
    if (!(cext[axis] > 0.0)) continue;
    std::array<Aabbd, kBins> bin_bounds;
    std::array<std::size_t, kBins> bin_count{};
    const double scale = kBins / cext[axis];
    for (std::size_t i = begin; i < end; ++i) {
      const auto id = ctx.ids[i];
      const int b = std::min(kBins - 1, static_cast<int>((ctx.centroids[id][axis] - centroid_bounds.min[axis]) * scale));
      bin_bounds[b].extend(ctx.boxes[id]);
      ++bin_count[b];
    }
    std::array<double, kBins - 1> left_cost{};
    Aabbd acc;
    std::size_t n = 0;
    for (int b = 0; b < kBins - 1; ++b) {
      acc.extend(bin_bounds[b]);
      n += bin_count[b];
      left_cost[b] = acc.surface_area() * static_cast<double>(n);
    }
    acc = Aabbd{};
    n = 0;
    for (int b = kBins - 1; b > 0; --b) {
      acc.extend(bin_bounds[b]);
      n += bin_count[b];
      const double cost = left_cost[b - 1] + acc.surface_area() * static_cast<double>(n);
      const std::size_t left_n = count - n;
      if (left_n > 0 && n > 0 && cost < best_cost) {
        best_cost = cost;
        best_axis = axis;
        best_split = b;
      }
    }
  }

  std::size_t mid;
  if (best_axis >= 0) {
    const double scale = kBins / cext[best_axis];
    const auto it = std::stable_partition(ctx.ids.begin() + begin, ctx.ids.begin() + end, [&](std::uint32_t id) {
      const int b =
          std::min(kBins - 1, static_cast<int>((ctx.centroids[id][best_axis] - centroid_bounds.min[best_axis]) * scale));
      return b < best_split;
    });
    mid = static_cast<std::size_t>(it - ctx.ids.begin());
  } else {
    // Coincident centroids: split the range in half.
    mid = begin + count / 2;
  }

  const std::uint32_t left = build_node(ctx, begin, mid);
  const std::uint32_t right = build_node(ctx, mid, end);
  ctx.nodes[node_index] = BvhNode{bounds, left, 0, right};
  return node_index;
}

}  // namespace

Bvh bvh_build(std::span<const Aabbd> boxes, std::span<const std::uint32_t> ids) {
  Bvh bvh;
  bvh.boxes_.assign(boxes.begin(), boxes.end());
  if (ids.empty()) {
    bvh.indices_.resize(boxes.size());
    std::iota(bvh.indices_.begin(), bvh.indices_.end(), 0u);
  } else {
    bvh.indices_.assign(ids.begin(), ids.end());
  }
  if (bvh.indices_.empty()) throw EmptyScene();
  for (auto id : bvh.indices_) {
    if (id >= boxes.size()) throw std::out_of_range("bvh_build: primitive id out of range");
    if (boxes[id].empty()) throw std::invalid_argument("bvh_build: empty primitive box");
  }
  BuildContext ctx{bvh.boxes_, {}, bvh.nodes_, bvh.indices_};
  ctx.centroids.reserve(boxes.size());
  for (const auto& b : boxes) ctx.centroids.push_back(b.empty() ? Eigen::Vector3d::Zero() : b.center());
  bvh.nodes_.reserve(2 * bvh.indices_.size() / Bvh::kMaxLeafSize + 1);
  build_node(ctx, 0, bvh.indices_.size());
  return bvh;
}

std::optional<double> closest_hit(const Bvh& bvh, std::span<const BoundingEllipsoid> ellipsoids,
                                  const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t_lo, double t_hi,
                                  TraversalStats* stats) {
  if (bvh.empty() || t_lo > t_hi) return std::nullopt;
  TraversalStats local;
  double best = kInf;
  thread_local std::vector<std::uint32_t> stack;
  stack.clear();
  stack.push_back(0);
  const auto& nodes = bvh.nodes();
  const auto& ids = bvh.indices();
  while (!stack.empty()) {
    const BvhNode& node = nodes[stack.back()];
    stack.pop_back();
    ++local.node_visits;
    const auto iv = intersect_aabb(node.bounds, origin, dir);
    if (!overlaps(iv, t_lo, std::min(t_hi, best))) continue;
    if (node.leaf()) {
      for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
        const std::uint32_t id = ids[k];
        if (!overlaps(intersect_aabb(bvh.primitive_bounds(id), origin, dir), t_lo, t_hi)) continue;
        ++local.aabb_hits;
        const auto e = intersect_ellipsoid(ellipsoids[id], origin, dir);
        if (!overlaps(e, t_lo, t_hi)) continue;
        ++local.ellipsoid_hits;
        best = std::min(best, std::max(e->lo, t_lo));
      }
      continue;
    }
    const auto l = intersect_aabb(nodes[node.first].bounds, origin, dir);
    const auto r = intersect_aabb(nodes[node.right].bounds, origin, dir);
    const double tl = l ? l->lo : kInf;
    const double tr = r ? r->lo : kInf;
    // Near child last so it is popped first.
    if (tl <= tr) {
      stack.push_back(node.right);
      stack.push_back(node.first);
    } else {
      stack.push_back(node.first);
      stack.push_back(node.right);
    }
  }
  if (stats) *stats += local;
  if (best == kInf) return std::nullopt;
  return best;
}

void HitBuffer::push(std::uint32_t index) {
  if (indices_.size() >= capacity_) throw BufferOverflow(capacity_);
  indices_.push_back(index);
}

void HitBuffer::sort() { std::sort(indices_.begin(), indices_.end()); }

std::size_t collect_segment(const Bvh& bvh, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double t0,
                            double t1, HitBuffer& buffer, TraversalStats* stats) {
  buffer.clear();
  if (bvh.empty() || t0 > t1) return 0;
  TraversalStats local;
  thread_local std::vector<std::uint32_t> stack;
  stack.clear();
  stack.push_back(0);
  const auto& nodes = bvh.nodes();
  const auto& ids = bvh.indices();
  while (!stack.empty()) {
    const BvhNode& node = nodes[stack.back()];
    stack.pop_back();
    ++local.node_visits;
    if (!overlaps(intersect_aabb(node.bounds, origin, dir), t0, t1)) continue;
    if (node.leaf()) {
      for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
        const std::uint32_t id = ids[k];
        if (!overlaps(intersect_aabb(bvh.primitive_bounds(id), origin, dir), t0, t1)) continue;
        ++local.aabb_hits;
        buffer.push(id);
      }
      continue;
    }
    stack.push_back(node.right);
    stack.push_back(node.first);
  }
  buffer.sort();
  if (stats) *stats += local;
  return buffer.size();
}

}  // namespace gsray
