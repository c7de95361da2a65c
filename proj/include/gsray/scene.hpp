#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "gsray/appearance.hpp"
#include "gsray/geometry.hpp"
#include "gsray/spatial.hpp"

namespace gsray {

/// Stored parameters of one primitive, exactly as serialized.
struct GaussianPrimitive {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};  // (w, x, y, z), normalized on use
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  double density = 1.0;
  AppearanceCoeffs appearance;

  GaussianShaped shape() const { return GaussianShaped::from_wxyz(mean, rotation, scale, density); }
};

/// Render-ready form of a primitive.
struct PrimitiveKernel {
  Eigen::Vector3d mean;
  Eigen::Matrix3d world_to_local;
  Eigen::Vector3d inv_scale;
  double density = 0.0;
  double level = 0.0;  // 2 ln(density / sigma_eps); support is q <= level
  bool visible = false;

  /// Squared Mahalanobis distance of `x` in scale units.
  double mahalanobis2(const Eigen::Vector3d& x) const {
    return (world_to_local * (x - mean)).cwiseProduct(inv_scale).squaredNorm();
  }
  /// Truncated density sigma~ G(x); exactly 0 outside the isosurface.
  double density_at(const Eigen::Vector3d& x) const {
    if (!visible) return 0.0;
    const double q = mahalanobis2(x);
    return q <= level ? density * std::exp(-0.5 * q) : 0.0;
  }
};

/// Primitive storage plus the derived acceleration data. Immutable once built;
/// any edit produces a new Scene with a freshly built BVH.
class Scene {
 public:
  Scene() = default;
  /// Validates every record (throws ValidationError with the record index).
  /// `ids` are stable identities used to order per-sample sums; defaults to 0..n-1.
  explicit Scene(std::vector<GaussianPrimitive> primitives, double sigma_eps = kDefaultSigmaEps,
                 std::vector<std::uint32_t> ids = {});

  std::size_t size() const { return primitives_.size(); }
  bool empty() const { return primitives_.empty(); }
  double sigma_eps() const { return sigma_eps_; }

  const std::vector<GaussianPrimitive>& primitives() const { return primitives_; }
  std::span<const std::uint32_t> ids() const { return ids_; }
  std::span<const PrimitiveKernel> kernels() const { return kernels_; }
  std::span<const BoundingEllipsoid> ellipsoids() const { return ellipsoids_; }
  std::span<const Aabbd> boxes() const { return boxes_; }
  const Bvh& bvh() const { return bvh_; }
  /// Union of the visible primitives' boxes.
  Aabbd bounds() const { return bvh_.bounds(); }

  /// Sorts storage by Morton code of the means and rebuilds the BVH.
  /// Returns perm with perm[new_index] = old_index.
  std::vector<std::uint32_t> reorder_by_morton();
  /// Applies an arbitrary storage permutation (perm[new_index] = old_index).
  void permute(std::span<const std::uint32_t> perm);

  /// Copy with primitive `index` moved to `mean`.
  Scene with_mean(std::size_t index, const Eigen::Vector3d& mean) const;

 private:
  void rebuild();

  std::vector<GaussianPrimitive> primitives_;
  std::vector<std::uint32_t> ids_;
  double sigma_eps_ = kDefaultSigmaEps;
  std::vector<PrimitiveKernel> kernels_;
  std::vector<BoundingEllipsoid> ellipsoids_;
  std::vector<Aabbd> boxes_;
  Bvh bvh_;
};

/// Validates one record against the primitive invariants.
void validate_primitive(const GaussianPrimitive& p, std::size_t record);

}  // namespace gsray
