#pragma once

// Closed-form geometry of truncated elliptical Gaussians: the sigma_eps
// isosurface, its tightest axis-aligned box, volumes and the isotropic
// regularizer built on the box/ellipsoid volume ratio.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "gsray/errors.hpp"

namespace gsray {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

/// Scales below this are clamped before any geometric evaluation.
inline constexpr double kMinScale = 1e-7;
inline constexpr double kDefaultSigmaEps = 0.01;

template <typename Scalar>
struct Aabb {
  Vector3<Scalar> min = Vector3<Scalar>::Constant(std::numeric_limits<Scalar>::infinity());
  Vector3<Scalar> max = Vector3<Scalar>::Constant(-std::numeric_limits<Scalar>::infinity());

  bool empty() const { return (min.array() > max.array()).any(); }
  Vector3<Scalar> extent() const { return max - min; }
  Vector3<Scalar> center() const { return Scalar(0.5) * (min + max); }
  Scalar volume() const { return empty() ? Scalar(0) : extent().prod(); }
  Scalar surface_area() const {
    if (empty()) return Scalar(0);
    const Vector3<Scalar> e = extent();
    return Scalar(2) * (e.x() * e.y() + e.y() * e.z() + e.z() * e.x());
  }
  void extend(const Vector3<Scalar>& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void extend(const Aabb& other) {
    min = min.cwiseMin(other.min);
    max = max.cwiseMax(other.max);
  }
  bool contains(const Vector3<Scalar>& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  bool contains(const Aabb& other) const {
    return (other.min.array() >= min.array()).all() && (other.max.array() <= max.array()).all();
  }
};

using Aabbd = Aabb<double>;

/// One elliptical basis function. `rotation` is kept normalized.
template <typename Scalar>
struct GaussianShape {
  Vector3<Scalar> mean = Vector3<Scalar>::Zero();
  Eigen::Quaternion<Scalar> rotation = Eigen::Quaternion<Scalar>::Identity();
  Vector3<Scalar> scale = Vector3<Scalar>::Ones();
  Scalar density = Scalar(1);

  /// Builds a shape from a scalar-first (w, x, y, z) quaternion, normalizing it
  /// and clamping degenerate scales.
  static GaussianShape from_wxyz(const Vector3<Scalar>& mean, const Eigen::Matrix<Scalar, 4, 1>& wxyz,
                                 const Vector3<Scalar>& scale, Scalar density) {
    GaussianShape shape;
    shape.mean = mean;
    shape.rotation = Eigen::Quaternion<Scalar>(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    if (shape.rotation.norm() > Scalar(0)) {
      shape.rotation.normalize();
    } else {
      shape.rotation.setIdentity();
    }
    shape.scale = clamp_scale(scale);
    shape.density = density;
    return shape;
  }

  static Vector3<Scalar> clamp_scale(const Vector3<Scalar>& s) {
    return s.cwiseMax(Vector3<Scalar>::Constant(Scalar(kMinScale)));
  }

  Matrix3<Scalar> rotation_matrix() const { return rotation.normalized().toRotationMatrix(); }
  Vector3<Scalar> clamped_scale() const { return clamp_scale(scale); }
};

using GaussianShaped = GaussianShape<double>;

/// 2 ln(density / sigma_eps): the squared Mahalanobis radius of the isosurface.
template <typename Scalar>
Scalar iso_level(Scalar density, Scalar sigma_eps) {
  using std::log;
  if (!(density > sigma_eps)) throw EmptyIsosurface();
  return Scalar(2) * log(density / sigma_eps);
}

/// Semi-axes (local frame) of the ellipsoid where the density equals sigma_eps.
template <typename Scalar>
Vector3<Scalar> iso_scale(const GaussianShape<Scalar>& shape, Scalar sigma_eps) {
  using std::sqrt;
  return sqrt(iso_level(shape.density, sigma_eps)) * shape.clamped_scale();
}

/// Half-lengths of the tightest axis-aligned box around an ellipsoid with
/// orientation `rotation` and semi-axes `semi_axes`: L_i = |row_i(R) * s|.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Vector3<Scalar> aabb_half_lengths(const Eigen::MatrixBase<Derived>& rotation, const Vector3<Scalar>& semi_axes) {
  return (rotation.cwiseAbs2() * semi_axes.cwiseAbs2()).cwiseSqrt();
}

template <typename Scalar>
Aabb<Scalar> aabb_of(const GaussianShape<Scalar>& shape, Scalar sigma_eps) {
  const Vector3<Scalar> half = aabb_half_lengths(shape.rotation_matrix(), iso_scale(shape, sigma_eps));
  return Aabb<Scalar>{shape.mean - half, shape.mean + half};
}

/// Point of the ellipsoid boundary that touches face `axis` (+ or -) of its box.
template <typename Scalar>
Vector3<Scalar> aabb_contact_point(const GaussianShape<Scalar>& shape, Scalar sigma_eps, int axis, bool positive) {
  const Matrix3<Scalar> r = shape.rotation_matrix();
  const Vector3<Scalar> semi = iso_scale(shape, sigma_eps);
  // Cauchy-Schwarz equality: the unit local direction collinear with row_i(R) * semi.
  Vector3<Scalar> z = r.row(axis).transpose().cwiseProduct(semi);
  z /= z.norm();
  const Vector3<Scalar> offset = r * semi.cwiseProduct(z);
  return positive ? Vector3<Scalar>(shape.mean + offset) : Vector3<Scalar>(shape.mean - offset);
}

template <typename Scalar>
Scalar ellipsoid_volume(const GaussianShape<Scalar>& shape, Scalar sigma_eps) {
  using std::pow;
  const Scalar level = iso_level(shape.density, sigma_eps);
  return Scalar(4) * std::numbers::pi_v<Scalar> / Scalar(3) * pow(level, Scalar(1.5)) * shape.clamped_scale().prod();
}

/// Vol(AABB(E)) / Vol(E). Independent of density and sigma_eps, so only the
/// orientation and scales enter.
template <typename Scalar>
Scalar volume_ratio(const GaussianShape<Scalar>& shape) {
  using std::sqrt;
  const Vector3<Scalar> s = shape.clamped_scale();
  const Vector3<Scalar> l = shape.rotation_matrix().cwiseAbs2() * s.cwiseAbs2();
  return Scalar(6) / std::numbers::pi_v<Scalar> * sqrt(l.prod()) / s.prod();
}

/// Rotation-invariant upper bound on volume_ratio, attained when all box
/// half-lengths are equal.
template <typename Scalar>
Scalar ratio_upper_bound(const Vector3<Scalar>& scale) {
  using std::pow;
  using std::sqrt;
  const Vector3<Scalar> s = GaussianShape<Scalar>::clamp_scale(scale);
  return Scalar(2) / (std::numbers::pi_v<Scalar> * sqrt(Scalar(3))) * pow(s.squaredNorm(), Scalar(1.5)) / s.prod();
}

/// d ratio_upper_bound / d s = r * (3 s_i / |s|^2 - 1 / s_i).
template <typename Scalar>
Vector3<Scalar> ratio_upper_bound_gradient(const Vector3<Scalar>& scale) {
  const Vector3<Scalar> s = GaussianShape<Scalar>::clamp_scale(scale);
  const Scalar r = ratio_upper_bound(s);
  const Scalar s2 = s.squaredNorm();
  return r * (Scalar(3) * s / s2 - s.cwiseInverse());
}

struct IsoLossConfig {
  double weight = 0.00025;     // lambda_s
  double threshold = 10.0;     // r_0, must be >= 6/pi
};

template <typename Scalar>
struct IsotropicLoss {
  Scalar value = Scalar(0);                  // L_s, unweighted
  std::vector<Vector3<Scalar>> scale_grad;   // dL_s / ds per shape
  Scalar weighted(const IsoLossConfig& cfg) const { return Scalar(cfg.weight) * value; }
};

/// L_s = mean_l (max(r_max_l, r_0) - r_0). The max is treated as inactive at
/// r_max == r_0, so the gradient there is zero.
template <typename Scalar>
IsotropicLoss<Scalar> isotropic_loss(std::span<const GaussianShape<Scalar>> shapes, const IsoLossConfig& cfg) {
  if (shapes.empty()) throw EmptyScene();
  if (!(cfg.threshold >= 6.0 / std::numbers::pi)) {
    throw std::invalid_argument("isotropic loss threshold must be >= 6/pi");
  }
  const Scalar n = static_cast<Scalar>(shapes.size());
  const Scalar r0 = static_cast<Scalar>(cfg.threshold);
  IsotropicLoss<Scalar> out;
  out.scale_grad.assign(shapes.size(), Vector3<Scalar>::Zero());
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const Scalar r = ratio_upper_bound<Scalar>(shapes[l].scale);
    if (r > r0) {
      out.value += (r - r0) / n;
      out.scale_grad[l] = ratio_upper_bound_gradient<Scalar>(shapes[l].scale) / n;
    }
  }
  return out;
}

}  // namespace gsray
