#pragma once

// Camera-sphere reparameterization of a Gaussian mean: mu = o + (r/f) (mu_P - o)
// with mu_P on the sphere of radius f around the camera center o.

#include <Eigen/Dense>

#include "gsray/errors.hpp"
#include "gsray/geometry.hpp"

namespace gsray {

template <typename Scalar>
struct SphereParam {
  Vector3<Scalar> projected;  // mu_P, on S^2(center, focal)
  Scalar radius;              // r = |mu - o|
  Vector3<Scalar> center;     // o
  Scalar focal;               // f

  /// Unit direction u from the camera center to the mean.
  Vector3<Scalar> direction() const { return (projected - center) / focal; }
};

namespace detail {
template <typename Scalar>
Vector3<Scalar> checked_offset(const Vector3<Scalar>& mean, const Vector3<Scalar>& center) {
  Vector3<Scalar> offset = mean - center;
  if (offset.norm() < Scalar(1e-12)) throw DegenerateCenter();
  return offset;
}
}  // namespace detail

template <typename Scalar>
SphereParam<Scalar> project(const Vector3<Scalar>& mean, const Vector3<Scalar>& center, Scalar focal) {
  const Vector3<Scalar> offset = detail::checked_offset(mean, center);
  const Scalar r = offset.norm();
  return SphereParam<Scalar>{center + focal * (offset / r), r, center, focal};
}

template <typename Scalar>
Vector3<Scalar> reproject(const Vector3<Scalar>& projected, Scalar radius, const Vector3<Scalar>& center, Scalar focal) {
  return center + (radius / focal) * (projected - center);
}

template <typename Scalar>
Vector3<Scalar> reproject(const SphereParam<Scalar>& p) {
  return reproject(p.projected, p.radius, p.center, p.focal);
}

/// I - u u^T: orthogonal projector onto the sphere's tangent plane at u.
template <typename Scalar>
Matrix3<Scalar> tangent_projector(const Vector3<Scalar>& u) {
  return Matrix3<Scalar>::Identity() - u * u.transpose();
}

template <typename Scalar>
struct SphereGradient {
  Vector3<Scalar> tangential;  // grad wrt mu_P
  Scalar radial;               // grad wrt r
};

/// Chain rule through the reprojection:
///   grad_{mu_P} L = (r/f) (I - u u^T) grad_mu L,   grad_r L = (1/f) (mu_P - o)^T grad_mu L.
template <typename Scalar>
SphereGradient<Scalar> sphere_gradient(const Vector3<Scalar>& grad_mean, const Vector3<Scalar>& mean,
                                       const Vector3<Scalar>& center, Scalar focal) {
  const SphereParam<Scalar> p = project(mean, center, focal);
  const Vector3<Scalar> u = p.direction();
  const Vector3<Scalar> tangential = (p.radius / focal) * (grad_mean - u * u.dot(grad_mean));
  const Scalar radial = (p.projected - center).dot(grad_mean) / focal;
  return {tangential, radial};
}

}  // namespace gsray
