#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>

namespace gsray {

inline constexpr int kShCoeffs = 9;   // real SH up to degree 2
inline constexpr int kSgLobes = 7;

struct SphericalGaussian {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // unit
  double sharpness = 0.0;                           // >= 0
  Eigen::Vector3d amplitude = Eigen::Vector3d::Zero();
};

/// View-dependent radiance of one primitive: 9 RGB SH coefficients in band
/// order (Y00; Y1-1, Y10, Y11; Y2-2 .. Y22) plus 7 spherical Gaussian lobes.
struct AppearanceCoeffs {
  std::array<Eigen::Vector3d, kShCoeffs> sh;
  std::array<SphericalGaussian, kSgLobes> sg;

  AppearanceCoeffs() { sh.fill(Eigen::Vector3d::Zero()); }

  /// Coefficients whose radiance is `rgb` in every direction.
  static AppearanceCoeffs constant(const Eigen::Vector3d& rgb);
};

/// Real SH basis values at unit direction `d`, same sign convention as
/// 3DGS-style assets.
Eigen::Matrix<double, kShCoeffs, 1> sh_basis(const Eigen::Vector3d& d);

/// c(d) = max(0, sum_k sh_k Y_k(d) + sum_k a_k exp(lambda_k (d . nu_k - 1))).
Eigen::Vector3d eval_radiance(const AppearanceCoeffs& coeffs, const Eigen::Vector3d& d);

struct FieldSample {
  double sigma = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

class Scene;

/// Density and radiance mixture at `x` seen along `d`, summed over `active`
/// in the given order. Primitives whose isosurface does not contain `x`
/// contribute exactly zero.
FieldSample eval_fields(const Scene& scene, const Eigen::Vector3d& x, const Eigen::Vector3d& d,
                        std::span<const std::uint32_t> active);

}  // namespace gsray
