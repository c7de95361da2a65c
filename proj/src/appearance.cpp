#include "gsray/appearance.hpp"

#include <cmath>

#include "gsray/scene.hpp"

namespace gsray {

namespace {
constexpr double kC0 = 0.28209479177387814;  // 1 / (2 sqrt(pi))
constexpr double kC1 = 0.4886025119029199;   // sqrt(3 / (4 pi))
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                           0.5462742152960396};
}  // namespace

AppearanceCoeffs AppearanceCoeffs::constant(const Eigen::Vector3d& rgb) {
  AppearanceCoeffs c;
  c.sh[0] = rgb / kC0;
  return c;
}

Eigen::Matrix<double, kShCoeffs, 1> sh_basis(const Eigen::Vector3d& d) {
  const double x = d.x();
  const double y = d.y();
  const double z = d.z();
  Eigen::Matrix<double, kShCoeffs, 1> b;
  b << kC0,                                 //
      -kC1 * y, kC1 * z, -kC1 * x,          //
      kC2[0] * x * y, kC2[1] * y * z, kC2[2] * (2.0 * z * z - x * x - y * y), kC2[3] * x * z,
      kC2[4] * (x * x - y * y);
  return b;
}

Eigen::Vector3d eval_radiance(const AppearanceCoeffs& coeffs, const Eigen::Vector3d& d) {
  const auto basis = sh_basis(d);
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (int k = 0; k < kShCoeffs; ++k) c += basis[k] * coeffs.sh[k];
  for (const auto& lobe : coeffs.sg) {
    if (lobe.amplitude.isZero(0.0)) continue;
    c += lobe.amplitude * std::exp(lobe.sharpness * (d.dot(lobe.axis) - 1.0));
  }
  return c.cwiseMax(0.0);
}

FieldSample eval_fields(const Scene& scene, const Eigen::Vector3d& x, const Eigen::Vector3d& d,
                        std::span<const std::uint32_t> active) {
  FieldSample out;
  Eigen::Vector3d weighted = Eigen::Vector3d::Zero();
  const auto kernels = scene.kernels();
  const auto& prims = scene.primitives();
  for (const std::uint32_t l : active) {
    const double w = kernels[l].density_at(x);
    if (w == 0.0) continue;
    out.sigma += w;
    weighted += w * eval_radiance(prims[l].appearance, d);
  }
  if (out.sigma > 0.0) out.color = weighted / out.sigma;
  return out;
}

}  // namespace gsray
