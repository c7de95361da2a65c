#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>

#include "gsray/errors.hpp"
#include "gsray/geometry.hpp"
#include "gsray/random.hpp"

using namespace gsray;
using Eigen::Vector3d;
using Eigen::Vector4d;

namespace {

constexpr double kSixOverPi = 6.0 / std::numbers::pi;

GaussianShaped shape_with(const Vector3d& s, const Vector4d& q = Vector4d(1, 0, 0, 0), double density = 1.0) {
  return GaussianShaped::from_wxyz(Vector3d::Zero(), q, s, density);
}

Vector4d z_rotation(double angle) { return {std::cos(angle / 2), 0.0, 0.0, std::sin(angle / 2)}; }

}  // namespace

TEST_CASE("iso_scale at sigma_eps * e^(1/2) equals the scale") {
  const double eps = 0.01;
  const auto shape = shape_with(Vector3d::Ones(), Vector4d(1, 0, 0, 0), eps * std::exp(0.5));
  const Vector3d s = iso_scale(shape, eps);
  CHECK(s.isApprox(Vector3d::Ones(), 1e-14));
}

TEST_CASE("density at or below sigma_eps has an empty isosurface") {
  CHECK_THROWS_AS(iso_level(0.01, 0.01), EmptyIsosurface);
  CHECK_THROWS_AS(iso_level(0.005, 0.01), EmptyIsosurface);
  CHECK_THROWS_AS(iso_scale(shape_with(Vector3d(1, 2, 3), Vector4d(1, 0, 0, 0), 0.01), 0.01), EmptyIsosurface);
  CHECK_THROWS_AS(ellipsoid_volume(shape_with(Vector3d::Ones(), Vector4d(1, 0, 0, 0), 0.01), 0.01), EmptyIsosurface);
}

TEST_CASE("iso_scale at twice sigma_eps lies on the sigma_eps level") {
  const double eps = 0.01;
  const Vector3d s(0.1, 0.2, 0.3);
  Rng rng(11);
  const auto shape = GaussianShaped::from_wxyz(Vector3d(0.3, -0.2, 1.0), rng.rotation(), s, 2 * eps);
  const Vector3d semi = iso_scale(shape, eps);
  CHECK(semi.isApprox(std::sqrt(2 * std::log(2.0)) * s, 1e-14));
  // density at mu + semi_1 R e_1 is exactly sigma_eps
  const Matrix3<double> r = shape.rotation_matrix();
  for (int axis = 0; axis < 3; ++axis) {
    const Vector3d x = shape.mean + semi[axis] * r.col(axis);
    const Vector3d local = (r.transpose() * (x - shape.mean)).cwiseQuotient(s);
    CHECK(shape.density * std::exp(-0.5 * local.squaredNorm()) == doctest::Approx(eps).epsilon(1e-12));
  }
}

TEST_CASE("aabb half-lengths for axis-aligned and permuted ellipsoids") {
  const Vector3d semi(0.5, 2.0, 3.0);
  CHECK(aabb_half_lengths(Matrix3<double>::Identity(), semi).isApprox(semi, 1e-15));
  const Matrix3<double> rz = Eigen::AngleAxisd(std::numbers::pi / 2, Vector3d::UnitZ()).toRotationMatrix();
  CHECK((aabb_half_lengths(rz, semi) - Vector3d(2.0, 0.5, 3.0)).cwiseAbs().maxCoeff() < 1e-14);

  const double eps = 0.01;
  const auto shape = shape_with(Vector3d(1, 2, 3), z_rotation(std::numbers::pi / 2), eps * std::exp(0.5));
  const Aabbd box = aabb_of(shape, eps);
  CHECK((box.max - Vector3d(2, 1, 3)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((box.min + Vector3d(2, 1, 3)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("aabb half-lengths match sampled boundary extremes and have contact witnesses") {
  Rng rng(5);
  const double eps = 0.01;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector3d s(rng.log_uniform(0.01, 1), rng.log_uniform(0.01, 1), rng.log_uniform(0.01, 1));
    const auto shape = GaussianShaped::from_wxyz(Vector3d(rng.uniform(-1, 1), 0, 0), rng.rotation(), s, 3.0);
    const Vector3d semi = iso_scale(shape, eps);
    const Matrix3<double> r = shape.rotation_matrix();
    const Aabbd box = aabb_of(shape, eps);
    const Vector3d half = 0.5 * box.extent();
    Vector3d brute = Vector3d::Zero();
    for (int k = 0; k < 20000; ++k) {
      const Vector3d x = r * semi.cwiseProduct(rng.unit_vector());
      brute = brute.cwiseMax(x.cwiseAbs());
    }
    for (int i = 0; i < 3; ++i) {
      CHECK(brute[i] <= half[i] * (1 + 1e-12));
      CHECK(brute[i] >= half[i] * (1 - 1e-2));
      for (const bool positive : {false, true}) {
        const Vector3d w = aabb_contact_point(shape, eps, i, positive);
        const Vector3d local = (r.transpose() * (w - shape.mean)).cwiseQuotient(semi);
        CHECK(std::abs(local.norm() - 1.0) < 1e-12);
        CHECK(std::abs(w[i] - (positive ? box.max[i] : box.min[i])) < 1e-12 * (1 + half[i]));
      }
    }
  }
}

TEST_CASE("ellipsoid volume") {
  const double eps = 0.01;
  const double unit_density = eps * std::exp(0.5);
  CHECK(ellipsoid_volume(shape_with(Vector3d::Ones(), Vector4d(1, 0, 0, 0), unit_density), eps) ==
        doctest::Approx(4 * std::numbers::pi / 3).epsilon(1e-14));
  CHECK(ellipsoid_volume(shape_with(Vector3d(1, 2, 3), Vector4d(1, 0, 0, 0), unit_density), eps) ==
        doctest::Approx(8 * std::numbers::pi).epsilon(1e-14));

  // Monte-Carlo cross-check within 1%
  Rng rng(3);
  const Vector3d semi(1, 2, 3);
  int inside = 0;
  const int n = 400000;
  for (int k = 0; k < n; ++k) {
    const Vector3d x(rng.uniform(-1, 1), rng.uniform(-2, 2), rng.uniform(-3, 3));
    if (x.cwiseQuotient(semi).squaredNorm() <= 1.0) ++inside;
  }
  CHECK(48.0 * inside / n == doctest::Approx(8 * std::numbers::pi).epsilon(0.01));
}

TEST_CASE("volume ratio special cases") {
  Rng rng(17);
  for (int k = 0; k < 100; ++k) {
    CHECK(volume_ratio(shape_with(Vector3d::Constant(rng.log_uniform(1e-3, 10)), rng.rotation())) ==
          doctest::Approx(kSixOverPi).epsilon(1e-12));
    const Vector3d s(rng.log_uniform(1e-3, 10), rng.log_uniform(1e-3, 10), rng.log_uniform(1e-3, 10));
    CHECK(volume_ratio(shape_with(s)) == doctest::Approx(kSixOverPi).epsilon(1e-12));
  }
  // Composition with aabb_of and ellipsoid_volume for s = (1, 1, 10)
  const double eps = 0.01;
  for (int k = 0; k < 100; ++k) {
    const auto shape = shape_with(Vector3d(1, 1, 10), rng.rotation(), 0.7);
    const double composed = aabb_of(shape, eps).volume() / ellipsoid_volume(shape, eps);
    CHECK(std::abs(volume_ratio(shape) - composed) <= 1e-9 * composed);
  }
}

TEST_CASE("ratio upper bound values and invariances") {
  CHECK(ratio_upper_bound<double>(Vector3d::Ones()) == doctest::Approx(kSixOverPi).epsilon(1e-15));
  const double expected = 2.0 / (std::numbers::pi * std::sqrt(3.0)) * std::pow(102.0, 1.5) / 10.0;
  CHECK(ratio_upper_bound<double>(Vector3d(1, 1, 10)) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(ratio_upper_bound<double>(Vector3d(2, 2, 2)) == doctest::Approx(kSixOverPi).epsilon(1e-15));

  Rng rng(23);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    worst = std::max(worst, volume_ratio(shape_with(Vector3d(1, 1, 10), rng.rotation())));
  }
  CHECK(worst <= expected);
  CHECK(worst > 0.5 * expected);
}

TEST_CASE("ratio upper bound gradient matches central differences") {
  Rng rng(29);
  for (int k = 0; k < 100; ++k) {
    const Vector3d s(rng.log_uniform(0.01, 1), rng.log_uniform(0.01, 1), rng.log_uniform(0.01, 1));
    const Vector3d g = ratio_upper_bound_gradient<double>(s);
    for (int i = 0; i < 3; ++i) {
      const double h = 1e-5 * s[i];
      Vector3d sp = s, sm = s;
      sp[i] += h;
      sm[i] -= h;
      const double fd = (ratio_upper_bound<double>(sp) - ratio_upper_bound<double>(sm)) / (2 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-4 * std::max(std::abs(g[i]), 1e-6 * g.norm()));
    }
  }
}

TEST_CASE("isotropic loss") {
  std::vector<GaussianShaped> iso(5, shape_with(Vector3d::Constant(0.3)));
  const auto zero = isotropic_loss<double>(iso, IsoLossConfig{});
  CHECK(zero.value == 0.0);
  for (const auto& g : zero.scale_grad) CHECK(g.isZero(0.0));

  std::vector<GaussianShaped> one = {shape_with(Vector3d(1, 1, 10))};
  const auto l = isotropic_loss<double>(one, IsoLossConfig{});
  CHECK(l.value == doctest::Approx(ratio_upper_bound<double>(Vector3d(1, 1, 10)) - 10.0).epsilon(1e-15));
  CHECK(l.weighted(IsoLossConfig{}) == doctest::Approx(0.00025 * l.value));

  CHECK_THROWS_AS(isotropic_loss<double>(std::span<const GaussianShaped>{}, IsoLossConfig{}), EmptyScene);
  CHECK_THROWS_AS(isotropic_loss<double>(one, IsoLossConfig{0.1, 1.0}), std::invalid_argument);
}

TEST_CASE("isotropic loss gradient matches central differences") {
  Rng rng(31);
  const IsoLossConfig cfg;
  std::vector<GaussianShaped> shapes;
  for (int k = 0; k < 100; ++k) {
    // a wide anisotropy range so that both sides of r_0 occur
    const double a = rng.log_uniform(1.0, 40.0);
    shapes.push_back(shape_with(rng.uniform(0.05, 0.5) * Vector3d(1, rng.uniform(1, 3), a), rng.rotation()));
  }
  const auto loss = isotropic_loss<double>(shapes, cfg);
  int active = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const Vector3d g = loss.scale_grad[l];
    if (!g.isZero(0.0)) ++active;
    for (int i = 0; i < 3; ++i) {
      auto plus = shapes;
      auto minus = shapes;
      const double h = 1e-5 * shapes[l].scale[i];
      plus[l].scale[i] += h;
      minus[l].scale[i] -= h;
      const double fd =
          (isotropic_loss<double>(plus, cfg).value - isotropic_loss<double>(minus, cfg).value) / (2 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-4 * std::max(std::abs(g[i]), 1e-3 * g.norm() + 1e-12));
    }
  }
  CHECK(active > 10);
  CHECK(active < 100);
}

TEST_CASE("gradient at r_max == r_0 is zero") {
  // r_max(1, 1, a) is increasing in a >= 1; bisect for r_max = r_0.
  double lo = 1.0, hi = 100.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (ratio_upper_bound<double>(Vector3d(1, 1, mid)) < 10.0 ? lo : hi) = mid;
  }
  IsoLossConfig cfg;
  cfg.threshold = ratio_upper_bound<double>(Vector3d(1, 1, lo));
  std::vector<GaussianShaped> one = {shape_with(Vector3d(1, 1, lo))};
  const auto l = isotropic_loss<double>(one, cfg);
  CHECK(l.value == 0.0);
  CHECK(l.scale_grad[0].isZero(0.0));
}

TEST_CASE("templates instantiate for float") {
  const auto s = GaussianShape<float>::from_wxyz(Vector3<float>::Zero(), Eigen::Vector4f(1, 0, 0, 0),
                                                 Vector3<float>(1, 1, 1), 1.0f);
  CHECK(volume_ratio(s) == doctest::Approx(kSixOverPi).epsilon(1e-6));
  CHECK(aabb_of(s, 0.01f).volume() > 0.0f);
}
