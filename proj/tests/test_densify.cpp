#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>

#include "gsray/densify.hpp"
#include "gsray/reparam.hpp"
#include "test_util.hpp"

using namespace gsray;
using Eigen::Vector3d;
using testutil::make_primitive;

namespace {

std::vector<std::uint32_t> brute_neighbors(const std::vector<Vector3d>& pts, double r) {
  std::vector<std::uint32_t> out(pts.size(), 0);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (i != j && (pts[i] - pts[j]).norm() <= r) ++out[i];
  return out;
}

// Direct 2D-window SSIM, written independently of the separable version.
double direct_ssim(const Image& a, const Image& b) {
  const int w = a.width, h = a.height;
  double k[11][11];
  double sum = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) sum += k[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  for (auto& row : k)
    for (auto& v : row) v /= sum;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const int yy = y + i - 5, xx = x + j - 5;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const double p = a.channel(xx, yy, c), q = b.channel(xx, yy, c);
            mx += k[i][j] * p;
            my += k[i][j] * q;
            sxx += k[i][j] * p * p;
            syy += k[i][j] * q * q;
            sxy += k[i][j] * p * q;
          }
        }
        const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
        total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
  }
  return total / (3.0 * w * h);
}

Image random_image(Rng& rng, int w, int h) {
  Image img(w, h);
  for (auto& v : img.rgb) v = rng.uniform(0, 1);
  return img;
}

Scene one_gaussian(const Vector3d& mean, double eps = kDefaultSigmaEps) {
  return Scene({make_primitive(mean, Vector3d(0.2, 0.15, 0.1), 6.0, Vector3d(0.8, 0.4, 0.2),
                               Eigen::Vector4d(0.9, 0.2, 0.1, 0.3))},
               eps);
}

}  // namespace

TEST_CASE("neighbor density") {
  std::vector<Vector3d> single = {Vector3d(1, 2, 3)};
  CHECK(neighbor_density(single, 0.125) == std::vector<std::uint32_t>{0});
  const double r = 0.125;
  std::vector<Vector3d> close = {Vector3d::Zero(), Vector3d(r - 1e-9, 0, 0)};
  CHECK(neighbor_density(close, r) == std::vector<std::uint32_t>{1, 1});
  std::vector<Vector3d> far = {Vector3d::Zero(), Vector3d(r + 1e-9, 0, 0)};
  CHECK(neighbor_density(far, r) == std::vector<std::uint32_t>{0, 0});
  std::vector<Vector3d> exact = {Vector3d::Zero(), Vector3d(0.125, 0, 0)};
  CHECK(neighbor_density(exact, r) == std::vector<std::uint32_t>{1, 1});
  CHECK_THROWS_AS(neighbor_density(single, 0.0), std::invalid_argument);

  Rng rng(1);
  for (const double radius : {0.05, 0.125, 0.3}) {
    std::vector<Vector3d> pts(1000);
    for (auto& p : pts) p = Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    // include lattice points so that exact-R ties occur
    for (int i = 0; i < 50; ++i) pts.push_back(Vector3d(0.125 * i, -2.0, 0.0));
    CHECK(neighbor_density(pts, radius) == brute_neighbors(pts, radius));
  }
}

TEST_CASE("criteria arithmetic") {
  DensifyConfig cfg;
  const double tau = cfg.threshold;
  GradAccumulator acc(4, 10);
  acc.add_norm(0, 0.0, 1.0);
  acc.add_norm(0, 0.0, 2.0);
  acc.add_norm(1, 2 * tau, 1.0);
  // mixed norms around the threshold
  acc.add_norm(2, 0.5 * tau, 1.0);
  acc.add_norm(2, 1.6 * tau, 1.0);
  const auto old_flags = criterion_old(acc, cfg);
  CHECK_FALSE(old_flags[0]);
  CHECK(old_flags[1]);
  CHECK(old_flags[2] == ((0.5 + 1.6) / 2 > 1.0));
  CHECK_FALSE(old_flags[3]);  // never observed
  CHECK_FALSE(criterion_new(acc, cfg)[3]);

  // distance 10 f, per-view norm tau / 2
  GradAccumulator far(1, 10);
  for (int v = 0; v < 4; ++v) far.add(0, Vector3d(0, 0.5 * tau, 0), Vector3d(0, 0, 10.0), Vector3d::Zero(), 1.0);
  CHECK_FALSE(criterion_old(far, cfg)[0]);
  CHECK(criterion_new(far, cfg)[0]);
  CHECK(far.mean_weighted_norm(0) == doctest::Approx(5 * tau));

  GradAccumulator full(1, 1);
  full.add_norm(0, 1.0, 1.0);
  CHECK_THROWS_AS(full.add_norm(0, 1.0, 1.0), std::length_error);
}

TEST_CASE("criteria agree when every observation sits at distance f") {
  Rng rng(2);
  DensifyConfig cfg;
  GradAccumulator acc(200, 20);
  for (std::size_t i = 0; i < 200; ++i) {
    const int views = static_cast<int>(rng.index(20));
    for (int v = 0; v < views; ++v) {
      const Vector3d o = Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      const double f = rng.uniform(0.5, 3);
      const Vector3d mean = o + f * rng.unit_vector();
      acc.add(i, rng.log_uniform(1e-6, 1e-3) * rng.unit_vector(), mean, o, f);
    }
  }
  const auto a = criterion_old(acc, cfg);
  const auto b = criterion_new(acc, cfg);
  int flagged = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    CHECK(a[i] == b[i]);
    flagged += a[i];
  }
  CHECK(flagged > 0);
  CHECK(flagged < 200);
}

TEST_CASE("criterion_new is monotone in weights and norms") {
  Rng rng(3);
  DensifyConfig cfg;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::pair<double, double>> obs;
    const int n = 1 + static_cast<int>(rng.index(8));
    for (int k = 0; k < n; ++k) obs.emplace_back(rng.log_uniform(1e-5, 1e-3), rng.uniform(0.1, 5));
    const auto decide = [&](const std::vector<std::pair<double, double>>& o) {
      GradAccumulator acc(1, 16);
      for (const auto& [g, a] : o) acc.add_norm(0, g, a);
      return static_cast<bool>(criterion_new(acc, cfg)[0]);
    };
    const bool before = decide(obs);
    auto bumped = obs;
    const auto k = rng.index(obs.size());
    if (rng.uniform() < 0.5) {
      bumped[k].first *= rng.uniform(1, 3);
    } else {
      bumped[k].second *= rng.uniform(1, 3);
    }
    if (before) CHECK(decide(bumped));
  }
}

TEST_CASE("image loss") {
  Rng rng(4);
  const Image a = random_image(rng, 20, 17);
  const Image b = random_image(rng, 20, 17);
  LossConfig cfg;
  CHECK(std::abs(image_loss(a, a, cfg)) < 1e-15);
  CHECK(image_loss(a, b, cfg) > 0.0);
  cfg.dssim_weight = 0.0;
  double mae = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) mae += std::abs(a.rgb[i] - b.rgb[i]);
  mae /= a.rgb.size();
  CHECK(image_loss(a, b, cfg) == doctest::Approx(mae).epsilon(1e-15));

  cfg.dssim_weight = 1.0;
  Image shifted = a;
  for (auto& v : shifted.rgb) v += 0.1;
  CHECK(std::abs(image_loss(a, shifted, cfg) - (1 - direct_ssim(a, shifted)) / 2) < 1e-6);
  CHECK(std::abs(ssim(a, b) - direct_ssim(a, b)) < 1e-6);

  cfg.iso.weight = 0.5;
  CHECK(image_loss(a, a, cfg, 3.0) == doctest::Approx(1.5));
  CHECK_THROWS_AS(image_loss(a, Image(3, 3), cfg), std::invalid_argument);
}

TEST_CASE("fd gradient basics") {
  const Camera cam = testutil::front_camera(2.0, 16, 20.0);
  FdGradientConfig cfg;
  cfg.render = uniform_config(0.005);

  // primitive far outside the frustum
  const Scene hidden = one_gaussian(Vector3d(50, 0, 0));
  const Image target(16, 16);
  CHECK(fd_position_gradient(hidden, cam, target, 0, cfg).norm() < 1e-10);

  // moving towards the target lowers the loss
  const Scene scene = one_gaussian(Vector3d::Zero());
  const Image right = render_image(one_gaussian(Vector3d(0.05, 0, 0)), cam, cfg.render).image;
  const Image left = render_image(one_gaussian(Vector3d(-0.05, 0, 0)), cam, cfg.render).image;
  CHECK(fd_position_gradient(scene, cam, right, 0, cfg).x() < 0.0);
  CHECK(fd_position_gradient(scene, cam, left, 0, cfg).x() > 0.0);

  // the isotropic term does not depend on the mean
  FdGradientConfig with_iso = cfg;
  with_iso.loss.iso.weight = 1.0;
  with_iso.loss.iso.threshold = 6.0 / std::numbers::pi;
  cfg.loss.iso.weight = 0.0;
  CHECK(fd_position_gradient(scene, cam, right, 0, cfg) == fd_position_gradient(scene, cam, right, 0, with_iso));
}

TEST_CASE("fd gradient converges at second order") {
  // DSSIM only and a negligible truncation level keep the loss smooth in mu.
  const Camera cam = testutil::front_camera(2.0, 16, 20.0);
  const Scene scene = one_gaussian(Vector3d(0.01, -0.02, 0.0), 1e-12);
  FdGradientConfig cfg;
  cfg.render = uniform_config(0.005);
  cfg.loss.dssim_weight = 1.0;
  cfg.loss.iso.weight = 0.0;
  const Image target = render_image(one_gaussian(Vector3d(0.08, 0.03, 0.02), 1e-12), cam, cfg.render).image;
  std::vector<Vector3d> g;
  for (const double h : {0.04, 0.02, 0.01, 0.005}) {
    cfg.step = h;
    g.push_back(fd_position_gradient(scene, cam, target, 0, cfg));
  }
  const double e1 = (g[0] - g[1]).norm();
  const double e2 = (g[1] - g[2]).norm();
  const double e3 = (g[2] - g[3]).norm();
  MESSAGE("error ratios " << e1 / e2 << " " << e2 / e3);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.25));
  CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("weighted statistic is invariant under rescaling the scene and rig") {
  // lengths double and densities (with the truncation floor) halve, all exact in binary
  const auto build = [](double c) {
    GaussianPrimitive p = make_primitive(c * Vector3d(0.05, 0.0, 0.1), c * Vector3d(0.2, 0.15, 0.1), 6.0 / c,
                                         Vector3d(0.8, 0.4, 0.2), Eigen::Vector4d(0.9, 0.2, 0.1, 0.3));
    return Scene({p}, kDefaultSigmaEps / c);
  };
  const auto camera = [](double c) { return testutil::front_camera(2.0 * c, 12, 15.0); };
  const auto target_scene = [](double c) {
    return Scene({make_primitive(c * Vector3d(0.1, 0.05, 0.1), c * Vector3d(0.2, 0.15, 0.1), 6.0 / c,
                                 Vector3d(0.8, 0.4, 0.2), Eigen::Vector4d(0.9, 0.2, 0.1, 0.3))},
                 kDefaultSigmaEps / c);
  };
  double weighted[2];
  bool decision[2];
  for (int k = 0; k < 2; ++k) {
    const double c = k == 0 ? 1.0 : 2.0;
    FdGradientConfig cfg;
    cfg.render = uniform_config(0.005 * c);
    const Scene scene = build(c);
    const Camera cam = camera(c);
    const Image target = render_image(target_scene(c), cam, cfg.render).image;
    const Vector3d g = fd_position_gradient(scene, cam, target, 0, cfg);
    GradAccumulator acc(1, 1);
    acc.add(0, g, scene.primitives()[0].mean, cam.center, cam.focal);
    weighted[k] = acc.mean_weighted_norm(0);
    DensifyConfig dcfg;
    dcfg.threshold = 0.5 * weighted[0];
    decision[k] = criterion_new(acc, dcfg)[0];
  }
  CHECK(weighted[1] == doctest::Approx(weighted[0]).epsilon(1e-9));
  CHECK(decision[0] == decision[1]);
}

TEST_CASE("weighted norms bound the camera-sphere gradient") {
  // alpha |g| >= |grad_{mu_P}| and the gap is at most alpha |u . g|
  const Scene scene = one_gaussian(Vector3d(0.05, 0.02, 0.0));
  const Image blank(12, 12);
  FdGradientConfig cfg;
  cfg.render = uniform_config(0.005);
  Rng rng(5);
  double mean_weighted = 0, mean_tangential = 0, mean_radial = 0;
  const int views = 4;
  for (int v = 0; v < views; ++v) {
    const Vector3d eye = 2.0 * rng.unit_vector();
    const Camera cam = Camera::look_at(eye, Vector3d::Zero(), Vector3d(0, 1, 0), 14.0, 12, 12);
    const Vector3d g = fd_position_gradient(scene, cam, blank, 0, cfg);
    const Vector3d mu = scene.primitives()[0].mean;
    const double alpha = (mu - cam.center).norm() / cam.focal;
    const auto sg = sphere_gradient<double>(g, mu, cam.center, cam.focal);
    const Vector3d u = (mu - cam.center).normalized();
    mean_weighted += alpha * g.norm() / views;
    mean_tangential += sg.tangential.norm() / views;
    mean_radial += alpha * std::abs(u.dot(g)) / views;
  }
  CHECK(mean_weighted > 0.0);
  CHECK(mean_tangential <= mean_weighted * (1 + 1e-12));
  CHECK(mean_weighted <= mean_tangential + mean_radial + 1e-15);
}

TEST_CASE("analysis report") {
  const Scene scene({make_primitive(Vector3d(0, 0, 0), Vector3d::Constant(0.1), 8.0, Vector3d(1, 0, 0)),
                     make_primitive(Vector3d(0.1, 0, 0), Vector3d::Constant(0.1), 8.0, Vector3d(0, 1, 0)),
                     make_primitive(Vector3d(40, 0, 0), Vector3d::Constant(0.1), 8.0, Vector3d(0, 0, 1))});
  const std::vector<Camera> cams = {testutil::front_camera(2.0, 10, 12.0)};
  const std::vector<Image> targets = {Image(10, 10)};
  FdGradientConfig fcfg;
  fcfg.render = uniform_config(0.01);
  const auto report = analyze_densification(scene, cams, targets, DensifyConfig{}, fcfg);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].observations == 1);
  CHECK(report.rows[2].observations == 0);
  CHECK_FALSE(report.rows[2].old_decision);
  CHECK(report.rows[0].neighbors == 1);
  CHECK(report.rows[2].neighbors == 0);
}
