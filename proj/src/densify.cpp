#include "gsray/densify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace gsray {

void DensifyConfig::validate() const {
  if (!(threshold > 0.0)) throw std::invalid_argument("densify threshold must be positive");
  if (!(neighbor_radius > 0.0)) throw std::invalid_argument("neighbor radius must be positive");
  if (window < 1) throw std::invalid_argument("densify window must be >= 1");
}

// ---------------------------------------------------------------------------
// Image loss

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::array<double, kSsimWindow> ssim_kernel() {
  std::array<double, kSsimWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    k[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Separable Gaussian filter with zero padding, one channel (row-major w x h).
std::vector<double> blur(const std::vector<double>& src, int w, int h) {
  static const auto kernel = ssim_kernel();
  constexpr int r = kSsimWindow / 2;
  std::vector<double> tmp(src.size(), 0.0);
  std::vector<double> out(src.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int xx = x + i;
        if (xx >= 0 && xx < w) acc += kernel[i + r] * src[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int yy = y + i;
        if (yy >= 0 && yy < h) acc += kernel[i + r] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("image dimensions differ");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int w = a.width;
  const int h = a.height;
  const std::size_t n = a.pixel_count();
  if (n == 0) return 1.0;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.rgb[3 * i + c];
      y[i] = b.rgb[3 * i + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = blur(x, w, h);
    const auto my = blur(y, w, h);
    const auto sxx = blur(xx, w, h);
    const auto syy = blur(yy, w, h);
    const auto sxy = blur(xy, w, h);
    for (std::size_t i = 0; i < n; ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
  }
  return total / static_cast<double>(3 * n);
}

double image_loss(const Image& rendered, const Image& target, const LossConfig& cfg, double isotropic_term) {
  if (rendered.width != target.width || rendered.height != target.height) {
    throw std::invalid_argument("image dimensions differ");
  }
  if (!(cfg.dssim_weight >= 0.0 && cfg.dssim_weight <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  double l1 = 0.0;
  for (std::size_t i = 0; i < rendered.rgb.size(); ++i) l1 += std::abs(rendered.rgb[i] - target.rgb[i]);
  if (!rendered.rgb.empty()) l1 /= static_cast<double>(rendered.rgb.size());
  double loss = (1.0 - cfg.dssim_weight) * l1;
  if (cfg.dssim_weight > 0.0) loss += cfg.dssim_weight * (1.0 - ssim(rendered, target)) / 2.0;
  if (cfg.iso.weight != 0.0) loss += cfg.iso.weight * isotropic_term;
  return loss;
}

// ---------------------------------------------------------------------------
// Finite-difference gradients

double default_fd_step(const Scene& scene) {
  const Aabbd b = scene.bounds();
  const double diag = b.empty() ? 1.0 : b.extent().norm();
  return 1e-4 * (diag > 0.0 ? diag : 1.0);
}

namespace {

double scene_isotropic_term(const Scene& scene, const IsoLossConfig& iso) {
  if (scene.empty()) return 0.0;
  std::vector<GaussianShaped> shapes;
  shapes.reserve(scene.size());
  for (const auto& p : scene.primitives()) shapes.push_back(p.shape());
  return isotropic_loss<double>(shapes, iso).value;
}

}  // namespace

Eigen::Vector3d fd_position_gradient(const Scene& scene, const Camera& camera, const Image& target, std::size_t index,
                                     const FdGradientConfig& cfg) {
  const double h = cfg.step > 0.0 ? cfg.step : default_fd_step(scene);
  const Eigen::Vector3d mean = scene.primitives().at(index).mean;
  LossConfig image_only = cfg.loss;
  image_only.iso.weight = 0.0;
  Eigen::Vector3d grad;
  for (int axis = 0; axis < 3; ++axis) {
    const Eigen::Vector3d offset = h * Eigen::Vector3d::Unit(axis);
    const Scene plus = scene.with_mean(index, mean + offset);
    const Scene minus = scene.with_mean(index, mean - offset);
    const double lp = image_loss(render_image(plus, camera, cfg.render).image, target, image_only);
    const double lm = image_loss(render_image(minus, camera, cfg.render).image, target, image_only);
    double d = (lp - lm) / (2.0 * h);
    if (cfg.loss.iso.weight != 0.0) {
      const double ip = scene_isotropic_term(plus, cfg.loss.iso);
      const double im = scene_isotropic_term(minus, cfg.loss.iso);
      d += cfg.loss.iso.weight * (ip - im) / (2.0 * h);
    }
    grad[axis] = d;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Criteria

GradAccumulator::GradAccumulator(std::size_t primitives, std::size_t window)
    : window_(window), norm_sum_(primitives, 0.0), weighted_sum_(primitives, 0.0), count_(primitives, 0) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
}

void GradAccumulator::add(std::size_t index, const Eigen::Vector3d& grad, const Eigen::Vector3d& mean,
                          const Eigen::Vector3d& camera_center, double focal) {
  if (!(focal > 0.0)) throw std::invalid_argument("focal must be positive");
  add_norm(index, grad.norm(), (mean - camera_center).norm() / focal);
}

void GradAccumulator::add_norm(std::size_t index, double grad_norm, double alpha) {
  if (count_.at(index) >= window_) throw std::length_error("observation window is full");
  if (grad_norm < 0.0 || alpha < 0.0) throw std::invalid_argument("norms and weights must be nonnegative");
  norm_sum_[index] += grad_norm;
  weighted_sum_[index] += alpha * grad_norm;
  ++count_[index];
}

void GradAccumulator::merge(const GradAccumulator& other) {
  if (other.size() != size()) throw std::invalid_argument("accumulator size mismatch");
  for (std::size_t i = 0; i < size(); ++i) {
    if (count_[i] + other.count_[i] > window_) throw std::length_error("observation window is full");
    norm_sum_[i] += other.norm_sum_[i];
    weighted_sum_[i] += other.weighted_sum_[i];
    count_[i] += other.count_[i];
  }
}

double GradAccumulator::mean_norm(std::size_t i) const {
  return count_[i] == 0 ? 0.0 : norm_sum_[i] / count_[i];
}

double GradAccumulator::mean_weighted_norm(std::size_t i) const {
  return count_[i] == 0 ? 0.0 : weighted_sum_[i] / count_[i];
}

std::vector<bool> criterion_old(const GradAccumulator& acc, const DensifyConfig& cfg) {
  cfg.validate();
  std::vector<bool> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = acc.observations(i) > 0 && acc.mean_norm(i) > cfg.threshold;
  return out;
}

std::vector<bool> criterion_new(const GradAccumulator& acc, const DensifyConfig& cfg) {
  cfg.validate();
  std::vector<bool> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out[i] = acc.observations(i) > 0 && acc.mean_weighted_norm(i) > cfg.threshold;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Neighbor density

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace

std::vector<std::uint32_t> neighbor_density(std::span<const Eigen::Vector3d> points, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
  const auto cell_of = [&](const Eigen::Vector3d& p) {
    return CellKey{static_cast<std::int64_t>(std::floor(p.x() / radius)),
                   static_cast<std::int64_t>(std::floor(p.y() / radius)),
                   static_cast<std::int64_t>(std::floor(p.z() / radius))};
  };
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> grid;
  for (std::uint32_t i = 0; i < points.size(); ++i) grid[cell_of(points[i])].push_back(i);

  const double r2 = radius * radius;
  std::vector<std::uint32_t> counts(points.size(), 0);
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    const CellKey c = cell_of(points[i]);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (const auto j : it->second) {
            if (j != i && (points[i] - points[j]).squaredNorm() <= r2) ++counts[i];
          }
        }
      }
    }
  }
  return counts;
}

// ---------------------------------------------------------------------------

DensifyReport analyze_densification(const Scene& scene, std::span<const Camera> cameras,
                                    std::span<const Image> targets, const DensifyConfig& dcfg,
                                    const FdGradientConfig& fcfg) {
  dcfg.validate();
  if (cameras.size() != targets.size()) throw std::invalid_argument("one target image per camera required");
  GradAccumulator acc(scene.size(), std::max(dcfg.window, cameras.size()));
  for (std::size_t c = 0; c < cameras.size(); ++c) {
    for (std::size_t l = 0; l < scene.size(); ++l) {
      const Eigen::Vector3d g = fd_position_gradient(scene, cameras[c], targets[c], l, fcfg);
      if (g.isZero(0.0)) continue;
      acc.add(l, g, scene.primitives()[l].mean, cameras[c].center, cameras[c].focal);
    }
  }
  std::vector<Eigen::Vector3d> means;
  means.reserve(scene.size());
  for (const auto& p : scene.primitives()) means.push_back(p.mean);
  const auto neighbors = neighbor_density(means, dcfg.neighbor_radius);
  const auto old_flags = criterion_old(acc, dcfg);
  const auto new_flags = criterion_new(acc, dcfg);

  DensifyReport report;
  report.rows.reserve(scene.size());
  for (std::size_t l = 0; l < scene.size(); ++l) {
    report.rows.push_back(DensifyRow{scene.ids()[l], acc.mean_norm(l), acc.mean_weighted_norm(l),
                                     acc.observations(l), old_flags[l], new_flags[l], neighbors[l]});
  }
  return report;
}

}  // namespace gsray
