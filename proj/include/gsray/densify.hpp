#pragma once

// Densification analytics: image loss, finite-difference position gradients
// through the renderer, the unweighted and distance-weighted densification
// criteria, and the neighbor-count density metric.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "gsray/geometry.hpp"
#include "gsray/image.hpp"
#include "gsray/renderer.hpp"
#include "gsray/scene.hpp"

namespace gsray {

struct DensifyConfig {
  double threshold = 0.00015;     // tau
  std::size_t window = 100;       // I, observations per evaluation window
  double neighbor_radius = 0.125; // R

  void validate() const;
};

struct LossConfig {
  double dssim_weight = 0.2;  // lambda
  IsoLossConfig iso;          // iso.weight is lambda_s
};

/// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5),
/// zero padding, C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Image& a, const Image& b);

/// (1 - lambda) L1 + lambda (1 - SSIM) / 2 + lambda_s * isotropic_term.
double image_loss(const Image& rendered, const Image& target, const LossConfig& cfg, double isotropic_term = 0.0);

struct FdGradientConfig {
  RenderConfig render = uniform_config();
  LossConfig loss;
  double step = 0.0;  // 0: 1e-4 times the scene-box diagonal
};

double default_fd_step(const Scene& scene);

/// Central-difference gradient of the image loss with respect to the mean of
/// primitive `index`. The isotropic term enters through its own difference,
/// which vanishes because it does not depend on the mean.
Eigen::Vector3d fd_position_gradient(const Scene& scene, const Camera& camera, const Image& target, std::size_t index,
                                     const FdGradientConfig& cfg);

/// Per-primitive running sums over the observations of one window.
class GradAccumulator {
 public:
  GradAccumulator(std::size_t primitives, std::size_t window);

  /// Records one view. alpha = |mean - camera_center| / focal.
  void add(std::size_t index, const Eigen::Vector3d& grad, const Eigen::Vector3d& mean,
           const Eigen::Vector3d& camera_center, double focal);
  /// Records one view from a precomputed norm and weight.
  void add_norm(std::size_t index, double grad_norm, double alpha);
  void merge(const GradAccumulator& other);

  std::size_t size() const { return count_.size(); }
  std::size_t window() const { return window_; }
  std::uint32_t observations(std::size_t i) const { return count_[i]; }
  double norm_sum(std::size_t i) const { return norm_sum_[i]; }
  double weighted_sum(std::size_t i) const { return weighted_sum_[i]; }
  double mean_norm(std::size_t i) const;
  double mean_weighted_norm(std::size_t i) const;

 private:
  std::size_t window_;
  std::vector<double> norm_sum_;
  std::vector<double> weighted_sum_;
  std::vector<std::uint32_t> count_;
};

/// mean |grad| > tau. Unobserved primitives are never flagged.
std::vector<bool> criterion_old(const GradAccumulator& acc, const DensifyConfig& cfg);
/// mean alpha |grad| > tau.
std::vector<bool> criterion_new(const GradAccumulator& acc, const DensifyConfig& cfg);

/// Number of other points within distance R (closed ball) of each point.
std::vector<std::uint32_t> neighbor_density(std::span<const Eigen::Vector3d> points, double radius);

struct DensifyRow {
  std::uint32_t id = 0;
  double mean_grad_norm = 0.0;
  double mean_weighted_grad_norm = 0.0;
  std::uint32_t observations = 0;
  bool old_decision = false;
  bool new_decision = false;
  std::uint32_t neighbors = 0;
};

struct DensifyReport {
  std::vector<DensifyRow> rows;
};

/// Runs the full analysis: one observation per camera in which the primitive
/// has a nonzero gradient against that camera's target image.
DensifyReport analyze_densification(const Scene& scene, std::span<const Camera> cameras,
                                    std::span<const Image> targets, const DensifyConfig& dcfg,
                                    const FdGradientConfig& fcfg);

}  // namespace gsray
