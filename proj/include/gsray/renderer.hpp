#pragma once

// Segment-buffered volume ray marching over truncated Gaussians, with
// closest-hit empty-space skipping, distance/transmittance adaptive segment
// sizes and early termination, plus a dense brute-force reference integrator.

#include <Eigen/Dense>

#include <cstdint>

#include "gsray/image.hpp"
#include "gsray/scene.hpp"

namespace gsray {

enum class SamplingMode { uniform, adaptive };

struct RenderConfig {
  double step = 0.0025;              // uniform sample spacing
  int samples_per_segment = 16;      // samples per segment (N_s)
  double transmittance_eps = 1e-4;   // stop once T <= this
  SamplingMode mode = SamplingMode::uniform;
  double beta = 1024.0;              // distance scale of the adaptive step
  double step_min = 0.005;
  double step_max = 0.02;
  bool empty_space_skipping = true;
  int tile_size = 16;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  std::size_t hit_capacity = 64;
  int threads = 0;                   // 0: GSRAY_THREADS, else hardware concurrency

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Uniform sampling at `step` (the synthetic-scene setting).
RenderConfig uniform_config(double step = 0.0025);
/// Adaptive sampling with step_min, step_max = 4 step_min and beta = 1024.
RenderConfig adaptive_config(double step_min = 0.005);

struct Ray {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d dir = Eigen::Vector3d::UnitZ();  // unit
  double t_near = 0.0;
  double t_far = 1.0;
};

/// Pinhole camera looking down its local +z with +y pointing down the image.
struct Camera {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};  // camera-to-world, (w, x, y, z)
  double focal = 1.0;                            // pixels
  int width = 1;
  int height = 1;
  double near = 0.0;
  double far = 100.0;

  Eigen::Matrix3d rotation_matrix() const;
  /// Ray through the center of pixel (x, y).
  Ray pixel_ray(int x, int y) const;
  /// Camera centered at `eye` looking at `target`.
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                        double focal, int width, int height, double near = 0.0, double far = 100.0);
};

struct RenderStats {
  std::uint64_t rays = 0;
  std::uint64_t samples = 0;
  std::uint64_t segments_processed = 0;
  std::uint64_t segments_skipped = 0;  // segments whose collection came back empty
  std::uint64_t closest_hit_calls = 0;
  std::uint64_t node_visits = 0;
  std::uint64_t aabb_hits = 0;
  std::uint64_t ellipsoid_hits = 0;

  std::uint64_t false_positives() const { return aabb_hits - ellipsoid_hits; }
  double false_positive_fraction() const {
    return aabb_hits == 0 ? 0.0 : static_cast<double>(false_positives()) / static_cast<double>(aabb_hits);
  }
  RenderStats& operator+=(const RenderStats& o);
  bool operator==(const RenderStats&) const = default;
};

struct RayResult {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();  // background already composited
  double transmittance = 1.0;
  RenderStats stats;
};

/// Segment size N_s * min(max(d / beta, step_min) * T^(-1/3), step_max), with
/// T clamped below at transmittance_eps.
double segment_step(const RenderConfig& cfg, double distance, double transmittance);

RayResult march_ray(const Scene& scene, const Ray& ray, const RenderConfig& cfg);

struct RenderOutput {
  Image image;
  RenderStats stats;
};

/// Tile-ordered render; pixel values do not depend on tile size or thread count.
RenderOutput render_image(const Scene& scene, const Camera& camera, const RenderConfig& cfg);

/// Dense midpoint quadrature on the grid t_near + (k + 1/2) fine_step over
/// every primitive, without BVH, skipping, adaptivity or early termination.
RayResult reference_integrate(const Scene& scene, const Ray& ray, double fine_step,
                              const Eigen::Vector3d& background = Eigen::Vector3d::Zero());

Image reference_image(const Scene& scene, const Camera& camera, double fine_step,
                      const Eigen::Vector3d& background = Eigen::Vector3d::Zero(), int threads = 0);

/// Worker count from an explicit request, GSRAY_THREADS, or the hardware.
int resolve_thread_count(int requested);

}  // namespace gsray
