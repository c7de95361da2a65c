#pragma once

// Desk-scale ablations: pipeline comparison matrix, anisotropy vs
// false-positive sweep, and a storage-locality metric for Morton ordering.

#include <Eigen/Dense>

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gsray/renderer.hpp"
#include "gsray/scene.hpp"

namespace gsray {

struct PipelineSpec {
  std::string name;
  bool empty_space_skipping = false;
  SamplingMode mode = SamplingMode::uniform;
};

/// Names: uniform, ess, adaptive, ess+adaptive.
PipelineSpec parse_pipeline(const std::string& name);
std::vector<PipelineSpec> parse_pipelines(const std::string& comma_list);

struct BenchConfig {
  RenderConfig base = uniform_config();  // step doubles as the adaptive step_min
  int repeats = 5;                       // timed runs; the median is reported
  int warmup = 1;
  int reference_factor = 8;              // reference step = step / factor
  bool with_reference = true;
  bool check_toggles = true;             // re-render Morton-reordered, other tiles and threads
};

struct BenchRow {
  std::string pipeline;
  std::uint64_t rays = 0;
  double samples_per_ray = 0.0;
  double node_visits_per_ray = 0.0;
  std::uint64_t aabb_hits = 0;
  std::uint64_t ellipsoid_hits = 0;
  double false_positive_fraction = 0.0;
  double wall_ms = 0.0;                  // median
  double psnr = 0.0;                     // vs the reference integrator, mean over views
  double max_abs_diff_vs_dense = 0.0;    // vs the same sampling with skipping off; 0 for dense rows
  bool bitwise_equal_to_dense = false;
  bool toggle_invariant = false;         // bitwise identical under reorder / tiling / threads
};

struct BenchReport {
  std::vector<BenchRow> rows;

  void write_csv(std::ostream& out) const;
  std::string to_json() const;
};

BenchReport run_pipeline_matrix(const Scene& scene, std::span<const Camera> cameras,
                                std::span<const PipelineSpec> pipelines, const BenchConfig& cfg);

struct IsotropyConfig {
  int primitives = 200;
  int rays = 4000;
  std::uint64_t seed = 0;
  int bootstrap = 1000;
  double extent = 1.0;
};

struct IsotropyPoint {
  double anisotropy = 1.0;
  std::uint64_t aabb_hits = 0;
  std::uint64_t ellipsoid_hits = 0;
  double false_positive_fraction = 0.0;
  double volume_ratio_bound = 0.0;
};

struct IsotropyCurve {
  std::vector<IsotropyPoint> points;
  /// Bootstrap 95% interval of fraction[i + 1] - fraction[i] over resampled rays.
  std::vector<Eigen::Vector2d> diff_ci;
  /// Every consecutive interval lies strictly above zero.
  bool strictly_increasing = false;
};

/// Same means, rotations and volumes at every level; only the axis ratio
/// changes. Rays are shared across levels.
IsotropyCurve isotropy_sweep(std::span<const double> anisotropy_levels, const IsotropyConfig& cfg);

/// Mean |pos(i) - pos(j)| over each point's k nearest spatial neighbors, where
/// pos is the storage position under `perm` (perm[new] = old).
double locality_metric(std::span<const Eigen::Vector3d> points, std::span<const std::uint32_t> perm, int k = 8);

}  // namespace gsray
