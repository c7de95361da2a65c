#pragma once

// Native .gsx scene files, 3DGS-style PLY ingestion, camera JSON files and
// procedural test scenes.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gsray/renderer.hpp"
#include "gsray/scene.hpp"

namespace gsray {

inline constexpr std::uint32_t kGsxVersion = 1;
/// Floats per record: mean 3, quaternion 4, scale 3, density 1, SH 27, SG 7 x 7.
inline constexpr int kGsxRecordFloats = 3 + 4 + 3 + 1 + 3 * kShCoeffs + 7 * kSgLobes;

/// Opacity-to-density step used when ingesting splatting assets.
inline constexpr double kPlyReferenceStep = 0.01;

struct LoadOptions {
  bool morton_reorder = false;
};

/// Writes primitives in storage order. Values are stored as float32. An empty
/// scene is a ValidationError, as on load.
void save_scene(const Scene& scene, const std::filesystem::path& path);
/// Loads .gsx or .ply by extension. An empty primitive list is a ValidationError.
Scene load_scene(const std::filesystem::path& path, const LoadOptions& opts = {});
Scene load_gsx(const std::filesystem::path& path, const LoadOptions& opts = {});
Scene load_ply(const std::filesystem::path& path, const LoadOptions& opts = {});

/// Opacity logit to density: alpha = sigmoid(x), density = -ln(1 - alpha) / 0.01.
double opacity_to_density(double logit);

std::vector<Camera> load_cameras(const std::filesystem::path& path);
void save_cameras(std::span<const Camera> cameras, const std::filesystem::path& path);
/// `count` cameras on a circle of `radius` around `target`, slightly above it.
std::vector<Camera> orbit_cameras(const Eigen::Vector3d& target, double radius, int count, double focal, int width,
                                  int height);

enum class SceneKind { single, grid, random_cloud, shell };

SceneKind parse_scene_kind(const std::string& name);
std::string to_string(SceneKind kind);

struct SceneGenSpec {
  SceneKind kind = SceneKind::random_cloud;
  int count = 64;
  std::uint64_t seed = 0;
  double anisotropy = 1.0;  // ratio of the long axis to the two short ones
  double density = 20.0;
  double extent = 1.0;      // content lies in [-extent, extent]^3
  double scale = 0.0;       // 0: picked from count and extent
};

/// Deterministic in the spec. Scales are volume preserving: b (1, 1, a) / a^(1/3).
/// All values are representable as float32, so save/load roundtrips are exact.
Scene gen_test_scene(const SceneGenSpec& spec);

/// ASCII PLY with one vertex per point and a float scalar property `value`.
void write_point_scalars_ply(std::span<const Eigen::Vector3d> points, std::span<const double> values,
                             const std::filesystem::path& path);

}  // namespace gsray
