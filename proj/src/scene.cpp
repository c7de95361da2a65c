#include "gsray/scene.hpp"

#include <cmath>
#include <numeric>
#include <utility>

#include "gsray/errors.hpp"

namespace gsray {

void validate_primitive(const GaussianPrimitive& p, std::size_t record) {
  if (!p.mean.allFinite() || !p.rotation.allFinite() || !p.scale.allFinite() || !std::isfinite(p.density)) {
    throw ValidationError("non-finite parameter", record);
  }
  if (p.rotation.norm() == 0.0) throw ValidationError("zero quaternion", record);
  if ((p.scale.array() < 0.0).any()) throw ValidationError("negative scale", record);
  if (p.density < 0.0) throw ValidationError("negative density", record);
  for (const auto& c : p.appearance.sh) {
    if (!c.allFinite()) throw ValidationError("non-finite SH coefficient", record);
  }
  for (const auto& lobe : p.appearance.sg) {
    if (!lobe.axis.allFinite() || !lobe.amplitude.allFinite() || !std::isfinite(lobe.sharpness)) {
      throw ValidationError("non-finite SG parameter", record);
    }
    if (std::abs(lobe.axis.norm() - 1.0) > 1e-6) throw ValidationError("SG axis is not unit length", record);
    if (lobe.sharpness < 0.0) throw ValidationError("negative SG sharpness", record);
  }
}

Scene::Scene(std::vector<GaussianPrimitive> primitives, double sigma_eps, std::vector<std::uint32_t> ids)
    : primitives_(std::move(primitives)), ids_(std::move(ids)), sigma_eps_(sigma_eps) {
  if (!(sigma_eps_ > 0.0) || !std::isfinite(sigma_eps_)) throw ValidationError("sigma_eps must be positive");
  for (std::size_t i = 0; i < primitives_.size(); ++i) validate_primitive(primitives_[i], i);
  if (ids_.empty()) {
    ids_.resize(primitives_.size());
    std::iota(ids_.begin(), ids_.end(), 0u);
  } else if (ids_.size() != primitives_.size()) {
    throw ValidationError("id count does not match primitive count");
  }
  rebuild();
}

void Scene::rebuild() {
  const std::size_t n = primitives_.size();
  kernels_.resize(n);
  ellipsoids_.resize(n);
  boxes_.assign(n, Aabbd{});
  std::vector<std::uint32_t> visible;
  visible.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const GaussianShaped shape = primitives_[i].shape();
    const Eigen::Matrix3d r = shape.rotation_matrix();
    PrimitiveKernel& k = kernels_[i];
    k.mean = shape.mean;
    k.world_to_local = r.transpose();
    k.inv_scale = shape.clamped_scale().cwiseInverse();
    k.density = shape.density;
    k.visible = shape.density > sigma_eps_;
    k.level = k.visible ? iso_level(shape.density, sigma_eps_) : 0.0;
    ellipsoids_[i].center = shape.mean;
    ellipsoids_[i].rotation = r;
    ellipsoids_[i].semi_axes = std::sqrt(k.level) * shape.clamped_scale();
    if (k.visible) {
      boxes_[i] = aabb_of(shape, sigma_eps_);
      visible.push_back(static_cast<std::uint32_t>(i));
    }
  }
  bvh_ = visible.empty() ? Bvh{} : bvh_build(boxes_, visible);
}

void Scene::permute(std::span<const std::uint32_t> perm) {
  if (perm.size() != primitives_.size()) throw std::invalid_argument("permutation size mismatch");
  std::vector<GaussianPrimitive> prims;
  std::vector<std::uint32_t> ids;
  prims.reserve(perm.size());
  ids.reserve(perm.size());
  std::vector<bool> seen(perm.size(), false);
  for (const auto old : perm) {
    if (old >= perm.size() || seen[old]) throw std::invalid_argument("not a permutation");
    seen[old] = true;
    prims.push_back(primitives_[old]);
    ids.push_back(ids_[old]);
  }
  primitives_ = std::move(prims);
  ids_ = std::move(ids);
  rebuild();
}

std::vector<std::uint32_t> Scene::reorder_by_morton() {
  std::vector<Eigen::Vector3d> means;
  means.reserve(primitives_.size());
  for (const auto& p : primitives_) means.push_back(p.mean);
  auto perm = morton_order(means);
  permute(perm);
  return perm;
}

Scene Scene::with_mean(std::size_t index, const Eigen::Vector3d& mean) const {
  std::vector<GaussianPrimitive> prims = primitives_;
  prims.at(index).mean = mean;
  return Scene(std::move(prims), sigma_eps_, ids_);
}

}  // namespace gsray
