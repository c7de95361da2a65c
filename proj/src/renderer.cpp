#include "gsray/renderer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gsray/errors.hpp"

namespace gsray {

namespace {

/// Front-to-back compositing of one sample.
struct Compositor {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double transmittance = 1.0;

  void add(double sigma, const Eigen::Vector3d& c, double dt) {
    if (sigma == 0.0) return;
    const double alpha = -std::expm1(-sigma * dt);
    color += (alpha * transmittance) * c;
    transmittance *= std::exp(-sigma * dt);
  }
};

/// Density and sigma-weighted radiance at x from `active` (already in id order).
struct SampleFields {
  double sigma = 0.0;
  Eigen::Vector3d weighted = Eigen::Vector3d::Zero();
};

SampleFields sample_fields(std::span<const PrimitiveKernel> kernels, std::span<const std::uint32_t> active,
                           std::span<const Eigen::Vector3d> radiance, const Eigen::Vector3d& x) {
  SampleFields f;
  for (std::size_t i = 0; i < active.size(); ++i) {
    const double w = kernels[active[i]].density_at(x);
    if (w == 0.0) continue;
    f.sigma += w;
    f.weighted += w * radiance[i];
  }
  return f;
}

void composite(Compositor& acc, const SampleFields& f, double dt) {
  if (f.sigma > 0.0) acc.add(f.sigma, f.weighted / f.sigma, dt);
}

/// Number of samples t_near + (k + 1/2) dt strictly before t_far.
long sample_count(double t_near, double t_far, double dt) {
  if (!(t_far > t_near)) return 0;
  long k = static_cast<long>(std::ceil((t_far - t_near) / dt - 0.5));
  k = std::max(k, 0L);
  while (k > 0 && t_near + (static_cast<double>(k - 1) + 0.5) * dt >= t_far) --k;
  while (t_near + (static_cast<double>(k) + 0.5) * dt < t_far) ++k;
  return k;
}

class RayMarcher {
 public:
  RayMarcher(const Scene& scene, const Ray& ray, const RenderConfig& cfg)
      : scene_(scene), ray_(ray), cfg_(cfg), buffer_(cfg.hit_capacity) {}

  RayResult run() {
    RayResult out;
    stats_.rays = 1;
    if (ray_.t_near < ray_.t_far && !scene_.bvh().empty()) {
      if (cfg_.mode == SamplingMode::uniform) {
        march_uniform();
      } else {
        march_adaptive();
      }
    }
    out.color = acc_.color + acc_.transmittance * cfg_.background;
    out.transmittance = acc_.transmittance;
    out.stats = stats_;
    return out;
  }

 private:
  std::optional<double> next_hit(double t_from) {
    ++stats_.closest_hit_calls;
    TraversalStats ts;
    const auto hit = closest_hit(scene_.bvh(), scene_.ellipsoids(), ray_.origin, ray_.dir, t_from, ray_.t_far, &ts);
    absorb(ts);
    return hit;
  }

  void absorb(const TraversalStats& ts) {
    stats_.node_visits += ts.node_visits;
    stats_.aabb_hits += ts.aabb_hits;
    stats_.ellipsoid_hits += ts.ellipsoid_hits;
  }

  /// Scene-box extent of the ray, used to bound dense marching.
  std::optional<Interval> box_span() const {
    const auto iv = intersect_aabb(scene_.bounds(), ray_.origin, ray_.dir);
    if (!iv || iv->hi < ray_.t_near || iv->lo > ray_.t_far) return std::nullopt;
    return Interval{std::max(iv->lo, ray_.t_near), std::min(iv->hi, ray_.t_far)};
  }

  // Segment grid anchored at t_near: sample k sits at t_near + (k + 1/2) dt.
  void march_uniform() {
    const double dt = cfg_.step;
    const long ns = cfg_.samples_per_segment;
    const double seg = dt * static_cast<double>(ns);
    const long k_end = sample_count(ray_.t_near, ray_.t_far, dt);
    const auto segment_of = [&](double t) {
      long j = std::max(0L, static_cast<long>(std::floor((t - ray_.t_near) / seg)));
      while (j > 0 && ray_.t_near + static_cast<double>(j * ns) * dt > t) --j;
      return j;
    };

    long j;
    double dense_end = ray_.t_far;
    if (cfg_.empty_space_skipping) {
      const auto hit = next_hit(ray_.t_near);
      if (!hit) return;
      j = segment_of(*hit);
    } else {
      const auto span = box_span();
      if (!span) return;
      j = segment_of(span->lo);
      dense_end = span->hi;
    }

    while (j * ns < k_end && acc_.transmittance > cfg_.transmittance_eps) {
      const long k0 = j * ns;
      const long k1 = std::min(k0 + ns, k_end);
      if (!cfg_.empty_space_skipping && ray_.t_near + static_cast<double>(k0) * dt > dense_end) break;
      const bool nonempty = integrate(ray_.t_near, dt, k0, k1, k0 + ns);
      if (!nonempty) {
        ++stats_.segments_skipped;
        if (cfg_.empty_space_skipping) {
          const auto hit = next_hit(ray_.t_near + static_cast<double>(k0 + ns) * dt);
          if (!hit) return;
          j = std::max(j + 1, segment_of(*hit));
          continue;
        }
        stats_.samples += static_cast<std::uint64_t>(k1 - k0);
      }
      ++j;
    }
  }

  void march_adaptive() {
    const long ns = cfg_.samples_per_segment;
    double t_s;
    double dense_end = ray_.t_far;
    if (cfg_.empty_space_skipping) {
      const auto hit = next_hit(ray_.t_near);
      if (!hit) return;
      t_s = *hit;
    } else {
      const auto span = box_span();
      if (!span) return;
      t_s = span->lo;
      dense_end = span->hi;
    }

    while (t_s < ray_.t_far && acc_.transmittance > cfg_.transmittance_eps) {
      if (!cfg_.empty_space_skipping && t_s > dense_end) break;
      const double ds = segment_step(cfg_, std::abs(t_s), acc_.transmittance);
      const double dt = ds / static_cast<double>(ns);
      const long valid = std::min(ns, sample_count(t_s, ray_.t_far, dt));
      const bool nonempty = integrate(t_s, dt, 0, valid, ns);
      const double t_next = t_s + ds;
      if (!nonempty) {
        ++stats_.segments_skipped;
        if (cfg_.empty_space_skipping) {
          const auto hit = next_hit(t_next);
          if (!hit) return;
          t_s = std::max(*hit, t_next);
          continue;
        }
        stats_.samples += static_cast<std::uint64_t>(valid);
      }
      t_s = t_next;
    }
  }

  /// Integrates samples [k0, k1) of the grid base + (k + 1/2) dt, collecting
  /// primitives over [base + k0 dt, base + k_query_end dt]. Splits the range
  /// when the hit buffer overflows. Returns false when nothing overlapped.
  bool integrate(double base, double dt, long k0, long k1, long k_query_end) {
    ++stats_.segments_processed;
    const double q0 = base + static_cast<double>(k0) * dt;
    const double q1 = base + static_cast<double>(k_query_end) * dt;
    TraversalStats ts;
    HitBuffer* buffer = &buffer_;
    HitBuffer unbounded(scene_.size());
    try {
      collect_segment(scene_.bvh(), ray_.origin, ray_.dir, q0, q1, buffer_, &ts);
    } catch (const BufferOverflow&) {
      absorb(ts);
      if (k1 - k0 > 1) {
        --stats_.segments_processed;
        const long mid = k0 + (k1 - k0) / 2;
        const bool a = integrate(base, dt, k0, mid, mid);
        const bool b = integrate(base, dt, mid, k1, k_query_end);
        return a || b;
      }
      ts = TraversalStats{};
      collect_segment(scene_.bvh(), ray_.origin, ray_.dir, q0, q1, unbounded, &ts);
      buffer = &unbounded;
    }
    absorb(ts);
    if (buffer->empty()) return false;

    // Per-sample sums run in ascending primitive id, independent of storage order.
    const auto ids = scene_.ids();
    active_.assign(buffer->indices().begin(), buffer->indices().end());
    std::sort(active_.begin(), active_.end(), [&](std::uint32_t a, std::uint32_t b) { return ids[a] < ids[b]; });

    radiance_.resize(active_.size());
    const auto& prims = scene_.primitives();
    const auto ellipsoids = scene_.ellipsoids();
    for (std::size_t i = 0; i < active_.size(); ++i) {
      radiance_[i] = eval_radiance(prims[active_[i]].appearance, ray_.dir);
      const auto e = intersect_ellipsoid(ellipsoids[active_[i]], ray_.origin, ray_.dir);
      if (e && e->lo <= q1 && e->hi >= q0) ++stats_.ellipsoid_hits;
    }

    const auto kernels = scene_.kernels();
    for (long k = k0; k < k1; ++k) {
      const double t = base + (static_cast<double>(k) + 0.5) * dt;
      const Eigen::Vector3d x = ray_.origin + t * ray_.dir;
      composite(acc_, sample_fields(kernels, active_, radiance_, x), dt);
    }
    stats_.samples += static_cast<std::uint64_t>(k1 - k0);
    return true;
  }

  const Scene& scene_;
  const Ray& ray_;
  const RenderConfig& cfg_;
  HitBuffer buffer_;
  std::vector<std::uint32_t> active_;
  std::vector<Eigen::Vector3d> radiance_;
  Compositor acc_;
  RenderStats stats_;
};

template <typename PixelFn>
void for_each_tile(int width, int height, int tile, int threads, PixelFn&& fn) {
  const int tiles_x = (width + tile - 1) / tile;
  const int tiles_y = (height + tile - 1) / tile;
  const int tile_count = tiles_x * tiles_y;
  std::atomic<int> next{0};
  const auto worker = [&](int thread_index) {
    for (int t = next.fetch_add(1); t < tile_count; t = next.fetch_add(1)) {
      const int x0 = (t % tiles_x) * tile;
      const int y0 = (t / tiles_x) * tile;
      for (int y = y0; y < std::min(y0 + tile, height); ++y) {
        for (int x = x0; x < std::min(x0 + tile, width); ++x) fn(thread_index, x, y);
      }
    }
  };
  const int n = std::max(1, std::min(threads, tile_count));
  if (n == 1) {
    worker(0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker, i);
  for (auto& th : pool) th.join();
}

}  // namespace

void RenderConfig::validate() const {
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
  if (samples_per_segment < 1) throw std::invalid_argument("samples_per_segment must be >= 1");
  if (!(transmittance_eps > 0.0 && transmittance_eps < 1.0)) {
    throw std::invalid_argument("transmittance_eps must lie in (0, 1)");
  }
  if (!(step_min > 0.0) || !(step_min <= step_max)) throw std::invalid_argument("need 0 < step_min <= step_max");
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (tile_size < 1) throw std::invalid_argument("tile_size must be >= 1");
  if (hit_capacity < 1) throw std::invalid_argument("hit_capacity must be >= 1");
}

RenderConfig uniform_config(double step) {
  RenderConfig cfg;
  cfg.mode = SamplingMode::uniform;
  cfg.step = step;
  return cfg;
}

RenderConfig adaptive_config(double step_min) {
  RenderConfig cfg;
  cfg.mode = SamplingMode::adaptive;
  cfg.step = step_min;
  cfg.step_min = step_min;
  cfg.step_max = 4.0 * step_min;
  cfg.beta = 1024.0;
  return cfg;
}

Eigen::Matrix3d Camera::rotation_matrix() const {
  return Eigen::Quaterniond(rotation[0], rotation[1], rotation[2], rotation[3]).normalized().toRotationMatrix();
}

Ray Camera::pixel_ray(int x, int y) const {
  const Eigen::Vector3d local((x + 0.5 - 0.5 * width) / focal, (y + 0.5 - 0.5 * height) / focal, 1.0);
  return Ray{center, (rotation_matrix() * local).normalized(), near, far};
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                       double focal, int width, int height, double near, double far) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.unitOrthogonal();
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  const Eigen::Quaterniond q(r);
  Camera cam;
  cam.center = eye;
  cam.rotation = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
  cam.focal = focal;
  cam.width = width;
  cam.height = height;
  cam.near = near;
  cam.far = far;
  return cam;
}

RenderStats& RenderStats::operator+=(const RenderStats& o) {
  rays += o.rays;
  samples += o.samples;
  segments_processed += o.segments_processed;
  segments_skipped += o.segments_skipped;
  closest_hit_calls += o.closest_hit_calls;
  node_visits += o.node_visits;
  aabb_hits += o.aabb_hits;
  ellipsoid_hits += o.ellipsoid_hits;
  return *this;
}

double segment_step(const RenderConfig& cfg, double distance, double transmittance) {
  const double t = std::max(transmittance, cfg.transmittance_eps);
  const double inv_cbrt = std::exp(-std::log(t) / 3.0);
  const double per_sample = std::min(std::max(distance / cfg.beta, cfg.step_min) * inv_cbrt, cfg.step_max);
  return static_cast<double>(cfg.samples_per_segment) * per_sample;
}

RayResult march_ray(const Scene& scene, const Ray& ray, const RenderConfig& cfg) {
  return RayMarcher(scene, ray, cfg).run();
}

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GSRAY_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RenderOutput render_image(const Scene& scene, const Camera& camera, const RenderConfig& cfg) {
  cfg.validate();
  if (camera.width < 1 || camera.height < 1 || !(camera.focal > 0.0)) throw std::invalid_argument("invalid camera");
  RenderOutput out{Image(camera.width, camera.height), {}};
  const int threads = resolve_thread_count(cfg.threads);
  std::vector<RenderStats> per_thread(static_cast<std::size_t>(threads));
  for_each_tile(camera.width, camera.height, cfg.tile_size, threads, [&](int th, int x, int y) {
    const RayResult r = march_ray(scene, camera.pixel_ray(x, y), cfg);
    out.image.at(x, y) = r.color;
    per_thread[th] += r.stats;
  });
  for (const auto& s : per_thread) out.stats += s;
  return out;
}

RayResult reference_integrate(const Scene& scene, const Ray& ray, double fine_step,
                              const Eigen::Vector3d& background) {
  if (!(fine_step > 0.0)) throw std::invalid_argument("fine_step must be positive");
  RayResult out;
  out.stats.rays = 1;
  Compositor acc;

  std::vector<std::uint32_t> order;
  Aabbd bounds;
  for (std::uint32_t i = 0; i < scene.size(); ++i) {
    if (!scene.kernels()[i].visible) continue;
    order.push_back(i);
    bounds.extend(scene.boxes()[i]);
  }
  const auto ids = scene.ids();
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return ids[a] < ids[b]; });

  const auto span = order.empty() ? std::nullopt : intersect_aabb(bounds, ray.origin, ray.dir);
  if (span && ray.t_near < ray.t_far) {
    std::vector<Eigen::Vector3d> radiance;
    radiance.reserve(order.size());
    for (const auto i : order) radiance.push_back(eval_radiance(scene.primitives()[i].appearance, ray.dir));
    const long k_end = sample_count(ray.t_near, std::min(ray.t_far, span->hi), fine_step);
    const long k_begin =
        std::max(0L, static_cast<long>(std::floor((span->lo - ray.t_near) / fine_step)) - 1);
    for (long k = k_begin; k < k_end; ++k) {
      const double t = ray.t_near + (static_cast<double>(k) + 0.5) * fine_step;
      const Eigen::Vector3d x = ray.origin + t * ray.dir;
      composite(acc, sample_fields(scene.kernels(), order, radiance, x), fine_step);
      ++out.stats.samples;
    }
  }
  out.color = acc.color + acc.transmittance * background;
  out.transmittance = acc.transmittance;
  return out;
}

Image reference_image(const Scene& scene, const Camera& camera, double fine_step, const Eigen::Vector3d& background,
                      int threads) {
  Image img(camera.width, camera.height);
  for_each_tile(camera.width, camera.height, 16, resolve_thread_count(threads), [&](int, int x, int y) {
    img.at(x, y) = reference_integrate(scene, camera.pixel_ray(x, y), fine_step, background).color;
  });
  return img;
}

}  // namespace gsray
