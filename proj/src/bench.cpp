#include "gsray/bench.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "gsray/errors.hpp"
#include "gsray/geometry.hpp"
#include "gsray/random.hpp"
#include "gsray/spatial.hpp"

namespace gsray {

PipelineSpec parse_pipeline(const std::string& name) {
  if (name == "uniform") return {name, false, SamplingMode::uniform};
  if (name == "ess") return {name, true, SamplingMode::uniform};
  if (name == "adaptive") return {name, false, SamplingMode::adaptive};
  if (name == "ess+adaptive" || name == "adaptive+ess") return {"ess+adaptive", true, SamplingMode::adaptive};
  throw std::invalid_argument("unknown pipeline: " + name);
}

std::vector<PipelineSpec> parse_pipelines(const std::string& comma_list) {
  std::vector<PipelineSpec> out;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_pipeline(item));
  }
  if (out.empty()) throw std::invalid_argument("no pipelines given");
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline matrix

namespace {

struct PipelineRun {
  std::vector<Image> images;
  RenderStats stats;
};

RenderConfig pipeline_config(const RenderConfig& base, bool ess, SamplingMode mode) {
  RenderConfig cfg = base;
  cfg.empty_space_skipping = ess;
  cfg.mode = mode;
  return cfg;
}

PipelineRun render_views(const Scene& scene, std::span<const Camera> cameras, const RenderConfig& cfg) {
  PipelineRun run;
  for (const auto& cam : cameras) {
    RenderOutput out = render_image(scene, cam, cfg);
    run.images.push_back(std::move(out.image));
    run.stats += out.stats;
  }
  return run;
}

double pooled_psnr(std::span<const Image> a, std::span<const Image> b) {
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t v = 0; v < a.size(); ++v) {
    if (a[v].width != b[v].width || a[v].height != b[v].height) throw std::invalid_argument("image size mismatch");
    for (std::size_t i = 0; i < a[v].rgb.size(); ++i) {
      const double d = a[v].rgb[i] - b[v].rgb[i];
      sq += d * d;
    }
    n += a[v].rgb.size();
  }
  if (n == 0 || sq == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(sq / static_cast<double>(n));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

BenchReport run_pipeline_matrix(const Scene& scene, std::span<const Camera> cameras,
                                std::span<const PipelineSpec> pipelines, const BenchConfig& cfg) {
  if (pipelines.empty()) throw std::invalid_argument("at least one pipeline required");
  if (cameras.empty()) throw std::invalid_argument("at least one camera required");
  if (cfg.repeats < 1 || cfg.warmup < 0 || cfg.reference_factor < 1) throw std::invalid_argument("bad bench settings");
  cfg.base.validate();

  std::vector<Image> reference;
  if (cfg.with_reference) {
    const double fine = cfg.base.step / cfg.reference_factor;
    for (const auto& cam : cameras) {
      reference.push_back(reference_image(scene, cam, fine, cfg.base.background, cfg.base.threads));
    }
  }

  // Dense (skipping off) renders keyed by sampling mode, shared by the
  // dense rows and the exactness check of the skipping rows.
  std::map<SamplingMode, PipelineRun> dense;
  const auto dense_run = [&](SamplingMode mode) -> const PipelineRun& {
    auto it = dense.find(mode);
    if (it == dense.end()) {
      it = dense.emplace(mode, render_views(scene, cameras, pipeline_config(cfg.base, false, mode))).first;
    }
    return it->second;
  };

  Scene reordered = scene;
  if (cfg.check_toggles) reordered.reorder_by_morton();

  BenchReport report;
  for (const auto& p : pipelines) {
    const RenderConfig rc = pipeline_config(cfg.base, p.empty_space_skipping, p.mode);
    for (int w = 0; w < cfg.warmup; ++w) render_views(scene, cameras, rc);
    std::vector<double> times;
    PipelineRun first;
    for (int r = 0; r < cfg.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      PipelineRun run = render_views(scene, cameras, rc);
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      if (r == 0) {
        first = std::move(run);
      } else if (!(run.stats == first.stats)) {
        throw std::logic_error("render statistics differ between repeats");
      }
    }

    BenchRow row;
    row.pipeline = p.name;
    row.rays = first.stats.rays;
    const double rays = std::max<double>(1.0, static_cast<double>(first.stats.rays));
    row.samples_per_ray = static_cast<double>(first.stats.samples) / rays;
    row.node_visits_per_ray = static_cast<double>(first.stats.node_visits) / rays;
    row.aabb_hits = first.stats.aabb_hits;
    row.ellipsoid_hits = first.stats.ellipsoid_hits;
    row.false_positive_fraction = first.stats.false_positive_fraction();
    row.wall_ms = median(times);
    row.psnr = cfg.with_reference ? pooled_psnr(first.images, reference) : std::numeric_limits<double>::quiet_NaN();

    if (p.empty_space_skipping) {
      const PipelineRun& base = dense_run(p.mode);
      double diff = 0.0;
      bool equal = true;
      for (std::size_t v = 0; v < first.images.size(); ++v) {
        diff = std::max(diff, max_abs_diff(first.images[v], base.images[v]));
        equal = equal && first.images[v] == base.images[v];
      }
      row.max_abs_diff_vs_dense = diff;
      row.bitwise_equal_to_dense = equal;
    } else {
      if (!dense.contains(p.mode)) dense.emplace(p.mode, first);
      row.max_abs_diff_vs_dense = 0.0;
      row.bitwise_equal_to_dense = true;
    }

    if (cfg.check_toggles) {
      // Morton order, tiling and thread count must not change a single bit.
      RenderConfig alt = rc;
      alt.tile_size = rc.tile_size == 1 ? 16 : 1;
      alt.threads = resolve_thread_count(rc.threads) == 1 ? 3 : 1;
      const PipelineRun other = render_views(reordered, cameras, alt);
      row.toggle_invariant = true;
      for (std::size_t v = 0; v < first.images.size(); ++v)
        row.toggle_invariant = row.toggle_invariant && other.images[v] == first.images[v];
    }
    report.rows.push_back(row);
  }
  return report;
}

void BenchReport::write_csv(std::ostream& out) const {
  out << "pipeline,rays,samples_per_ray,node_visits_per_ray,aabb_hits,ellipsoid_hits,false_positive_fraction,"
         "wall_ms,psnr_db,max_abs_diff_vs_dense,bitwise_equal_to_dense,toggle_invariant\n";
  const auto prec = out.precision(10);
  for (const auto& r : rows) {
    out << r.pipeline << ',' << r.rays << ',' << r.samples_per_ray << ',' << r.node_visits_per_ray << ','
        << r.aabb_hits << ',' << r.ellipsoid_hits << ',' << r.false_positive_fraction << ',' << r.wall_ms << ','
        << r.psnr << ',' << r.max_abs_diff_vs_dense << ',' << (r.bitwise_equal_to_dense ? 1 : 0) << ','
        << (r.toggle_invariant ? 1 : 0) << '\n';
  }
  out.precision(prec);
}

std::string BenchReport::to_json() const {
  // JSON has no infinity; an exact match is reported as null.
  const auto number = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : rows) {
    list.push_back({{"pipeline", r.pipeline},
                    {"rays", r.rays},
                    {"samples_per_ray", r.samples_per_ray},
                    {"node_visits_per_ray", r.node_visits_per_ray},
                    {"aabb_hits", r.aabb_hits},
                    {"ellipsoid_hits", r.ellipsoid_hits},
                    {"false_positive_fraction", r.false_positive_fraction},
                    {"wall_ms", r.wall_ms},
                    {"psnr_db", number(r.psnr)},
                    {"max_abs_diff_vs_dense", r.max_abs_diff_vs_dense},
                    {"bitwise_equal_to_dense", r.bitwise_equal_to_dense},
                    {"toggle_invariant", r.toggle_invariant}});
  }
  return nlohmann::json{{"rows", list}}.dump(2);
}

// ---------------------------------------------------------------------------
// Isotropy sweep

IsotropyCurve isotropy_sweep(std::span<const double> levels, const IsotropyConfig& cfg) {
  if (levels.empty()) throw std::invalid_argument("at least one anisotropy level required");
  if (cfg.primitives < 1 || cfg.rays < 1 || cfg.bootstrap < 1) throw std::invalid_argument("bad sweep settings");
  for (const double a : levels) {
    if (!(a >= 1.0)) throw std::invalid_argument("anisotropy levels must be >= 1");
  }

  Rng rng(cfg.seed);
  std::vector<Eigen::Vector3d> means(cfg.primitives);
  std::vector<Eigen::Vector4d> rotations(cfg.primitives);
  for (int i = 0; i < cfg.primitives; ++i) {
    for (int k = 0; k < 3; ++k) means[i][k] = rng.uniform(-cfg.extent, cfg.extent);
    rotations[i] = rng.rotation();
  }
  std::vector<Eigen::Vector3d> origins(cfg.rays);
  std::vector<Eigen::Vector3d> dirs(cfg.rays);
  for (int r = 0; r < cfg.rays; ++r) {
    origins[r] = 3.0 * cfg.extent * rng.unit_vector();
    Eigen::Vector3d target;
    for (int k = 0; k < 3; ++k) target[k] = rng.uniform(-cfg.extent, cfg.extent);
    dirs[r] = (target - origins[r]).normalized();
  }

  const double base = 0.35 * cfg.extent / std::cbrt(static_cast<double>(cfg.primitives));
  const std::size_t nl = levels.size();
  // Per level and ray: AABB hits and ellipsoid hits along the whole ray.
  std::vector<std::vector<std::uint32_t>> box_hits(nl, std::vector<std::uint32_t>(cfg.rays, 0));
  std::vector<std::vector<std::uint32_t>> ell_hits(nl, std::vector<std::uint32_t>(cfg.rays, 0));

  IsotropyCurve curve;
  for (std::size_t l = 0; l < nl; ++l) {
    const double a = levels[l];
    const Eigen::Vector3d scale = base * Eigen::Vector3d(1.0, 1.0, a) / std::cbrt(a);
    const double sigma_eps = kDefaultSigmaEps;
    const double density = 1.0;
    std::vector<Aabbd> boxes(cfg.primitives);
    std::vector<BoundingEllipsoid> ells(cfg.primitives);
    for (int i = 0; i < cfg.primitives; ++i) {
      const auto shape = GaussianShaped::from_wxyz(means[i], rotations[i], scale, density);
      boxes[i] = aabb_of(shape, sigma_eps);
      ells[i] = {shape.mean, shape.rotation_matrix(), iso_scale(shape, sigma_eps)};
    }
    for (int r = 0; r < cfg.rays; ++r) {
      for (int i = 0; i < cfg.primitives; ++i) {
        const auto box = intersect_aabb(boxes[i], origins[r], dirs[r]);
        if (!box || box->hi < 0.0) continue;
        ++box_hits[l][r];
        const auto e = intersect_ellipsoid(ells[i], origins[r], dirs[r]);
        if (e && e->hi >= 0.0) ++ell_hits[l][r];
      }
    }
    IsotropyPoint pt;
    pt.anisotropy = a;
    for (int r = 0; r < cfg.rays; ++r) {
      pt.aabb_hits += box_hits[l][r];
      pt.ellipsoid_hits += ell_hits[l][r];
    }
    pt.false_positive_fraction =
        pt.aabb_hits == 0 ? 0.0 : 1.0 - static_cast<double>(pt.ellipsoid_hits) / static_cast<double>(pt.aabb_hits);
    pt.volume_ratio_bound = ratio_upper_bound<double>(scale);
    curve.points.push_back(pt);
  }

  if (nl >= 2) {
    Rng boot(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    std::vector<std::vector<double>> diffs(nl - 1);
    std::vector<double> frac(nl);
    for (int b = 0; b < cfg.bootstrap; ++b) {
      std::vector<std::uint64_t> box(nl, 0);
      std::vector<std::uint64_t> ell(nl, 0);
      for (int r = 0; r < cfg.rays; ++r) {
        const auto pick = boot.index(static_cast<std::uint64_t>(cfg.rays));
        for (std::size_t l = 0; l < nl; ++l) {
          box[l] += box_hits[l][pick];
          ell[l] += ell_hits[l][pick];
        }
      }
      for (std::size_t l = 0; l < nl; ++l) {
        frac[l] = box[l] == 0 ? 0.0 : 1.0 - static_cast<double>(ell[l]) / static_cast<double>(box[l]);
      }
      for (std::size_t l = 0; l + 1 < nl; ++l) diffs[l].push_back(frac[l + 1] - frac[l]);
    }
    curve.strictly_increasing = true;
    for (auto& d : diffs) {
      std::sort(d.begin(), d.end());
      const auto at = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::clamp(q * (d.size() - 1), 0.0, double(d.size() - 1)));
        return d[idx];
      };
      const Eigen::Vector2d ci(at(0.025), at(0.975));
      curve.diff_ci.push_back(ci);
      curve.strictly_increasing = curve.strictly_increasing && ci[0] > 0.0;
    }
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Locality

double locality_metric(std::span<const Eigen::Vector3d> points, std::span<const std::uint32_t> perm, int k) {
  const std::size_t n = points.size();
  if (perm.size() != n) throw std::invalid_argument("permutation size mismatch");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (n < 2) return 0.0;
  std::vector<std::int64_t> pos(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (perm[i] >= n || pos[perm[i]] != -1) throw std::invalid_argument("not a permutation");
    pos[perm[i]] = static_cast<std::int64_t>(i);
  }
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n - 1);
  double total = 0.0;
  std::size_t pairs = 0;
  std::vector<std::pair<double, std::uint32_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dist.emplace_back((points[i] - points[j]).squaredNorm(), static_cast<std::uint32_t>(j));
    }
    // Ties broken by index so the neighbor set is well defined.
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    for (std::size_t m = 0; m < kk; ++m) {
      total += static_cast<double>(std::llabs(pos[i] - pos[dist[m].second]));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

}  // namespace gsray
