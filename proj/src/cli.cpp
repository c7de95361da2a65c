#include "gsray/cli.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

#include "gsray/bench.hpp"
#include "gsray/densify.hpp"
#include "gsray/errors.hpp"
#include "gsray/geometry.hpp"
#include "gsray/random.hpp"
#include "gsray/renderer.hpp"
#include "gsray/scene_io.hpp"

namespace gsray {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string view_name(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%03zu%s", i, ext);
  return buf;
}

json stats_json(const RenderStats& s) {
  return {{"rays", s.rays},
          {"samples", s.samples},
          {"samples_per_ray", s.rays ? static_cast<double>(s.samples) / static_cast<double>(s.rays) : 0.0},
          {"segments_processed", s.segments_processed},
          {"segments_skipped", s.segments_skipped},
          {"closest_hit_calls", s.closest_hit_calls},
          {"node_visits", s.node_visits},
          {"aabb_hits", s.aabb_hits},
          {"ellipsoid_hits", s.ellipsoid_hits},
          {"false_positive_fraction", s.false_positive_fraction()}};
}

struct RenderArgs {
  std::string scene, cameras, out;
  std::string mode = "uniform";
  std::string format = "both";
  double step = 0.0025, step_min = 0.005, step_max = 0.02, beta = 1024.0, t_eps = 1e-4;
  int samples_per_segment = 16, tile = 16, threads = 0;
  bool no_ess = false, morton = false;
  std::uint64_t seed = 0;
};

RenderConfig make_render_config(const RenderArgs& a) {
  RenderConfig cfg;
  cfg.step = a.step;
  cfg.step_min = a.step_min;
  cfg.step_max = a.step_max;
  cfg.beta = a.beta;
  cfg.transmittance_eps = a.t_eps;
  cfg.samples_per_segment = a.samples_per_segment;
  cfg.tile_size = a.tile;
  cfg.threads = a.threads;
  cfg.empty_space_skipping = !a.no_ess;
  cfg.mode = a.mode == "adaptive" ? SamplingMode::adaptive : SamplingMode::uniform;
  cfg.validate();
  return cfg;
}

void add_render_options(CLI::App* cmd, RenderArgs& a) {
  cmd->add_option("--mode", a.mode, "Sampling mode")->check(CLI::IsMember({"uniform", "adaptive"}))->capture_default_str();
  cmd->add_option("--step", a.step, "Uniform sample spacing")->capture_default_str();
  cmd->add_option("--step-min", a.step_min, "Adaptive minimum step")->capture_default_str();
  cmd->add_option("--step-max", a.step_max, "Adaptive maximum step")->capture_default_str();
  cmd->add_option("--beta", a.beta, "Adaptive distance scale")->capture_default_str();
  cmd->add_option("--t-eps", a.t_eps, "Early-termination transmittance")->capture_default_str();
  cmd->add_option("--samples-per-segment", a.samples_per_segment, "Samples per segment")->capture_default_str();
  cmd->add_option("--tile", a.tile, "Tile size in pixels")->capture_default_str();
  cmd->add_option("--threads", a.threads, "Worker threads (0: GSRAY_THREADS or hardware)")->capture_default_str();
  cmd->add_flag("--no-ess", a.no_ess, "Disable empty-space skipping");
  cmd->add_flag("--morton", a.morton, "Reorder primitives by Morton code after loading");
}

int cmd_render(const RenderArgs& a, std::ostream& out) {
  const RenderConfig cfg = make_render_config(a);
  const Scene scene = load_scene(a.scene, LoadOptions{a.morton});
  const auto cameras = load_cameras(a.cameras);
  fs::create_directories(a.out);
  json views = json::array();
  RenderStats total;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const RenderOutput r = render_image(scene, cameras[i], cfg);
    if (a.format != "pfm") write_png(r.image, fs::path(a.out) / view_name(i, ".png"));
    if (a.format != "png") write_pfm(r.image, fs::path(a.out) / view_name(i, ".pfm"));
    views.push_back(stats_json(r.stats));
    total += r.stats;
  }
  const json doc = {{"mode", a.mode},
                    {"empty_space_skipping", cfg.empty_space_skipping},
                    {"primitives", scene.size()},
                    {"views", views},
                    {"total", stats_json(total)}};
  std::ofstream(fs::path(a.out) / "stats.json") << doc.dump(2) << '\n';
  out << "rendered " << cameras.size() << " view(s) to " << a.out << '\n';
  return 0;
}

struct BenchArgs {
  std::string scene, cameras, pipelines = "uniform,ess,ess+adaptive", out = "-";
  bool as_json = false, no_reference = false, morton = false, no_toggle_check = false;
  int repeats = 5, warmup = 1, reference_factor = 8, threads = 0;
  double step = 0.0025, step_min = 0.005, step_max = 0.02;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const Scene scene = load_scene(a.scene, LoadOptions{a.morton});
  const auto cameras = load_cameras(a.cameras);
  BenchConfig cfg;
  cfg.base.step = a.step;
  cfg.base.step_min = a.step_min;
  cfg.base.step_max = a.step_max;
  cfg.base.threads = a.threads;
  cfg.repeats = a.repeats;
  cfg.warmup = a.warmup;
  cfg.reference_factor = a.reference_factor;
  cfg.with_reference = !a.no_reference;
  cfg.check_toggles = !a.no_toggle_check;
  const auto pipelines = parse_pipelines(a.pipelines);
  const BenchReport report = run_pipeline_matrix(scene, cameras, pipelines, cfg);
  std::ofstream file;
  std::ostream* dst = &out;
  if (a.out != "-") {
    file.open(a.out);
    if (!file) throw std::runtime_error("cannot open " + a.out);
    dst = &file;
  }
  if (a.as_json) {
    *dst << report.to_json() << '\n';
  } else {
    report.write_csv(*dst);
  }
  return 0;
}

struct GeomArgs {
  long trials = 100000;
  std::uint64_t seed = 7;
};

int cmd_geom_check(const GeomArgs& a, std::ostream& out) {
  if (a.trials < 1) throw std::invalid_argument("--trials must be >= 1");
  Rng rng(a.seed);
  double max_violation = -std::numeric_limits<double>::infinity();
  double max_witness_error = 0.0;
  for (long t = 0; t < a.trials; ++t) {
    const Eigen::Vector3d s(rng.log_uniform(1e-3, 1e1), rng.log_uniform(1e-3, 1e1), rng.log_uniform(1e-3, 1e1));
    const auto shape = GaussianShaped::from_wxyz(Eigen::Vector3d::Zero(), rng.rotation(), s, 1.0);
    max_violation = std::max(max_violation, volume_ratio(shape) - ratio_upper_bound<double>(s));
    // Contact witnesses: on the isosurface and on the matching box face.
    const double eps = 0.5;
    const Aabbd box = aabb_of(shape, eps);
    const Eigen::Vector3d semi = iso_scale(shape, eps);
    const double size = semi.maxCoeff();
    for (int axis = 0; axis < 3; ++axis) {
      for (const bool positive : {false, true}) {
        const Eigen::Vector3d x = aabb_contact_point(shape, eps, axis, positive);
        const Eigen::Vector3d local = shape.rotation_matrix().transpose() * x;
        const double on_surface = std::abs(local.cwiseQuotient(semi).norm() - 1.0);
        const double face = positive ? box.max[axis] : box.min[axis];
        const double on_face = std::abs(x[axis] - face) / size;
        max_witness_error = std::max({max_witness_error, on_surface, on_face});
      }
    }
  }
  const double iso = volume_ratio(GaussianShaped{}) - 6.0 / std::numbers::pi;
  out << "trials " << a.trials << '\n';
  out << "max_ratio_bound_violation " << max_violation << '\n';
  out << "isotropic_ratio_error " << std::abs(iso) << '\n';
  out << "max_contact_witness_error " << max_witness_error << '\n';
  const bool ok = max_violation <= 0.0 && std::abs(iso) <= 1e-9 && max_witness_error <= 1e-6;
  out << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? 0 : 1;
}

struct DensifyArgs {
  std::string scene, cameras, target_scene, targets, out = "-", density_ply;
  double tau = 0.00015, radius = 0.125, step = 0.0025, fd_step = 0.0, lambda = 0.2, lambda_s = 0.00025;
  int threads = 0;
  std::uint64_t seed = 0;
};

int cmd_densify(const DensifyArgs& a, std::ostream& out) {
  const Scene scene = load_scene(a.scene);
  const auto cameras = load_cameras(a.cameras);
  FdGradientConfig fcfg;
  fcfg.render = uniform_config(a.step);
  fcfg.render.threads = a.threads;
  fcfg.step = a.fd_step;
  fcfg.loss.dssim_weight = a.lambda;
  fcfg.loss.iso.weight = a.lambda_s;

  std::vector<Image> targets;
  if (!a.targets.empty()) {
    for (std::size_t i = 0; i < cameras.size(); ++i) targets.push_back(read_pfm(fs::path(a.targets) / view_name(i, ".pfm")));
  } else if (!a.target_scene.empty()) {
    const Scene target = load_scene(a.target_scene);
    RenderConfig fine = uniform_config(a.step / 8.0);
    fine.threads = a.threads;
    for (const auto& cam : cameras) targets.push_back(render_image(target, cam, fine).image);
  } else {
    throw CLI::ValidationError("densify-analyze", "one of --targets or --target-scene is required");
  }
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    if (targets[i].width != cameras[i].width || targets[i].height != cameras[i].height) {
      throw ValidationError("target image size does not match its camera", i);
    }
  }

  DensifyConfig dcfg;
  dcfg.threshold = a.tau;
  dcfg.neighbor_radius = a.radius;
  dcfg.window = std::max<std::size_t>(1, cameras.size());
  const DensifyReport report = analyze_densification(scene, cameras, targets, dcfg, fcfg);

  std::ofstream file;
  std::ostream* dst = &out;
  if (a.out != "-") {
    file.open(a.out);
    if (!file) throw std::runtime_error("cannot open " + a.out);
    dst = &file;
  }
  *dst << "id,mean_grad_norm,mean_weighted_grad_norm,observations,old_decision,new_decision,neighbors\n";
  dst->precision(10);
  for (const auto& r : report.rows) {
    *dst << r.id << ',' << r.mean_grad_norm << ',' << r.mean_weighted_grad_norm << ',' << r.observations << ','
         << (r.old_decision ? 1 : 0) << ',' << (r.new_decision ? 1 : 0) << ',' << r.neighbors << '\n';
  }
  if (!a.density_ply.empty()) {
    std::vector<Eigen::Vector3d> points;
    std::vector<double> values;
    for (std::size_t i = 0; i < scene.size(); ++i) {
      points.push_back(scene.primitives()[i].mean);
      values.push_back(report.rows[i].neighbors);
    }
    write_point_scalars_ply(points, values, a.density_ply);
  }
  return 0;
}

struct GenArgs {
  std::string kind = "random-cloud", out, cameras;
  int count = 64, views = 4, width = 64, height = 64;
  double anisotropy = 1.0, density = 20.0, extent = 1.0, focal = 0.0, radius = 0.0;
  std::uint64_t seed = 0;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  SceneGenSpec spec;
  spec.kind = parse_scene_kind(a.kind);
  spec.count = a.count;
  spec.seed = a.seed;
  spec.anisotropy = a.anisotropy;
  spec.density = a.density;
  spec.extent = a.extent;
  const Scene scene = gen_test_scene(spec);
  save_scene(scene, a.out);
  out << "wrote " << scene.size() << " primitive(s) to " << a.out << '\n';
  if (!a.cameras.empty()) {
    const double focal = a.focal > 0.0 ? a.focal : static_cast<double>(a.width);
    const double radius = a.radius > 0.0 ? a.radius : 4.0 * a.extent;
    const auto cams = orbit_cameras(Eigen::Vector3d::Zero(), radius, a.views, focal, a.width, a.height);
    save_cameras(cams, a.cameras);
    out << "wrote " << cams.size() << " camera(s) to " << a.cameras << '\n';
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Volumetric ray tracing of truncated Gaussian scenes"};
  app.name(args.empty() ? "gsray" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.set_version_flag("--version", "gsray 1.0");

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "Render every camera of a camera file");
  render->add_option("--scene", ra.scene, "Scene file (.gsx or .ply)")->required()->check(CLI::ExistingFile);
  render->add_option("--cameras", ra.cameras, "Camera JSON file")->required()->check(CLI::ExistingFile);
  render->add_option("--out", ra.out, "Output directory")->required();
  render->add_option("--format", ra.format, "Image format")->check(CLI::IsMember({"png", "pfm", "both"}))->capture_default_str();
  render->add_option("--seed", ra.seed, "Seed (rendering is deterministic; accepted for uniformity)");
  add_render_options(render, ra);

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Compare rendering pipelines");
  bench->add_option("--scene", ba.scene, "Scene file")->required()->check(CLI::ExistingFile);
  bench->add_option("--cameras", ba.cameras, "Camera JSON file")->required()->check(CLI::ExistingFile);
  bench->add_option("--pipelines", ba.pipelines, "Comma list of uniform, ess, adaptive, ess+adaptive")->capture_default_str();
  bench->add_option("--out", ba.out, "Output path, - for stdout")->capture_default_str();
  bench->add_flag("--json", ba.as_json, "Write JSON instead of CSV");
  bench->add_option("--repeats", ba.repeats, "Timed runs per pipeline")->capture_default_str();
  bench->add_option("--warmup", ba.warmup, "Untimed warmup runs")->capture_default_str();
  bench->add_option("--step", ba.step, "Uniform sample spacing")->capture_default_str();
  bench->add_option("--step-min", ba.step_min, "Adaptive minimum step")->capture_default_str();
  bench->add_option("--step-max", ba.step_max, "Adaptive maximum step")->capture_default_str();
  bench->add_option("--reference-factor", ba.reference_factor, "Reference step = step / factor")->capture_default_str();
  bench->add_flag("--no-reference", ba.no_reference, "Skip the reference render and PSNR");
  bench->add_flag("--no-toggle-check", ba.no_toggle_check,
                  "Skip the bitwise check under Morton reorder, tile size and thread count");
  bench->add_flag("--morton", ba.morton, "Reorder primitives by Morton code after loading");
  bench->add_option("--threads", ba.threads, "Worker threads")->capture_default_str();
  bench->add_option("--seed", ba.seed, "Seed (bench numbers are deterministic; accepted for uniformity)");

  GeomArgs ga;
  auto* geom = app.add_subcommand("geom-check", "Monte-Carlo audit of the box/ellipsoid volume-ratio bound");
  geom->add_option("--trials", ga.trials, "Random shapes")->capture_default_str();
  geom->add_option("--seed", ga.seed, "Random seed")->capture_default_str();

  DensifyArgs da;
  auto* densify = app.add_subcommand("densify-analyze", "Densification statistics from finite-difference gradients");
  densify->add_option("--scene", da.scene, "Scene file")->required()->check(CLI::ExistingFile);
  densify->add_option("--cameras", da.cameras, "Camera JSON file")->required()->check(CLI::ExistingFile);
  densify->add_option("--target-scene", da.target_scene, "Scene whose renders are the targets")->check(CLI::ExistingFile);
  densify->add_option("--targets", da.targets, "Directory of view_NNN.pfm targets")->check(CLI::ExistingDirectory);
  densify->add_option("--out", da.out, "CSV path, - for stdout")->capture_default_str();
  densify->add_option("--density-ply", da.density_ply, "Write neighbor counts as a point-cloud PLY");
  densify->add_option("--tau", da.tau, "Densification threshold")->capture_default_str();
  densify->add_option("--radius", da.radius, "Neighbor radius")->capture_default_str();
  densify->add_option("--step", da.step, "Uniform sample spacing for the gradient renders")->capture_default_str();
  densify->add_option("--fd-step", da.fd_step, "Finite-difference step (0: 1e-4 x scene diagonal)")->capture_default_str();
  densify->add_option("--lambda", da.lambda, "DSSIM weight")->capture_default_str();
  densify->add_option("--lambda-s", da.lambda_s, "Isotropic loss weight")->capture_default_str();
  densify->add_option("--threads", da.threads, "Worker threads")->capture_default_str();
  densify->add_option("--seed", da.seed, "Seed (analysis is deterministic; accepted for uniformity)");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "Generate a procedural test scene");
  gen->add_option("--kind", gen_args.kind, "Scene kind")
      ->check(CLI::IsMember({"single", "grid", "random-cloud", "shell"}))
      ->capture_default_str();
  gen->add_option("--count", gen_args.count, "Primitive count")->capture_default_str();
  gen->add_option("--seed", gen_args.seed, "Random seed")->capture_default_str();
  gen->add_option("--anisotropy", gen_args.anisotropy, "Long-axis ratio")->capture_default_str();
  gen->add_option("--density", gen_args.density, "Peak density")->capture_default_str();
  gen->add_option("--extent", gen_args.extent, "Half-size of the content box")->capture_default_str();
  gen->add_option("--out", gen_args.out, "Output .gsx path")->required();
  gen->add_option("--cameras", gen_args.cameras, "Also write orbit cameras to this JSON path");
  gen->add_option("--views", gen_args.views, "Orbit camera count")->capture_default_str();
  gen->add_option("--width", gen_args.width, "Image width")->capture_default_str();
  gen->add_option("--height", gen_args.height, "Image height")->capture_default_str();
  gen->add_option("--focal", gen_args.focal, "Focal length in pixels (0: width)")->capture_default_str();
  gen->add_option("--radius", gen_args.radius, "Orbit radius (0: 4 x extent)")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*render) return cmd_render(ra, out);
    if (*bench) return cmd_bench(ba, out);
    if (*geom) return cmd_geom_check(ga, out);
    if (*densify) return cmd_densify(da, out);
    if (*gen) return cmd_gen(gen_args, out);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace gsray
