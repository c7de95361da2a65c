#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <fstream>
#include <numbers>

#include "gsray/errors.hpp"
#include "gsray/geometry.hpp"
#include "gsray/scene_io.hpp"
#include "test_util.hpp"

using namespace gsray;
using Eigen::Vector3d;
using testutil::TempDir;

namespace {

bool same_primitive(const GaussianPrimitive& a, const GaussianPrimitive& b) {
  if (a.mean != b.mean || a.rotation != b.rotation || a.scale != b.scale || a.density != b.density) return false;
  for (int k = 0; k < kShCoeffs; ++k)
    if (a.appearance.sh[k] != b.appearance.sh[k]) return false;
  for (int k = 0; k < kSgLobes; ++k) {
    const auto& x = a.appearance.sg[k];
    const auto& y = b.appearance.sg[k];
    if (x.axis != y.axis || x.sharpness != y.sharpness || x.amplitude != y.amplitude) return false;
  }
  return true;
}

bool same_scene(const Scene& a, const Scene& b) {
  if (a.size() != b.size() || a.sigma_eps() != b.sigma_eps()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_primitive(a.primitives()[i], b.primitives()[i])) return false;
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

const char* kPlyProps =
    "property float x\nproperty float y\nproperty float z\n"
    "property float f_dc_0\nproperty float f_dc_1\nproperty float f_dc_2\n"
    "property float f_rest_0\nproperty float f_rest_1\nproperty float f_rest_2\n"
    "property float f_rest_3\nproperty float f_rest_4\nproperty float f_rest_5\n"
    "property float opacity\n"
    "property float scale_0\nproperty float scale_1\nproperty float scale_2\n"
    "property float rot_0\nproperty float rot_1\nproperty float rot_2\nproperty float rot_3\n";

// 20 values per vertex in header order
const float kPlyRows[3][20] = {
    {0.f, 0.f, 0.f, 0.1f, 0.2f, 0.3f, 0.01f, 0.02f, 0.03f, 0.04f, 0.05f, 0.06f, 0.5f, -2.f, -2.5f, -3.f, 1.f, 0.f, 0.f, 0.f},
    {1.f, -1.f, 0.5f, -0.4f, 0.f, 0.4f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, -1.f, -1.f, -1.f, -1.f, 0.f, 1.f, 0.f, 0.f},
    {0.25f, 0.5f, -0.75f, 0.f, 0.f, 0.f, 0.1f, 0.f, 0.f, 0.f, 0.f, 0.f, 2.f, -3.f, -2.f, -1.f, 0.5f, 0.5f, 0.5f, 0.5f},
};

void write_ply(const std::filesystem::path& p, bool binary) {
  std::ostringstream s;
  s << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
    << "comment hand-built test asset\nelement vertex 3\n"
    << kPlyProps << "end_header\n";
  for (const auto& row : kPlyRows) {
    if (binary) {
      s.write(reinterpret_cast<const char*>(row), sizeof row);
    } else {
      for (int k = 0; k < 20; ++k) s << (k ? " " : "") << row[k];
      s << "\n";
    }
  }
  spit(p, s.str());
}

void check_ply_scene(const Scene& scene) {
  REQUIRE(scene.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const auto& row = kPlyRows[i];
    const auto& p = scene.primitives()[i];
    // ascii holds the short decimal form, binary the float, so allow float rounding
    const auto near = [](double a, double b) { return std::abs(a - b) <= 1e-7 * (1 + std::abs(b)); };
    for (int k = 0; k < 3; ++k) CHECK(near(p.mean[k], row[k]));
    for (int k = 0; k < 3; ++k) CHECK(near(p.scale[k], std::exp(double(row[13 + k]))));
    for (int k = 0; k < 4; ++k) CHECK(near(p.rotation[k], row[16 + k]));
    const double alpha = sigmoid(row[12]);
    CHECK(near(p.density, -std::log1p(-alpha) / 0.01));
    for (int c = 0; c < 3; ++c) {
      CHECK(near(p.appearance.sh[0][c], row[3 + c] + 0.5 / 0.28209479177387814));
      // channel-major rest coefficients, two per channel here
      CHECK(near(p.appearance.sh[1][c], row[6 + 2 * c]));
      CHECK(near(p.appearance.sh[2][c], row[7 + 2 * c]));
      CHECK(p.appearance.sh[3][c] == 0.0);
    }
  }
  // the DC offset makes f_dc = 0 render as mid grey
  const Vector3d grey = eval_radiance(scene.primitives()[2].appearance, Vector3d(0, 0, 1));
  CHECK(std::abs(grey[1] - 0.5) < 1e-12);
}

}  // namespace

TEST_CASE("gsx roundtrip is bitwise") {
  TempDir dir("io_roundtrip");
  for (const auto kind : {SceneKind::single, SceneKind::grid, SceneKind::random_cloud, SceneKind::shell}) {
    SceneGenSpec spec;
    spec.kind = kind;
    spec.count = 27;
    spec.seed = 11;
    spec.anisotropy = 3.0;
    Scene scene = gen_test_scene(spec);
    // add some view-dependent appearance so every field is exercised
    std::vector<GaussianPrimitive> prims = scene.primitives();
    Rng rng(3);
    for (auto& p : prims) {
      for (auto& c : p.appearance.sh)
        for (int k = 0; k < 3; ++k) c[k] = static_cast<float>(rng.uniform(-1, 1));
      for (auto& lobe : p.appearance.sg) {
        lobe.axis = Vector3d(0, 0, 1);
        lobe.sharpness = float(rng.uniform(0, 9));
        lobe.amplitude = Vector3d(0.25, 0.5, 0.125);
      }
    }
    const Scene rich(prims, scene.sigma_eps());
    const auto path = dir / ("scene_" + to_string(kind) + ".gsx");
    save_scene(rich, path);
    const Scene back = load_scene(path);
    CHECK(same_scene(rich, back));
    save_scene(back, dir / "again.gsx");
    CHECK(slurp(path) == slurp(dir / "again.gsx"));
  }
}

TEST_CASE("gsx file layout") {
  TempDir dir("io_layout");
  const Scene scene = gen_test_scene({SceneKind::grid, 8, 1, 1.0, 20.0, 1.0, 0.0});
  save_scene(scene, dir / "a.gsx");
  const std::string bytes = slurp(dir / "a.gsx");
  CHECK(bytes.substr(0, 8) == "GSRAYSCN");
  std::uint32_t header = 0;
  std::memcpy(&header, bytes.data() + 8, 4);
  CHECK(bytes.size() == 12 + header + 8 * 87 * 4);
  CHECK(kGsxRecordFloats == 87);
}

TEST_CASE("gsx errors") {
  TempDir dir("io_errors");
  CHECK_THROWS_AS(save_scene(Scene(), dir / "empty.gsx"), ValidationError);

  const Scene scene = gen_test_scene({SceneKind::random_cloud, 5, 2, 2.0, 20.0, 1.0, 0.0});
  save_scene(scene, dir / "good.gsx");
  const std::string good = slurp(dir / "good.gsx");

  // a well-formed file that lists no records
  std::uint32_t head = 0;
  std::memcpy(&head, good.data() + 8, 4);
  std::string header_text = good.substr(12, head);
  const auto cpos = header_text.find("\"count\":5");
  REQUIRE(cpos != std::string::npos);
  header_text.replace(cpos, 9, "\"count\":0");
  spit(dir / "empty.gsx", good.substr(0, 12) + header_text);
  CHECK_THROWS_AS(load_scene(dir / "empty.gsx"), ValidationError);

  spit(dir / "truncated.gsx", good.substr(0, good.size() - 10));
  CHECK_THROWS_AS(load_scene(dir / "truncated.gsx"), ParseError);
  spit(dir / "trailing.gsx", good + "x");
  CHECK_THROWS_AS(load_scene(dir / "trailing.gsx"), ParseError);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  spit(dir / "magic.gsx", bad_magic);
  CHECK_THROWS_AS(load_scene(dir / "magic.gsx"), ParseError);
  CHECK_THROWS_AS(load_scene(dir / "missing.gsx"), ParseError);

  // negative scale in record 3
  std::uint32_t header = 0;
  std::memcpy(&header, good.data() + 8, 4);
  std::string bad = good;
  const float neg = -0.5f;
  std::memcpy(bad.data() + 12 + header + (3 * 87 + 8) * 4, &neg, 4);
  spit(dir / "bad_scale.gsx", bad);
  try {
    load_scene(dir / "bad_scale.gsx");
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.record() == 3);
  }
}

TEST_CASE("ply ingest") {
  TempDir dir("io_ply");
  write_ply(dir / "a.ply", false);
  write_ply(dir / "b.ply", true);
  const Scene ascii = load_scene(dir / "a.ply");
  const Scene binary = load_scene(dir / "b.ply");
  check_ply_scene(ascii);
  check_ply_scene(binary);

  CHECK(opacity_to_density(0.0) == doctest::Approx(std::log(2.0) / 0.01));

  std::string text = slurp(dir / "a.ply");
  const auto at = text.find("property float opacity\n");
  spit(dir / "no_opacity.ply", text.substr(0, at) + text.substr(at + 23));
  CHECK_THROWS_AS(load_scene(dir / "no_opacity.ply"), ParseError);
  spit(dir / "short.ply", text.substr(0, text.size() - 20));
  CHECK_THROWS_AS(load_scene(dir / "short.ply"), ParseError);
  std::string big_endian = text;
  big_endian.replace(big_endian.find("ascii"), 5, "binary_big_endian");
  spit(dir / "be.ply", big_endian);
  CHECK_THROWS_AS(load_scene(dir / "be.ply"), ParseError);
}

TEST_CASE("morton reorder on load keeps ids") {
  TempDir dir("io_morton");
  const Scene scene = gen_test_scene({SceneKind::random_cloud, 40, 5, 1.0, 20.0, 1.0, 0.0});
  save_scene(scene, dir / "s.gsx");
  const Scene sorted = load_scene(dir / "s.gsx", LoadOptions{true});
  REQUIRE(sorted.size() == scene.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    CHECK(same_primitive(sorted.primitives()[i], scene.primitives()[sorted.ids()[i]]));
  }
}

TEST_CASE("procedural scenes") {
  SceneGenSpec spec;
  spec.seed = 9;
  spec.count = 50;
  CHECK(same_scene(gen_test_scene(spec), gen_test_scene(spec)));
  spec.seed = 10;
  CHECK_FALSE(same_scene(gen_test_scene(spec), gen_test_scene(SceneGenSpec{SceneKind::random_cloud, 50, 9})));

  SceneGenSpec single;
  single.kind = SceneKind::single;
  const Scene one = gen_test_scene(single);
  REQUIRE(one.size() == 1);
  CHECK(one.primitives()[0].mean == Vector3d::Zero());

  for (const double a : {1.0, 2.0, 10.0}) {
    SceneGenSpec s;
    s.kind = SceneKind::random_cloud;
    s.anisotropy = a;
    s.count = 30;
    s.seed = 4;
    const Scene scene = gen_test_scene(s);
    for (const auto& p : scene.primitives()) {
      const Vector3d sc = p.scale;
      // r_max of the (1, 1, a) profile, up to float rounding
      const double expect = 2 / (std::numbers::pi * std::sqrt(3.0)) * std::pow(2 + a * a, 1.5) / a;
      CHECK(ratio_upper_bound<double>(sc) == doctest::Approx(expect).epsilon(1e-5));
      CHECK((p.mean.array().abs() <= 1.0).all());
    }
  }

  SceneGenSpec grid;
  grid.kind = SceneKind::grid;
  grid.count = 27;
  CHECK(gen_test_scene(grid).size() == 27);
  CHECK(parse_scene_kind("random-cloud") == SceneKind::random_cloud);
  CHECK_THROWS_AS(parse_scene_kind("torus"), std::invalid_argument);
}

TEST_CASE("camera files") {
  TempDir dir("io_cams");
  const auto cams = orbit_cameras(Vector3d(0.1, 0, 0), 3.0, 5, 40.0, 32, 24);
  REQUIRE(cams.size() == 5);
  for (const auto& c : cams) {
    // each camera looks at the target
    const Ray r = c.pixel_ray(16, 12);
    const Vector3d to = (Vector3d(0.1, 0, 0) - c.center).normalized();
    CHECK(r.dir.dot(to) > 0.999);
  }
  save_cameras(cams, dir / "c.json");
  const auto back = load_cameras(dir / "c.json");
  REQUIRE(back.size() == cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK(back[i].center == cams[i].center);
    CHECK(back[i].rotation == cams[i].rotation);
    CHECK(back[i].focal == cams[i].focal);
    CHECK(back[i].width == cams[i].width);
    CHECK(back[i].height == cams[i].height);
  }

  spit(dir / "broken.json", "{\"cameras\": [");
  CHECK_THROWS_AS(load_cameras(dir / "broken.json"), ParseError);
  spit(dir / "bad.json",
       R"({"cameras":[{"center":[0,0,0],"rotation":[1,0,0,0],"focal":10,"width":4,"height":4},
                      {"center":[0,0,0],"rotation":[1,0,0,0],"focal":-1,"width":4,"height":4}]})");
  try {
    load_cameras(dir / "bad.json");
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.record() == 1);
  }
}

TEST_CASE("point scalar ply") {
  TempDir dir("io_points");
  const std::vector<Vector3d> pts = {Vector3d(0, 0, 0), Vector3d(1, 2, 3)};
  const std::vector<double> vals = {4.0, 7.0};
  write_point_scalars_ply(pts, vals, dir / "p.ply");
  const std::string text = slurp(dir / "p.ply");
  CHECK(text.find("element vertex 2") != std::string::npos);
  CHECK(text.find("property float value") != std::string::npos);
  CHECK(text.find("1 2 3 7") != std::string::npos);
}
