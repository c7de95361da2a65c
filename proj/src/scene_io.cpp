#include "gsray/scene_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "gsray/errors.hpp"
#include "gsray/random.hpp"

namespace gsray {

namespace {

using json = nlohmann::json;

constexpr char kGsxMagic[8] = {'G', 'S', 'R', 'A', 'Y', 'S', 'C', 'N'};
constexpr double kShC0 = 0.28209479177387814;

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

float round_float(double v) { return static_cast<float>(v); }

void pack_record(const GaussianPrimitive& p, std::vector<float>& out) {
  for (int i = 0; i < 3; ++i) out.push_back(round_float(p.mean[i]));
  for (int i = 0; i < 4; ++i) out.push_back(round_float(p.rotation[i]));
  for (int i = 0; i < 3; ++i) out.push_back(round_float(p.scale[i]));
  out.push_back(round_float(p.density));
  for (const auto& c : p.appearance.sh) {
    for (int i = 0; i < 3; ++i) out.push_back(round_float(c[i]));
  }
  for (const auto& lobe : p.appearance.sg) {
    for (int i = 0; i < 3; ++i) out.push_back(round_float(lobe.axis[i]));
    out.push_back(round_float(lobe.sharpness));
    for (int i = 0; i < 3; ++i) out.push_back(round_float(lobe.amplitude[i]));
  }
}

GaussianPrimitive unpack_record(const float* f) {
  GaussianPrimitive p;
  std::size_t k = 0;
  for (int i = 0; i < 3; ++i) p.mean[i] = f[k++];
  for (int i = 0; i < 4; ++i) p.rotation[i] = f[k++];
  for (int i = 0; i < 3; ++i) p.scale[i] = f[k++];
  p.density = f[k++];
  for (auto& c : p.appearance.sh) {
    for (int i = 0; i < 3; ++i) c[i] = f[k++];
  }
  for (auto& lobe : p.appearance.sg) {
    for (int i = 0; i < 3; ++i) lobe.axis[i] = f[k++];
    lobe.sharpness = f[k++];
    for (int i = 0; i < 3; ++i) lobe.amplitude[i] = f[k++];
  }
  return p;
}

Scene finish(std::vector<GaussianPrimitive> prims, double sigma_eps, const LoadOptions& opts) {
  if (prims.empty()) throw ValidationError("scene has no primitives");
  Scene scene(std::move(prims), sigma_eps);
  if (opts.morton_reorder) scene.reorder_by_morton();
  return scene;
}

std::string extension_of(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

// ---------------------------------------------------------------------------
// .gsx

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  if (scene.size() == 0) throw ValidationError("scene has no primitives");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const json header = {{"format", "gsx"},
                       {"version", kGsxVersion},
                       {"sigma_eps", scene.sigma_eps()},
                       {"count", scene.size()},
                       {"record_floats", kGsxRecordFloats},
                       {"byte_order", "little"}};
  const std::string text = header.dump();
  out.write(kGsxMagic, sizeof kGsxMagic);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::vector<float> values;
  values.reserve(kGsxRecordFloats);
  std::vector<std::uint32_t> words(kGsxRecordFloats);
  for (const auto& p : scene.primitives()) {
    values.clear();
    pack_record(p, values);
    for (int i = 0; i < kGsxRecordFloats; ++i) words[i] = to_little(std::bit_cast<std::uint32_t>(values[i]));
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Scene load_gsx(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  char magic[sizeof kGsxMagic] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kGsxMagic, sizeof magic) != 0) throw ParseError("not a .gsx file: " + path.string());
  const std::uint32_t header_size = get_u32(in);
  if (!in || header_size > (1u << 20)) throw ParseError("bad .gsx header length");
  std::string text(header_size, '\0');
  in.read(text.data(), header_size);
  if (!in) throw ParseError("truncated .gsx header");

  json header;
  std::uint64_t count = 0;
  double sigma_eps = 0.0;
  try {
    header = json::parse(text);
    if (header.at("version").get<std::uint32_t>() != kGsxVersion) throw ParseError("unsupported .gsx version");
    if (header.at("record_floats").get<int>() != kGsxRecordFloats) throw ParseError("unexpected .gsx record size");
    count = header.at("count").get<std::uint64_t>();
    sigma_eps = header.at("sigma_eps").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed .gsx header: ") + e.what());
  }

  std::vector<GaussianPrimitive> prims;
  prims.reserve(count);
  std::vector<std::uint32_t> words(kGsxRecordFloats);
  std::array<float, kGsxRecordFloats> values{};
  for (std::uint64_t r = 0; r < count; ++r) {
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!in) throw ParseError("record count does not match header (" + std::to_string(r) + " of " +
                              std::to_string(count) + " present)");
    for (int i = 0; i < kGsxRecordFloats; ++i) values[i] = std::bit_cast<float>(to_little(words[i]));
    prims.push_back(unpack_record(values.data()));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing data after the last record");
  return finish(std::move(prims), sigma_eps, opts);
}

Scene load_scene(const std::filesystem::path& path, const LoadOptions& opts) {
  const std::string ext = extension_of(path);
  if (ext == ".ply") return load_ply(path, opts);
  return load_gsx(path, opts);
}

// ---------------------------------------------------------------------------
// PLY

double opacity_to_density(double logit) {
  // alpha = sigmoid(x), so -ln(1 - alpha) = ln(1 + e^x); this form stays finite for large x.
  const double neg_log_transmit = logit > 30.0 ? logit + std::log1p(std::exp(-logit)) : std::log1p(std::exp(logit));
  return neg_log_transmit / kPlyReferenceStep;
}

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  std::size_t offset = 0;
};

std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw ParseError("unsupported PLY property type: " + t);
}

double read_binary_le(const unsigned char* p, const std::string& t) {
  const auto load = [p]<typename T>(T) {
    T v;
    std::memcpy(&v, p, sizeof v);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      unsigned char b[sizeof(T)];
      std::memcpy(b, &v, sizeof v);
      std::reverse(b, b + sizeof(T));
      std::memcpy(&v, b, sizeof v);
    }
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return load(std::int8_t{});
  if (t == "uchar" || t == "uint8") return load(std::uint8_t{});
  if (t == "short" || t == "int16") return load(std::int16_t{});
  if (t == "ushort" || t == "uint16") return load(std::uint16_t{});
  if (t == "int" || t == "int32") return load(std::int32_t{});
  if (t == "uint" || t == "uint32") return load(std::uint32_t{});
  if (t == "float" || t == "float32") return load(float{});
  return load(double{});
}

}  // namespace

Scene load_ply(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw ParseError("not a PLY file: " + path.string());

  std::string format;
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<PlyProperty> props;
  std::size_t stride = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "end_header") break;
    if (word == "format") {
      ls >> format;
    } else if (word == "element") {
      std::string name;
      std::size_t n = 0;
      ls >> name >> n;
      if (name == "vertex") {
        if (seen_vertex) throw ParseError("duplicate vertex element");
        vertex_count = n;
        in_vertex = seen_vertex = true;
      } else {
        if (!seen_vertex) throw ParseError("PLY elements before 'vertex' are not supported");
        in_vertex = false;
      }
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type;
      if (type == "list") throw ParseError("list properties on vertices are not supported");
      ls >> name;
      props.push_back({name, type, stride});
      stride += ply_type_size(type);
    }
  }
  if (!in) throw ParseError("PLY header is not terminated");
  if (format != "ascii" && format != "binary_little_endian") throw ParseError("unsupported PLY format: " + format);

  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < props.size(); ++i) slot[props[i].name] = i;
  const auto require = [&](const std::string& name) {
    const auto it = slot.find(name);
    if (it == slot.end()) throw ParseError("PLY is missing property '" + name + "'");
    return it->second;
  };
  const std::array<std::size_t, 3> pos = {require("x"), require("y"), require("z")};
  const std::array<std::size_t, 3> scl = {require("scale_0"), require("scale_1"), require("scale_2")};
  const std::array<std::size_t, 4> rot = {require("rot_0"), require("rot_1"), require("rot_2"), require("rot_3")};
  const std::size_t opacity = require("opacity");
  std::vector<std::size_t> dc;
  for (int c = 0; c < 3; ++c) {
    const auto it = slot.find("f_dc_" + std::to_string(c));
    if (it != slot.end()) dc.push_back(it->second);
  }
  std::vector<std::size_t> rest;
  for (int k = 0;; ++k) {
    const auto it = slot.find("f_rest_" + std::to_string(k));
    if (it == slot.end()) break;
    rest.push_back(it->second);
  }
  if (rest.size() % 3 != 0) throw ParseError("f_rest count is not a multiple of 3");
  const std::size_t rest_per_channel = rest.size() / 3;

  std::vector<double> row(props.size());
  std::vector<unsigned char> raw(stride);
  std::vector<GaussianPrimitive> prims;
  prims.reserve(vertex_count);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (format == "ascii") {
      for (auto& value : row) {
        if (!(in >> value)) throw ParseError("truncated PLY vertex data at vertex " + std::to_string(v));
      }
    } else {
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(stride));
      if (!in) throw ParseError("truncated PLY vertex data at vertex " + std::to_string(v));
      for (std::size_t i = 0; i < props.size(); ++i) row[i] = read_binary_le(raw.data() + props[i].offset, props[i].type);
    }
    GaussianPrimitive p;
    for (int i = 0; i < 3; ++i) p.mean[i] = row[pos[i]];
    for (int i = 0; i < 3; ++i) p.scale[i] = std::exp(row[scl[i]]);
    for (int i = 0; i < 4; ++i) p.rotation[i] = row[rot[i]];
    p.density = opacity_to_density(row[opacity]);
    if (dc.size() == 3) {
      // Splatting assets store colors offset by 0.5 after the SH sum.
      for (int c = 0; c < 3; ++c) p.appearance.sh[0][c] = row[dc[c]] + 0.5 / kShC0;
    }
    for (std::size_t k = 0; k < std::min<std::size_t>(rest_per_channel, kShCoeffs - 1); ++k) {
      for (int c = 0; c < 3; ++c) p.appearance.sh[k + 1][c] = row[rest[c * rest_per_channel + k]];
    }
    prims.push_back(p);
  }
  return finish(std::move(prims), kDefaultSigmaEps, opts);
}

// ---------------------------------------------------------------------------
// Cameras

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Camera> cams;
  try {
    const json doc = json::parse(in);
    const json& list = doc.is_array() ? doc : doc.at("cameras");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const json& j = list[i];
      Camera c;
      const auto center = j.at("center").get<std::vector<double>>();
      const auto rotation = j.at("rotation").get<std::vector<double>>();
      if (center.size() != 3 || rotation.size() != 4) throw ValidationError("center needs 3 and rotation 4 values", i);
      c.center = Eigen::Vector3d(center[0], center[1], center[2]);
      c.rotation = Eigen::Vector4d(rotation[0], rotation[1], rotation[2], rotation[3]);
      c.focal = j.at("focal").get<double>();
      c.width = j.at("width").get<int>();
      c.height = j.at("height").get<int>();
      c.near = j.value("near", 0.0);
      c.far = j.value("far", 100.0);
      if (!(c.focal > 0.0)) throw ValidationError("focal must be positive", i);
      if (c.width < 1 || c.height < 1) throw ValidationError("image size must be at least 1x1", i);
      if (c.rotation.norm() == 0.0) throw ValidationError("zero camera quaternion", i);
      if (!(c.near >= 0.0 && c.far > c.near)) throw ValidationError("need 0 <= near < far", i);
      cams.push_back(c);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed camera file: ") + e.what());
  }
  if (cams.empty()) throw ValidationError("camera file lists no cameras");
  return cams;
}

void save_cameras(std::span<const Camera> cameras, const std::filesystem::path& path) {
  json list = json::array();
  for (const auto& c : cameras) {
    list.push_back({{"center", {c.center.x(), c.center.y(), c.center.z()}},
                    {"rotation", {c.rotation[0], c.rotation[1], c.rotation[2], c.rotation[3]}},
                    {"focal", c.focal},
                    {"width", c.width},
                    {"height", c.height},
                    {"near", c.near},
                    {"far", c.far}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << json{{"cameras", list}}.dump(2) << '\n';
}

std::vector<Camera> orbit_cameras(const Eigen::Vector3d& target, double radius, int count, double focal, int width,
                                  int height) {
  std::vector<Camera> cams;
  for (int i = 0; i < count; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / count;
    const Eigen::Vector3d eye = target + radius * Eigen::Vector3d(std::cos(phi), 0.3, std::sin(phi)).normalized();
    cams.push_back(Camera::look_at(eye, target, Eigen::Vector3d(0.0, 1.0, 0.0), focal, width, height));
  }
  return cams;
}

// ---------------------------------------------------------------------------
// Procedural scenes

SceneKind parse_scene_kind(const std::string& name) {
  if (name == "single" || name == "single-gaussian") return SceneKind::single;
  if (name == "grid") return SceneKind::grid;
  if (name == "random-cloud" || name == "random") return SceneKind::random_cloud;
  if (name == "shell") return SceneKind::shell;
  throw std::invalid_argument("unknown scene kind: " + name);
}

std::string to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::single: return "single";
    case SceneKind::grid: return "grid";
    case SceneKind::random_cloud: return "random-cloud";
    case SceneKind::shell: return "shell";
  }
  return "unknown";
}

Scene gen_test_scene(const SceneGenSpec& spec) {
  if (spec.count < 1) throw std::invalid_argument("count must be >= 1");
  if (!(spec.anisotropy >= 1.0)) throw std::invalid_argument("anisotropy must be >= 1");
  if (!(spec.extent > 0.0) || !(spec.density > 0.0)) throw std::invalid_argument("extent and density must be positive");
  Rng rng(spec.seed);
  const int n = spec.kind == SceneKind::single ? 1 : spec.count;
  const int side = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(n)) - 1e-9));
  const double base = spec.scale > 0.0 ? spec.scale
                      : spec.kind == SceneKind::single
                          ? 0.25 * spec.extent
                          : 0.35 * spec.extent / std::max(1.0, std::cbrt(static_cast<double>(n)));
  const double a = spec.anisotropy;
  const Eigen::Vector3d axes = base * Eigen::Vector3d(1.0, 1.0, a) / std::cbrt(a);

  std::vector<GaussianPrimitive> prims;
  prims.reserve(n);
  for (int i = 0; i < n; ++i) {
    GaussianPrimitive p;
    switch (spec.kind) {
      case SceneKind::single:
        p.mean.setZero();
        break;
      case SceneKind::grid: {
        const int ix = i % side;
        const int iy = (i / side) % side;
        const int iz = i / (side * side);
        const auto coord = [&](int k) { return side == 1 ? 0.0 : spec.extent * (-1.0 + 2.0 * k / (side - 1)); };
        p.mean = Eigen::Vector3d(coord(ix), coord(iy), coord(iz));
        break;
      }
      case SceneKind::random_cloud:
        for (int k = 0; k < 3; ++k) p.mean[k] = rng.uniform(-spec.extent, spec.extent);
        break;
      case SceneKind::shell:
        p.mean = spec.extent * rng.unit_vector();
        break;
    }
    p.rotation = (spec.kind == SceneKind::single && a == 1.0) ? Eigen::Vector4d(1.0, 0.0, 0.0, 0.0) : rng.rotation();
    p.scale = axes;
    p.density = spec.density;
    const Eigen::Vector3d rgb(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9));
    p.appearance = AppearanceCoeffs::constant(rgb);
    // Keep every stored value exactly representable as float32.
    std::vector<float> packed;
    pack_record(p, packed);
    p = unpack_record(packed.data());
    prims.push_back(p);
  }
  return Scene(std::move(prims), kDefaultSigmaEps);
}

void write_point_scalars_ply(std::span<const Eigen::Vector3d> points, std::span<const double> values,
                             const std::filesystem::path& path) {
  if (points.size() != values.size()) throw std::invalid_argument("one value per point required");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nproperty float value\nend_header\n";
  out.precision(9);
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << points[i].x() << ' ' << points[i].y() << ' ' << points[i].z() << ' ' << values[i] << '\n';
  }
}

}  // namespace gsray
