#include "das/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "das/imageproc.hpp"
#include "das/serialize.hpp"

namespace das {
namespace {

Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(Vec3 a) { return (1.0 / norm(a)) * a; }

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

constexpr int kCacheColumns = 10;

// Rounding can push a row's float coefficients a hair above 1; nudge the
// largest down so rendered values provably stay within [0,1].
void cap_row_sum(std::vector<float>& values, std::size_t begin) {
  if (begin == values.size()) return;
  for (;;) {
    double total = 0.0;
    for (std::size_t i = begin; i < values.size(); ++i) total += values[i];
    if (total <= 1.0) return;
    auto largest = std::max_element(values.begin() + static_cast<std::ptrdiff_t>(begin), values.end());
    *largest = std::nextafter(*largest, 0.0f);
  }
}

}  // namespace

void Mesh::validate() const {
  if (vertices.empty() || faces.empty()) throw std::invalid_argument("mesh: empty mesh");
  if (uvs.size() != faces.size()) throw std::invalid_argument("mesh: uv count != face count");
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int i = faces[f][k];
      if (i < 0 || static_cast<std::size_t>(i) >= vertices.size())
        throw std::invalid_argument("mesh: face " + std::to_string(f) + " index out of range");
      const Vec2 t = uvs[f][k];
      if (!(t.u >= 0.0 && t.u <= 1.0 && t.v >= 0.0 && t.v <= 1.0))
        throw std::invalid_argument("mesh: face " + std::to_string(f) + " uv outside [0,1]");
    }
    const Vec3 n = cross(vertices[faces[f][1]] - vertices[faces[f][0]],
                         vertices[faces[f][2]] - vertices[faces[f][0]]);
    if (!(norm(n) > 1e-12)) throw std::invalid_argument("mesh: face " + std::to_string(f) + " is degenerate");
  }
}

Vec3 Mesh::centroid() const {
  Vec3 c;
  for (const auto& v : vertices) c = c + v;
  return (1.0 / static_cast<double>(vertices.size())) * c;
}

Mesh parse_obj(std::istream& is, const std::string& source) {
  Mesh mesh;
  std::vector<Vec2> texcoords;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x >> v.y >> v.z)) fail("malformed vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "vt") {
      Vec2 t;
      if (!(ls >> t.u >> t.v)) fail("malformed texture coordinate");
      if (t.u < 0.0 || t.u > 1.0 || t.v < 0.0 || t.v > 1.0) fail("texture coordinate outside [0,1]");
      texcoords.push_back(t);
    } else if (tag == "f") {
      std::vector<std::pair<int, int>> corners;
      std::string tok;
      while (ls >> tok) {
        const auto slash = tok.find('/');
        if (slash == std::string::npos || slash + 1 >= tok.size() || tok[slash + 1] == '/')
          fail("face corner '" + tok + "' has no texture coordinate");
        int vi = 0, ti = 0;
        try {
          std::size_t used = 0;
          vi = std::stoi(tok.substr(0, slash), &used);
          if (used != slash) fail("bad vertex index '" + tok + "'");
          const auto rest = tok.substr(slash + 1);
          ti = std::stoi(rest.substr(0, rest.find('/')), &used);
        } catch (const std::logic_error&) {
          fail("bad face corner '" + tok + "'");
        }
        if (vi <= 0 || ti <= 0) fail("face index must be >= 1 (OBJ is 1-based)");
        if (static_cast<std::size_t>(vi) > mesh.vertices.size()) fail("vertex index out of range");
        if (static_cast<std::size_t>(ti) > texcoords.size()) fail("texture index out of range");
        corners.emplace_back(vi - 1, ti - 1);
      }
      if (corners.size() < 3) fail("face needs at least 3 corners");
      for (std::size_t k = 1; k + 1 < corners.size(); ++k) {
        const std::array<int, 3> f{corners[0].first, corners[k].first, corners[k + 1].first};
        const Vec3 n = cross(mesh.vertices[f[1]] - mesh.vertices[f[0]],
                             mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        if (!(norm(n) > 1e-12)) fail("degenerate face");
        mesh.faces.push_back(f);
        mesh.uvs.push_back({texcoords[corners[0].second], texcoords[corners[k].second],
                            texcoords[corners[k + 1].second]});
      }
    }
    // Other tags (vn, o, g, s, usemtl, mtllib) are ignored.
  }
  if (mesh.faces.empty()) throw std::runtime_error(source + ": mesh has no faces");
  mesh.validate();
  return mesh;
}

Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open mesh: " + path.string());
  return parse_obj(is, path.string());
}

void save_obj(const std::filesystem::path& path, const Mesh& mesh) {
  mesh.validate();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write mesh: " + path.string());
  os.precision(9);
  for (const auto& v : mesh.vertices) os << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : mesh.uvs)
    for (const auto& t : f) os << "vt " << t.u << ' ' << t.v << '\n';
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    os << 'f';
    for (int k = 0; k < 3; ++k) os << ' ' << mesh.faces[i][k] + 1 << '/' << 3 * i + k + 1;
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

TextureAtlas::TextureAtlas(Image rgb) : image(std::move(rgb)) {
  if (image.channels != 3) throw std::invalid_argument("texture atlas must be RGB");
  if (image.width <= 0 || image.height <= 0) throw std::invalid_argument("texture atlas is empty");
  for (float v : image.pixels)
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("texture values must lie in [0,1]");
}

TextureAtlas TextureAtlas::from_tensor(const Tensor& t) { return TextureAtlas(Image::from_tensor(t)); }

void RenderCondition::validate() const {
  if (!(distance > 0.0)) throw std::invalid_argument("condition: distance must be > 0");
  if (!(yaw >= 0.0 && yaw < 360.0)) throw std::invalid_argument("condition: yaw must be in [0,360)");
  if (!(pitch >= 0.0 && pitch <= 90.0)) throw std::invalid_argument("condition: pitch must be in [0,90]");
  if (!(light >= 0.0)) throw std::invalid_argument("condition: light must be >= 0");
  if (background_id < 0) throw std::invalid_argument("condition: background_id must be >= 0");
}

std::size_t RenderMap::foreground_count() const {
  return static_cast<std::size_t>(std::count(foreground.begin(), foreground.end(), 1));
}

BinaryMap RenderMap::foreground_mask() const {
  BinaryMap m(width, height);
  m.bits = foreground;
  return m;
}

RenderMap bake_condition(const Mesh& mesh, const RenderCondition& cond, int width, int height,
                         int atlas_width, int atlas_height, const CameraParams& camera) {
  mesh.validate();
  cond.validate();
  if (width <= 0 || height <= 0 || atlas_width <= 0 || atlas_height <= 0)
    throw std::invalid_argument("bake_condition: sizes must be positive");

  const Vec3 target = mesh.centroid();
  const double yaw = radians(cond.yaw), pitch = radians(cond.pitch);
  const Vec3 eye = target + cond.distance * Vec3{std::cos(pitch) * std::sin(yaw), std::sin(pitch),
                                                 std::cos(pitch) * std::cos(yaw)};
  const Vec3 fwd = normalized(target - eye);
  const Vec3 right{std::cos(yaw), 0.0, -std::sin(yaw)};
  const Vec3 up = cross(right, fwd);
  const double focal = (height / 2.0) / std::tan(radians(camera.fov_deg) / 2.0);
  const Vec3 light_dir = normalized(kLightDirection);

  struct Projected {
    double sx, sy, z;
  };
  std::vector<Projected> proj(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3 d = mesh.vertices[i] - eye;
    const double z = dot(d, fwd);
    proj[i] = {width / 2.0 + focal * dot(d, right) / z, height / 2.0 - focal * dot(d, up) / z, z};
  }

  const std::size_t npix = static_cast<std::size_t>(width) * height;
  std::vector<double> zbuf(npix, std::numeric_limits<double>::infinity());
  std::vector<int> face_of(npix, -1);
  std::vector<Vec2> uv_of(npix);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& idx = mesh.faces[f];
    const Projected p0 = proj[idx[0]], p1 = proj[idx[1]], p2 = proj[idx[2]];
    if (p0.z <= camera.near || p1.z <= camera.near || p2.z <= camera.near) continue;
    const double area = (p1.sx - p0.sx) * (p2.sy - p0.sy) - (p2.sx - p0.sx) * (p1.sy - p0.sy);
    if (std::abs(area) < 1e-12) continue;
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min({p0.sx, p1.sx, p2.sx}))));
    const int x_hi = std::min(width - 1, static_cast<int>(std::ceil(std::max({p0.sx, p1.sx, p2.sx}))));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min({p0.sy, p1.sy, p2.sy}))));
    const int y_hi = std::min(height - 1, static_cast<int>(std::ceil(std::max({p0.sy, p1.sy, p2.sy}))));
    const auto& uv = mesh.uvs[f];
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        // Barycentric weights from signed edge functions.
        double b0 = ((p1.sx - px) * (p2.sy - py) - (p2.sx - px) * (p1.sy - py)) / area;
        double b1 = ((p2.sx - px) * (p0.sy - py) - (p0.sx - px) * (p2.sy - py)) / area;
        double b2 = 1.0 - b0 - b1;
        if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
        // Perspective-correct interpolation.
        const double w0 = b0 / p0.z, w1 = b1 / p1.z, w2 = b2 / p2.z;
        const double inv_z = w0 + w1 + w2;
        const double z = 1.0 / inv_z;
        const std::size_t pix = static_cast<std::size_t>(y) * width + x;
        if (!(z < zbuf[pix])) continue;
        zbuf[pix] = z;
        face_of[pix] = static_cast<int>(f);
        uv_of[pix] = {(w0 * uv[0].u + w1 * uv[1].u + w2 * uv[2].u) * z,
                      (w0 * uv[0].v + w1 * uv[1].v + w2 * uv[2].v) * z};
      }
    }
  }

  // Per-face Lambertian shading, normals oriented towards the camera.
  std::vector<float> face_shading(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& idx = mesh.faces[f];
    const Vec3 a = mesh.vertices[idx[0]];
    Vec3 n = normalized(cross(mesh.vertices[idx[1]] - a, mesh.vertices[idx[2]] - a));
    if (dot(n, eye - a) < 0.0) n = -1.0 * n;
    const double s = cond.light * std::max(0.0, dot(n, light_dir));
    face_shading[f] = static_cast<float>(std::clamp(s, static_cast<double>(kMinShading), 1.0));
  }

  RenderMap map;
  map.width = width;
  map.height = height;
  map.atlas_width = atlas_width;
  map.atlas_height = atlas_height;
  map.foreground.assign(npix, 0);
  map.samples.assign(npix, PixelSample{});
  for (std::size_t pix = 0; pix < npix; ++pix) {
    if (face_of[pix] < 0) continue;
    const double tx = std::clamp(uv_of[pix].u, 0.0, 1.0) * atlas_width - 0.5;
    const double ty = (1.0 - std::clamp(uv_of[pix].v, 0.0, 1.0)) * atlas_height - 0.5;
    const double fx0 = std::floor(tx), fy0 = std::floor(ty);
    const double fx = tx - fx0, fy = ty - fy0;
    const int x0 = std::clamp(static_cast<int>(fx0), 0, atlas_width - 1);
    const int x1 = std::clamp(static_cast<int>(fx0) + 1, 0, atlas_width - 1);
    const int y0 = std::clamp(static_cast<int>(fy0), 0, atlas_height - 1);
    const int y1 = std::clamp(static_cast<int>(fy0) + 1, 0, atlas_height - 1);
    PixelSample s;
    s.texel = {static_cast<std::uint32_t>(y0 * atlas_width + x0), static_cast<std::uint32_t>(y0 * atlas_width + x1),
               static_cast<std::uint32_t>(y1 * atlas_width + x0), static_cast<std::uint32_t>(y1 * atlas_width + x1)};
    s.weight = {static_cast<float>((1 - fx) * (1 - fy)), static_cast<float>(fx * (1 - fy)),
                static_cast<float>((1 - fx) * fy), static_cast<float>(fx * fy)};
    s.shading = face_shading[face_of[pix]];
    map.foreground[pix] = 1;
    map.samples[pix] = s;
  }
  return map;
}

RenderOperator::RenderOperator(const RenderMap& map, const Image& background) {
  if (background.width != map.width || background.height != map.height || background.channels != 3)
    throw std::invalid_argument("render: background must be RGB " + std::to_string(map.width) + "x" +
                                std::to_string(map.height));
  const std::size_t plane = static_cast<std::size_t>(map.atlas_width) * map.atlas_height;
  const std::size_t npix = static_cast<std::size_t>(map.width) * map.height;
  auto m = std::make_shared<SparseMatrix>();
  m->in_shape = {3, static_cast<std::size_t>(map.atlas_height), static_cast<std::size_t>(map.atlas_width)};
  m->out_shape = {3, static_cast<std::size_t>(map.height), static_cast<std::size_t>(map.width)};
  m->row_ptr.reserve(3 * npix + 1);
  m->row_ptr.push_back(0);
  std::vector<float> offset(3 * npix, 0.0f);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t pix = 0; pix < npix; ++pix) {
      if (map.foreground[pix]) {
        const PixelSample& s = map.samples[pix];
        for (int k = 0; k < 4; ++k) {
          if (s.texel[k] >= plane) throw std::out_of_range("render: texel index outside atlas");
          if (s.weight[k] == 0.0f) continue;
          m->cols.push_back(static_cast<std::uint32_t>(c * plane + s.texel[k]));
          m->values.push_back(s.shading * s.weight[k]);
        }
        cap_row_sum(m->values, m->row_ptr.back());
      } else {
        offset[c * npix + pix] = background.pixels[c * npix + pix];
      }
      m->row_ptr.push_back(m->cols.size());
    }
  }
  matrix_ = std::move(m);
  offset_ = Tensor({3, static_cast<std::size_t>(map.height), static_cast<std::size_t>(map.width)},
                   std::move(offset));
}

Var RenderOperator::apply(Var texture) const { return ag::sparse_linear(texture, matrix_, offset_); }

Tensor RenderOperator::apply(const Tensor& texture) const {
  return ops::sparse_linear(texture, *matrix_, offset_);
}

Image render(const RenderMap& map, const TextureAtlas& texture, const Image& background) {
  if (texture.width() != map.atlas_width || texture.height() != map.atlas_height)
    throw std::invalid_argument("render: texture size does not match the baked atlas size");
  return Image::from_tensor(RenderOperator(map, background).apply(texture.tensor()));
}

TexelRect texel_footprint(const UvRect& r, int atlas_width, int atlas_height) {
  if (!(r.u0 >= 0.0 && r.v0 >= 0.0 && r.u1 <= 1.0 && r.v1 <= 1.0))
    throw std::invalid_argument("uv region must lie within [0,1]^2");
  if (!(r.u1 > r.u0 && r.v1 > r.v0)) throw std::invalid_argument("uv region is empty");
  // v grows upwards, texel rows grow downwards.
  TexelRect t{static_cast<int>(std::lround(r.u0 * atlas_width)),
              static_cast<int>(std::lround((1.0 - r.v1) * atlas_height)),
              static_cast<int>(std::lround(r.u1 * atlas_width)),
              static_cast<int>(std::lround((1.0 - r.v0) * atlas_height))};
  if (t.width() <= 0 || t.height() <= 0) throw std::invalid_argument("uv region covers no texels");
  return t;
}

TextureAtlas paste_patch(const Image& patch, const TextureAtlas& texture, const UvRect& region) {
  const TexelRect t = texel_footprint(region, texture.width(), texture.height());
  Image src = patch;
  if (src.channels == 1) {
    Image rgb(src.width, src.height, 3);
    for (int c = 0; c < 3; ++c)
      std::copy(src.pixels.begin(), src.pixels.end(), rgb.pixels.begin() + c * src.plane_size());
    src = std::move(rgb);
  }
  if (src.channels != 3) throw std::invalid_argument("paste_patch: patch must be gray or RGB");
  const Image resized = bilinear_resize(src, t.width(), t.height());
  Image out = texture.image;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < t.width(); ++x)
        out.at(c, t.y0 + y, t.x0 + x) = std::clamp(resized.at(c, y, x), 0.0f, 1.0f);
  return TextureAtlas(std::move(out));
}

Image read_region(const TextureAtlas& texture, const UvRect& region, int width, int height) {
  const TexelRect t = texel_footprint(region, texture.width(), texture.height());
  Image crop(t.width(), t.height(), 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < t.height(); ++y)
      for (int x = 0; x < t.width(); ++x) crop.at(c, y, x) = texture.image.at(c, t.y0 + y, t.x0 + x);
  return bilinear_resize(crop, width, height);
}

BinaryMap mask_to_texture_space(const BinaryMap& edge, int atlas_width, int atlas_height,
                                const UvRect& region, int dilate) {
  if (dilate != 0 && dilate != 1) throw std::invalid_argument("mask_to_texture_space: dilate must be 0 or 1");
  if (edge.width <= 0 || edge.height <= 0) throw std::invalid_argument("mask_to_texture_space: empty edge map");
  const TexelRect t = texel_footprint(region, atlas_width, atlas_height);
  BinaryMap mask(atlas_width, atlas_height);
  // Corner-aligned nearest neighbour, matching paste_patch's resampling grid.
  auto src_index = [](int i, int out, int in) {
    if (out == 1) return 0;
    return static_cast<int>(std::lround(static_cast<double>(i) * (in - 1) / (out - 1)));
  };
  for (int y = 0; y < t.height(); ++y) {
    const int sy = src_index(y, t.height(), edge.height);
    for (int x = 0; x < t.width(); ++x) {
      if (!edge.at(sy, src_index(x, t.width(), edge.width))) continue;
      for (int dy = -dilate; dy <= dilate; ++dy) {
        for (int dx = -dilate; dx <= dilate; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= t.height() || xx >= t.width()) continue;
          mask.at(t.y0 + yy, t.x0 + xx) = 1;
        }
      }
    }
  }
  return mask;
}

void save_render_map(const std::filesystem::path& dast_path, const RenderMap& map,
                     const RenderCondition& cond) {
  const std::size_t npix = static_cast<std::size_t>(map.width) * map.height;
  std::vector<float> rows(npix * kCacheColumns, 0.0f);
  for (std::size_t p = 0; p < npix; ++p) {
    float* r = &rows[p * kCacheColumns];
    r[0] = map.foreground[p];
    const PixelSample& s = map.samples[p];
    for (int k = 0; k < 4; ++k) {
      r[1 + k] = static_cast<float>(s.texel[k]);  // exact below 2^24
      r[5 + k] = s.weight[k];
    }
    r[9] = s.shading;
  }
  if (static_cast<std::size_t>(map.atlas_width) * map.atlas_height >= (1u << 24))
    throw std::invalid_argument("save_render_map: atlas too large for the cache format");
  save_dast(dast_path, Tensor({npix, static_cast<std::size_t>(kCacheColumns)}, std::move(rows)));
  nlohmann::json side = {{"width", map.width},
                         {"height", map.height},
                         {"atlas_width", map.atlas_width},
                         {"atlas_height", map.atlas_height},
                         {"condition",
                          {{"distance", cond.distance},
                           {"yaw", cond.yaw},
                           {"pitch", cond.pitch},
                           {"light", cond.light},
                           {"background_id", cond.background_id}}}};
  auto json_path = dast_path;
  json_path.replace_extension(".json");
  std::ofstream os(json_path);
  os << side.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed: " + json_path.string());
}

RenderMap load_render_map(const std::filesystem::path& dast_path) {
  auto json_path = dast_path;
  json_path.replace_extension(".json");
  std::ifstream is(json_path);
  if (!is) throw std::runtime_error("cannot open render map sidecar: " + json_path.string());
  const auto side = nlohmann::json::parse(is);
  RenderMap map;
  map.width = side.at("width").get<int>();
  map.height = side.at("height").get<int>();
  map.atlas_width = side.at("atlas_width").get<int>();
  map.atlas_height = side.at("atlas_height").get<int>();
  const Tensor t = load_dast(dast_path);
  const std::size_t npix = static_cast<std::size_t>(map.width) * map.height;
  if (t.shape() != Shape{npix, static_cast<std::size_t>(kCacheColumns)})
    throw std::runtime_error("render map blob shape " + shape_str(t.shape()) + " does not match sidecar");
  map.foreground.assign(npix, 0);
  map.samples.assign(npix, PixelSample{});
  const auto d = t.data();
  for (std::size_t p = 0; p < npix; ++p) {
    const float* r = &d[p * kCacheColumns];
    map.foreground[p] = r[0] != 0.0f;
    for (int k = 0; k < 4; ++k) {
      map.samples[p].texel[k] = static_cast<std::uint32_t>(r[1 + k]);
      map.samples[p].weight[k] = r[5 + k];
    }
    map.samples[p].shading = r[9];
  }
  return map;
}

}  // namespace das
