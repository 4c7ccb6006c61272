#include "das/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace das {
namespace {

struct Rgb {
  float r, g, b;
};

// Deterministic lattice hash in [0,1).
double hash01(int x, int y, int salt) {
  std::uint32_t h = static_cast<std::uint32_t>(x) * 374761393u + static_cast<std::uint32_t>(y) * 668265263u +
                    static_cast<std::uint32_t>(salt) * 2246822519u;
  h = (h ^ (h >> 13)) * 1274126177u;
  h ^= h >> 16;
  return (h & 0xffffffu) / static_cast<double>(0x1000000);
}

// Smooth value noise with the given cell size, in [0,1).
double value_noise(double x, double y, double cell, int salt) {
  const double gx = x / cell, gy = y / cell;
  const int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
  double fx = gx - x0, fy = gy - y0;
  fx = fx * fx * (3 - 2 * fx);
  fy = fy * fy * (3 - 2 * fy);
  const double a = hash01(x0, y0, salt), b = hash01(x0 + 1, y0, salt);
  const double c = hash01(x0, y0 + 1, salt), d = hash01(x0 + 1, y0 + 1, salt);
  return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy;
}

void put(Image& img, int x, int y, Rgb c) {
  img.at(0, y, x) = std::clamp(c.r, 0.0f, 1.0f);
  img.at(1, y, x) = std::clamp(c.g, 0.0f, 1.0f);
  img.at(2, y, x) = std::clamp(c.b, 0.0f, 1.0f);
}

Rgb shade(Rgb c, double k) {
  return {static_cast<float>(c.r * k), static_cast<float>(c.g * k), static_cast<float>(c.b * k)};
}

// Paints a chart with `paint(u, v)` where (u,v) in [0,1]^2 are chart-local, v up.
template <class F>
void paint_chart(Image& img, const UvRect& chart, int salt, F paint) {
  const int x0 = static_cast<int>(std::lround(chart.u0 * img.width));
  const int x1 = static_cast<int>(std::lround(chart.u1 * img.width));
  const int y0 = static_cast<int>(std::lround((1.0 - chart.v1) * img.height));
  const int y1 = static_cast<int>(std::lround((1.0 - chart.v0) * img.height));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double u = (x + 0.5 - x0) / (x1 - x0);
      const double v = 1.0 - (y + 0.5 - y0) / (y1 - y0);
      const double grain = 0.94 + 0.12 * value_noise(x, y, 6.0, salt);
      put(img, x, y, shade(paint(u, v), grain));
    }
  }
}

Rgb wheel_paint(double u, double v) {
  const double r = std::hypot(u - 0.5, v - 0.5);
  if (r < 0.18) return {0.55f, 0.55f, 0.58f};
  if (r < 0.22) return {0.3f, 0.3f, 0.32f};
  return {0.07f, 0.07f, 0.08f};
}

}  // namespace

void append_quad(Mesh& mesh, Vec3 o, Vec3 eu, Vec3 ev, const UvRect& c) {
  const int base = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back(o);
  mesh.vertices.push_back({o.x + eu.x, o.y + eu.y, o.z + eu.z});
  mesh.vertices.push_back({o.x + eu.x + ev.x, o.y + eu.y + ev.y, o.z + eu.z + ev.z});
  mesh.vertices.push_back({o.x + ev.x, o.y + ev.y, o.z + ev.z});
  const Vec2 t0{c.u0, c.v0}, t1{c.u1, c.v0}, t2{c.u1, c.v1}, t3{c.u0, c.v1};
  mesh.faces.push_back({base, base + 1, base + 2});
  mesh.uvs.push_back({t0, t1, t2});
  mesh.faces.push_back({base, base + 2, base + 3});
  mesh.uvs.push_back({t0, t2, t3});
}

void append_box(Mesh& mesh, Vec3 lo, Vec3 hi, const BoxCharts& c) {
  const double dx = hi.x - lo.x, dy = hi.y - lo.y, dz = hi.z - lo.z;
  if (!(dx > 0 && dy > 0 && dz > 0)) throw std::invalid_argument("append_box: empty box");
  // Each face is parameterized as seen from outside: u to the right, v up.
  append_quad(mesh, {hi.x, lo.y, hi.z}, {0, 0, -dz}, {0, dy, 0}, c.px);
  append_quad(mesh, {lo.x, lo.y, lo.z}, {0, 0, dz}, {0, dy, 0}, c.nx);
  append_quad(mesh, {lo.x, hi.y, hi.z}, {dx, 0, 0}, {0, 0, -dz}, c.py);
  append_quad(mesh, {lo.x, lo.y, lo.z}, {dx, 0, 0}, {0, 0, dz}, c.ny);
  append_quad(mesh, {lo.x, lo.y, hi.z}, {dx, 0, 0}, {0, dy, 0}, c.pz);
  append_quad(mesh, {hi.x, lo.y, lo.z}, {-dx, 0, 0}, {0, dy, 0}, c.nz);
}

void append_uv_sphere(Mesh& mesh, Vec3 center, double radius, int segments, int rings, const UvRect& c) {
  if (segments < 3 || rings < 2) throw std::invalid_argument("append_uv_sphere: too coarse");
  const int base = static_cast<int>(mesh.vertices.size());
  const int cols = segments + 1;
  for (int r = 0; r <= rings; ++r) {
    const double theta = std::numbers::pi * r / rings;
    for (int s = 0; s <= segments; ++s) {
      const double phi = 2.0 * std::numbers::pi * s / segments;
      mesh.vertices.push_back({center.x + radius * std::sin(theta) * std::cos(phi),
                               center.y + radius * std::cos(theta),
                               center.z + radius * std::sin(theta) * std::sin(phi)});
    }
  }
  auto uv = [&](int r, int s) {
    return Vec2{c.u0 + (c.u1 - c.u0) * s / segments, c.v0 + (c.v1 - c.v0) * (1.0 - static_cast<double>(r) / rings)};
  };
  for (int r = 0; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      const int a = base + r * cols + s, b = a + 1, d = a + cols, e = d + 1;
      if (r != 0) {
        mesh.faces.push_back({a, d, b});
        mesh.uvs.push_back({uv(r, s), uv(r + 1, s), uv(r, s + 1)});
      }
      if (r != rings - 1) {
        mesh.faces.push_back({b, d, e});
        mesh.uvs.push_back({uv(r, s + 1), uv(r + 1, s), uv(r + 1, s + 1)});
      }
    }
  }
}

void append_pyramid(Mesh& mesh, Vec3 bc, double hw, double height, const UvRect& side, const UvRect& base_chart) {
  const Vec3 apex{bc.x, bc.y + height, bc.z};
  const Vec3 corners[4] = {{bc.x - hw, bc.y, bc.z + hw},
                           {bc.x + hw, bc.y, bc.z + hw},
                           {bc.x + hw, bc.y, bc.z - hw},
                           {bc.x - hw, bc.y, bc.z - hw}};
  for (int i = 0; i < 4; ++i) {
    const int base = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(corners[i]);
    mesh.vertices.push_back(corners[(i + 1) % 4]);
    mesh.vertices.push_back(apex);
    mesh.faces.push_back({base, base + 1, base + 2});
    mesh.uvs.push_back({Vec2{side.u0, side.v0}, Vec2{side.u1, side.v0}, Vec2{(side.u0 + side.u1) / 2, side.v1}});
  }
  append_quad(mesh, corners[3], {2 * hw, 0, 0}, {0, 0, 2 * hw}, base_chart);
}

std::vector<SceneObject> default_scene_objects(int atlas_size) {
  using namespace charts;
  std::vector<SceneObject> out;

  auto wheels = [](Mesh& m, std::initializer_list<double> xs, double half_track, double radius) {
    const BoxCharts wc{kWheel, kWheel, kWheel, kWheel, kWheel, kWheel};
    for (double x : xs) {
      for (double side : {-1.0, 1.0}) {
        const double z_in = side * (half_track - 0.25), z_out = side * (half_track + 0.12);
        append_box(m, {x - radius, 0.0, std::min(z_in, z_out)}, {x + radius, 2 * radius, std::max(z_in, z_out)}, wc);
      }
    }
  };

  {  // car: long low body with a cabin on top
    Mesh m;
    append_box(m, {-2.0, 0.35, -0.95}, {2.0, 1.2, 0.95}, {kTrim, kTrim, kSkin, kTrim, kSkin, kSkin});
    append_box(m, {-1.1, 1.2, -0.8}, {0.9, 1.95, 0.8}, {kCabin, kCabin, kCabin, kCabin, kCabin, kCabin});
    wheels(m, {-1.3, 1.3}, 0.95, 0.36);
    Image t(atlas_size, atlas_size, 3);
    paint_chart(t, kSkin, 11, [](double, double v) -> Rgb {
      if (std::abs(v - 0.5) < 0.03) return {0.95f, 0.95f, 0.95f};
      return {0.8f, 0.12f, 0.1f};
    });
    paint_chart(t, kTrim, 12, [](double u, double v) -> Rgb {
      if (v > 0.55 && v < 0.75 && (u < 0.25 || u > 0.75)) return {0.98f, 0.92f, 0.6f};
      return {0.45f, 0.07f, 0.06f};
    });
    paint_chart(t, kCabin, 13, [](double u, double v) -> Rgb {
      if (v > 0.3 && v < 0.85 && std::abs(u - 0.5) > 0.04 && u > 0.08 && u < 0.92) return {0.62f, 0.78f, 0.9f};
      return {0.75f, 0.12f, 0.1f};
    });
    paint_chart(t, kWheel, 14, wheel_paint);
    out.push_back({"car", std::move(m), std::move(t)});
  }
  {  // truck: cab in front of a tall cargo box
    Mesh m;
    append_box(m, {-2.5, 0.5, -1.05}, {1.0, 2.6, 1.05}, {kTrim, kTrim, kSkin, kTrim, kSkin, kSkin});
    append_box(m, {1.15, 0.4, -1.0}, {2.4, 2.1, 1.0}, {kCabin, kCabin, kCabin, kCabin, kCabin, kCabin});
    append_box(m, {-2.5, 0.3, -0.7}, {2.4, 0.5, 0.7}, {kTrim, kTrim, kTrim, kTrim, kTrim, kTrim});
    wheels(m, {-1.8, -0.9, 1.75}, 1.0, 0.38);
    Image t(atlas_size, atlas_size, 3);
    paint_chart(t, kSkin, 21, [](double, double v) -> Rgb {
      const double band = std::fmod(v * 4.0, 1.0);
      if (band < 0.18) return {0.15f, 0.3f, 0.75f};
      return {0.9f, 0.9f, 0.85f};
    });
    paint_chart(t, kTrim, 22, [](double, double) -> Rgb { return {0.25f, 0.27f, 0.3f}; });
    paint_chart(t, kCabin, 23, [](double u, double v) -> Rgb {
      if (v > 0.55 && v < 0.85 && u > 0.1 && u < 0.9) return {0.55f, 0.7f, 0.85f};
      return {0.15f, 0.3f, 0.75f};
    });
    paint_chart(t, kWheel, 24, wheel_paint);
    out.push_back({"truck", std::move(m), std::move(t)});
  }
  {  // pod: sphere on a pedestal
    Mesh m;
    append_uv_sphere(m, {0.0, 1.55, 0.0}, 1.25, 16, 10, kSkin);
    append_box(m, {-0.7, 0.0, -0.7}, {0.7, 0.45, 0.7}, {kTrim, kTrim, kTrim, kTrim, kTrim, kTrim});
    Image t(atlas_size, atlas_size, 3);
    paint_chart(t, kSkin, 31, [](double u, double v) -> Rgb {
      const double cu = std::fmod(u * 8.0, 1.0) - 0.5, cv = std::fmod(v * 5.0, 1.0) - 0.5;
      if (std::hypot(cu, cv) < 0.22) return {0.75f, 0.9f, 0.4f};
      return {0.15f, 0.55f, 0.3f};
    });
    paint_chart(t, kTrim, 32, [](double, double) -> Rgb { return {0.5f, 0.5f, 0.52f}; });
    paint_chart(t, kCabin, 33, [](double, double) -> Rgb { return {0.5f, 0.5f, 0.52f}; });
    paint_chart(t, kWheel, 34, [](double, double) -> Rgb { return {0.5f, 0.5f, 0.52f}; });
    out.push_back({"pod", std::move(m), std::move(t)});
  }
  {  // pyramid
    Mesh m;
    append_pyramid(m, {0.0, 0.0, 0.0}, 1.6, 2.6, kSkin, kTrim);
    Image t(atlas_size, atlas_size, 3);
    paint_chart(t, kSkin, 41, [](double u, double v) -> Rgb {
      const double row = v * 9.0;
      const double offset = (static_cast<int>(row) % 2) * 0.5;
      const bool mortar = std::fmod(row, 1.0) < 0.12 || std::fmod(u * 6.0 + offset, 1.0) < 0.06;
      if (mortar) return {0.55f, 0.45f, 0.3f};
      return {0.88f, 0.75f, 0.45f};
    });
    paint_chart(t, kTrim, 42, [](double, double) -> Rgb { return {0.45f, 0.32f, 0.2f}; });
    paint_chart(t, kCabin, 43, [](double, double) -> Rgb { return {0.45f, 0.32f, 0.2f}; });
    paint_chart(t, kWheel, 44, [](double, double) -> Rgb { return {0.45f, 0.32f, 0.2f}; });
    out.push_back({"pyramid", std::move(m), std::move(t)});
  }
  return out;
}

Image make_background(int width, int height, int variant) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("make_background: size must be positive");
  Image img(width, height, 3);
  const double horizon = 0.42 * height;
  const double hue = 0.06 * variant;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double n = value_noise(x, y, 5.0, 100 + variant);
      Rgb c;
      if (y < horizon) {
        const double t = y / horizon;
        c = {static_cast<float>(0.55 + 0.3 * t + hue), static_cast<float>(0.7 + 0.2 * t),
             static_cast<float>(0.92 + 0.05 * t - hue)};
      } else {
        const double k = 0.85 + 0.3 * n;
        c = shade({static_cast<float>(0.42 + hue), 0.47f, static_cast<float>(0.38 - hue)}, k);
      }
      put(img, x, y, c);
    }
  }
  return img;
}

Image make_seed_patch(int size) {
  if (size < 8) throw std::invalid_argument("make_seed_patch: size must be >= 8");
  Image img(size, size, 3);
  const double s = size;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / s, v = (y + 0.5) / s;  // v grows downwards here
      const double r = std::hypot(u - 0.5, v - 0.5);
      Rgb c{0.98f, 0.97f, 0.9f};
      if (r < 0.42) c = {0.98f, 0.82f, 0.15f};
      if (r >= 0.39 && r < 0.42) c = {0.15f, 0.1f, 0.05f};
      if (std::hypot(u - 0.35, v - 0.38) < 0.06 || std::hypot(u - 0.65, v - 0.38) < 0.06) c = {0.1f, 0.08f, 0.05f};
      const double mouth = std::hypot(u - 0.5, v - 0.5);
      if (v > 0.55 && mouth > 0.22 && mouth < 0.27) c = {0.1f, 0.08f, 0.05f};
      put(img, x, y, c);
    }
  }
  return img;
}

}  // namespace das
