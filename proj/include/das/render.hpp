#pragma once

// Texture-differentiable rasterizer. Geometry is fixed per condition, so a
// condition is "baked" once into a RenderMap: for every pixel, the four texels
// its UV lands between, their bilinear weights, and a shading factor. Rendering
// is then a sparse linear map of the texture.

#include <array>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "das/autodiff.hpp"
#include "das/image.hpp"

namespace das {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

struct Vec2 {
  double u = 0, v = 0;
};

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<Vec2, 3>> uvs;  // per face corner

  /// Throws on out-of-range indices, UVs outside [0,1], empty or degenerate faces.
  void validate() const;
  Vec3 centroid() const;
};

/// OBJ subset: `v x y z`, `vt u v`, `f v/vt v/vt v/vt` (quads are split).
Mesh parse_obj(std::istream& is, const std::string& source = "<obj>");
Mesh load_mesh(const std::filesystem::path& path);
void save_obj(const std::filesystem::path& path, const Mesh& mesh);

/// RGB atlas with every channel value in [0,1].
struct TextureAtlas {
  Image image;

  TextureAtlas() = default;
  explicit TextureAtlas(Image rgb);

  int width() const { return image.width; }
  int height() const { return image.height; }
  Tensor tensor() const { return image.to_tensor(); }
  static TextureAtlas from_tensor(const Tensor& t);
};

struct RenderCondition {
  double distance = 8.0;  // model units from the mesh centroid
  double yaw = 0.0;       // degrees, [0, 360)
  double pitch = 30.0;    // degrees, [0, 90]
  double light = 1.0;     // >= 0
  int background_id = 0;

  void validate() const;
  friend bool operator==(const RenderCondition&, const RenderCondition&) = default;
};

struct CameraParams {
  double fov_deg = 40.0;
  double near = 0.05;
};

/// Direction towards the light, world space (normalized on use).
inline constexpr Vec3 kLightDirection{0.35, 1.0, 0.55};
inline constexpr float kMinShading = 0.2f;

struct PixelSample {
  std::array<std::uint32_t, 4> texel{};  // row-major index within one atlas plane
  std::array<float, 4> weight{};
  float shading = 0.0f;
  friend bool operator==(const PixelSample&, const PixelSample&) = default;
};

struct RenderMap {
  int width = 0;
  int height = 0;
  int atlas_width = 0;
  int atlas_height = 0;
  std::vector<std::uint8_t> foreground;  // per pixel
  std::vector<PixelSample> samples;      // per pixel; zero for background

  std::size_t foreground_count() const;
  BinaryMap foreground_mask() const;
  friend bool operator==(const RenderMap&, const RenderMap&) = default;
};

RenderMap bake_condition(const Mesh& mesh, const RenderCondition& cond, int width, int height,
                         int atlas_width, int atlas_height, const CameraParams& camera = {});

/// Sparse texture-to-image operator for one baked condition and background.
class RenderOperator {
 public:
  RenderOperator(const RenderMap& map, const Image& background);

  /// texture [3, atlas_h, atlas_w] -> image [3, h, w]
  Var apply(Var texture) const;
  Tensor apply(const Tensor& texture) const;

  const SparseMatrix& matrix() const { return *matrix_; }

 private:
  std::shared_ptr<const SparseMatrix> matrix_;
  Tensor offset_;
};

Image render(const RenderMap& map, const TextureAtlas& texture, const Image& background);

/// Axis-aligned rectangle in UV space.
struct UvRect {
  double u0 = 0, v0 = 0, u1 = 1, v1 = 1;
};

/// Inclusive-exclusive texel bounds of a UV rectangle: columns [x0,x1), rows [y0,y1).
struct TexelRect {
  int x0, y0, x1, y1;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};
TexelRect texel_footprint(const UvRect& region, int atlas_width, int atlas_height);

/// Resamples the patch (bilinear) onto the region's texel footprint.
TextureAtlas paste_patch(const Image& patch, const TextureAtlas& texture, const UvRect& region);
/// Reads the region back at the requested resolution (bilinear).
Image read_region(const TextureAtlas& texture, const UvRect& region, int width, int height);
/// Nearest-neighbour projection of an edge map into the region, with optional
/// 1-texel dilation (clipped to the region).
BinaryMap mask_to_texture_space(const BinaryMap& edge, int atlas_width, int atlas_height,
                                const UvRect& region, int dilate);

/// RenderMap cache: DAST tensor [h*w, 10] (fg, 4 texels, 4 weights, shading) plus JSON sidecar.
void save_render_map(const std::filesystem::path& dast_path, const RenderMap& map,
                     const RenderCondition& cond);
RenderMap load_render_map(const std::filesystem::path& dast_path);

}  // namespace das
