#pragma once

// Procedural construction of the default scene: primitive-composition meshes
// with shared UV charts, their base textures, a background and a seed patch.
// The asset generator writes these to disk; the pipeline only reads files.

#include <string>
#include <vector>

#include "das/image.hpp"
#include "das/render.hpp"

namespace das {

/// UV chart per box face. Faces are named by their outward normal.
struct BoxCharts {
  UvRect px, nx, py, ny, pz, nz;
};

void append_quad(Mesh& mesh, Vec3 origin, Vec3 edge_u, Vec3 edge_v, const UvRect& chart);
void append_box(Mesh& mesh, Vec3 lo, Vec3 hi, const BoxCharts& charts);
void append_uv_sphere(Mesh& mesh, Vec3 center, double radius, int segments, int rings, const UvRect& chart);
/// Square pyramid standing on y = base_y.
void append_pyramid(Mesh& mesh, Vec3 base_center, double half_width, double height,
                    const UvRect& side_chart, const UvRect& base_chart);

/// Atlas quadrants shared by all default objects.
namespace charts {
inline constexpr UvRect kSkin{0.0, 0.5, 0.5, 1.0};    // main body top and long sides
inline constexpr UvRect kTrim{0.5, 0.5, 1.0, 1.0};    // ends and underside
inline constexpr UvRect kCabin{0.0, 0.0, 0.5, 0.5};   // cabin / secondary part
inline constexpr UvRect kWheel{0.5, 0.0, 1.0, 0.5};   // wheels
}  // namespace charts

/// Region of the main chart that receives the seed patch.
inline constexpr UvRect kDefaultPatchRegion{0.05, 0.55, 0.45, 0.95};

inline constexpr int kDefaultAtlasSize = 256;
inline constexpr int kDefaultImageSize = 96;
inline constexpr int kDefaultPatchSize = 64;

struct SceneObject {
  std::string name;
  Mesh mesh;
  Image texture;
};

/// car, truck, pod, pyramid, in class-id order.
std::vector<SceneObject> default_scene_objects(int atlas_size = kDefaultAtlasSize);
Image make_background(int width, int height, int variant);
/// Cartoon face used as seed content.
Image make_seed_patch(int size);

}  // namespace das
