// Regenerates the shipped default scene under an assets directory.

#include <filesystem>
#include <iostream>

#include "das/render.hpp"
#include "das/scene.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: das_make_assets <assets-dir>\n";
    return 2;
  }
  namespace fs = std::filesystem;
  const fs::path root = argv[1];
  try {
    fs::create_directories(root / "meshes");
    fs::create_directories(root / "textures");
    fs::create_directories(root / "backgrounds");
    fs::create_directories(root / "patches");
    for (const auto& obj : das::default_scene_objects()) {
      das::save_obj(root / "meshes" / (obj.name + ".obj"), obj.mesh);
      das::write_png(root / "textures" / (obj.name + ".png"), obj.texture);
    }
    das::write_png(root / "backgrounds" / "bg0.png",
                   das::make_background(das::kDefaultImageSize, das::kDefaultImageSize, 0));
    das::write_png(root / "patches" / "smiley.png", das::make_seed_patch(das::kDefaultPatchSize));
  } catch (const std::exception& e) {
    std::cerr << "error: assets: " << e.what() << '\n';
    return 1;
  }
  std::cout << "wrote default scene to " << root.string() << '\n';
  return 0;
}
