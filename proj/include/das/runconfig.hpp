#pragma once

// JSON run configuration shared by the command-line tool and the Python module.
// Relative paths resolve against the directory of the config file.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "das/attack.hpp"
#include "das/evalharness.hpp"
#include "das/modelzoo.hpp"
#include "json.hpp"

namespace das {

/// Malformed, unknown or inconsistent configuration, or a referenced path that does not exist.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainSettings {
  int epochs = 20;
  double lr = 0.02;
  double momentum = 0.9;
  int batch = 16;
  double clip_norm = 1.0;
  bool jitter = true;
};

struct RunConfig {
  std::filesystem::path assets_dir;
  std::vector<std::string> classes{"car", "truck", "pod", "pyramid"};
  std::vector<std::string> backgrounds{"bg0.png"};  // under assets_dir/backgrounds
  std::filesystem::path seed_patch;
  std::string target_class = "car";

  std::vector<double> distances{7, 9, 11, 13};
  std::vector<double> pitches{10, 30, 50, 70};
  std::vector<double> yaws{0, 45, 90, 135, 180, 225, 270, 315};
  std::vector<double> lights{1.0};
  std::vector<int> background_ids{0};
  std::uint64_t split_seed = 7;
  double test_fraction = 0.2;

  std::filesystem::path models_dir;
  std::vector<std::string> architectures{"compact3", "wide4", "deep5", "avgpool4"};
  std::string attention_model = "compact3";
  TrainSettings train;

  AttackConfig attack;  // target_label follows target_class, seed follows `seed`
  std::vector<double> lambdas{1e-5, 1e-4, 1e-3, 1e-2, 1e-1};

  std::filesystem::path output_dir;
  std::uint64_t seed = 1;

  int target_label() const;
  std::size_t attention_index() const;
  /// Sets the attack seed; model training seeds derive from it too.
  void set_seed(std::uint64_t s);
  /// Throws ConfigError naming the first missing mesh, texture, background or patch file.
  void check_paths() const;
  nlohmann::json to_json() const;
};

/// Strict parse: unknown keys, wrong types and invalid values throw ConfigError.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

Scene load_run_scene(const RunConfig& cfg);
std::vector<RenderCondition> run_conditions(const RunConfig& cfg);
std::vector<ArchSpec> run_architectures(const RunConfig& cfg, int image_size);
TrainOptions run_train_options(const RunConfig& cfg, std::size_t arch_index, const Scene* jitter_scene);

/// Loads every configured model from models_dir/<name>; throws naming a missing one.
std::vector<Classifier> load_run_models(const RunConfig& cfg);

/// Scene, models, seed patch and the held-out split assembled for the attack.
Experiment make_experiment(const RunConfig& cfg, std::vector<Classifier> models);

}  // namespace das
