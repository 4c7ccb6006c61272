#include "das/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "das/scene.hpp"

namespace das {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
      fail("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& dst) {
  if (!obj.contains(key)) return;
  const json& v = obj[key];
  const std::string name = where.empty() ? std::string(key) : where + "." + key;
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
  else if constexpr (std::is_same_v<T, std::uint64_t>)
    ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer();
  else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
  else if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
  else if constexpr (std::is_same_v<T, std::vector<double>>)
    ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
  else if constexpr (std::is_same_v<T, std::vector<int>>)
    ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
  else if constexpr (std::is_same_v<T, std::vector<std::string>>)
    ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
  if (!ok) fail(name + " has the wrong type");
  dst = v.get<T>();
}

void read_path(const json& obj, const char* key, const std::string& where, const std::filesystem::path& base,
               std::filesystem::path& dst) {
  std::string s;
  read(obj, key, where, s);
  if (obj.contains(key)) {
    if (s.empty()) fail(where + "." + key + " must not be empty");
    dst = (std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s).lexically_normal();
  }
}

void require_file(const std::filesystem::path& p, const std::string& what) {
  if (!std::filesystem::is_regular_file(p)) fail(what + " not found: " + p.string());
}

}  // namespace

int RunConfig::target_label() const {
  const auto it = std::find(classes.begin(), classes.end(), target_class);
  if (it == classes.end()) fail("scene.target_class '" + target_class + "' is not one of scene.classes");
  return static_cast<int>(it - classes.begin());
}

std::size_t RunConfig::attention_index() const {
  const auto it = std::find(architectures.begin(), architectures.end(), attention_model);
  if (it == architectures.end()) fail("models.attention_model '" + attention_model + "' is not one of models.architectures");
  return static_cast<std::size_t>(it - architectures.begin());
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  attack.seed = s;
}

void RunConfig::check_paths() const {
  if (!std::filesystem::is_directory(assets_dir)) fail("assets directory not found: " + assets_dir.string());
  for (const auto& c : classes) {
    require_file(assets_dir / "meshes" / (c + ".obj"), "mesh");
    require_file(assets_dir / "textures" / (c + ".png"), "texture");
  }
  for (const auto& b : backgrounds) require_file(assets_dir / "backgrounds" / b, "background");
  require_file(seed_patch, "seed patch");
}

json RunConfig::to_json() const {
  json attack_json = das::to_json(attack);
  attack_json.erase("seed");
  attack_json.erase("target_label");
  return {{"scene",
           {{"assets", assets_dir.string()},
            {"classes", classes},
            {"backgrounds", backgrounds},
            {"seed_patch", seed_patch.string()},
            {"target_class", target_class}}},
          {"grid",
           {{"distances", distances}, {"pitches", pitches}, {"yaws", yaws}, {"lights", lights}, {"backgrounds", background_ids}}},
          {"split", {{"seed", split_seed}, {"test_fraction", test_fraction}}},
          {"models",
           {{"dir", models_dir.string()},
            {"architectures", architectures},
            {"attention_model", attention_model},
            {"train",
             {{"epochs", train.epochs},
              {"lr", train.lr},
              {"momentum", train.momentum},
              {"batch", train.batch},
              {"clip_norm", train.clip_norm},
              {"jitter", train.jitter}}}}},
          {"attack", attack_json},
          {"ablate", {{"lambdas", lambdas}}},
          {"output", output_dir.string()},
          {"seed", seed}};
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  only_keys(j, "", {"scene", "grid", "split", "models", "attack", "ablate", "output", "seed"});
  RunConfig c;
  c.assets_dir = base_dir;
  if (j.contains("scene")) {
    const json& s = j["scene"];
    only_keys(s, "scene", {"assets", "classes", "backgrounds", "seed_patch", "target_class"});
    read_path(s, "assets", "scene", base_dir, c.assets_dir);
    read(s, "classes", "scene", c.classes);
    read(s, "backgrounds", "scene", c.backgrounds);
    read(s, "target_class", "scene", c.target_class);
  }
  c.seed_patch = c.assets_dir / "patches" / "smiley.png";
  if (j.contains("scene")) read_path(j["scene"], "seed_patch", "scene", base_dir, c.seed_patch);
  if (j.contains("grid")) {
    const json& g = j["grid"];
    only_keys(g, "grid", {"distances", "pitches", "yaws", "lights", "backgrounds"});
    read(g, "distances", "grid", c.distances);
    read(g, "pitches", "grid", c.pitches);
    read(g, "yaws", "grid", c.yaws);
    read(g, "lights", "grid", c.lights);
    read(g, "backgrounds", "grid", c.background_ids);
  }
  if (j.contains("split")) {
    const json& s = j["split"];
    only_keys(s, "split", {"seed", "test_fraction"});
    read(s, "seed", "split", c.split_seed);
    read(s, "test_fraction", "split", c.test_fraction);
  }
  if (!j.contains("output")) fail("missing key 'output'");
  {
    std::string out;
    read(j, "output", "", out);
    if (out.empty()) fail("output must not be empty");
    c.output_dir = (std::filesystem::path(out).is_absolute() ? std::filesystem::path(out) : base_dir / out).lexically_normal();
  }
  c.models_dir = c.output_dir / "models";
  if (j.contains("models")) {
    const json& m = j["models"];
    only_keys(m, "models", {"dir", "architectures", "attention_model", "train"});
    read_path(m, "dir", "models", base_dir, c.models_dir);
    read(m, "architectures", "models", c.architectures);
    read(m, "attention_model", "models", c.attention_model);
    if (m.contains("train")) {
      const json& t = m["train"];
      only_keys(t, "models.train", {"epochs", "lr", "momentum", "batch", "clip_norm", "jitter"});
      read(t, "epochs", "models.train", c.train.epochs);
      read(t, "lr", "models.train", c.train.lr);
      read(t, "momentum", "models.train", c.train.momentum);
      read(t, "batch", "models.train", c.train.batch);
      read(t, "clip_norm", "models.train", c.train.clip_norm);
      read(t, "jitter", "models.train", c.train.jitter);
    }
  }
  if (j.contains("ablate")) {
    const json& a = j["ablate"];
    only_keys(a, "ablate", {"lambdas"});
    read(a, "lambdas", "ablate", c.lambdas);
  }
  if (j.contains("seed")) {
    std::uint64_t s = 0;
    read(j, "seed", "", s);
    c.seed = s;
  }
  if (j.contains("attack")) {
    const json& a = j["attack"];
    if (a.is_object() && a.contains("seed")) fail("attack.seed is not allowed; use the top-level seed");
    if (a.is_object() && a.contains("target_label")) fail("attack.target_label is not allowed; use scene.target_class");
    try {
      c.attack = attack_config_from_json(a);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  c.set_seed(c.seed);

  // Cross-field checks.
  if (c.classes.size() < 3) fail("scene.classes needs at least 3 entries");
  if (std::set<std::string>(c.classes.begin(), c.classes.end()).size() != c.classes.size())
    fail("scene.classes has duplicates");
  if (c.backgrounds.empty()) fail("scene.backgrounds must not be empty");
  c.attack.target_label = c.target_label();
  const auto known = default_architectures();
  for (const auto& a : c.architectures)
    if (std::none_of(known.begin(), known.end(), [&](const ArchSpec& s) { return s.name == a; }))
      fail("models.architectures: unknown architecture '" + a + "'");
  if (c.architectures.empty()) fail("models.architectures must not be empty");
  c.attention_index();
  if (c.train.epochs < 1 || c.train.batch < 1 || !(c.train.lr > 0) || c.train.momentum < 0 || c.train.momentum >= 1 ||
      c.train.clip_norm < 0)
    fail("models.train has an invalid value");
  if (!(c.test_fraction > 0 && c.test_fraction < 1)) fail("split.test_fraction must be in (0,1)");
  for (int b : c.background_ids)
    if (b < 0 || static_cast<std::size_t>(b) >= c.backgrounds.size()) fail("grid.backgrounds: id out of range");
  std::vector<RenderCondition> grid;
  try {
    grid = run_conditions(c);
  } catch (const std::invalid_argument& e) {
    fail(std::string("grid: ") + e.what());
  }
  if (grid.size() < 2) fail("grid must contain at least 2 conditions");
  if (c.lambdas.empty() || !std::is_sorted(c.lambdas.begin(), c.lambdas.end()) || c.lambdas.front() < 0)
    fail("ablate.lambdas must be a non-empty ascending list of values >= 0");
  const std::size_t n_train = split_conditions(grid, c.split_seed, c.test_fraction).train.size();
  try {
    c.attack.validate(n_train, static_cast<int>(c.classes.size()));
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, std::filesystem::absolute(path).parent_path());
}

Scene load_run_scene(const RunConfig& cfg) {
  cfg.check_paths();
  return load_scene(cfg.assets_dir, cfg.classes, cfg.backgrounds);
}

std::vector<RenderCondition> run_conditions(const RunConfig& cfg) {
  return condition_grid(cfg.distances, cfg.pitches, cfg.yaws, cfg.lights, cfg.background_ids);
}

std::vector<ArchSpec> run_architectures(const RunConfig& cfg, int image_size) {
  const auto all = default_architectures(static_cast<int>(cfg.classes.size()), image_size);
  std::vector<ArchSpec> out;
  for (const auto& name : cfg.architectures)
    for (const auto& a : all)
      if (a.name == name) out.push_back(a);
  return out;
}

TrainOptions run_train_options(const RunConfig& cfg, std::size_t arch_index, const Scene* jitter_scene) {
  TrainOptions o;
  o.epochs = cfg.train.epochs;
  o.lr = cfg.train.lr;
  o.momentum = cfg.train.momentum;
  o.batch = cfg.train.batch;
  o.clip_norm = cfg.train.clip_norm;
  o.seed = cfg.seed + arch_index;
  o.jitter_scene = cfg.train.jitter ? jitter_scene : nullptr;
  return o;
}

std::vector<Classifier> load_run_models(const RunConfig& cfg) {
  std::vector<Classifier> models;
  for (const auto& name : cfg.architectures) {
    const auto dir = cfg.models_dir / name;
    if (!std::filesystem::is_regular_file(dir / "model.json"))
      throw std::runtime_error("model '" + name + "' not found in " + cfg.models_dir.string() + " (run `das train` first)");
    models.push_back(Classifier::load(dir));
  }
  return models;
}

Experiment make_experiment(const RunConfig& cfg, std::vector<Classifier> models) {
  Experiment ex;
  ex.scene = load_run_scene(cfg);
  ex.class_id = cfg.target_label();
  ex.seed_patch = read_png(cfg.seed_patch);
  const ConditionSplit split = split_conditions(run_conditions(cfg), cfg.split_seed, cfg.test_fraction);
  ex.attack_conditions = split.train;
  ex.eval_conditions = split.test;
  ex.models = std::move(models);
  ex.attention_model = cfg.attention_index();
  ex.config = cfg.attack;
  ex.validate();
  return ex;
}

}  // namespace das
