#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "das/runconfig.hpp"

using namespace das;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kAssets = DAS_ASSETS_DIR;

json minimal() { return json{{"output", "out"}, {"scene", {{"assets", kAssets.string()}}}}; }

std::string parse_error(const json& j) {
  try {
    parse_run_config(j, "/base");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("run config: shipped default parses and resolves paths") {
  const RunConfig c = load_run_config(kAssets / "default.json");
  CHECK(c.assets_dir == kAssets.lexically_normal() / "");
  CHECK(c.models_dir == (kAssets / "../runs/models").lexically_normal());
  CHECK(c.output_dir == (kAssets / "../runs/default").lexically_normal());
  CHECK(c.seed_patch == kAssets / "patches" / "smiley.png");
  CHECK(run_conditions(c).size() == 128);
  CHECK(c.target_label() == 0);
  CHECK(c.attack.target_label == 0);
  CHECK(c.attention_index() == 0);
  CHECK(c.attack.smooth_weight == 1e-4);
  CHECK_NOTHROW(c.check_paths());
}

TEST_CASE("run config: defaults, relative paths and seeds") {
  json j = minimal();
  j["seed"] = 9;
  j["scene"]["target_class"] = "pod";
  const RunConfig c = parse_run_config(j, "/base");
  CHECK(c.output_dir == fs::path("/base/out"));
  CHECK(c.models_dir == fs::path("/base/out/models"));
  CHECK(c.seed == 9);
  CHECK(c.attack.seed == 9);
  CHECK(c.attack.target_label == 2);

  RunConfig d = c;
  d.set_seed(4);
  CHECK(d.attack.seed == 4);
  CHECK(run_train_options(d, 1, nullptr).seed != run_train_options(d, 0, nullptr).seed);
}

TEST_CASE("run config: to_json round-trips") {
  const RunConfig c = load_run_config(kAssets / "default.json");
  const json j = c.to_json();
  const RunConfig back = parse_run_config(j, "/elsewhere");
  CHECK(back.to_json() == j);
}

TEST_CASE("run config: errors name the offending field") {
  json j = minimal();
  j.erase("output");
  CHECK(parse_error(j).find("output") != std::string::npos);

  j = minimal();
  j["attack"] = {{"lamda", 1.0}};
  CHECK(parse_error(j).find("lamda") != std::string::npos);

  j = minimal();
  j["seed"] = "one";
  CHECK(parse_error(j).find("seed has the wrong type") != std::string::npos);

  j = minimal();
  j["attack"] = {{"seed", 3}};
  CHECK(parse_error(j).find("top-level seed") != std::string::npos);

  j = minimal();
  j["models"] = {{"architectures", {"compact3", "resnet"}}};
  CHECK(parse_error(j).find("resnet") != std::string::npos);

  j = minimal();
  j["models"] = {{"attention_model", "wide9"}};
  CHECK(!parse_error(j).empty());

  j = minimal();
  j["split"] = {{"test_fraction", 1.0}};
  CHECK(parse_error(j).find("test_fraction") != std::string::npos);

  j = minimal();
  j["ablate"] = {{"lambdas", {1e-3, 1e-5}}};
  CHECK(parse_error(j).find("ascending") != std::string::npos);

  j = minimal();
  j["scene"]["classes"] = {"car", "truck"};
  CHECK(parse_error(j).find("at least 3") != std::string::npos);
}

TEST_CASE("run config: missing files and bad JSON") {
  json j = minimal();
  j["scene"]["classes"] = {"car", "truck", "blimp"};
  const RunConfig c = parse_run_config(j, "/base");
  try {
    c.check_paths();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("blimp.obj") != std::string::npos);
  }

  const fs::path tmp = fs::temp_directory_path() / "das_runconfig_bad.json";
  std::ofstream(tmp) << "{ \"output\": ";
  CHECK_THROWS_AS(load_run_config(tmp), ConfigError);
  fs::remove(tmp);
  CHECK_THROWS_AS(load_run_config("/nonexistent/das.json"), ConfigError);
}
