// das: command-line front end for dataset generation, training, baking,
// the attack, evaluation, attention studies and ablations.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "das/evalharness.hpp"
#include "das/parallel.hpp"
#include "das/runconfig.hpp"
#include "das/scene.hpp"

using namespace das;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool verbose = false;
  bool dry_run = false;
  std::vector<std::string> archs;  // train
  std::string texture;             // evaluate
  std::string what = "all";        // ablate
};

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + p.string());
}

void ensure_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw std::runtime_error("cannot create " + p.string() + ": " + ec.message());
}

// --- stages -----------------------------------------------------------------

void run_dataset(const RunConfig& cfg, const Options&) {
  Timer t;
  const Scene scene = load_run_scene(cfg);
  const Dataset d = generate_dataset(scene, run_conditions(cfg), cfg.split_seed, cfg.test_fraction);
  const auto dir = cfg.output_dir / "dataset";
  save_dataset(dir, d);
  std::cout << "dataset: " << d.train.size() << " train / " << d.test.size() << " test images ("
            << d.split.train.size() << "/" << d.split.test.size() << " conditions) in " << fixed(t.seconds(), 1)
            << "s -> " << dir.string() << "\n";
}

void run_train(const RunConfig& cfg, const Options& opt) {
  const Scene scene = load_run_scene(cfg);
  const Dataset d = generate_dataset(scene, run_conditions(cfg), cfg.split_seed, cfg.test_fraction);
  const auto archs = run_architectures(cfg, scene.image_size);
  for (const auto& name : opt.archs)
    if (std::find(cfg.architectures.begin(), cfg.architectures.end(), name) == cfg.architectures.end())
      throw std::invalid_argument("--arch '" + name + "' is not in models.architectures");
  for (std::size_t a = 0; a < archs.size(); ++a) {
    if (!opt.archs.empty() && std::find(opt.archs.begin(), opt.archs.end(), archs[a].name) == opt.archs.end())
      continue;
    Timer t;
    TrainLog log;
    const Classifier m = train(archs[a], d.train, run_train_options(cfg, a, &scene), &log,
                               [&](int epoch, double loss, double acc) {
                                 if (opt.verbose)
                                   std::cout << "  " << archs[a].name << " epoch " << epoch << " loss " << fixed(loss, 5)
                                             << " acc " << fixed(acc) << "\n";
                               });
    const auto dir = cfg.models_dir / archs[a].name;
    m.save(dir);
    std::ostringstream csv;
    csv << std::setprecision(17) << "epoch,loss,accuracy\n";
    for (std::size_t e = 0; e < log.epoch_loss.size(); ++e)
      csv << e + 1 << ',' << log.epoch_loss[e] << ',' << log.epoch_accuracy[e] << '\n';
    write_file(dir / "train_log.csv", csv.str());
    std::cout << "train: " << archs[a].name << " train_acc=" << fixed(accuracy(m, d.train))
              << " test_acc=" << fixed(accuracy(m, d.test)) << " in " << fixed(t.seconds(), 1) << "s -> "
              << dir.string() << "\n";
  }
}

void run_bake(const RunConfig& cfg, const Options&) {
  Timer t;
  const Scene scene = load_run_scene(cfg);
  const int cls = cfg.target_label();
  const auto conds = run_conditions(cfg);
  const auto dir = cfg.output_dir / "bake";
  ensure_dir(dir);
  std::vector<std::size_t> fg(conds.size());
  parallel_for(conds.size(), [&](std::size_t i) {
    const RenderMap map = bake_condition(scene.classes[cls].mesh, conds[i], scene.image_size, scene.image_size,
                                         scene.atlas_width(), scene.atlas_height());
    std::ostringstream name;
    name << "cond_" << std::setw(4) << std::setfill('0') << i << ".dast";
    save_render_map(dir / name.str(), map, conds[i]);
    fg[i] = map.foreground_count();
  });
  std::size_t total = 0;
  for (auto f : fg) total += f;
  std::cout << "bake: " << conds.size() << " render maps for '" << cfg.target_class << "', mean foreground "
            << fixed(static_cast<double>(total) / static_cast<double>(conds.size()), 1) << " px in "
            << fixed(t.seconds(), 1) << "s -> " << dir.string() << "\n";
}

void print_report(const EvalReport& r) {
  for (const auto& a : r.accuracy)
    std::cout << "  " << a.model << (a.white_box ? " (white-box)" : "") << ": raw " << fixed(a.raw) << " seed "
              << fixed(a.seed) << " adv " << fixed(a.adv) << " drop " << fixed(a.delta_seed()) << "\n";
}

void run_attack(const RunConfig& cfg, const Options& opt) {
  Timer t;
  const Experiment ex = make_experiment(cfg, load_run_models(cfg));
  const RunResult run = run_experiment(ex, [&](const StepInfo& s) {
    if (opt.verbose)
      std::cout << "  epoch " << s.epoch << " step " << s.step << " L_d " << fixed(s.loss.distraction, 6) << " L_e "
                << fixed(s.loss.evasion, 6) << " L_s " << fixed(s.loss.smooth, 4) << " total " << fixed(s.loss.total, 6)
                << "\n";
  });
  dump_artifacts(cfg.output_dir, ex, run);
  const auto& wb = run.report.accuracy[ex.attention_model];
  if (opt.verbose) print_report(run.report);
  std::cout << "attack: " << run.attack.trace.size() << " steps, white-box accuracy " << fixed(wb.seed) << " -> "
            << fixed(wb.adv) << ", mean SSIM " << fixed(run.report.mean_ssim, 4) << " in " << fixed(t.seconds(), 1)
            << "s -> " << cfg.output_dir.string() << "\n";
}

void run_evaluate(const RunConfig& cfg, const Options& opt) {
  Timer t;
  const std::filesystem::path tex_path = opt.texture.empty() ? cfg.output_dir / "t_adv.png" : std::filesystem::path(opt.texture);
  AttackResult res;
  res.t_adv = TextureAtlas(read_png(tex_path));
  const Experiment ex = make_experiment(cfg, load_run_models(cfg));
  res.t0 = seed_texture(ex.scene.classes[ex.class_id].base_texture, ex.seed_patch, ex.config);
  if (res.t_adv.width() != res.t0.width() || res.t_adv.height() != res.t0.height())
    throw std::invalid_argument(tex_path.string() + ": texture size does not match the atlas");
  res.t_adv_tensor = res.t_adv.tensor();
  const EvalReport report = build_report(ex, res);
  ensure_dir(cfg.output_dir);
  write_file(cfg.output_dir / "eval_report.json", report.to_json().dump(2) + "\n");
  write_file(cfg.output_dir / "eval_accuracy.csv", report.accuracy_csv());
  print_report(report);
  double black = 0;
  for (std::size_t m = 0; m < report.accuracy.size(); ++m)
    if (m != ex.attention_model) black += report.accuracy[m].delta_seed();
  const std::size_t nb = report.accuracy.size() - 1;
  std::cout << "evaluate: " << ex.eval_conditions.size() << " held-out conditions, white-box drop "
            << fixed(report.accuracy[ex.attention_model].delta_seed()) << ", mean black-box drop "
            << (nb ? fixed(black / static_cast<double>(nb)) : std::string("n/a")) << ", mean SSIM "
            << fixed(report.mean_ssim, 4) << " in " << fixed(t.seconds(), 1) << "s\n";
}

void run_attention(const RunConfig& cfg, const Options& opt) {
  Timer t;
  const Experiment ex = make_experiment(cfg, load_run_models(cfg));
  std::vector<View> views;
  for (const auto& c : ex.eval_conditions)
    for (int k = 0; k < static_cast<int>(ex.scene.classes.size()); ++k) views.push_back({k, c, nullptr});
  const auto dir = cfg.output_dir / "attention";
  ensure_dir(dir);
  json out = {{"variant", to_string(ex.config.variant)}, {"models", json::array()}};
  for (const auto& m : ex.models) {
    const auto s = attention_mass(m, ex.scene, views, ex.config.variant);
    out["models"].push_back({{"model", m.spec().name},
                             {"mean_mass", s.mean_mass},
                             {"fraction_at_least_0.6", s.fraction_at_least},
                             {"mean_distraction", s.mean_distraction}});
    if (opt.verbose)
      std::cout << "  " << m.spec().name << ": mean foreground mass " << fixed(s.mean_mass) << ", renders >= 0.6: "
                << fixed(s.fraction_at_least) << "\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(4, views.size()); ++i) {
      const Image img = render_view(ex.scene, views[i].class_id, views[i].condition);
      const AttentionMap map = attention(m, img, views[i].class_id, ex.config.variant);
      write_png(dir / (m.spec().name + "_" + std::to_string(i) + ".png"), attention_overlay(map, img));
    }
  }
  const SimilarityStats sim = similarity_study(ex.models, ex.scene, views, ex.config.variant, cfg.seed);
  out["similarity"] = {{"matrix", sim.mean_matrix},
                       {"mean_pairwise", sim.mean_pairwise},
                       {"shuffled_baseline", sim.shuffled_baseline}};
  write_file(dir / "attention.json", out.dump(2) + "\n");
  std::cout << "attention: " << views.size() << " clean renders, pairwise SSIM " << fixed(sim.mean_pairwise)
            << " vs shuffled " << fixed(sim.shuffled_baseline) << " in " << fixed(t.seconds(), 1) << "s -> "
            << dir.string() << "\n";
}

void run_ablate(const RunConfig& cfg, const Options& opt) {
  if (opt.what != "all" && opt.what != "losses" && opt.what != "lambda")
    throw std::invalid_argument("--what must be all, losses or lambda");
  Timer t;
  const Experiment ex = make_experiment(cfg, load_run_models(cfg));
  ensure_dir(cfg.output_dir);
  auto report = [&](const char* name, const std::vector<AblationRow>& rows) {
    write_file(cfg.output_dir / (std::string("ablate_") + name + ".csv"), ablation_csv(rows, ex.models));
    for (const auto& r : rows)
      std::cout << "  " << r.label << ": mean accuracy " << fixed(r.mean_accuracy) << ", mean SSIM "
                << fixed(r.mean_ssim, 4) << "\n";
  };
  if (opt.what != "lambda") report("losses", ablate_losses(ex));
  if (opt.what != "losses") report("lambda", ablate_lambda(ex, cfg.lambdas));
  std::cout << "ablate: " << opt.what << " in " << fixed(t.seconds(), 1) << "s -> " << cfg.output_dir.string() << "\n";
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("DAS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 1024) throw ConfigError("config: DAS_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-distraction adversarial texture toolkit"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config, "JSON run configuration")->required();
  app.add_option("--out", opt.out, "Output directory (overrides the config)");
  app.add_option("--seed", opt.seed, "Seed (overrides the config)");
  app.add_option("--threads", opt.threads, "Worker threads (default: DAS_THREADS or 1)")->check(CLI::Range(1, 1024));
  app.add_flag("--verbose", opt.verbose, "Per-epoch and per-step progress");
  app.add_flag("--dry-run", opt.dry_run, "Validate the configuration and print it");

  auto* dataset = app.add_subcommand("dataset", "Render the labeled dataset over the condition grid");
  auto* train = app.add_subcommand("train", "Train the configured classifiers");
  train->add_option("--arch", opt.archs, "Train only these architectures");
  auto* bake = app.add_subcommand("bake", "Bake render maps of the target class for every condition");
  auto* attack = app.add_subcommand("attack", "Optimize the adversarial texture and evaluate it");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a texture on the held-out conditions");
  evaluate->add_option("--texture", opt.texture, "Texture PNG (default: <out>/t_adv.png)");
  auto* attention = app.add_subcommand("attention", "Attention mass and cross-model similarity on clean renders");
  auto* ablate = app.add_subcommand("ablate", "Loss-term and lambda ablations");
  ablate->add_option("--what", opt.what, "all, losses or lambda");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: cli: " << e.what() << "\n";
    return kExitConfig;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string stage = sub->get_name();

  RunConfig cfg;
  try {
    cfg = load_run_config(opt.config);
    if (!opt.out.empty()) {
      const bool models_default = cfg.models_dir == cfg.output_dir / "models";
      cfg.output_dir = std::filesystem::absolute(opt.out);
      if (models_default) cfg.models_dir = cfg.output_dir / "models";
    }
    if (opt.seed) cfg.set_seed(*opt.seed);
    cfg.check_paths();
    set_thread_count(static_cast<std::size_t>(resolve_threads(opt.threads)));
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  }

  if (opt.dry_run) {
    std::cout << cfg.to_json().dump(2) << "\n";
    std::cout << stage << ": dry run, configuration is valid (" << run_conditions(cfg).size() << " conditions, "
              << thread_count() << " threads)\n";
    return 0;
  }

  try {
    if (sub == dataset) run_dataset(cfg, opt);
    else if (sub == train) run_train(cfg, opt);
    else if (sub == bake) run_bake(cfg, opt);
    else if (sub == attack) run_attack(cfg, opt);
    else if (sub == evaluate) run_evaluate(cfg, opt);
    else if (sub == attention) run_attention(cfg, opt);
    else if (sub == ablate) run_ablate(cfg, opt);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << stage << ": " << msg << "\n";
    return kExitRuntime;
  }
  return 0;
}
