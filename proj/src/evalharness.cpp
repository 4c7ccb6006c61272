#include "das/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "das/imageproc.hpp"
#include "das/parallel.hpp"
#include "das/rng.hpp"
#include "das/serialize.hpp"

namespace das {

using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool overlaps(const std::vector<RenderCondition>& a, const std::vector<RenderCondition>& b) {
  return std::any_of(a.begin(), a.end(),
                     [&](const RenderCondition& c) { return std::find(b.begin(), b.end(), c) != b.end(); });
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

const TextureAtlas& view_texture(const Scene& scene, const View& v) {
  return v.texture ? *v.texture : scene.classes.at(v.class_id).base_texture;
}

}  // namespace

// ---------------------------------------------------------------------------
// Accuracy

std::vector<double> evaluate(const std::vector<Classifier>& models, const Scene& scene, int class_id,
                             const TextureAtlas& texture, const std::vector<RenderCondition>& conditions,
                             const std::vector<RenderCondition>* attack_conditions) {
  if (conditions.empty()) throw std::invalid_argument("evaluate: empty condition list");
  if (models.empty()) throw std::invalid_argument("evaluate: no models");
  if (attack_conditions && overlaps(conditions, *attack_conditions))
    throw std::invalid_argument("evaluate: held-out conditions overlap the attack conditions");
  std::vector<std::vector<std::uint8_t>> hit(conditions.size(), std::vector<std::uint8_t>(models.size(), 0));
  parallel_for(conditions.size(), [&](std::size_t i) {
    const Image img = render_view(scene, class_id, conditions[i], texture);
    for (std::size_t m = 0; m < models.size(); ++m) hit[i][m] = predict_label(models[m], img) == class_id;
  });
  std::vector<double> acc(models.size(), 0.0);
  for (const auto& row : hit)
    for (std::size_t m = 0; m < models.size(); ++m) acc[m] += row[m];
  for (auto& a : acc) a /= static_cast<double>(conditions.size());
  return acc;
}

std::vector<TransferRow> transfer_matrix(const std::vector<Classifier>& models, std::size_t attention_model,
                                         const Scene& scene, int class_id, const TextureAtlas& t0,
                                         const TextureAtlas& t_adv, const std::vector<RenderCondition>& conditions) {
  const auto seed = evaluate(models, scene, class_id, t0, conditions);
  const auto adv = evaluate(models, scene, class_id, t_adv, conditions);
  std::vector<TransferRow> rows;
  for (std::size_t m = 0; m < models.size(); ++m)
    rows.push_back({models[m].spec().name, m == attention_model, seed[m], adv[m]});
  return rows;
}

std::vector<double> render_ssim(const Scene& scene, int class_id, const TextureAtlas& t0, const TextureAtlas& t_adv,
                                const std::vector<RenderCondition>& conditions) {
  std::vector<double> out(conditions.size());
  parallel_for(conditions.size(), [&](std::size_t i) {
    out[i] = ssim(render_view(scene, class_id, conditions[i], t_adv), render_view(scene, class_id, conditions[i], t0));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Attention studies

AttentionMassStats attention_mass(const Classifier& model, const Scene& scene, const std::vector<View>& views,
                                  AttentionVariant variant, double threshold, double tau, int connectivity) {
  if (views.empty()) throw std::invalid_argument("attention_mass: no views");
  std::vector<double> mass(views.size()), dist(views.size());
  parallel_for(views.size(), [&](std::size_t i) {
    const View& v = views[i];
    const auto& cls = scene.classes.at(v.class_id);
    const TextureAtlas& tex = view_texture(scene, v);
    const RenderMap map =
        bake_condition(cls.mesh, v.condition, scene.image_size, scene.image_size, tex.width(), tex.height());
    const Image img = render(map, tex, scene.background(v.condition));
    const AttentionMap att = attention(model, img, v.class_id, variant);
    mass[i] = att.mass_inside(map.foreground_mask());
    dist[i] = distraction_loss(att, tau, connectivity);
  });
  AttentionMassStats s;
  s.threshold = threshold;
  s.renders = views.size();
  s.mean_mass = mean_of(mass);
  s.fraction_at_least =
      static_cast<double>(std::count_if(mass.begin(), mass.end(), [&](double m) { return m >= threshold; })) /
      static_cast<double>(mass.size());
  s.mean_distraction = mean_of(dist);
  s.masses = std::move(mass);
  return s;
}

SimilarityStats similarity_study(const std::vector<Classifier>& models, const Scene& scene,
                                 const std::vector<View>& views, AttentionVariant variant, std::uint64_t seed) {
  if (models.size() < 2) throw std::invalid_argument("similarity_study: need at least two models");
  if (views.size() < 2) throw std::invalid_argument("similarity_study: need at least two views");
  const std::size_t nm = models.size(), nv = views.size();
  std::vector<std::vector<Image>> maps(nv, std::vector<Image>(nm));
  parallel_for(nv, [&](std::size_t i) {
    const Image img = render_view(scene, views[i].class_id, views[i].condition, view_texture(scene, views[i]));
    for (std::size_t m = 0; m < nm; ++m) maps[i][m] = attention(models[m], img, views[i].class_id, variant).to_image();
  });
  // Shuffled pairing: a cyclic shift over a seeded permutation never pairs a view with itself.
  std::vector<std::size_t> order(nv);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 gen(seed);
  rng::shuffle(order, gen);
  std::vector<std::size_t> partner(nv);
  for (std::size_t t = 0; t < nv; ++t) partner[order[t]] = order[(t + 1) % nv];

  std::vector<std::vector<double>> same(nv, std::vector<double>(nm * nm, 1.0)), shuffled(nv, std::vector<double>(nm * nm, 0.0));
  parallel_for(nv, [&](std::size_t i) {
    for (std::size_t a = 0; a < nm; ++a)
      for (std::size_t b = 0; b < nm; ++b) {
        if (a == b) continue;
        same[i][a * nm + b] = ssim(maps[i][a], maps[i][b]);
        shuffled[i][a * nm + b] = ssim(maps[i][a], maps[partner[i]][b]);
      }
  });
  SimilarityStats s;
  s.mean_matrix.assign(nm, std::vector<double>(nm, 0.0));
  double sum_same = 0, sum_shuf = 0;
  for (std::size_t i = 0; i < nv; ++i)
    for (std::size_t a = 0; a < nm; ++a)
      for (std::size_t b = 0; b < nm; ++b) {
        s.mean_matrix[a][b] += same[i][a * nm + b] / static_cast<double>(nv);
        if (a != b) {
          sum_same += same[i][a * nm + b];
          sum_shuf += shuffled[i][a * nm + b];
        }
      }
  const double pairs = static_cast<double>(nv * nm * (nm - 1));
  s.mean_pairwise = sum_same / pairs;
  s.shuffled_baseline = sum_shuf / pairs;
  return s;
}

// ---------------------------------------------------------------------------
// Experiment and report

void Experiment::validate() const {
  scene.validate();
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= scene.classes.size())
    throw std::invalid_argument("experiment: class_id out of range");
  if (attack_conditions.empty()) throw std::invalid_argument("experiment: no attack conditions");
  if (eval_conditions.empty()) throw std::invalid_argument("experiment: no evaluation conditions");
  if (overlaps(eval_conditions, attack_conditions))
    throw std::invalid_argument("experiment: evaluation conditions overlap the attack conditions");
  if (models.empty()) throw std::invalid_argument("experiment: no models");
  if (attention_model >= models.size()) throw std::invalid_argument("experiment: attention_model out of range");
  for (const auto& m : models)
    if (m.input_size() != scene.image_size || m.classes() != static_cast<int>(scene.classes.size()))
      throw std::invalid_argument("experiment: model " + m.spec().name + " does not match the scene");
  if (seed_patch.width <= 0 || seed_patch.height <= 0) throw std::invalid_argument("experiment: empty seed patch");
  config.validate(attack_conditions.size(), static_cast<int>(scene.classes.size()));
}

json to_json(const RenderCondition& c) {
  return {{"distance", c.distance}, {"yaw", c.yaw}, {"pitch", c.pitch}, {"light", c.light},
          {"background_id", c.background_id}};
}

RenderCondition condition_from_json(const json& j) {
  RenderCondition c;
  c.distance = j.at("distance").get<double>();
  c.yaw = j.at("yaw").get<double>();
  c.pitch = j.at("pitch").get<double>();
  c.light = j.at("light").get<double>();
  c.background_id = j.at("background_id").get<int>();
  return c;
}

json to_json(const AttackConfig& c) {
  return {{"lambda", c.lambda},
          {"beta", c.beta},
          {"tau", c.tau},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"minibatch", c.minibatch},
          {"connectivity", c.connectivity},
          {"target_label", c.target_label},
          {"attention_variant", to_string(c.variant)},
          {"seed", c.seed},
          {"smooth_weight", c.smooth_weight},
          {"patch_region", {c.patch_region.u0, c.patch_region.v0, c.patch_region.u1, c.patch_region.v1}},
          {"canny", {{"sigma", c.canny.sigma}, {"low", c.canny.low}, {"high", c.canny.high}}},
          {"edge_dilate", c.edge_dilate},
          {"terms", {{"distraction", c.terms.distraction}, {"evasion", c.terms.evasion}, {"smooth", c.terms.smooth}}}};
}

namespace {

template <typename T>
T typed(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw std::invalid_argument("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw std::invalid_argument("");
    } else {
      if (!v.is_string()) throw std::invalid_argument("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw std::invalid_argument("attack config: " + key + " has the wrong type");
  }
}

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
      throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

}  // namespace

AttackConfig attack_config_from_json(const json& j, const AttackConfig& base) {
  only_keys(j, "attack config",
            {"lambda", "beta", "tau", "lr", "weight_decay", "epochs", "minibatch", "connectivity", "target_label",
             "attention_variant", "seed", "smooth_weight", "patch_region", "canny", "edge_dilate", "terms"});
  AttackConfig c = base;
  auto num = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = typed<double>(j[k], k);
  };
  auto integer = [&](const char* k, int& dst) {
    if (j.contains(k)) dst = typed<int>(j[k], k);
  };
  num("lambda", c.lambda);
  num("beta", c.beta);
  num("tau", c.tau);
  num("lr", c.lr);
  num("weight_decay", c.weight_decay);
  num("smooth_weight", c.smooth_weight);
  integer("epochs", c.epochs);
  integer("minibatch", c.minibatch);
  integer("connectivity", c.connectivity);
  integer("target_label", c.target_label);
  integer("edge_dilate", c.edge_dilate);
  if (j.contains("seed")) {
    const json& s = j["seed"];
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0))
      throw std::invalid_argument("attack config: seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("attention_variant")) c.variant = parse_attention_variant(typed<std::string>(j["attention_variant"], "attention_variant"));
  if (j.contains("patch_region")) {
    const json& r = j["patch_region"];
    if (!r.is_array() || r.size() != 4) throw std::invalid_argument("attack config: patch_region must be [u0,v0,u1,v1]");
    c.patch_region = {typed<double>(r[0], "patch_region"), typed<double>(r[1], "patch_region"),
                      typed<double>(r[2], "patch_region"), typed<double>(r[3], "patch_region")};
  }
  if (j.contains("canny")) {
    const json& k = j["canny"];
    only_keys(k, "attack config: canny", {"sigma", "low", "high"});
    if (k.contains("sigma")) c.canny.sigma = typed<double>(k["sigma"], "canny.sigma");
    if (k.contains("low")) c.canny.low = typed<double>(k["low"], "canny.low");
    if (k.contains("high")) c.canny.high = typed<double>(k["high"], "canny.high");
  }
  if (j.contains("terms")) {
    const json& t = j["terms"];
    only_keys(t, "attack config: terms", {"distraction", "evasion", "smooth"});
    if (t.contains("distraction")) c.terms.distraction = typed<bool>(t["distraction"], "terms.distraction");
    if (t.contains("evasion")) c.terms.evasion = typed<bool>(t["evasion"], "terms.evasion");
    if (t.contains("smooth")) c.terms.smooth = typed<bool>(t["smooth"], "terms.smooth");
  }
  return c;
}

namespace {

json stats_json(const AttentionMassStats& s) {
  return {{"threshold", s.threshold},
          {"renders", s.renders},
          {"mean_mass", s.mean_mass},
          {"fraction_at_least", s.fraction_at_least},
          {"mean_distraction", s.mean_distraction},
          {"masses", s.masses}};
}

AttentionMassStats stats_from_json(const json& j) {
  AttentionMassStats s;
  s.threshold = j.at("threshold").get<double>();
  s.renders = j.at("renders").get<std::size_t>();
  s.mean_mass = j.at("mean_mass").get<double>();
  s.fraction_at_least = j.at("fraction_at_least").get<double>();
  s.mean_distraction = j.at("mean_distraction").get<double>();
  s.masses = j.at("masses").get<std::vector<double>>();
  return s;
}

}  // namespace

double EvalReport::mass_decrease_fraction() const {
  const auto& a = attention_seed.masses;
  const auto& b = attention_adv.masses;
  if (a.empty() || a.size() != b.size()) throw std::logic_error("mass_decrease_fraction: per-view masses missing");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += b[i] < a[i];
  return static_cast<double>(n) / static_cast<double>(a.size());
}

json EvalReport::to_json() const {
  json acc = json::array();
  for (const auto& a : accuracy)
    acc.push_back({{"model", a.model},
                   {"white_box", a.white_box},
                   {"raw", a.raw},
                   {"seed", a.seed},
                   {"adv", a.adv},
                   {"delta_raw", a.delta_raw()},
                   {"delta_seed", a.delta_seed()}});
  json conds = json::array();
  for (const auto& c : conditions) conds.push_back(das::to_json(c));
  return {{"accuracy", acc},
          {"conditions", conds},
          {"ssim", ssim},
          {"mean_ssim", mean_ssim},
          {"attention_seed", stats_json(attention_seed)},
          {"attention_adv", stats_json(attention_adv)},
          {"config", config},
          {"started", started},
          {"finished", finished}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  for (const auto& a : j.at("accuracy"))
    r.accuracy.push_back({a.at("model").get<std::string>(), a.at("white_box").get<bool>(), a.at("raw").get<double>(),
                          a.at("seed").get<double>(), a.at("adv").get<double>()});
  for (const auto& c : j.at("conditions")) r.conditions.push_back(condition_from_json(c));
  r.ssim = j.at("ssim").get<std::vector<double>>();
  r.mean_ssim = j.at("mean_ssim").get<double>();
  r.attention_seed = stats_from_json(j.at("attention_seed"));
  r.attention_adv = stats_from_json(j.at("attention_adv"));
  r.config = j.at("config");
  r.started = j.at("started").get<std::string>();
  r.finished = j.at("finished").get<std::string>();
  return r;
}

std::string EvalReport::accuracy_csv() const {
  std::ostringstream os;
  os << std::setprecision(6) << "model,white_box,raw,seed,adv,delta_seed\n";
  for (const auto& a : accuracy)
    os << a.model << ',' << (a.white_box ? 1 : 0) << ',' << a.raw << ',' << a.seed << ',' << a.adv << ','
       << a.delta_seed() << '\n';
  return os.str();
}

EvalReport build_report(const Experiment& ex, const AttackResult& result) {
  EvalReport r;
  r.started = utc_now();
  const auto& cls = ex.scene.classes.at(ex.class_id);
  const auto raw = evaluate(ex.models, ex.scene, ex.class_id, cls.base_texture, ex.eval_conditions, &ex.attack_conditions);
  const auto seed = evaluate(ex.models, ex.scene, ex.class_id, result.t0, ex.eval_conditions, &ex.attack_conditions);
  const auto adv = evaluate(ex.models, ex.scene, ex.class_id, result.t_adv, ex.eval_conditions, &ex.attack_conditions);
  for (std::size_t m = 0; m < ex.models.size(); ++m)
    r.accuracy.push_back({ex.models[m].spec().name, m == ex.attention_model, raw[m], seed[m], adv[m]});
  r.conditions = ex.eval_conditions;
  r.ssim = render_ssim(ex.scene, ex.class_id, result.t0, result.t_adv, ex.eval_conditions);
  r.mean_ssim = mean_of(r.ssim);
  std::vector<View> before, after;
  for (const auto& c : ex.eval_conditions) {
    before.push_back({ex.class_id, c, &result.t0});
    after.push_back({ex.class_id, c, &result.t_adv});
  }
  const Classifier& att = ex.models[ex.attention_model];
  r.attention_seed = attention_mass(att, ex.scene, before, ex.config.variant, 0.6, ex.config.tau, ex.config.connectivity);
  r.attention_adv = attention_mass(att, ex.scene, after, ex.config.variant, 0.6, ex.config.tau, ex.config.connectivity);
  r.config = to_json(ex.config);
  r.finished = utc_now();
  return r;
}

RunResult run_experiment(const Experiment& ex, const StepCallback& on_step) {
  ex.validate();
  const std::string started = utc_now();
  const auto& cls = ex.scene.classes.at(ex.class_id);
  RunResult run;
  run.attack = das_attack(cls.mesh, cls.base_texture, ex.seed_patch, ex.attack_conditions, ex.scene.backgrounds,
                          ex.models[ex.attention_model], ex.config, on_step);
  run.report = build_report(ex, run.attack);
  run.report.started = started;
  return run;
}

// ---------------------------------------------------------------------------
// Ablations

namespace {

AblationRow ablation_run(const Experiment& ex, std::string label, const AttackConfig& cfg) {
  const auto& cls = ex.scene.classes.at(ex.class_id);
  const AttackResult r = das_attack(cls.mesh, cls.base_texture, ex.seed_patch, ex.attack_conditions,
                                    ex.scene.backgrounds, ex.models[ex.attention_model], cfg);
  AblationRow row;
  row.label = std::move(label);
  row.terms = cfg.terms;
  row.lambda = cfg.lambda;
  row.accuracy = evaluate(ex.models, ex.scene, ex.class_id, r.t_adv, ex.eval_conditions, &ex.attack_conditions);
  row.mean_accuracy = mean_of(row.accuracy);
  row.mean_ssim = mean_of(render_ssim(ex.scene, ex.class_id, r.t0, r.t_adv, ex.eval_conditions));
  return row;
}

}  // namespace

std::vector<AblationRow> ablate_losses(const Experiment& ex) {
  ex.validate();
  std::vector<AblationRow> rows;
  const bool smooth = ex.config.terms.smooth;
  const struct {
    const char* label;
    LossTerms terms;
  } variants[] = {{"L_d", {true, false, smooth}}, {"L_e", {false, true, smooth}}, {"L_d+lambda*L_e", {true, true, smooth}}};
  for (const auto& v : variants) {
    AttackConfig cfg = ex.config;
    cfg.terms = v.terms;
    rows.push_back(ablation_run(ex, v.label, cfg));
  }
  return rows;
}

std::vector<AblationRow> ablate_lambda(const Experiment& ex, const std::vector<double>& lambdas) {
  ex.validate();
  if (lambdas.empty()) throw std::invalid_argument("ablate_lambda: empty lambda list");
  if (!std::is_sorted(lambdas.begin(), lambdas.end())) throw std::invalid_argument("ablate_lambda: lambdas must be ascending");
  std::vector<AblationRow> rows;
  for (double l : lambdas) {
    AttackConfig cfg = ex.config;
    cfg.lambda = l;
    cfg.validate(ex.attack_conditions.size(), static_cast<int>(ex.scene.classes.size()));
    std::ostringstream label;
    label << "lambda=" << l;
    rows.push_back(ablation_run(ex, label.str(), cfg));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows, const std::vector<Classifier>& models) {
  std::ostringstream os;
  os << std::setprecision(6) << "label,lambda,distraction,evasion,smooth";
  for (const auto& m : models) os << ",acc_" << m.spec().name;
  os << ",mean_accuracy,mean_ssim\n";
  for (const auto& r : rows) {
    os << r.label << ',' << r.lambda << ',' << r.terms.distraction << ',' << r.terms.evasion << ',' << r.terms.smooth;
    for (double a : r.accuracy) os << ',' << a;
    os << ',' << r.mean_accuracy << ',' << r.mean_ssim << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Artifacts

std::string trace_csv(const std::vector<LossRecord>& trace, std::size_t steps_per_epoch) {
  if (steps_per_epoch == 0) throw std::invalid_argument("trace_csv: steps_per_epoch must be >= 1");
  std::ostringstream os;
  os << std::setprecision(17) << "step,epoch,distraction,evasion,smooth,total\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace[i];
    os << i + 1 << ',' << i / steps_per_epoch + 1 << ',' << r.distraction << ',' << r.evasion << ',' << r.smooth << ','
       << r.total << '\n';
  }
  return os.str();
}

std::vector<std::filesystem::path> dump_artifacts(const std::filesystem::path& dir, const Experiment& ex,
                                                  const RunResult& run, std::size_t overlays) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto note = [&](const std::filesystem::path& p) {
    written.push_back(p);
    return p;
  };
  write_png(note(dir / "t0.png"), run.attack.t0.image);
  write_png(note(dir / "t_adv.png"), run.attack.t_adv.image);
  save_dast(note(dir / "t_adv.dast"), run.attack.t_adv_tensor);
  write_png(note(dir / "edge_mask.png"), binary_to_image(run.attack.edge_mask));
  const std::size_t mb = static_cast<std::size_t>(ex.config.minibatch);
  write_text(note(dir / "trace.csv"), trace_csv(run.attack.trace, (ex.attack_conditions.size() + mb - 1) / mb));
  write_text(note(dir / "report.json"), run.report.to_json().dump(2) + "\n");
  write_text(note(dir / "accuracy.csv"), run.report.accuracy_csv());

  const Classifier& att = ex.models.at(ex.attention_model);
  const std::size_t n = std::min(overlays, ex.eval_conditions.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = ex.eval_conditions[i];
    for (const auto& [tag, tex] : {std::pair<const char*, const TextureAtlas*>{"seed", &run.attack.t0},
                                   std::pair<const char*, const TextureAtlas*>{"adv", &run.attack.t_adv}}) {
      const Image img = render_view(ex.scene, ex.class_id, c, *tex);
      const AttentionMap map = attention(att, img, ex.class_id, ex.config.variant);
      const std::string stem = std::string(tag) + "_" + std::to_string(i);
      write_png(note(dir / ("render_" + stem + ".png")), img);
      write_png(note(dir / ("attention_" + stem + ".png")), attention_overlay(map, img));
    }
  }
  return written;
}

}  // namespace das
