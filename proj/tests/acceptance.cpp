// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are pinned
// below. Trained models are cached under the build tree.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "attention_oracle.hpp"
#include "das/evalharness.hpp"
#include "das/parallel.hpp"
#include "das/runconfig.hpp"
#include "das/scene.hpp"
#include "gradcheck_cases.hpp"
#include "loss_cases.hpp"
#include "model_cache.hpp"
#include "oracles.hpp"

using namespace das;
using namespace das::testing;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-3;
constexpr int kGradInstances = 20;
constexpr double kOracleRuntime = 60.0, kGradRuntime = 60.0;
constexpr int kComponentMaps = 1000;
constexpr int kDistractionMaps = 200;
constexpr double kDistractionTol = 1e-6;
constexpr int kSsimPairs = 20;
constexpr double kSsimTol = 1e-4;
constexpr double kMassInside = 0.6, kMassRenders = 0.8;
constexpr double kClosedFormTol = 1e-5;
constexpr double kSimilarityMargin = 0.1;
constexpr double kWhiteBoxDrop = 0.30;
constexpr double kAttackRuntime = 600.0;
constexpr double kTransferDrop = 0.15;
constexpr int kTransferModels = 2;
constexpr double kLeOnlySsim = 0.99;
constexpr double kLambdaSsimSlack = 0.02;

int g_failed = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  if (!ok) ++g_failed;
  std::cout << (ok ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << detail << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// --- 1 ----------------------------------------------------------------------
void gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<GradCase> cases = tensor_op_grad_cases();
  for (auto& c : loss_grad_cases()) cases.push_back(std::move(c));
  std::mt19937 rng(20240601);
  double worst = 0;
  std::string worst_name;
  for (const auto& c : cases)
    for (int i = 0; i < kGradInstances; ++i) {
      const double e = c.run(rng);
      if (!(e <= worst)) {
        worst = e;
        worst_name = c.name;
      }
    }
  const double secs = seconds_since(t0);
  report(1, "gradient correctness", worst < kGradTol && secs < kGradRuntime,
         std::to_string(cases.size()) + " ops/losses x " + std::to_string(kGradInstances) + " instances, worst rel err " +
             num(worst, 3) + " (" + worst_name + ") < " + num(kGradTol) + ", " + num(secs, 3) + "s < " +
             num(kGradRuntime) + "s");
}

// --- 2 ----------------------------------------------------------------------
void oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(77);
  int cc_ok = 0;
  std::bernoulli_distribution on(0.45);
  for (int t = 0; t < kComponentMaps; ++t) {
    BinaryMap m(16, 16);
    for (auto& b : m.bits) b = on(rng);
    const int conn = t % 2 ? 8 : 4;
    int k = 0;
    const auto oracle = flood_fill_labels(m, conn, &k);
    const ComponentSet cs = connected_components(m, Image(16, 16, 1, 1.0f), conn);
    cc_ok += cs.count == k && same_partition(cs.labels, oracle);
  }
  double d_worst = 0;
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int t = 0; t < kDistractionMaps; ++t) {
    std::vector<float> v(144);
    for (auto& x : v) x = u(rng) < 0.3f ? 0.0f : u(rng);
    const int conn = t % 2 ? 8 : 4;
    const double tau = 0.2 + 0.6 * u(rng);
    const double got = distraction_loss(AttentionMap{12, 12, v, false}, tau, conn);
    d_worst = std::max(d_worst, std::abs(got - brute_force_distraction(v, 12, 12, tau, conn)));
  }
  double s_worst = 0;
  std::normal_distribution<float> noise(0.0f, 0.08f);
  for (int t = 0; t < kSsimPairs; ++t) {
    const Image a = smooth_test_image(24 + t % 5, 20 + t % 3, t % 2 ? 3 : 1, rng);
    Image b = a;
    for (auto& x : b.pixels) x = std::clamp(x + noise(rng), 0.0f, 1.0f);
    s_worst = std::max(s_worst, std::abs(ssim(a, b) - brute_force_ssim(a, b)));
  }
  const double secs = seconds_since(t0);
  report(2, "oracle equivalence",
         cc_ok == kComponentMaps && d_worst < kDistractionTol && s_worst < kSsimTol && secs < kOracleRuntime,
         "components " + std::to_string(cc_ok) + "/" + std::to_string(kComponentMaps) + " maps, distraction worst " +
             num(d_worst, 3) + " < " + num(kDistractionTol) + ", ssim worst " + num(s_worst, 3) + " < " +
             num(kSsimTol) + ", " + num(secs, 3) + "s < " + num(kOracleRuntime) + "s");
}

// --- 3 ----------------------------------------------------------------------
void analytic_cases() {
  std::vector<float> v(100, 0.0f);
  v[37] = 1.0f;
  const double ld = distraction_loss(AttentionMap{10, 10, v, false}, 0.5, 4);
  const bool ok_d = ld == 1.0 / 99.0;

  const Tensor t0 = Tensor::full({3, 4, 4}, 0.5f);
  BinaryMap edge(4, 4);
  edge.at(2, 1) = 1;
  std::vector<float> off = t0.to_vector(), on = t0.to_vector();
  off[5] += 0.1f;            // channel 0, (1,1), not an edge
  on[16 + 2 * 4 + 1] += 0.1f;  // channel 1, (2,1), edge
  const double delta = static_cast<double>(0.5f + 0.1f) - 0.5;
  const double le_off = evasion_loss(Tensor(t0.shape(), off), t0, edge, 8.0);
  const double le_on = evasion_loss(Tensor(t0.shape(), on), t0, edge, 8.0);
  const bool ok_e = le_off == delta * delta && le_on == (9.0 * delta) * (9.0 * delta);

  Image checker(2, 2, 1);
  checker.pixels = {0.0f, 1.0f, 1.0f, 0.0f};
  const double ls = smooth_loss(checker);
  const bool ok_s = ls == 4.0;
  report(3, "analytic loss cases", ok_d && ok_e && ok_s,
         "single peak L_d " + num(ld, 10) + " (1/99), L_e off-edge " + num(le_off / (delta * delta), 10) +
             " d^2, on-edge " + num(le_on / (delta * delta), 10) + " d^2 (beta 8), checkerboard L_s " + num(ls, 10) +
             "; all exact");
}

// --- 4 ----------------------------------------------------------------------
void attention_sanity(const Experiment& ex) {
  std::vector<View> views;
  for (const auto& c : ex.eval_conditions)
    for (int k = 0; k < static_cast<int>(ex.scene.classes.size()); ++k) views.push_back({k, c, nullptr});
  bool ok = true;
  std::string detail;
  for (const auto& m : ex.models) {
    const auto s = attention_mass(m, ex.scene, views, ex.config.variant, kMassInside);
    ok = ok && s.fraction_at_least >= kMassRenders;
    detail += m.spec().name + " " + num(s.fraction_at_least, 3) + " (mean mass " + num(s.mean_mass, 3) + "), ";
  }
  std::mt19937 rng(99);
  double worst = 0;
  for (bool pooled : {false, true})
    for (auto variant : {AttentionVariant::gradcam, AttentionVariant::gradcam_pp})
      for (int t = 0; t < 10; ++t) {
        const Classifier m = random_model(one_layer_spec(pooled), rng);
        const Image img = random_image(8, rng);
        const AttentionMap map = attention(m, img, t % 3, variant);
        const auto expect = closed_form_map(m, img, t % 3, pooled, variant);
        for (std::size_t i = 0; i < expect.size(); ++i)
          worst = std::max(worst, static_cast<double>(std::abs(map.values[i] - expect[i])));
      }
  ok = ok && worst < kClosedFormTol;
  report(4, "attention sanity", ok,
         "share of " + std::to_string(views.size()) + " clean held-out renders with >= " + num(kMassInside) +
             " mass inside the foreground (need >= " + num(kMassRenders) + "): " + detail + "closed-form worst " +
             num(worst, 3) + " < " + num(kClosedFormTol));
}

// --- 5 ----------------------------------------------------------------------
void attention_similarity_check(const Experiment& ex) {
  std::vector<View> views;
  for (const auto& c : ex.eval_conditions)
    for (int k = 0; k < static_cast<int>(ex.scene.classes.size()); ++k) views.push_back({k, c, nullptr});
  const auto s = similarity_study(ex.models, ex.scene, views, ex.config.variant, 5);
  const double margin = s.mean_pairwise - s.shuffled_baseline;
  report(5, "attention similarity", margin >= kSimilarityMargin,
         "mean pairwise SSIM " + num(s.mean_pairwise) + " vs shuffled " + num(s.shuffled_baseline) + ", margin " +
             num(margin) + " >= " + num(kSimilarityMargin));
}

// --- 6, 7 -------------------------------------------------------------------
void attack_efficacy_and_transfer(const Experiment& ex) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cls = ex.scene.classes[ex.class_id];
  const AttackResult r = das_attack(cls.mesh, cls.base_texture, ex.seed_patch, ex.attack_conditions,
                                    ex.scene.backgrounds, ex.models[ex.attention_model], ex.config);
  const double secs = seconds_since(t0);
  const auto rows = transfer_matrix(ex.models, ex.attention_model, ex.scene, ex.class_id, r.t0, r.t_adv, ex.eval_conditions);
  const auto& wb = rows[ex.attention_model];
  report(6, "attack efficacy", wb.drop() >= kWhiteBoxDrop && secs <= kAttackRuntime,
         wb.model + " held-out accuracy " + num(wb.accuracy_seed, 3) + " (T_0) -> " + num(wb.accuracy_adv, 3) +
             " (T_adv), drop " + num(wb.drop(), 3) + " >= " + num(kWhiteBoxDrop) + ", attack " + num(secs, 3) +
             "s <= " + num(kAttackRuntime) + "s");
  int transferred = 0;
  std::string detail;
  for (const auto& row : rows) {
    if (row.white_box) continue;
    transferred += row.drop() >= kTransferDrop;
    detail += row.model + " " + num(row.accuracy_seed, 3) + "->" + num(row.accuracy_adv, 3) + ", ";
  }
  report(7, "transferability", transferred >= kTransferModels,
         std::to_string(transferred) + " of " + std::to_string(rows.size() - 1) + " black-box models drop >= " +
             num(kTransferDrop) + " (need " + std::to_string(kTransferModels) + "): " + detail.substr(0, detail.size() - 2));
}

// --- 8 ----------------------------------------------------------------------
void loss_ablation(const Experiment& ex) {
  const auto rows = ablate_losses(ex);
  const auto& d = rows[0];
  const auto& e = rows[1];
  const auto& de = rows[2];
  const bool order = d.mean_accuracy <= de.mean_accuracy && de.mean_accuracy <= e.mean_accuracy;
  report(8, "ablation ordering", order && e.mean_ssim >= kLeOnlySsim,
         "mean accuracy L_d " + num(d.mean_accuracy, 3) + " <= L_d+lambda*L_e " + num(de.mean_accuracy, 3) +
             " <= L_e " + num(e.mean_accuracy, 3) + "; L_e-only SSIM " + num(e.mean_ssim) + " >= " + num(kLeOnlySsim));
}

// --- 9 ----------------------------------------------------------------------
void lambda_sweep(const Experiment& ex) {
  const std::vector<double> lambdas{1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  const auto rows = ablate_lambda(ex, lambdas);
  bool mono = true;
  std::string ssims, accs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].mean_ssim < rows[i - 1].mean_ssim - kLambdaSsimSlack) mono = false;
    ssims += (i ? ", " : "") + num(rows[i].mean_ssim);
    accs += (i ? ", " : "") + num(rows[i].mean_accuracy, 3);
  }
  const bool acc_ok = rows.back().mean_accuracy >= rows.front().mean_accuracy;
  report(9, "lambda sweep", mono && acc_ok,
         "SSIM [" + ssims + "] non-decreasing within " + num(kLambdaSsimSlack) + "; accuracy [" + accs +
             "], last >= first");
}

// --- 10 ---------------------------------------------------------------------
void determinism(const RunConfig& cfg, const fs::path& work) {
  nlohmann::json j = cfg.to_json();
  const fs::path config = work / "determinism.json";
  std::ofstream(config) << j.dump(2);
  auto run = [&](const std::string& name, const std::string& extra) {
    const fs::path out = work / name;
    fs::remove_all(out);
    const std::string cmd = std::string("\"") + DAS_CLI_PATH + "\" --config \"" + config.string() + "\" attack --out \"" +
                            out.string() + "\" " + extra + " > \"" + (work / (name + ".log")).string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return std::make_pair(rc, out);
  };
  const auto a = run("det_a", "--threads 1");
  const auto b = run("det_b", "--threads 1");
  const auto c = run("det_c", "--threads 4");
  bool ok = a.first == 0 && b.first == 0 && c.first == 0;
  std::string detail = "exit codes " + std::to_string(a.first) + "/" + std::to_string(b.first) + "/" + std::to_string(c.first);
  if (ok) {
    const std::string ta = slurp(a.second / "t_adv.dast"), ca = slurp(a.second / "trace.csv");
    const bool same_b = ta == slurp(b.second / "t_adv.dast") && ca == slurp(b.second / "trace.csv");
    const bool same_c = ta == slurp(c.second / "t_adv.dast") && ca == slurp(c.second / "trace.csv");
    ok = same_b && same_c && !ta.empty() && !ca.empty();
    detail += ", repeat run " + std::string(same_b ? "byte-identical" : "DIFFERS") + ", --threads 4 run " +
              (same_c ? "byte-identical" : "DIFFERS") + " (t_adv.dast " + std::to_string(ta.size()) +
              " bytes, trace.csv " + std::to_string(ca.size()) + " bytes)";
  }
  report(10, "determinism", ok, detail);
}

}  // namespace

int main() {
  set_thread_count(1);
  const fs::path work = fs::path(DAS_ACCEPTANCE_DIR);
  fs::create_directories(work);

  gradient_correctness();
  oracle_equivalence();
  analytic_cases();

  const RunConfig cfg = end_to_end_config();
  const Scene scene = load_run_scene(cfg);
  const Experiment ex = make_experiment(cfg, cached_models(cfg, scene));

  attention_sanity(ex);
  attention_similarity_check(ex);
  attack_efficacy_and_transfer(ex);
  loss_ablation(ex);
  lambda_sweep(ex);
  determinism(cfg, work);

  std::cout << "acceptance: " << 10 - g_failed << "/10 criteria passed" << std::endl;
  return g_failed == 0 ? 0 : 1;
}
