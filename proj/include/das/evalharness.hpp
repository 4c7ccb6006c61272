#pragma once

// Accuracy, transfer and ablation studies around the attack, plus the report
// and artifact writers.

#include <filesystem>
#include <string>
#include <vector>

#include "das/attack.hpp"
#include "das/modelzoo.hpp"
#include "json.hpp"

namespace das {

/// Exact-match accuracy of every model on renders of `class_id` wearing `texture`.
/// When `attack_conditions` is given the evaluation is held-out and any overlap
/// with it is an error.
std::vector<double> evaluate(const std::vector<Classifier>& models, const Scene& scene, int class_id,
                             const TextureAtlas& texture, const std::vector<RenderCondition>& conditions,
                             const std::vector<RenderCondition>* attack_conditions = nullptr);

struct TransferRow {
  std::string model;
  bool white_box = false;
  double accuracy_seed = 0;  // T_0
  double accuracy_adv = 0;   // T_adv
  double drop() const { return accuracy_seed - accuracy_adv; }
};

std::vector<TransferRow> transfer_matrix(const std::vector<Classifier>& models, std::size_t attention_model,
                                         const Scene& scene, int class_id, const TextureAtlas& t0,
                                         const TextureAtlas& t_adv, const std::vector<RenderCondition>& conditions);

/// SSIM between the T_adv and T_0 renders of `class_id`, one value per condition.
std::vector<double> render_ssim(const Scene& scene, int class_id, const TextureAtlas& t0, const TextureAtlas& t_adv,
                                const std::vector<RenderCondition>& conditions);

struct View {
  int class_id = 0;
  RenderCondition condition;
  const TextureAtlas* texture = nullptr;  // null: the class base texture
};

struct AttentionMassStats {
  double threshold = 0.6;
  std::size_t renders = 0;
  double mean_mass = 0;          // mean fraction of attention inside the foreground
  double fraction_at_least = 0;  // share of renders with mass >= threshold
  double mean_distraction = 0;   // mean distraction loss of the maps
  std::vector<double> masses;    // per view, in view order
};

/// Attention of `model` for each view's own class, against the RenderMap foreground.
AttentionMassStats attention_mass(const Classifier& model, const Scene& scene, const std::vector<View>& views,
                                  AttentionVariant variant, double threshold = 0.6, double tau = 0.5,
                                  int connectivity = 4);

struct SimilarityStats {
  std::vector<std::vector<double>> mean_matrix;  // mean SSIM per model pair on the same image
  double mean_pairwise = 0;                      // off-diagonal mean
  double shuffled_baseline = 0;                  // same pairs, maps taken from different images
};

SimilarityStats similarity_study(const std::vector<Classifier>& models, const Scene& scene,
                                 const std::vector<View>& views, AttentionVariant variant, std::uint64_t seed);

/// Everything an attack run needs besides the config.
struct Experiment {
  Scene scene;
  int class_id = 0;
  Image seed_patch;
  std::vector<RenderCondition> attack_conditions;
  std::vector<RenderCondition> eval_conditions;  // held-out
  std::vector<Classifier> models;
  std::size_t attention_model = 0;
  AttackConfig config;

  /// Throws std::invalid_argument on an empty or overlapping condition set or a bad index.
  void validate() const;
};

struct ModelAccuracy {
  std::string model;
  bool white_box = false;
  double raw = 0, seed = 0, adv = 0;
  double delta_raw() const { return raw - adv; }
  double delta_seed() const { return seed - adv; }
};

struct EvalReport {
  std::vector<ModelAccuracy> accuracy;
  std::vector<RenderCondition> conditions;
  std::vector<double> ssim;  // per condition
  double mean_ssim = 0;
  AttentionMassStats attention_seed;  // attention model on T_0 renders
  AttentionMassStats attention_adv;   // attention model on T_adv renders
  nlohmann::json config;
  std::string started;
  std::string finished;

  /// Share of held-out conditions whose foreground attention mass is lower on T_adv than on T_0.
  double mass_decrease_fraction() const;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// model,white_box,raw,seed,adv,delta_seed
  std::string accuracy_csv() const;
};

nlohmann::json to_json(const AttackConfig& c);
/// Strict: unknown keys and wrongly typed values throw std::invalid_argument.
AttackConfig attack_config_from_json(const nlohmann::json& j, const AttackConfig& base = {});
nlohmann::json to_json(const RenderCondition& c);
RenderCondition condition_from_json(const nlohmann::json& j);

/// Evaluation of finished attack output on the held-out conditions.
EvalReport build_report(const Experiment& ex, const AttackResult& result);

struct RunResult {
  AttackResult attack;
  EvalReport report;
};

RunResult run_experiment(const Experiment& ex, const StepCallback& on_step = {});

struct AblationRow {
  std::string label;
  LossTerms terms;
  double lambda = 0;
  std::vector<double> accuracy;  // per model, T_adv on held-out conditions
  double mean_accuracy = 0;
  double mean_ssim = 0;
};

/// L_d only, L_e only and L_d + lambda L_e. The smoothness term keeps its configured state in every variant.
std::vector<AblationRow> ablate_losses(const Experiment& ex);
/// One attack per lambda; the list must be ascending.
std::vector<AblationRow> ablate_lambda(const Experiment& ex, const std::vector<double>& lambdas);
std::string ablation_csv(const std::vector<AblationRow>& rows, const std::vector<Classifier>& models);

/// step,epoch,distraction,evasion,smooth,total with round-trip precision.
std::string trace_csv(const std::vector<LossRecord>& trace, std::size_t steps_per_epoch);

/// Writes t0.png, t_adv.png, t_adv.dast, edge_mask.png, trace.csv, report.json, accuracy.csv and
/// attention overlays before and after the attack for the first `overlays` held-out conditions.
/// Returns the written paths.
std::vector<std::filesystem::path> dump_artifacts(const std::filesystem::path& dir, const Experiment& ex,
                                                  const RunResult& run, std::size_t overlays = 4);

}  // namespace das
