#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wtslab/dp.hpp"
#include "wtslab/model.hpp"
#include "wtslab/trust.hpp"

namespace wtslab {

enum class LabelMode { kHard, kSoft };
enum class ThresholdMode { kClassWeighted, kFixed };
enum class Strategy { kNoTft, kWeakTft, kWeakWtsTft };
enum class AuxForward { kBoth, kSecondOnly };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& s);

struct WtsConfig {
  double alpha_max = 0.1;
  double warmup_frac = 0.2;
  LabelMode label_mode = LabelMode::kHard;
  ThresholdMode threshold_mode = ThresholdMode::kClassWeighted;
  double fixed_threshold = 0.5;
  Strategy strategy = Strategy::kWeakWtsTft;
  AuxForward aux_forward = AuxForward::kBoth;
  TrustConfig trust_weak;
  TrustConfig trust_wts;
};

/// Strategy invariants: NO_TFT carries no property at either level, WEAK_TFT
/// regularizes the weak level only, WEAK_WTS_TFT carries the same property at
/// both levels. PRIVACY forbids a nonzero alpha (free-generation task).
void validate_wts_config(const WtsConfig& cfg);

/// Weak-model predictions on D_WTS. Ground truth rides along for evaluation
/// only; reads go through an audited accessor so tests can prove no training
/// path touched it.
struct WeakLabelSet {
  LabeledBatch inputs;  // features/tokens, twins, protected attr; labels empty
  DenseMatrix weak_soft;
  std::vector<int> weak_hard;
  DenseMatrix weak_soft_adv;      // twin predictions (adversarial property)
  std::vector<int> weak_hard_adv;
  uint64_t weak_spec_hash = 0;
  TrustConfig weak_trust;

  void set_ground_truth(std::vector<int> gt) { gt_ = std::move(gt); }
  const std::vector<int>& ground_truth() const {
    ++gt_reads_;
    return gt_;
  }
  uint64_t ground_truth_reads() const { return gt_reads_; }
  size_t n() const { return weak_hard.size(); }

 private:
  std::vector<int> gt_;
  mutable uint64_t gt_reads_ = 0;
};

/// Queries the weak model noise-free on d_wts (regularization is a training
/// behavior, never an inference behavior). Throws a data-leak error when
/// d_wts shares sample ids with the weak model's training set.
WeakLabelSet generate_weak_labels(const ModelSpec& weak_spec, const ParamVector& weak_params,
                                  const LabeledBatch& d_wts, const TrustConfig& weak_trust,
                                  const std::vector<int64_t>* weak_train_ids = nullptr);

/// Linear warm-up 0 -> alpha_max over the first warmup_frac * total_steps
/// steps, constant afterwards.
double alpha_at(uint64_t step, uint64_t total_steps, const WtsConfig& cfg);

/// Per-class thresholds: class frequencies of the weak hard labels
/// (Laplace-smoothed) for CLASS_WEIGHTED, the fixed binary threshold for
/// FIXED.
std::vector<double> harden_thresholds(ThresholdMode mode, double fixed_t,
                                      const std::vector<int>& weak_hard, int num_classes);

/// Binary: class 1 iff p1 >= t1. Multiclass: argmax of p_j / t_j, ties to
/// the smallest index.
std::vector<int> harden(const DenseMatrix& probs, const std::vector<double>& t);

/// (1-alpha) * CE(student, weak label) + alpha * CE(student, hardened self),
/// per sample. alpha = 0 is the plain imitation loss.
LossResult wts_aux_loss(const ForwardOutput& student_out, const std::vector<int>& weak_hard,
                        const DenseMatrix& weak_soft, LabelMode mode,
                        const std::vector<int>& hardened_self, double alpha);

/// One composed training stage: imitation-or-ground-truth target, optional
/// auxiliary hardening term, and the property regularizer applied at this
/// stage. Drives weak training, student training and the ceiling alike.
struct StageSpec {
  TrustProperty property = TrustProperty::kNone;
  double lambda_fair = 0.0;
  double lambda_adv = 0.0;
  double lambda_ood = 0.0;  // noise variance
  double alpha = 0.0;       // auxiliary weight; 0 outside WTS-Aux
  LabelMode label_mode = LabelMode::kHard;
  AuxForward aux_forward = AuxForward::kBoth;
  std::vector<double> harden_t;      // per-class thresholds when alpha > 0
  std::optional<DpConfig> dp;        // PRIVACY stages train under DP-SGD
};

/// Hardened-self targets, precomputable so a finite-difference closure can
/// hold them fixed across probe evaluations.
struct StageTargets {
  std::vector<int> hard_self;
  std::vector<int> hard_self_adv;
};

StageTargets compute_harden_targets(const ModelSpec& spec, const ParamVector& params,
                                    const LabeledBatch& batch, const StageSpec& stage,
                                    RngState noise_rng);

struct StageEval {
  double mean_loss = 0.0;
  std::vector<double> per_sample_loss;
};

/// Evaluates the composed per-sample loss; optionally accumulates the
/// batch-mean gradient and/or per-sample gradient rows. Embedding noise is
/// replayable through noise_rng. Zero-weight terms are skipped outright so
/// the strategy-degeneration identities hold bit for bit.
StageEval stage_objective(const ModelSpec& spec, const ParamVector& params,
                          const LabeledBatch& batch, const StageSpec& stage, RngState noise_rng,
                          std::vector<double>* grad_mean = nullptr,
                          DenseMatrix* per_sample_grads = nullptr,
                          const StageTargets* frozen_targets = nullptr);

struct OptimizerConfig {
  double learning_rate = 0.1;
  int epochs = 10;
  size_t batch_size = 32;  // doubles as the DP lot size
};

struct TrainingHistory {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_alpha;
  std::vector<double> epoch_epsilon;       // privacy stages
  std::vector<uint64_t> epoch_param_hash;  // fnv over raw param bytes
  uint64_t steps = 0;
  bool budget_exhausted = false;
};

struct TrainResult {
  ParamVector params;
  TrainingHistory history;
  AccountantState acct;  // meaningful for privacy stages
};

/// Seeded minibatch SGD over the composed stage objective; DP-SGD when the
/// stage carries a privacy config. Alpha follows the warm-up schedule across
/// all optimizer steps. Deterministic in rng.
TrainResult train_model(const ModelSpec& spec, const ParamVector& init, const LabeledBatch& train,
                        StageSpec stage, const WtsConfig& wts_schedule, const OptimizerConfig& opt,
                        RngState rng);

enum class StudentRole { kNaive, kAux };

/// Builds the student training batch from weak labels (ground truth stays
/// quarantined; the audit counter is asserted unchanged) and trains the
/// strong model under the configured strategy.
TrainResult train_wts(const ModelSpec& strong_spec, const ParamVector& init,
                      const WeakLabelSet& weak_labels, const WtsConfig& cfg, StudentRole role,
                      const OptimizerConfig& opt, RngState rng);

/// Columnar text round-trip: split id, sample id, weak_soft row, weak_hard,
/// ground_truth, with a header carrying the weak spec hash and lambda.
std::string weak_labels_to_text(const WeakLabelSet& wl);

}  // namespace wtslab
