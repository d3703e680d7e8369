#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wtslab/model.hpp"
#include "wtslab/trust.hpp"

namespace wtslab {

/// Per-model evaluation record. Fields that do not apply to a run's property
/// stay absent - never zero-filled.
struct EvalReport {
  std::optional<double> task_accuracy;
  std::optional<double> dpd;
  std::optional<double> eo_tpr_gap;
  std::optional<double> robust_accuracy;
  std::optional<double> extraction_rate_token;
  std::optional<double> extraction_rate_exact;
  std::optional<double> mia_auc;
  std::optional<double> epsilon;
  size_t n_eval = 0;
  uint64_t seed = 0;
};

/// Argmax predictions (noise-free forward, ties to the smallest class).
std::vector<int> predict(const ModelSpec& spec, const ParamVector& params,
                         const LabeledBatch& batch);

/// Fraction of correct argmax predictions on the batch as given; evaluating
/// on perturbed inputs is what makes this Robust Accuracy.
double robust_accuracy(const ModelSpec& spec, const ParamVector& params,
                       const LabeledBatch& perturbed_eval);

/// |P(pred=1 | a=1) - P(pred=1 | a=0)|. An empty group is an undefined
/// metric, reported as an error rather than 0.
double dpd(const std::vector<int>& predictions, const std::vector<int>& protected_attr);

/// |TPR(a=1) - TPR(a=0)|; each group needs at least one positive label.
double eo_tpr_gap(const std::vector<int>& predictions, const std::vector<int>& labels,
                  const std::vector<int>& protected_attr);

struct ExtractionProbe {
  std::vector<int> prefix;
  std::vector<int> suffix;  // k true continuation tokens
};

struct ExtractionRate {
  double token_fraction = 0.0;  // mean over probes of matched / k
  double exact_match = 0.0;     // fraction of probes fully reproduced
};

/// Greedy-decodes k tokens per probe and scores them against the true
/// suffixes. k must be uniform across probes.
ExtractionRate extraction_rate(const ModelSpec& lm_spec, const ParamVector& lm_params,
                               const std::vector<ExtractionProbe>& probes);

/// AUC of the loss-threshold membership attack: probability a random member
/// has strictly lower loss than a random nonmember, ties counting 1/2.
/// Sort-based; the O(n*m) pairwise loop lives in the oracle module.
double mia_auc(const std::vector<double>& member_losses,
               const std::vector<double>& nonmember_losses);

enum class TrendDirection { kLowerBetter, kHigherBetter };

struct TrendComparison {
  std::string better_role;
  std::string worse_role;
  double better_mean = 0.0;
  double worse_mean = 0.0;
  double gap = 0.0;        // improvement in the metric's good direction
  double pooled_se = 0.0;  // sqrt(se_a^2 + se_b^2)
  bool holds = false;      // gap > pooled_se
};

struct TrendResult {
  bool present = false;
  std::vector<TrendComparison> comparisons;
};

/// The weak-to-strong trend rule: every student (WTS-Naive, and WTS-Aux when
/// provided) must beat the weak model, and the ceiling must beat every
/// student, each by more than the pooled standard error of the difference.
/// Pass an empty aux list for privacy runs.
TrendResult wts_trend_values(const std::vector<double>& weak, const std::vector<double>& naive,
                             const std::vector<double>& aux, const std::vector<double>& ceiling,
                             TrendDirection direction);

/// Extracts the property's trust metric from per-seed EvalReports and runs
/// the rule above (DPD for fairness, RA for the robustness properties,
/// token extraction rate for privacy).
TrendResult wts_trend(const std::vector<EvalReport>& weak, const std::vector<EvalReport>& naive,
                      const std::vector<EvalReport>& aux, const std::vector<EvalReport>& ceiling,
                      TrustProperty property);

/// The trust metric driving wts_trend for a property, with its direction.
std::pair<std::optional<double>, TrendDirection> trust_metric(const EvalReport& r,
                                                              TrustProperty property);

}  // namespace wtslab
