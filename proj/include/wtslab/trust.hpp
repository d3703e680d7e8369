#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wtslab/dp.hpp"
#include "wtslab/model.hpp"

namespace wtslab {

enum class TrustProperty { kNone, kFairness, kAdversarial, kOod, kPrivacy };

const char* property_name(TrustProperty p);
TrustProperty property_from_name(const std::string& s);

/// Per-property regularization settings. Only the fields of the chosen
/// property are ever read; kNone reads nothing.
struct TrustConfig {
  TrustProperty property = TrustProperty::kNone;
  double lambda_fair = 0.0;  // >= 0
  double lambda_adv = 0.0;   // in [0, 1]
  double lambda_ood = 0.0;   // variance of the embedding noise, >= 0
  std::optional<DpConfig> dp;
};

void validate_trust_config(const TrustConfig& cfg);

struct LossResult {
  double mean = 0.0;
  std::vector<double> per_sample;
};

/// Mean CE plus the demographic-parity covariance penalty
/// lambda * (a_i - a_bar) * p1_i, where a_bar is the batch base rate of the
/// protected attribute and p1 the positive-class probability. Binary only.
LossResult fairness_loss(const ForwardOutput& out, const LabeledBatch& batch, double lambda_fair);

/// Per-sample convex combination (1-lambda)*CE(clean) + lambda*CE(twin).
LossResult adversarial_loss(const ForwardOutput& clean, const ForwardOutput& adv,
                            const LabeledBatch& batch, double lambda_adv);

/// CE through a forward pass with embedding noise of variance lambda_ood
/// (one fresh draw per call). lambda_ood == 0 reduces to plain CE bit for
/// bit, with the rng untouched.
LossResult ood_loss(const ModelSpec& spec, const ParamVector& params, const LabeledBatch& batch,
                    double lambda_ood, RngState rng);

}  // namespace wtslab
