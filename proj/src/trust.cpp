#include "wtslab/trust.hpp"

#include <cmath>

#include "wtslab/common.hpp"

namespace wtslab {
namespace {

double stable_ce(const double* logits, size_t c, size_t target) {
  double mx = logits[0];
  for (size_t j = 1; j < c; ++j) mx = std::max(mx, logits[j]);
  double sum = 0.0;
  for (size_t j = 0; j < c; ++j) sum += std::exp(logits[j] - mx);
  return std::log(sum) + mx - logits[target];
}

std::vector<double> hard_ce_per_sample(const ForwardOutput& out, const std::vector<int>& labels) {
  if (out.logits.rows != labels.size()) throw DataError("loss: label count mismatch");
  std::vector<double> ce(labels.size());
  for (size_t i = 0; i < labels.size(); ++i)
    ce[i] = stable_ce(out.logits.row(i), out.logits.cols, static_cast<size_t>(labels[i]));
  return ce;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

const char* property_name(TrustProperty p) {
  switch (p) {
    case TrustProperty::kNone: return "NONE";
    case TrustProperty::kFairness: return "FAIRNESS";
    case TrustProperty::kAdversarial: return "ADVERSARIAL";
    case TrustProperty::kOod: return "OOD";
    case TrustProperty::kPrivacy: return "PRIVACY";
  }
  return "?";
}

TrustProperty property_from_name(const std::string& s) {
  if (s == "NONE") return TrustProperty::kNone;
  if (s == "FAIRNESS") return TrustProperty::kFairness;
  if (s == "ADVERSARIAL") return TrustProperty::kAdversarial;
  if (s == "OOD") return TrustProperty::kOod;
  if (s == "PRIVACY") return TrustProperty::kPrivacy;
  throw ConfigError("unknown trust property: " + s);
}

void validate_trust_config(const TrustConfig& cfg) {
  switch (cfg.property) {
    case TrustProperty::kNone:
      break;
    case TrustProperty::kFairness:
      if (cfg.lambda_fair < 0.0) throw ConfigError("trust: lambda_fair must be >= 0");
      break;
    case TrustProperty::kAdversarial:
      if (cfg.lambda_adv < 0.0 || cfg.lambda_adv > 1.0)
        throw ConfigError("trust: lambda_adv must lie in [0,1]");
      break;
    case TrustProperty::kOod:
      if (cfg.lambda_ood < 0.0) throw ConfigError("trust: lambda_ood must be >= 0");
      break;
    case TrustProperty::kPrivacy:
      if (!cfg.dp.has_value()) throw ConfigError("trust: PRIVACY requires a dp config");
      validate_dp_config(*cfg.dp);
      break;
  }
}

LossResult fairness_loss(const ForwardOutput& out, const LabeledBatch& batch, double lambda_fair) {
  if (out.probs.cols != 2) throw ConfigError("fairness_loss: binary classification required");
  if (batch.protected_attr.size() != batch.n())
    throw ConfigError("fairness_loss: protected attribute missing");
  if (lambda_fair < 0.0) throw ConfigError("fairness_loss: lambda must be >= 0");

  LossResult r;
  r.per_sample = hard_ce_per_sample(out, batch.labels);
  double abar = 0.0;
  for (int a : batch.protected_attr) abar += a;
  abar /= static_cast<double>(batch.n());
  for (size_t i = 0; i < batch.n(); ++i)
    r.per_sample[i] += lambda_fair * (batch.protected_attr[i] - abar) * out.probs.at(i, 1);
  r.mean = mean_of(r.per_sample);
  return r;
}

LossResult adversarial_loss(const ForwardOutput& clean, const ForwardOutput& adv,
                            const LabeledBatch& batch, double lambda_adv) {
  if (lambda_adv < 0.0 || lambda_adv > 1.0)
    throw ConfigError("adversarial_loss: lambda must lie in [0,1]");
  if (!batch.has_adv()) throw DataError("adversarial_loss: adversarial twin missing");
  if (clean.logits.rows != adv.logits.rows) throw DataError("adversarial_loss: shape mismatch");

  const std::vector<double> ce_clean = hard_ce_per_sample(clean, batch.labels);
  const std::vector<double> ce_adv = hard_ce_per_sample(adv, batch.labels);
  LossResult r;
  r.per_sample.resize(ce_clean.size());
  for (size_t i = 0; i < ce_clean.size(); ++i)
    r.per_sample[i] = (1.0 - lambda_adv) * ce_clean[i] + lambda_adv * ce_adv[i];
  r.mean = mean_of(r.per_sample);
  return r;
}

LossResult ood_loss(const ModelSpec& spec, const ParamVector& params, const LabeledBatch& batch,
                    double lambda_ood, RngState rng) {
  if (spec.family != ModelFamily::kTextMlp && spec.family != ModelFamily::kTinyLm)
    throw ConfigError("ood_loss: embedding-bearing family required");
  if (lambda_ood < 0.0) throw ConfigError("ood_loss: lambda must be >= 0");
  const double noise_std = std::sqrt(lambda_ood);
  const ForwardOutput out = forward(spec, params, batch, noise_std, rng);
  LossResult r;
  r.per_sample = hard_ce_per_sample(out, batch.labels);
  r.mean = mean_of(r.per_sample);
  return r;
}

}  // namespace wtslab
