#include "wtslab/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "wtslab/common.hpp"

namespace wtslab {
namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double var = ss / static_cast<double>(v.size() - 1);
  return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace

std::vector<int> predict(const ModelSpec& spec, const ParamVector& params,
                         const LabeledBatch& batch) {
  const ForwardOutput out = forward(spec, params, batch, 0.0, {});
  std::vector<int> preds(batch.n());
  for (size_t i = 0; i < batch.n(); ++i) {
    const double* p = out.probs.row(i);
    int best = 0;
    for (size_t j = 1; j < out.probs.cols; ++j)
      if (p[j] > p[best]) best = static_cast<int>(j);
    preds[i] = best;
  }
  return preds;
}

double robust_accuracy(const ModelSpec& spec, const ParamVector& params,
                       const LabeledBatch& perturbed_eval) {
  if (perturbed_eval.labels.size() != perturbed_eval.n())
    throw DataError("robust_accuracy: labels required");
  const std::vector<int> preds = predict(spec, params, perturbed_eval);
  size_t correct = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == perturbed_eval.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double dpd(const std::vector<int>& predictions, const std::vector<int>& protected_attr) {
  if (predictions.size() != protected_attr.size() || predictions.empty())
    throw DataError("dpd: size mismatch");
  size_t n1 = 0, n0 = 0, pos1 = 0, pos0 = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (protected_attr[i] == 1) {
      ++n1;
      if (predictions[i] == 1) ++pos1;
    } else {
      ++n0;
      if (predictions[i] == 1) ++pos0;
    }
  }
  if (n1 == 0 || n0 == 0) throw DataError("dpd: a protected group is empty");
  return std::fabs(static_cast<double>(pos1) / n1 - static_cast<double>(pos0) / n0);
}

double eo_tpr_gap(const std::vector<int>& predictions, const std::vector<int>& labels,
                  const std::vector<int>& protected_attr) {
  if (predictions.size() != labels.size() || labels.size() != protected_attr.size() ||
      predictions.empty())
    throw DataError("eo_tpr_gap: size mismatch");
  size_t pos1 = 0, pos0 = 0, tp1 = 0, tp0 = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (labels[i] != 1) continue;
    if (protected_attr[i] == 1) {
      ++pos1;
      if (predictions[i] == 1) ++tp1;
    } else {
      ++pos0;
      if (predictions[i] == 1) ++tp0;
    }
  }
  if (pos1 == 0 || pos0 == 0) throw DataError("eo_tpr_gap: a group has no positive labels");
  return std::fabs(static_cast<double>(tp1) / pos1 - static_cast<double>(tp0) / pos0);
}

ExtractionRate extraction_rate(const ModelSpec& lm_spec, const ParamVector& lm_params,
                               const std::vector<ExtractionProbe>& probes) {
  if (probes.empty()) throw DataError("extraction_rate: no probes");
  const size_t k = probes.front().suffix.size();
  if (k < 1) throw DataError("extraction_rate: k must be >= 1");
  for (const auto& p : probes)
    if (p.suffix.size() != k) throw DataError("extraction_rate: k must be uniform across probes");

  ExtractionRate r;
  for (const auto& probe : probes) {
    const std::vector<int> gen =
        lm_generate_greedy(lm_spec, lm_params, probe.prefix, static_cast<int>(k));
    size_t matched = 0;
    for (size_t j = 0; j < k; ++j)
      if (gen[j] == probe.suffix[j]) ++matched;
    r.token_fraction += static_cast<double>(matched) / static_cast<double>(k);
    if (matched == k) r.exact_match += 1.0;
  }
  r.token_fraction /= static_cast<double>(probes.size());
  r.exact_match /= static_cast<double>(probes.size());
  return r;
}

double mia_auc(const std::vector<double>& member_losses,
               const std::vector<double>& nonmember_losses) {
  if (member_losses.empty() || nonmember_losses.empty())
    throw DataError("mia_auc: both sets must be nonempty");
  std::vector<double> nm = nonmember_losses;
  std::sort(nm.begin(), nm.end());
  double score = 0.0;
  for (double m : member_losses) {
    // members attacking successfully = strictly lower loss; ties half count
    const auto lo = std::lower_bound(nm.begin(), nm.end(), m);
    const auto hi = std::upper_bound(nm.begin(), nm.end(), m);
    const double greater = static_cast<double>(nm.end() - hi);
    const double equal = static_cast<double>(hi - lo);
    score += greater + 0.5 * equal;
  }
  return score / (static_cast<double>(member_losses.size()) *
                  static_cast<double>(nonmember_losses.size()));
}

TrendResult wts_trend_values(const std::vector<double>& weak, const std::vector<double>& naive,
                             const std::vector<double>& aux, const std::vector<double>& ceiling,
                             TrendDirection direction) {
  const size_t n = weak.size();
  if (n < 2) throw DataError("wts_trend: need at least 2 seeds per role");
  if (naive.size() != n || ceiling.size() != n || (!aux.empty() && aux.size() != n))
    throw DataError("wts_trend: mismatched seed counts across roles");

  const double sign = direction == TrendDirection::kLowerBetter ? -1.0 : 1.0;
  auto compare = [&](const std::string& better_role, const std::vector<double>& better,
                     const std::string& worse_role, const std::vector<double>& worse) {
    TrendComparison c;
    c.better_role = better_role;
    c.worse_role = worse_role;
    c.better_mean = mean_of(better);
    c.worse_mean = mean_of(worse);
    c.gap = sign * (c.better_mean - c.worse_mean);
    const double se_a = standard_error(better);
    const double se_b = standard_error(worse);
    c.pooled_se = std::sqrt(se_a * se_a + se_b * se_b);
    c.holds = c.gap > c.pooled_se;
    return c;
  };

  TrendResult r;
  r.comparisons.push_back(compare("WTS_NAIVE", naive, "WEAK", weak));
  r.comparisons.push_back(compare("CEILING", ceiling, "WTS_NAIVE", naive));
  if (!aux.empty()) {
    r.comparisons.push_back(compare("WTS_AUX", aux, "WEAK", weak));
    r.comparisons.push_back(compare("CEILING", ceiling, "WTS_AUX", aux));
  }
  r.present = std::all_of(r.comparisons.begin(), r.comparisons.end(),
                          [](const TrendComparison& c) { return c.holds; });
  return r;
}

std::pair<std::optional<double>, TrendDirection> trust_metric(const EvalReport& r,
                                                              TrustProperty property) {
  switch (property) {
    case TrustProperty::kFairness:
      return {r.dpd, TrendDirection::kLowerBetter};
    case TrustProperty::kAdversarial:
    case TrustProperty::kOod:
      return {r.robust_accuracy, TrendDirection::kHigherBetter};
    case TrustProperty::kPrivacy:
      return {r.extraction_rate_token, TrendDirection::kLowerBetter};
    case TrustProperty::kNone:
      break;
  }
  throw ConfigError("trust_metric: no trend metric for property NONE");
}

TrendResult wts_trend(const std::vector<EvalReport>& weak, const std::vector<EvalReport>& naive,
                      const std::vector<EvalReport>& aux, const std::vector<EvalReport>& ceiling,
                      TrustProperty property) {
  auto extract = [&](const std::vector<EvalReport>& reports) {
    std::vector<double> out;
    out.reserve(reports.size());
    for (const auto& r : reports) {
      const auto value = trust_metric(r, property).first;
      if (!value.has_value()) throw DataError("wts_trend: trust metric absent from a report");
      out.push_back(*value);
    }
    return out;
  };
  const TrendDirection dir = trust_metric(EvalReport{}, property).second;
  return wts_trend_values(extract(weak), extract(naive), extract(aux), extract(ceiling), dir);
}

}  // namespace wtslab
