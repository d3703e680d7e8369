#include "wtslab/wts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

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

int argmax_smallest(const double* v, size_t c) {
  int best = 0;
  for (size_t j = 1; j < c; ++j)
    if (v[j] > v[best]) best = static_cast<int>(j);
  return best;
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kNoTft: return "NO_TFT";
    case Strategy::kWeakTft: return "WEAK_TFT";
    case Strategy::kWeakWtsTft: return "WEAK_WTS_TFT";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& s) {
  if (s == "NO_TFT") return Strategy::kNoTft;
  if (s == "WEAK_TFT") return Strategy::kWeakTft;
  if (s == "WEAK_WTS_TFT") return Strategy::kWeakWtsTft;
  throw ConfigError("unknown strategy: " + s);
}

void validate_wts_config(const WtsConfig& cfg) {
  if (cfg.alpha_max < 0.0 || cfg.alpha_max > 1.0)
    throw ConfigError("wts: alpha_max must lie in [0,1]");
  if (cfg.warmup_frac < 0.0 || cfg.warmup_frac > 1.0)
    throw ConfigError("wts: warmup_frac must lie in [0,1]");
  validate_trust_config(cfg.trust_weak);
  validate_trust_config(cfg.trust_wts);
  switch (cfg.strategy) {
    case Strategy::kNoTft:
      if (cfg.trust_weak.property != TrustProperty::kNone ||
          cfg.trust_wts.property != TrustProperty::kNone)
        throw ConfigError("wts: NO_TFT carries no trust property at either level");
      break;
    case Strategy::kWeakTft:
      if (cfg.trust_wts.property != TrustProperty::kNone)
        throw ConfigError("wts: WEAK_TFT must leave the transfer level unregularized");
      break;
    case Strategy::kWeakWtsTft:
      if (cfg.trust_weak.property == TrustProperty::kNone ||
          cfg.trust_weak.property != cfg.trust_wts.property)
        throw ConfigError("wts: WEAK_WTS_TFT requires the same property at both levels");
      break;
  }
  const bool privacy = cfg.trust_weak.property == TrustProperty::kPrivacy ||
                       cfg.trust_wts.property == TrustProperty::kPrivacy;
  if (privacy && cfg.alpha_max > 0.0)
    throw ConfigError("wts: PRIVACY forbids a nonzero alpha_max");
}

WeakLabelSet generate_weak_labels(const ModelSpec& weak_spec, const ParamVector& weak_params,
                                  const LabeledBatch& d_wts, const TrustConfig& weak_trust,
                                  const std::vector<int64_t>* weak_train_ids) {
  if (weak_train_ids != nullptr && !d_wts.sample_ids.empty()) {
    std::unordered_set<int64_t> train(weak_train_ids->begin(), weak_train_ids->end());
    for (int64_t id : d_wts.sample_ids)
      if (train.count(id))
        throw DataError("generate_weak_labels: sample id " + std::to_string(id) +
                        " overlaps the weak training split");
  }

  WeakLabelSet wl;
  wl.weak_spec_hash = spec_hash(weak_spec);
  wl.weak_trust = weak_trust;

  // Labeling always runs the noise-free forward; regularization noise is a
  // training behavior, not an inference behavior.
  const ForwardOutput out = forward(weak_spec, weak_params, d_wts, 0.0, {});
  wl.weak_soft = out.probs;
  wl.weak_hard.resize(d_wts.n());
  for (size_t i = 0; i < d_wts.n(); ++i)
    wl.weak_hard[i] = argmax_smallest(out.probs.row(i), out.probs.cols);

  if (d_wts.has_adv()) {
    ForwardCache adv = forward_cache(weak_spec, weak_params, d_wts, true, 0.0, {});
    wl.weak_soft_adv = adv.probs;
    wl.weak_hard_adv.resize(d_wts.n());
    for (size_t i = 0; i < d_wts.n(); ++i)
      wl.weak_hard_adv[i] = argmax_smallest(adv.probs.row(i), adv.probs.cols);
  }

  wl.inputs = d_wts;
  wl.set_ground_truth(std::move(wl.inputs.labels));
  wl.inputs.labels.clear();
  wl.inputs.soft_labels = DenseMatrix();
  return wl;
}

double alpha_at(uint64_t step, uint64_t total_steps, const WtsConfig& cfg) {
  if (total_steps < 1) throw ConfigError("alpha_at: total_steps must be >= 1");
  if (step > total_steps) throw ConfigError("alpha_at: step exceeds total_steps");
  const double warm = cfg.warmup_frac * static_cast<double>(total_steps);
  if (warm <= 0.0) return cfg.alpha_max;
  if (static_cast<double>(step) >= warm) return cfg.alpha_max;
  return cfg.alpha_max * (static_cast<double>(step) / warm);
}

std::vector<double> harden_thresholds(ThresholdMode mode, double fixed_t,
                                      const std::vector<int>& weak_hard, int num_classes) {
  std::vector<double> t(static_cast<size_t>(num_classes));
  if (mode == ThresholdMode::kFixed) {
    if (fixed_t <= 0.0 || fixed_t >= 1.0)
      throw ConfigError("harden: fixed threshold must lie in (0,1)");
    if (num_classes == 2) {
      t[0] = 1.0 - fixed_t;
      t[1] = fixed_t;
    } else {
      std::fill(t.begin(), t.end(), 1.0 / num_classes);
    }
    return t;
  }
  // Laplace-smoothed class frequencies of the weak hard labels; balanced
  // classes give exactly 1/num_classes each.
  std::vector<size_t> counts(static_cast<size_t>(num_classes), 0);
  for (int y : weak_hard) {
    if (y < 0 || y >= num_classes) throw DataError("harden: weak label out of range");
    ++counts[static_cast<size_t>(y)];
  }
  const double denom = static_cast<double>(weak_hard.size() + static_cast<size_t>(num_classes));
  for (int j = 0; j < num_classes; ++j) t[static_cast<size_t>(j)] = (counts[j] + 1.0) / denom;
  return t;
}

std::vector<int> harden(const DenseMatrix& probs, const std::vector<double>& t) {
  if (t.size() != probs.cols) throw ConfigError("harden: threshold vector length mismatch");
  for (double tj : t)
    if (!(tj > 0.0)) throw ConfigError("harden: thresholds must be positive");
  std::vector<int> out(probs.rows);
  if (probs.cols == 2) {
    for (size_t i = 0; i < probs.rows; ++i) out[i] = probs.at(i, 1) >= t[1] ? 1 : 0;
    return out;
  }
  for (size_t i = 0; i < probs.rows; ++i) {
    const double* p = probs.row(i);
    int best = 0;
    double best_ratio = p[0] / t[0];
    for (size_t j = 1; j < probs.cols; ++j) {
      const double ratio = p[j] / t[j];
      if (ratio > best_ratio) {
        best = static_cast<int>(j);
        best_ratio = ratio;
      }
    }
    out[i] = best;
  }
  return out;
}

LossResult wts_aux_loss(const ForwardOutput& student_out, const std::vector<int>& weak_hard,
                        const DenseMatrix& weak_soft, LabelMode mode,
                        const std::vector<int>& hardened_self, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("wts_aux_loss: alpha must lie in [0,1]");
  const size_t n = student_out.logits.rows;
  const size_t c = student_out.logits.cols;
  LossResult r;
  r.per_sample.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double imitation = 0.0;
    if (alpha < 1.0) {
      if (mode == LabelMode::kHard) {
        imitation = stable_ce(student_out.logits.row(i), c, static_cast<size_t>(weak_hard[i]));
      } else {
        for (size_t j = 0; j < c; ++j) {
          const double q = weak_soft.at(i, j);
          if (q != 0.0) imitation += q * stable_ce(student_out.logits.row(i), c, j);
        }
      }
    }
    double aux = 0.0;
    if (alpha > 0.0)
      aux = stable_ce(student_out.logits.row(i), c, static_cast<size_t>(hardened_self[i]));
    r.per_sample[i] = alpha == 0.0   ? imitation
                      : alpha == 1.0 ? aux
                                     : (1.0 - alpha) * imitation + alpha * aux;
    r.mean += r.per_sample[i];
  }
  r.mean /= static_cast<double>(n);
  return r;
}

namespace {

// One forward pass of the composed stage objective with its term weights.
struct Pass {
  bool use_adv = false;
  double noise_std = 0.0;
  double w_imitation = 0.0;
  double w_aux = 0.0;
  double w_fair = 0.0;
};

std::vector<Pass> build_passes(const StageSpec& st) {
  const double a = st.alpha;
  std::vector<Pass> passes;
  switch (st.property) {
    case TrustProperty::kAdversarial: {
      const double lam = st.lambda_adv;
      passes.push_back({false, 0.0, (1.0 - lam) * (1.0 - a), (1.0 - lam) * a, 0.0});
      if (lam > 0.0) passes.push_back({true, 0.0, lam * (1.0 - a), lam * a, 0.0});
      break;
    }
    case TrustProperty::kOod: {
      const double std_dev = st.lambda_ood > 0.0 ? std::sqrt(st.lambda_ood) : 0.0;
      if (st.aux_forward == AuxForward::kBoth || a == 0.0) {
        passes.push_back({false, std_dev, 1.0 - a, a, 0.0});
      } else {
        passes.push_back({false, 0.0, 1.0 - a, 0.0, 0.0});
        passes.push_back({false, std_dev, 0.0, a, 0.0});
      }
      break;
    }
    case TrustProperty::kFairness:
      passes.push_back({false, 0.0, 1.0 - a, a, st.lambda_fair});
      break;
    case TrustProperty::kNone:
    case TrustProperty::kPrivacy:
      passes.push_back({false, 0.0, 1.0 - a, a, 0.0});
      break;
  }
  return passes;
}

}  // namespace

StageTargets compute_harden_targets(const ModelSpec& spec, const ParamVector& params,
                                    const LabeledBatch& batch, const StageSpec& stage,
                                    RngState noise_rng) {
  StageTargets t;
  if (stage.alpha <= 0.0) return t;
  const std::vector<Pass> passes = build_passes(stage);
  for (const Pass& pass : passes) {
    if (pass.w_aux == 0.0) continue;
    ForwardCache cache =
        forward_cache(spec, params, batch, pass.use_adv, pass.noise_std, noise_rng);
    std::vector<int> hard = harden(cache.probs, stage.harden_t);
    if (pass.use_adv)
      t.hard_self_adv = std::move(hard);
    else
      t.hard_self = std::move(hard);
  }
  return t;
}

StageEval stage_objective(const ModelSpec& spec, const ParamVector& params,
                          const LabeledBatch& batch, const StageSpec& stage, RngState noise_rng,
                          std::vector<double>* grad_mean, DenseMatrix* per_sample_grads,
                          const StageTargets* frozen_targets) {
  const size_t n = batch.n();
  const size_t c = static_cast<size_t>(spec.num_classes);
  StageEval ev;
  ev.per_sample_loss.assign(n, 0.0);
  if (grad_mean != nullptr && grad_mean->size() != param_count(spec))
    grad_mean->assign(param_count(spec), 0.0);
  if (per_sample_grads != nullptr && (per_sample_grads->rows != n ||
                                      per_sample_grads->cols != param_count(spec)))
    *per_sample_grads = DenseMatrix(n, param_count(spec));

  const std::vector<Pass> passes = build_passes(stage);
  for (const Pass& pass : passes) {
    if (pass.w_imitation == 0.0 && pass.w_aux == 0.0 && pass.w_fair == 0.0) continue;
    ForwardCache cache =
        forward_cache(spec, params, batch, pass.use_adv, pass.noise_std, noise_rng);

    // Targets for this pass.
    const std::vector<int>* hard_target = &batch.labels;
    const DenseMatrix* soft_target = &batch.soft_labels;
    if (pass.use_adv) {
      if (!batch.adv_labels.empty()) hard_target = &batch.adv_labels;
      if (!batch.adv_soft_labels.empty()) soft_target = &batch.adv_soft_labels;
    }

    std::vector<int> hardened;
    if (pass.w_aux != 0.0) {
      if (frozen_targets != nullptr) {
        hardened = pass.use_adv ? frozen_targets->hard_self_adv : frozen_targets->hard_self;
        if (hardened.size() != n) throw ConfigError("stage_objective: frozen targets missing");
      } else {
        hardened = harden(cache.probs, stage.harden_t);
      }
    }

    DenseMatrix dl(n, c);
    for (size_t i = 0; i < n; ++i) {
      const double* p = cache.probs.row(i);
      const double* z = cache.logits.row(i);
      double* d = dl.row(i);
      double loss_i = 0.0;
      if (pass.w_imitation != 0.0) {
        if (stage.label_mode == LabelMode::kHard) {
          const size_t y = static_cast<size_t>((*hard_target)[i]);
          for (size_t j = 0; j < c; ++j) d[j] += pass.w_imitation * p[j];
          d[y] -= pass.w_imitation;
          loss_i += pass.w_imitation * stable_ce(z, c, y);
        } else {
          const double* q = soft_target->row(i);
          for (size_t j = 0; j < c; ++j) {
            d[j] += pass.w_imitation * (p[j] - q[j]);
            if (q[j] != 0.0) loss_i += pass.w_imitation * q[j] * stable_ce(z, c, j);
          }
        }
      }
      if (pass.w_aux != 0.0) {
        const size_t y = static_cast<size_t>(hardened[i]);
        for (size_t j = 0; j < c; ++j) d[j] += pass.w_aux * p[j];
        d[y] -= pass.w_aux;
        loss_i += pass.w_aux * stable_ce(z, c, y);
      }
      ev.per_sample_loss[i] += loss_i;
    }

    if (pass.w_fair != 0.0) {
      if (batch.protected_attr.size() != n)
        throw ConfigError("stage_objective: fairness stage needs the protected attribute");
      if (c != 2) throw ConfigError("stage_objective: fairness stage requires binary output");
      double abar = 0.0;
      for (int a : batch.protected_attr) abar += a;
      abar /= static_cast<double>(n);
      for (size_t i = 0; i < n; ++i) {
        const double* p = cache.probs.row(i);
        const double w = pass.w_fair * (batch.protected_attr[i] - abar) * p[1];
        double* d = dl.row(i);
        for (size_t j = 0; j < c; ++j) d[j] += w * ((j == 1 ? 1.0 : 0.0) - p[j]);
        ev.per_sample_loss[i] += pass.w_fair * (batch.protected_attr[i] - abar) * p[1];
      }
    }

    if (grad_mean != nullptr)
      backward_accumulate(spec, params, batch, cache, dl, 1.0 / static_cast<double>(n),
                          *grad_mean);
    if (per_sample_grads != nullptr)
      backward_per_sample_accumulate(spec, params, batch, cache, dl, *per_sample_grads);
  }

  for (double v : ev.per_sample_loss) ev.mean_loss += v;
  ev.mean_loss /= static_cast<double>(n);
  return ev;
}

TrainResult train_model(const ModelSpec& spec, const ParamVector& init, const LabeledBatch& train,
                        StageSpec stage, const WtsConfig& wts_schedule, const OptimizerConfig& opt,
                        RngState rng) {
  validate_batch(spec, train);
  if (opt.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (opt.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");

  TrainResult res;
  res.params = init;
  res.acct = AccountantState::fresh();

  const size_t n = train.n();
  const size_t lot = std::min(opt.batch_size, n);
  const bool dp = stage.dp.has_value();
  // DP uses fixed-size lots (partial lots dropped); plain SGD consumes all rows.
  const size_t steps_per_epoch = dp ? n / lot : (n + lot - 1) / lot;
  if (steps_per_epoch == 0) throw ConfigError("train: lot size exceeds dataset");
  const uint64_t total_steps = static_cast<uint64_t>(opt.epochs) * steps_per_epoch;

  RngState shuffle_rng = rng_derive(rng, "shuffle");
  RngState noise_root = rng_derive(rng, "noise");
  RngState dp_rng = rng_derive(rng, "dp-noise");

  std::vector<double> grad(param_count(spec));
  DenseMatrix rows;
  uint64_t global_step = 0;
  bool stopped = false;

  for (int epoch = 0; epoch < opt.epochs && !stopped; ++epoch) {
    const std::vector<size_t> order = shuffled_indices(shuffle_rng, n);
    double epoch_loss = 0.0;
    size_t epoch_steps = 0;
    for (size_t s = 0; s < steps_per_epoch; ++s) {
      const size_t begin = s * lot;
      const size_t end = dp ? begin + lot : std::min(begin + lot, n);
      std::vector<size_t> idx(order.begin() + static_cast<long>(begin),
                              order.begin() + static_cast<long>(end));
      const LabeledBatch mb = take_rows(train, idx);

      stage.alpha = alpha_at(global_step, total_steps, wts_schedule);
      char label[32];
      std::snprintf(label, sizeof(label), "step/%llu", static_cast<unsigned long long>(global_step));
      RngState step_noise = rng_derive(noise_root, label);

      if (dp) {
        StageEval ev = stage_objective(spec, res.params, mb, stage, step_noise, nullptr, &rows);
        try {
          dp_sgd_step(res.params.values, rows, *stage.dp, lot, opt.learning_rate, dp_rng,
                      res.acct);
        } catch (const BudgetError&) {
          res.history.budget_exhausted = true;
          stopped = true;
          break;
        }
        epoch_loss += ev.mean_loss;
      } else {
        std::fill(grad.begin(), grad.end(), 0.0);
        StageEval ev = stage_objective(spec, res.params, mb, stage, step_noise, &grad, nullptr);
        for (size_t j = 0; j < grad.size(); ++j)
          res.params.values[j] -= opt.learning_rate * grad[j];
        epoch_loss += ev.mean_loss;
      }
      ++epoch_steps;
      ++global_step;
    }
    if (epoch_steps > 0) {
      res.history.epoch_loss.push_back(epoch_loss / static_cast<double>(epoch_steps));
      res.history.epoch_alpha.push_back(
          alpha_at(std::min(global_step, total_steps), total_steps, wts_schedule));
      if (dp) res.history.epoch_epsilon.push_back(accountant_epsilon(res.acct, stage.dp->delta));
      res.history.epoch_param_hash.push_back(fnv1a64(res.params.values));
    }
  }
  res.history.steps = global_step;
  if (!all_finite(res.params.values)) throw NumericError("train: non-finite parameters");
  return res;
}

TrainResult train_wts(const ModelSpec& strong_spec, const ParamVector& init,
                      const WeakLabelSet& weak_labels, const WtsConfig& cfg, StudentRole role,
                      const OptimizerConfig& opt, RngState rng) {
  validate_wts_config(cfg);
  if (weak_labels.n() == 0) throw DataError("train_wts: empty weak label set");
  const uint64_t audit_before = weak_labels.ground_truth_reads();

  LabeledBatch train = weak_labels.inputs;
  if (cfg.label_mode == LabelMode::kHard) {
    train.labels = weak_labels.weak_hard;
    if (!weak_labels.weak_hard_adv.empty()) train.adv_labels = weak_labels.weak_hard_adv;
  } else {
    train.soft_labels = weak_labels.weak_soft;
    if (!weak_labels.weak_soft_adv.empty()) train.adv_soft_labels = weak_labels.weak_soft_adv;
    // hardening thresholds still come from the hard argmax labels below
  }

  StageSpec stage;
  stage.property = cfg.trust_wts.property;
  stage.lambda_fair = cfg.trust_wts.lambda_fair;
  stage.lambda_adv = cfg.trust_wts.lambda_adv;
  stage.lambda_ood = cfg.trust_wts.lambda_ood;
  stage.label_mode = cfg.label_mode;
  stage.aux_forward = cfg.aux_forward;
  stage.harden_t = harden_thresholds(cfg.threshold_mode, cfg.fixed_threshold,
                                     weak_labels.weak_hard, strong_spec.num_classes);
  if (stage.property == TrustProperty::kPrivacy) {
    stage.dp = cfg.trust_wts.dp;
    stage.dp->sampling_rate =
        static_cast<double>(std::min(opt.batch_size, train.n())) / static_cast<double>(train.n());
  }

  WtsConfig schedule = cfg;
  if (role == StudentRole::kNaive) schedule.alpha_max = 0.0;

  TrainResult res = train_model(strong_spec, init, train, stage, schedule, opt, rng);
  if (weak_labels.ground_truth_reads() != audit_before)
    throw DataError("train_wts: ground-truth quarantine violated");
  return res;
}

std::string weak_labels_to_text(const WeakLabelSet& wl) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "# wtslab weak-labels v1 spec_hash=%llu property=%s\n",
                static_cast<unsigned long long>(wl.weak_spec_hash),
                property_name(wl.weak_trust.property));
  out += buf;
  out += "# columns: split_id sample_id weak_soft... weak_hard ground_truth\n";
  const std::vector<int>& gt = wl.ground_truth();
  for (size_t i = 0; i < wl.n(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d\t%lld", wl.inputs.split_tag,
                  static_cast<long long>(i < wl.inputs.sample_ids.size()
                                             ? wl.inputs.sample_ids[i]
                                             : static_cast<int64_t>(i)));
    out += buf;
    for (size_t j = 0; j < wl.weak_soft.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "\t%.17g", wl.weak_soft.at(i, j));
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "\t%d\t%d\n", wl.weak_hard[i],
                  i < gt.size() ? gt[i] : -1);
    out += buf;
  }
  return out;
}

}  // namespace wtslab
