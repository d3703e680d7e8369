#include "wtslab/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include "wtslab/common.hpp"
#include "wtslab/dp.hpp"
#include "wtslab/grad_check.hpp"
#include "wtslab/wts.hpp"

namespace wtslab::oracle {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double rdp_integral(double q, double sigma, double alpha) {
  if (sigma <= 0.0) return kInf;
  if (q <= 0.0) return 0.0;
  // log integrand: log N(z; 0, sigma^2) + alpha * log((1-q) + q exp(w)),
  // w = (2z - 1)/(2 sigma^2), evaluated by trapezoid in the log domain.
  const double lo = -40.0 * sigma - 10.0;
  const double hi = alpha + 40.0 * sigma + 10.0;
  const double step = sigma / 50.0;
  const size_t points = static_cast<size_t>((hi - lo) / step) + 1;
  const double log_norm = -0.5 * std::log(2.0 * M_PI) - std::log(sigma);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);

  double log_sum = -kInf;
  for (size_t i = 0; i < points; ++i) {
    const double z = lo + static_cast<double>(i) * step;
    const double w = (2.0 * z - 1.0) / (2.0 * sigma * sigma);
    // log((1-q) + q e^w) via two-term logsumexp
    const double t1 = log_1mq;
    const double t2 = log_q + w;
    const double m = std::max(t1, t2);
    const double log_mix = m + std::log1p(std::exp(std::min(t1, t2) - m));
    double log_f = log_norm - z * z / (2.0 * sigma * sigma) + alpha * log_mix;
    // trapezoid end weights
    if (i == 0 || i + 1 == points) log_f += std::log(0.5);
    const double mm = std::max(log_sum, log_f);
    log_sum = mm + std::log1p(std::exp(std::min(log_sum, log_f) - mm));
  }
  const double log_a = log_sum + std::log(step);
  return std::max(0.0, log_a / (alpha - 1.0));
}

double epsilon_oracle(double q, double sigma, uint64_t steps, double delta) {
  if (delta <= 0.0 || delta >= 1.0) throw ConfigError("epsilon_oracle: invalid delta");
  if (steps == 0) return 0.0;
  std::vector<double> orders;
  for (double a = 1.25; a <= 64.0; a += 0.25) orders.push_back(a);
  for (double a = 65.0; a <= 256.0; a += 1.0) orders.push_back(a);
  double best = kInf;
  for (double a : orders) {
    const double rdp = rdp_integral(q, sigma, a) * static_cast<double>(steps);
    best = std::min(best, rdp + std::log(1.0 / delta) / (a - 1.0));
  }
  return best;
}

double dpd_loop(const std::vector<int>& preds, const std::vector<int>& prot) {
  double n1 = 0, n0 = 0, p1 = 0, p0 = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (prot[i] == 1) {
      n1 += 1;
      p1 += preds[i] == 1 ? 1 : 0;
    } else {
      n0 += 1;
      p0 += preds[i] == 1 ? 1 : 0;
    }
  }
  if (n1 == 0 || n0 == 0) throw DataError("dpd_loop: empty group");
  return std::fabs(p1 / n1 - p0 / n0);
}

double eo_tpr_gap_loop(const std::vector<int>& preds, const std::vector<int>& labels,
                       const std::vector<int>& prot) {
  double pos1 = 0, pos0 = 0, tp1 = 0, tp0 = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] != 1) continue;
    if (prot[i] == 1) {
      pos1 += 1;
      tp1 += preds[i] == 1 ? 1 : 0;
    } else {
      pos0 += 1;
      tp0 += preds[i] == 1 ? 1 : 0;
    }
  }
  if (pos1 == 0 || pos0 == 0) throw DataError("eo_tpr_gap_loop: group without positives");
  return std::fabs(tp1 / pos1 - tp0 / pos0);
}

double robust_accuracy_loop(const ModelSpec& spec, const ParamVector& params,
                            const LabeledBatch& batch) {
  size_t correct = 0;
  for (size_t i = 0; i < batch.n(); ++i) {
    const LabeledBatch one = take_rows(batch, {i});
    const ForwardOutput out = forward(spec, params, one, 0.0, {});
    int arg = 0;
    for (size_t j = 1; j < out.probs.cols; ++j)
      if (out.probs.at(0, j) > out.probs.at(0, arg)) arg = static_cast<int>(j);
    if (arg == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.n());
}

ExtractionRate extraction_rate_loop(const ModelSpec& spec, const ParamVector& params,
                                    const std::vector<ExtractionProbe>& probes) {
  ExtractionRate r;
  for (const auto& probe : probes) {
    std::vector<int> context = probe.prefix;
    size_t matched = 0;
    bool all = true;
    for (size_t j = 0; j < probe.suffix.size(); ++j) {
      const std::vector<double> dist = lm_next_dist(spec, params, context);
      int arg = 0;
      for (size_t v = 1; v < dist.size(); ++v)
        if (dist[v] > dist[arg]) arg = static_cast<int>(v);
      if (arg == probe.suffix[j])
        ++matched;
      else
        all = false;
      context.push_back(arg);
    }
    r.token_fraction += static_cast<double>(matched) / static_cast<double>(probe.suffix.size());
    if (all) r.exact_match += 1.0;
  }
  r.token_fraction /= static_cast<double>(probes.size());
  r.exact_match /= static_cast<double>(probes.size());
  return r;
}

double mia_auc_pairwise(const std::vector<double>& members,
                        const std::vector<double>& nonmembers) {
  double score = 0.0;
  for (double m : members)
    for (double nm : nonmembers) {
      if (m < nm)
        score += 1.0;
      else if (m == nm)
        score += 0.5;
    }
  return score / (static_cast<double>(members.size()) * static_cast<double>(nonmembers.size()));
}

// ---------------------------------------------------------------------------
// verify suite
// ---------------------------------------------------------------------------

namespace {

LabeledBatch random_batch(const ModelSpec& spec, size_t n, bool with_protected, bool with_adv,
                          RngState& rng) {
  LabeledBatch b;
  const bool text = spec.family == ModelFamily::kTextMlp || spec.family == ModelFamily::kTinyLm;
  if (text) {
    b.seq_len = spec.family == ModelFamily::kTinyLm ? static_cast<size_t>(spec.context_len) : 6;
    b.tokens.resize(n * b.seq_len);
    for (auto& t : b.tokens) t = static_cast<int>(rng.next_below(spec.vocab_size));
    if (with_adv) {
      b.adv_tokens.resize(b.tokens.size());
      for (auto& t : b.adv_tokens) t = static_cast<int>(rng.next_below(spec.vocab_size));
    }
  } else {
    b.features = DenseMatrix(n, static_cast<size_t>(spec.input_dim));
    for (auto& v : b.features.data) v = rng.next_gaussian();
    if (with_adv) {
      b.adv_features = b.features;
      for (auto& v : b.adv_features.data) v += 0.3 * rng.next_gaussian();
    }
  }
  b.labels.resize(n);
  for (auto& y : b.labels) y = static_cast<int>(rng.next_below(spec.num_classes));
  if (with_protected) {
    b.protected_attr.resize(n);
    for (auto& a : b.protected_attr) a = rng.next_unit() < 0.5 ? 0 : 1;
  }
  for (size_t i = 0; i < n; ++i) b.sample_ids.push_back(static_cast<int64_t>(i));
  return b;
}

bool gradient_check_instance(const ModelSpec& spec, const StageSpec& stage, size_t n,
                             RngState& rng, double tol, double* worst) {
  const ParamVector params = init_params(spec, rng_derive(rng, "init"));
  RngState brng = rng_derive(rng, "batch");
  const bool needs_adv = stage.property == TrustProperty::kAdversarial;
  const bool needs_prot = stage.property == TrustProperty::kFairness;
  LabeledBatch b = random_batch(spec, n, needs_prot, needs_adv, brng);
  rng.next_u64();  // decorrelate successive instances

  const RngState noise_rng = rng_derive(rng, "noise");
  const StageTargets targets = compute_harden_targets(spec, params, b, stage, noise_rng);
  std::vector<double> analytic(param_count(spec), 0.0);
  stage_objective(spec, params, b, stage, noise_rng, &analytic, nullptr, &targets);

  const LossFn loss_fn = [&](const std::vector<double>& values) {
    ParamVector probe{values, params.spec_hash};
    return stage_objective(spec, probe, b, stage, noise_rng, nullptr, nullptr, &targets)
        .mean_loss;
  };
  const std::vector<double> numeric = finite_diff_gradient(loss_fn, params.values);
  const double err = max_rel_error(analytic, numeric);
  if (worst != nullptr) *worst = std::max(*worst, err);
  return err <= tol;
}

struct Combo {
  std::string name;
  ModelSpec spec;
  StageSpec stage;
  size_t batch_n;
};

std::vector<Combo> gradient_combos() {
  ModelSpec lin{ModelFamily::kLinearTabular, 4, 0, 0, 0, 0, 2};
  ModelSpec mlp{ModelFamily::kMlpTabular, 4, 0, 0, 5, 0, 2};
  ModelSpec mlp3{ModelFamily::kMlpTabular, 4, 0, 0, 5, 0, 3};
  ModelSpec txt{ModelFamily::kTextMlp, 0, 12, 4, 5, 0, 2};
  ModelSpec lm{ModelFamily::kTinyLm, 0, 9, 3, 5, 4, 9};

  auto stage = [](TrustProperty p, double lf, double la, double lo, double alpha) {
    StageSpec s;
    s.property = p;
    s.lambda_fair = lf;
    s.lambda_adv = la;
    s.lambda_ood = lo;
    s.alpha = alpha;
    return s;
  };
  auto with_t = [](StageSpec s, int classes) {
    s.harden_t.assign(static_cast<size_t>(classes), 1.0 / classes);
    return s;
  };

  std::vector<Combo> combos;
  // plain CE across all families
  for (const auto& [n, sp] : std::vector<std::pair<std::string, ModelSpec>>{
           {"ce/linear", lin}, {"ce/mlp", mlp3}, {"ce/text", txt}, {"ce/lm", lm}})
    combos.push_back({n, sp, stage(TrustProperty::kNone, 0, 0, 0, 0), 5});
  // fairness objective (binary families)
  for (const auto& [n, sp] : std::vector<std::pair<std::string, ModelSpec>>{
           {"fair/linear", lin}, {"fair/mlp", mlp}, {"fair/text", txt}})
    combos.push_back({n, sp, stage(TrustProperty::kFairness, 1.3, 0, 0, 0), 6});
  // adversarial mixture
  for (const auto& [n, sp] : std::vector<std::pair<std::string, ModelSpec>>{
           {"adv/linear", lin}, {"adv/mlp", mlp}, {"adv/text", txt}, {"adv/lm", lm}})
    combos.push_back({n, sp, stage(TrustProperty::kAdversarial, 0, 0.3, 0, 0), 5});
  // OOD noisy forward with replayed noise
  for (const auto& [n, sp] :
       std::vector<std::pair<std::string, ModelSpec>>{{"ood/text", txt}, {"ood/lm", lm}})
    combos.push_back({n, sp, stage(TrustProperty::kOod, 0, 0, 0.04, 0), 5});
  // WTS-AUX imitation + hardened-self blend
  combos.push_back({"wts-aux/linear", lin, with_t(stage(TrustProperty::kNone, 0, 0, 0, 0.4), 2), 5});
  combos.push_back({"wts-aux/mlp", mlp, with_t(stage(TrustProperty::kNone, 0, 0, 0, 0.4), 2), 5});
  combos.push_back({"wts-aux/text", txt, with_t(stage(TrustProperty::kNone, 0, 0, 0, 0.4), 2), 5});
  combos.push_back({"wts-aux/lm", lm, with_t(stage(TrustProperty::kNone, 0, 0, 0, 0.4), 9), 5});
  // the three doubly-regularized stage objectives
  combos.push_back(
      {"stage-fair/mlp", mlp, with_t(stage(TrustProperty::kFairness, 1.1, 0, 0, 0.3), 2), 6});
  combos.push_back(
      {"stage-fair/text", txt, with_t(stage(TrustProperty::kFairness, 1.1, 0, 0, 0.3), 2), 6});
  combos.push_back(
      {"stage-ood/text", txt, with_t(stage(TrustProperty::kOod, 0, 0, 0.04, 0.3), 2), 5});
  combos.push_back(
      {"stage-ood/lm", lm, with_t(stage(TrustProperty::kOod, 0, 0, 0.04, 0.3), 9), 5});
  combos.push_back(
      {"stage-adv/mlp", mlp, with_t(stage(TrustProperty::kAdversarial, 0, 0.4, 0, 0.3), 2), 5});
  combos.push_back(
      {"stage-adv/text", txt, with_t(stage(TrustProperty::kAdversarial, 0, 0.4, 0, 0.3), 2), 5});
  // second-only aux forward variant of the OOD stage
  {
    StageSpec s = with_t(stage(TrustProperty::kOod, 0, 0, 0.04, 0.3), 2);
    s.aux_forward = AuxForward::kSecondOnly;
    combos.push_back({"stage-ood-second/text", txt, s, 5});
  }
  return combos;
}

}  // namespace

std::vector<CheckResult> verify_gradient_checks(int instances_per_combo) {
  std::vector<CheckResult> out;
  for (const Combo& combo : gradient_combos()) {
    RngState rng = rng_derive(RngState{2024, 0, 0}, "gradcheck/" + combo.name);
    double worst = 0.0;
    int failures = 0;
    for (int i = 0; i < instances_per_combo; ++i)
      if (!gradient_check_instance(combo.spec, combo.stage, combo.batch_n, rng, 1e-4, &worst))
        ++failures;
    char detail[96];
    std::snprintf(detail, sizeof(detail), "%d/%d instances, worst rel err %.2e", failures,
                  instances_per_combo, worst);
    out.push_back({"AC-1/" + combo.name, failures == 0, detail});
  }
  return out;
}

std::vector<CheckResult> verify_dp_mechanics() {
  std::vector<CheckResult> out;
  char detail[160];

  {  // clipping norm bound on 1e5 random rows
    RngState rng = rng_derive(RngState{7, 0, 0}, "clip");
    const size_t rows = 100000, dim = 8;
    DenseMatrix g(rows, dim);
    for (auto& v : g.data) v = 3.0 * rng.next_gaussian();
    const double c = 1.7;
    const DenseMatrix clipped = dp_clip(g, c);
    bool ok = true;
    double worst = 0.0;
    for (size_t i = 0; i < rows && ok; ++i) {
      double n2 = 0.0, orig2 = 0.0;
      for (size_t j = 0; j < dim; ++j) {
        n2 += clipped.at(i, j) * clipped.at(i, j);
        orig2 += g.at(i, j) * g.at(i, j);
      }
      const double norm = std::sqrt(n2);
      worst = std::max(worst, norm);
      if (norm > c + 1e-9) ok = false;
      if (std::sqrt(orig2) <= c &&
          std::memcmp(clipped.row(i), g.row(i), dim * sizeof(double)) != 0)
        ok = false;
    }
    std::snprintf(detail, sizeof(detail), "max row norm %.12f vs C=%.2f over %zu rows", worst, c,
                  rows);
    out.push_back({"AC-2/clip-bound", ok, detail});
  }

  {  // noise variance of dp_sgd_step at sigma=2, C=1, n=1
    const int reps = 100000;
    DpConfig dp;
    dp.clip_norm = 1.0;
    dp.noise_multiplier = 2.0;
    dp.max_steps = static_cast<uint64_t>(reps) + 1;
    RngState rng = rng_derive(RngState{11, 0, 0}, "dp-var");
    AccountantState acct = AccountantState::fresh();
    DenseMatrix grad(1, 1);
    grad.at(0, 0) = 0.5;  // norm below C so the clipped mean m = 0.5
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < reps; ++i) {
      std::vector<double> p{0.0};
      dp_sgd_step(p, grad, dp, 1, 1.0, rng, acct);
      const double noise = -p[0] - 0.5;  // p = -(m + Y) at lr 1
      sum += noise;
      sumsq += noise * noise;
    }
    const double var = sumsq / reps - (sum / reps) * (sum / reps);
    const double expected = 4.0;  // (sigma C / n)^2
    const bool ok = std::fabs(var - expected) / expected <= 0.03;
    std::snprintf(detail, sizeof(detail), "variance %.4f vs %.1f (tol 3%%)", var, expected);
    out.push_back({"AC-2/noise-variance", ok, detail});
  }

  {  // accountant vs the integral oracle
    AccountantState acct = AccountantState::fresh();
    const double q = 0.01, sigma = 1.1, delta = 1e-5;
    const uint64_t steps = 10000;
    const std::vector<double> step_rdp = rdp_subsampled_gaussian(q, sigma, acct.orders);
    for (size_t i = 0; i < acct.orders.size(); ++i)
      acct.rdp_accum[i] = step_rdp[i] * static_cast<double>(steps);
    acct.steps_taken = steps;
    const double eps_impl = accountant_epsilon(acct, delta);
    const double eps_orc = epsilon_oracle(q, sigma, steps, delta);
    const bool ok = std::fabs(eps_impl - eps_orc) / eps_orc <= 0.05;
    std::snprintf(detail, sizeof(detail), "epsilon %.4f vs oracle %.4f (tol 5%%)", eps_impl,
                  eps_orc);
    out.push_back({"AC-2/accountant-oracle", ok, detail});
  }

  {  // epsilon monotone in T, antitone in sigma over a 5x5 grid
    const std::vector<uint64_t> grid_t = {1000, 2000, 4000, 8000, 16000};
    const std::vector<double> grid_s = {0.7, 0.9, 1.1, 1.4, 1.8};
    const double q = 0.02, delta = 1e-5;
    std::vector<std::vector<double>> eps(grid_t.size(), std::vector<double>(grid_s.size()));
    AccountantState proto = AccountantState::fresh();
    for (size_t si = 0; si < grid_s.size(); ++si) {
      const std::vector<double> step_rdp = rdp_subsampled_gaussian(q, grid_s[si], proto.orders);
      for (size_t ti = 0; ti < grid_t.size(); ++ti) {
        AccountantState a = AccountantState::fresh();
        for (size_t i = 0; i < a.orders.size(); ++i)
          a.rdp_accum[i] = step_rdp[i] * static_cast<double>(grid_t[ti]);
        a.steps_taken = grid_t[ti];
        eps[ti][si] = accountant_epsilon(a, delta);
      }
    }
    bool ok = true;
    for (size_t si = 0; si < grid_s.size(); ++si)
      for (size_t ti = 1; ti < grid_t.size(); ++ti)
        if (eps[ti][si] <= eps[ti - 1][si]) ok = false;
    for (size_t ti = 0; ti < grid_t.size(); ++ti)
      for (size_t si = 1; si < grid_s.size(); ++si)
        if (eps[ti][si] >= eps[ti][si - 1]) ok = false;
    std::snprintf(detail, sizeof(detail), "eps(T,sigma) corner values %.3f..%.3f",
                  eps.front().back(), eps.back().front());
    out.push_back({"AC-2/monotonicity", ok, detail});
  }
  return out;
}

std::vector<CheckResult> verify_degeneration_identities() {
  std::vector<CheckResult> out;

  // A small shared fixture: biased tabular task, weak linear, strong MLP.
  const LabeledBatch data =
      gen_biased_tabular(240, 4, 0.5, 0.05, rng_derive(RngState{31, 0, 0}, "degen-data"));
  const SplitSpec split_spec{0.4, 0.4, 0.2, 31};
  const SplitIndices idx = split_indices(data.n(), split_spec);
  const LabeledBatch dw = split_take(data, idx.dw, kSplitDw);
  const LabeledBatch dwts = split_take(data, idx.dwts, kSplitDwts);

  const ModelSpec weak_spec{ModelFamily::kLinearTabular, 4, 0, 0, 0, 0, 2};
  const ModelSpec strong_spec{ModelFamily::kMlpTabular, 4, 0, 0, 16, 0, 2};
  const OptimizerConfig opt{0.2, 6, 32};
  const RngState weak_rng = rng_derive(RngState{31, 0, 0}, "weak-train");
  const RngState student_rng = rng_derive(RngState{31, 0, 0}, "student-train");
  const ParamVector weak_init = init_params(weak_spec, rng_derive(RngState{31, 0, 0}, "weak-init"));
  const ParamVector strong_init =
      init_params(strong_spec, rng_derive(RngState{31, 0, 0}, "strong-init"));

  auto run_chain = [&](Strategy strategy) {
    WtsConfig cfg;
    cfg.strategy = strategy;
    cfg.alpha_max = 0.2;
    cfg.warmup_frac = 0.2;
    if (strategy != Strategy::kNoTft) {
      cfg.trust_weak.property = TrustProperty::kFairness;
      cfg.trust_weak.lambda_fair = 0.0;
    }
    if (strategy == Strategy::kWeakWtsTft) {
      cfg.trust_wts.property = TrustProperty::kFairness;
      cfg.trust_wts.lambda_fair = 0.0;
    }
    StageSpec weak_stage;
    weak_stage.property = cfg.trust_weak.property;
    weak_stage.lambda_fair = cfg.trust_weak.lambda_fair;
    WtsConfig weak_schedule = cfg;
    weak_schedule.alpha_max = 0.0;
    TrainResult weak = train_model(weak_spec, weak_init, dw, weak_stage, weak_schedule, opt,
                                   weak_rng);
    WeakLabelSet labels =
        generate_weak_labels(weak_spec, weak.params, dwts, cfg.trust_weak, &dw.sample_ids);
    TrainResult student = train_wts(strong_spec, strong_init, labels, cfg, StudentRole::kAux, opt,
                                    student_rng);
    return std::pair<TrainResult, TrainResult>{std::move(weak), std::move(student)};
  };

  const auto no_tft = run_chain(Strategy::kNoTft);
  const auto weak_tft = run_chain(Strategy::kWeakTft);
  const auto both_tft = run_chain(Strategy::kWeakWtsTft);

  auto bitwise_equal = [](const TrainResult& a, const TrainResult& b) {
    return a.params.values.size() == b.params.values.size() &&
           std::memcmp(a.params.values.data(), b.params.values.data(),
                       a.params.values.size() * sizeof(double)) == 0 &&
           a.history.epoch_param_hash == b.history.epoch_param_hash &&
           a.history.epoch_loss == b.history.epoch_loss;
  };

  out.push_back({"AC-3/chain-no-vs-weak",
                 bitwise_equal(no_tft.first, weak_tft.first) &&
                     bitwise_equal(no_tft.second, weak_tft.second),
                 "NO_TFT vs WEAK_TFT(lambda=0), weak and student trajectories"});
  out.push_back({"AC-3/chain-weak-vs-both",
                 bitwise_equal(weak_tft.first, both_tft.first) &&
                     bitwise_equal(weak_tft.second, both_tft.second),
                 "WEAK_TFT(0) vs WEAK_WTS_TFT(0,0), weak and student trajectories"});

  {  // alpha=0 student == plain CE training on the weak hard labels
    WtsConfig cfg;
    cfg.strategy = Strategy::kNoTft;
    cfg.alpha_max = 0.2;
    StageSpec none_stage;
    WtsConfig none_schedule = cfg;
    none_schedule.alpha_max = 0.0;
    TrainResult weak = train_model(weak_spec, weak_init, dw, none_stage, none_schedule, opt,
                                   weak_rng);
    WeakLabelSet labels =
        generate_weak_labels(weak_spec, weak.params, dwts, cfg.trust_weak, &dw.sample_ids);
    TrainResult naive =
        train_wts(strong_spec, strong_init, labels, cfg, StudentRole::kNaive, opt, student_rng);

    LabeledBatch plain = labels.inputs;
    plain.labels = labels.weak_hard;
    TrainResult ce = train_model(strong_spec, strong_init, plain, none_stage, none_schedule, opt,
                                 student_rng);
    out.push_back({"AC-3/naive-equals-plain-ce", bitwise_equal(naive, ce),
                   "WTS-Naive vs direct CE on weak hard labels"});
  }
  return out;
}

std::vector<CheckResult> verify_metric_oracles() {
  std::vector<CheckResult> out;
  char detail[96];
  RngState rng = rng_derive(RngState{57, 0, 0}, "metric-oracles");

  {  // dpd + eo on random instances
    bool ok_dpd = true, ok_eo = true;
    for (int inst = 0; inst < 100; ++inst) {
      const size_t n = 20 + rng.next_below(181);
      std::vector<int> preds(n), labels(n), prot(n);
      for (size_t i = 0; i < n; ++i) {
        preds[i] = static_cast<int>(rng.next_below(2));
        labels[i] = static_cast<int>(rng.next_below(2));
        prot[i] = static_cast<int>(rng.next_below(2));
      }
      // force both groups and positives in both groups
      prot[0] = 0;
      prot[1] = 1;
      labels[0] = labels[1] = 1;
      if (dpd(preds, prot) != dpd_loop(preds, prot)) ok_dpd = false;
      if (eo_tpr_gap(preds, labels, prot) != eo_tpr_gap_loop(preds, labels, prot)) ok_eo = false;
    }
    out.push_back({"AC-4/dpd-oracle", ok_dpd, "100 random instances, exact"});
    out.push_back({"AC-4/eo-oracle", ok_eo, "100 random instances, exact"});
  }

  {  // robust accuracy vs per-sample loop
    bool ok = true;
    for (int inst = 0; inst < 100 && ok; ++inst) {
      ModelSpec spec{ModelFamily::kMlpTabular, 3, 0, 0, 4, 0, 2};
      const ParamVector params = init_params(spec, rng_derive(rng, "ra" + std::to_string(inst)));
      LabeledBatch b = random_batch(spec, 12 + rng.next_below(30), false, false, rng);
      if (robust_accuracy(spec, params, b) != robust_accuracy_loop(spec, params, b)) ok = false;
    }
    out.push_back({"AC-4/ra-oracle", ok, "100 random instances, exact"});
  }

  {  // extraction rate vs re-decoded loop
    bool ok = true;
    ModelSpec lm{ModelFamily::kTinyLm, 0, 12, 3, 6, 4, 12};
    for (int inst = 0; inst < 100 && ok; ++inst) {
      const ParamVector params = init_params(lm, rng_derive(rng, "ex" + std::to_string(inst)));
      std::vector<ExtractionProbe> probes(3 + rng.next_below(4));
      for (auto& p : probes) {
        p.prefix.resize(4);
        p.suffix.resize(5);
        for (auto& t : p.prefix) t = static_cast<int>(rng.next_below(12));
        for (auto& t : p.suffix) t = static_cast<int>(rng.next_below(12));
      }
      const ExtractionRate a = extraction_rate(lm, params, probes);
      const ExtractionRate b = extraction_rate_loop(lm, params, probes);
      if (a.token_fraction != b.token_fraction || a.exact_match != b.exact_match) ok = false;
    }
    out.push_back({"AC-4/extraction-oracle", ok, "100 random instances, exact"});
  }

  {  // mia auc vs pairwise loop
    bool ok = true;
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      std::vector<double> m(5 + rng.next_below(196)), nm(5 + rng.next_below(196));
      for (auto& v : m) v = std::round(rng.next_unit() * 20.0) / 10.0;  // coarse grid forces ties
      for (auto& v : nm) v = std::round(rng.next_unit() * 20.0) / 10.0;
      const double diff = std::fabs(mia_auc(m, nm) - mia_auc_pairwise(m, nm));
      worst = std::max(worst, diff);
      if (diff > 1e-12) ok = false;
    }
    std::snprintf(detail, sizeof(detail), "100 random instances, worst |diff| %.2e", worst);
    out.push_back({"AC-4/mia-auc-oracle", ok, detail});
  }
  return out;
}

std::vector<CheckResult> run_verify_suite() {
  std::vector<CheckResult> all;
  for (auto&& block :
       {verify_gradient_checks(), verify_dp_mechanics(), verify_degeneration_identities(),
        verify_metric_oracles()})
    all.insert(all.end(), block.begin(), block.end());
  return all;
}

}  // namespace wtslab::oracle
