#include "wtslab/dp.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

#include "wtslab/common.hpp"
#include "wtslab/model.hpp"

namespace wtslab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// log(exp(a) - exp(b)) for a >= b.
double log_sub(double a, double b) {
  if (b == -kInf) return a;
  if (b > a) throw NumericError("accountant: log_sub with negative difference");
  if (a == b) return -kInf;
  return a + std::log1p(-std::exp(b - a));
}

// log(erfc(x)); asymptotic expansion once erfc underflows.
double log_erfc(double x) {
  if (x <= 8.0) return std::log(std::erfc(x));
  const double x2 = x * x;
  return -0.5 * std::log(M_PI) - std::log(x) - x2 - 0.5 / x2 + 0.625 / (x2 * x2) -
         37.0 / 24.0 / (x2 * x2 * x2) + 353.0 / 64.0 / (x2 * x2 * x2 * x2);
}

// Integer-order A_alpha of the subsampled Gaussian:
// sum_{k=0}^{alpha} C(alpha,k) (1-q)^{alpha-k} q^k exp((k^2-k)/(2 sigma^2)).
double log_a_int(double q, double sigma, int64_t alpha) {
  const double logq = std::log(q);
  const double log1mq = std::log1p(-q);
  double log_a = -kInf;
  for (int64_t k = 0; k <= alpha; ++k) {
    const double log_coef = std::lgamma(static_cast<double>(alpha) + 1.0) -
                            std::lgamma(static_cast<double>(k) + 1.0) -
                            std::lgamma(static_cast<double>(alpha - k) + 1.0);
    const double term = log_coef + k * logq + (alpha - k) * log1mq +
                        (static_cast<double>(k) * k - k) / (2.0 * sigma * sigma);
    log_a = log_add(log_a, term);
  }
  return log_a;
}

// Fractional-order A_alpha via the two-sided binomial series split at
// z0 = sigma^2 log(1/q - 1) + 1/2.
double log_a_frac(double q, double sigma, double alpha) {
  double log_a0 = -kInf, log_a1 = -kInf;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  const double logq = std::log(q);
  const double log1mq = std::log1p(-q);

  double log_coef = 0.0;  // log |binom(alpha, i)|
  int sign = 1;
  for (int i = 0;; ++i) {
    if (i > 0) {
      const double factor = alpha - (i - 1);
      log_coef += std::log(std::fabs(factor)) - std::log(static_cast<double>(i));
      if (factor < 0.0) sign = -sign;
    }
    const double j = alpha - i;
    const double log_t0 = log_coef + i * logq + j * log1mq;
    const double log_t1 = log_coef + j * logq + i * log1mq;
    const double log_e0 = std::log(0.5) + log_erfc((i - z0) / (std::sqrt(2.0) * sigma));
    const double log_e1 = std::log(0.5) + log_erfc((z0 - j) / (std::sqrt(2.0) * sigma));
    const double log_s0 = log_t0 + (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
    if (sign > 0) {
      log_a0 = log_add(log_a0, log_s0);
      log_a1 = log_add(log_a1, log_s1);
    } else {
      log_a0 = log_sub(log_a0, log_s0);
      log_a1 = log_sub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30.0) break;
    if (i > 10000) throw NumericError("accountant: fractional series failed to converge");
  }
  return log_add(log_a0, log_a1);
}

}  // namespace

void validate_dp_config(const DpConfig& cfg, size_t n_train) {
  if (cfg.clip_norm <= 0.0) throw ConfigError("dp: clip_norm must be > 0");
  if (cfg.noise_multiplier < 0.0) throw ConfigError("dp: noise_multiplier must be >= 0");
  if (cfg.delta <= 0.0 || cfg.delta >= 1.0) throw ConfigError("dp: delta must lie in (0,1)");
  if (cfg.sampling_rate <= 0.0 || cfg.sampling_rate > 1.0)
    throw ConfigError("dp: sampling_rate must lie in (0,1]");
  if (n_train > 0 && cfg.delta >= 1.0 / static_cast<double>(n_train))
    std::cerr << "[wtslab] warning: dp delta " << cfg.delta << " >= 1/N_train (N=" << n_train
              << ")\n";
}

DenseMatrix dp_clip(const DenseMatrix& per_sample_grads, double clip_norm, ClipRule rule) {
  if (clip_norm <= 0.0) throw ConfigError("dp_clip: clip_norm must be > 0");
  DenseMatrix out = per_sample_grads;
  for (size_t i = 0; i < out.rows; ++i) {
    double* g = out.row(i);
    double norm2 = 0.0;
    for (size_t j = 0; j < out.cols; ++j) norm2 += g[j] * g[j];
    const double norm = std::sqrt(norm2);
    if (norm == 0.0) continue;
    const double ratio = clip_norm / norm;
    const double factor = rule == ClipRule::kStandardMin ? std::min(1.0, ratio) : std::max(1.0, ratio);
    if (factor != 1.0)
      for (size_t j = 0; j < out.cols; ++j) g[j] *= factor;
  }
  return out;
}

std::vector<double> default_rdp_orders() {
  std::vector<double> orders = {1.25, 1.5};
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  orders.push_back(128.0);
  orders.push_back(256.0);
  return orders;
}

double rdp_subsampled_gaussian_order(double q, double sigma, double alpha) {
  if (q < 0.0 || q > 1.0) throw ConfigError("rdp: q must lie in [0,1]");
  if (alpha <= 1.0) throw ConfigError("rdp: order must exceed 1");
  if (q == 0.0) return 0.0;
  if (sigma == 0.0) return kInf;
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);  // plain Gaussian mechanism
  const bool integer = std::floor(alpha) == alpha;
  const double log_a = integer ? log_a_int(q, sigma, static_cast<int64_t>(alpha))
                               : log_a_frac(q, sigma, alpha);
  return std::max(0.0, log_a / (alpha - 1.0));
}

std::vector<double> rdp_subsampled_gaussian(double q, double sigma,
                                            const std::vector<double>& orders) {
  std::vector<double> out(orders.size());
  for (size_t i = 0; i < orders.size(); ++i)
    out[i] = rdp_subsampled_gaussian_order(q, sigma, orders[i]);
  return out;
}

AccountantState AccountantState::fresh() {
  AccountantState s;
  s.orders = default_rdp_orders();
  s.rdp_accum.assign(s.orders.size(), 0.0);
  return s;
}

void AccountantState::add_step(double q, double sigma) {
  if (memo_q != q || memo_sigma != sigma || memo_rdp.size() != orders.size()) {
    memo_rdp = rdp_subsampled_gaussian(q, sigma, orders);
    memo_q = q;
    memo_sigma = sigma;
  }
  for (size_t i = 0; i < orders.size(); ++i) rdp_accum[i] += memo_rdp[i];
  ++steps_taken;
}

std::string AccountantState::to_text() const {
  std::string out = "accountant v1\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "steps %llu valid %d\n",
                static_cast<unsigned long long>(steps_taken), sensitivity_valid ? 1 : 0);
  out += buf;
  for (size_t i = 0; i < orders.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", orders[i], rdp_accum[i]);
    out += buf;
  }
  return out;
}

AccountantState AccountantState::from_text(const std::string& text) {
  std::istringstream ss(text);
  std::string header;
  std::getline(ss, header);
  if (header != "accountant v1") throw IoError("accountant: unsupported record version");
  AccountantState s;
  std::string word;
  unsigned long long steps = 0;
  int valid = 1;
  ss >> word >> steps >> word >> valid;
  s.steps_taken = steps;
  s.sensitivity_valid = valid != 0;
  double order = 0.0, rdp = 0.0;
  while (ss >> order >> rdp) {
    s.orders.push_back(order);
    s.rdp_accum.push_back(rdp);
  }
  if (s.orders.empty()) throw IoError("accountant: empty order grid");
  return s;
}

void dp_sgd_step(std::vector<double>& params, const DenseMatrix& per_sample_grads,
                 const DpConfig& dp, size_t lot_size, double learning_rate, RngState& rng,
                 AccountantState& acct) {
  if (lot_size < 1) throw ConfigError("dp_sgd_step: lot size must be >= 1");
  if (acct.steps_taken >= dp.max_steps)
    throw BudgetError("dp_sgd_step: step budget exhausted at " + std::to_string(dp.max_steps));
  if (per_sample_grads.cols != params.size())
    throw NumericError("dp_sgd_step: gradient width mismatch");

  const DenseMatrix clipped = dp_clip(per_sample_grads, dp.clip_norm, dp.clip_rule);
  const size_t dim = params.size();
  std::vector<double> noisy_sum(dim, 0.0);
  for (size_t i = 0; i < clipped.rows; ++i) {
    const double* g = clipped.row(i);
    for (size_t j = 0; j < dim; ++j) noisy_sum[j] += g[j];
  }
  const double noise_std = dp.noise_multiplier * dp.clip_norm;
  if (noise_std > 0.0)
    for (size_t j = 0; j < dim; ++j) noisy_sum[j] += noise_std * rng.next_gaussian();

  const double inv_n = 1.0 / static_cast<double>(lot_size);
  for (size_t j = 0; j < dim; ++j) params[j] -= learning_rate * noisy_sum[j] * inv_n;

  acct.add_step(dp.sampling_rate, dp.noise_multiplier);
  if (dp.clip_rule == ClipRule::kPaperMax) acct.sensitivity_valid = false;
}

double accountant_epsilon(const AccountantState& acct, double delta) {
  if (delta <= 0.0 || delta >= 1.0) throw ConfigError("accountant_epsilon: delta must lie in (0,1)");
  if (acct.steps_taken == 0) return 0.0;
  if (!acct.sensitivity_valid) return kInf;
  double best = kInf;
  for (size_t i = 0; i < acct.orders.size(); ++i) {
    const double eps = acct.rdp_accum[i] + std::log(1.0 / delta) / (acct.orders[i] - 1.0);
    best = std::min(best, eps);
  }
  return best;
}

}  // namespace wtslab
