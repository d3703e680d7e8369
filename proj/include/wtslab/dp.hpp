#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wtslab/matrix.hpp"
#include "wtslab/rng.hpp"

namespace wtslab {

/// Standard rule scales a row by min(1, C/||g||) so every row's norm is
/// bounded by C. kPaperMax is the literal max(1, C/||g||) printed in the
/// source description; it amplifies small gradients, voids the sensitivity
/// bound, and is kept selectable for demonstration only - the accountant
/// refuses to certify any run that used it.
enum class ClipRule { kStandardMin, kPaperMax };

struct DpConfig {
  double clip_norm = 1.0;        // C > 0
  double noise_multiplier = 1.1; // sigma >= 0
  double delta = 1e-5;           // in (0, 1)
  double sampling_rate = 0.01;   // q in (0, 1]
  uint64_t max_steps = 10000;
  ClipRule clip_rule = ClipRule::kStandardMin;
};

void validate_dp_config(const DpConfig& cfg, size_t n_train = 0);

/// Clips each row of a per-sample gradient matrix to Euclidean norm <= C.
/// Zero rows pass through untouched.
DenseMatrix dp_clip(const DenseMatrix& per_sample_grads, double clip_norm,
                    ClipRule rule = ClipRule::kStandardMin);

/// Renyi-DP accountant over a fixed order grid. rdp_accum is per-order
/// cumulative RDP; additive composition makes incremental and one-pass
/// accounting identical.
struct AccountantState {
  std::vector<double> orders;
  std::vector<double> rdp_accum;
  uint64_t steps_taken = 0;
  bool sensitivity_valid = true;

  // per-(q, sigma) memo so identical steps reuse one RDP evaluation
  double memo_q = -1.0, memo_sigma = -1.0;
  std::vector<double> memo_rdp;

  static AccountantState fresh();
  void add_step(double q, double sigma);

  /// Versioned text record (orders, accumulators, steps).
  std::string to_text() const;
  static AccountantState from_text(const std::string& text);
};

/// The fixed grid: {1.25, 1.5, 2, 3, ..., 64, 128, 256}.
std::vector<double> default_rdp_orders();

/// Per-step RDP of the Poisson-subsampled Gaussian mechanism at rate q and
/// noise multiplier sigma, evaluated in the log domain (closed-form binomial
/// series; integer and fractional orders handled separately).
std::vector<double> rdp_subsampled_gaussian(double q, double sigma,
                                            const std::vector<double>& orders);
double rdp_subsampled_gaussian_order(double q, double sigma, double alpha);

struct ParamVector;  // fwd (model.hpp)

/// One DP-SGD step: clip each per-sample gradient, sum, add N(0, (sigma*C)^2)
/// per coordinate to the sum, divide by the lot size, descend. Advances the
/// accountant by one subsampled-Gaussian step; throws BudgetError once
/// max_steps is reached so training stops with the epsilon guarantee intact.
void dp_sgd_step(std::vector<double>& params, const DenseMatrix& per_sample_grads,
                 const DpConfig& dp, size_t lot_size, double learning_rate, RngState& rng,
                 AccountantState& acct);

/// epsilon = min over orders of rdp(order) + log(1/delta)/(order-1).
/// Zero steps give 0; a voided sensitivity bound gives +infinity.
double accountant_epsilon(const AccountantState& acct, double delta);

}  // namespace wtslab
