#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wtslab/data.hpp"
#include "wtslab/metrics.hpp"
#include "wtslab/model.hpp"

// Independent verification routes. Everything here recomputes a quantity the
// library produces elsewhere, by a deliberately different method (quadrature
// instead of series, O(n^2) loops instead of sorting, literal re-derivation
// instead of shared helpers). The `verify` CLI verb and the acceptance suite
// both run on top of these.
namespace wtslab::oracle {

/// RDP of the subsampled Gaussian at one order, by direct log-domain
/// trapezoid quadrature of E_{z~N(0,s^2)} [ ((1-q) + q e^{(2z-1)/(2s^2)})^a ].
double rdp_integral(double q, double sigma, double alpha);

/// Epsilon from the integral RDP on a dense order grid (independent of the
/// accountant's grid and series evaluation).
double epsilon_oracle(double q, double sigma, uint64_t steps, double delta);

// Brute-force loop oracles for every counting metric and the AUC.
double dpd_loop(const std::vector<int>& preds, const std::vector<int>& prot);
double eo_tpr_gap_loop(const std::vector<int>& preds, const std::vector<int>& labels,
                       const std::vector<int>& prot);
double robust_accuracy_loop(const ModelSpec& spec, const ParamVector& params,
                            const LabeledBatch& batch);
ExtractionRate extraction_rate_loop(const ModelSpec& spec, const ParamVector& params,
                                    const std::vector<ExtractionProbe>& probes);
double mia_auc_pairwise(const std::vector<double>& members, const std::vector<double>& nonmembers);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// The built-in invariant suite behind the `verify` verb: gradient checks for
// every family x composed objective, DP mechanics against the oracles above,
// bitwise strategy-degeneration identities, and metric-oracle agreement.
std::vector<CheckResult> verify_gradient_checks(int instances_per_combo = 20);
std::vector<CheckResult> verify_dp_mechanics();
std::vector<CheckResult> verify_degeneration_identities();
std::vector<CheckResult> verify_metric_oracles();
std::vector<CheckResult> run_verify_suite();

}  // namespace wtslab::oracle
