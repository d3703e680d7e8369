#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wtslab/data.hpp"
#include "wtslab/metrics.hpp"
#include "wtslab/model.hpp"
#include "wtslab/wts.hpp"

namespace wtslab {

enum class Role { kWeak, kWtsNaive, kWtsAux, kCeiling };
const char* role_name(Role r);
Role role_from_name(const std::string& s);

enum class TaskKind { kTabularBias, kTextOod, kTextAdv, kLmCanary, kCsv };
const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& s);

struct DataConfig {
  TaskKind task = TaskKind::kTabularBias;
  // tabular generator
  size_t n = 3000;
  int input_dim = 6;
  double bias_strength = 0.8;
  double label_noise = 0.05;
  // text generator
  int vocab_size = 64;
  size_t seq_len = 12;
  double eval_shift_rate = 1.0;  // OOD evaluation uses fully shifted data
  int flip_budget = 2;           // adversarial twin budget
  // canary corpus
  size_t n_filler = 48;
  size_t n_canaries = 4;
  int canary_k = 16;
  int repetitions = 8;
  int gen_prompt_extra = 8;  // secret tokens included in the generation prompt
  // csv escape hatch
  std::string csv_path;
  std::string schema_path;
};

/// One cell of the experimental grid.
struct RunConfig {
  std::string run_id = "run";
  TrustProperty property = TrustProperty::kFairness;
  Strategy strategy = Strategy::kWeakWtsTft;
  ModelSpec weak_spec;
  ModelSpec strong_spec;
  WtsConfig wts;  // carries trust_weak / trust_wts
  OptimizerConfig weak_opt;
  OptimizerConfig wts_opt;
  OptimizerConfig ceiling_opt;
  std::vector<double> ceiling_grid;
  DataConfig data;
  SplitSpec split;
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
  uint64_t root_seed = 0;
  int workers = 1;
};

/// Task-calibrated defaults for a (property, strategy) cell.
RunConfig default_config(TrustProperty property, Strategy strategy);
void validate_run_config(const RunConfig& cfg);

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);
/// Applies one "dotted.path=value" override; unknown keys are hard errors.
void apply_override(std::string& config_json, const std::string& assignment);
uint64_t config_fingerprint(const RunConfig& cfg);

struct HistorySummary {
  double final_loss = 0.0;
  uint64_t steps = 0;
  std::optional<double> epsilon;
  bool budget_exhausted = false;
  std::string accountant;  // versioned text record (privacy roles)
};

struct RunResult {
  std::string run_id;
  Role role = Role::kWeak;
  uint64_t seed = 0;
  uint64_t fingerprint = 0;
  EvalReport eval;
  HistorySummary history;
};

struct CeilingSelection {
  std::vector<double> grid;
  std::vector<double> task_metric;   // per grid point
  std::vector<double> trust_metric;  // per grid point
  TrendDirection trust_direction = TrendDirection::kLowerBetter;
  double chosen = 0.0;
};

struct StrategyOutput {
  std::vector<RunResult> results;
  CeilingSelection ceiling;
};

/// Full chain for one config: split, train weak per strategy, weak labels on
/// D_WTS, students, trade-off-selected ceiling, per-property evaluation.
/// One result per (role, seed); deterministic in cfg.root_seed.
StrategyOutput run_strategy(const RunConfig& cfg);

enum class SweepAxis { kLambdaWeak, kLambdaWts, kAlphaMax, kModelSize };
const char* sweep_axis_name(SweepAxis a);
SweepAxis sweep_axis_from_name(const std::string& s);

struct SweepValues {
  std::vector<double> numeric;                              // lambda / alpha axes
  std::vector<std::pair<ModelSpec, ModelSpec>> model_sizes; // MODEL_SIZE axis
};

struct SweepRow {
  std::string axis_label;
  double axis_value = 0.0;
  Role role = Role::kWeak;
  uint64_t seed = 0;
  EvalReport eval;
};

struct SweepOutput {
  std::vector<RunResult> results;
  std::vector<SweepRow> table;  // complete |values| x |roles| x |seeds| rows
  std::vector<CeilingSelection> ceilings;
};

/// Cartesian product of axis values with the config's seeds. The whole value
/// list is validated before any training starts.
SweepOutput run_sweep(const RunConfig& base, SweepAxis axis, const SweepValues& values);

// --- results store: newline-delimited self-describing records ---

struct Store {
  std::vector<RunResult> results;
  std::map<uint64_t, std::string> configs;  // fingerprint -> config json
  std::map<std::string, CeilingSelection> ceilings;  // per run_id
  std::optional<size_t> damaged_offset;  // byte offset of a corrupt record
};

/// Append-only persistence; an already-stored (fingerprint, role, seed) is
/// skipped with a notice unless force is set. A fingerprint that resolves to
/// a different config is an integrity error.
void persist(const std::vector<RunResult>& results, const RunConfig& cfg,
             const CeilingSelection& ceiling, const std::string& store_path, bool force = false);

/// Crash-tolerant loader: recovers every record before the first damaged one
/// and reports the damaged byte offset.
Store load_store(const std::string& store_path);

// --- report bundle ---

struct ReportBundle {
  std::string trend_matrix_text;     // strategy x property checkmark table
  std::string trend_matrix_json;    // machine-readable twin
  std::string role_table_csv;       // mean +/- std per run x role
  std::string tradeoff_csv;         // lambda vs metric columns per run
};

/// Read-only aggregation over the store; every referenced run needs >= 3
/// seeds per role or the report fails listing the deficient runs.
ReportBundle build_report(const Store& store, const std::vector<std::string>& run_ids);

}  // namespace wtslab
