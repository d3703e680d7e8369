#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wtslab/metrics.hpp"
#include "wtslab/model.hpp"
#include "wtslab/rng.hpp"

namespace wtslab {

// Split ids carried by every batch (LabeledBatch::split_tag).
inline constexpr int kSplitDw = 0;
inline constexpr int kSplitDwts = 1;
inline constexpr int kSplitDt = 2;

struct SplitSpec {
  double frac_dw = 0.4;
  double frac_dwts = 0.4;
  double frac_dt = 0.2;
  uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<size_t> dw, dwts, dt;
};

/// Seed-deterministic disjoint exhaustive partition of [0, n).
SplitIndices split_indices(size_t n, const SplitSpec& spec);

/// Partition that keeps equal group ids together (canary repetitions move as
/// one unit). Fractions apply to groups.
SplitIndices split_groups(const std::vector<int64_t>& group_ids, const SplitSpec& spec);

/// Row subset tagged with its split id.
LabeledBatch split_take(const LabeledBatch& data, const std::vector<size_t>& idx, int split_tag);

// --- biased tabular generator (fairness / weak-to-strong tasks) ---

/// Binary task over a Gaussian-cluster mixture. Feature 0 is the protected
/// attribute a ~ Bernoulli(1/2); the latent score is linear plus a mild
/// sin-product nonlinearity in the remaining features; labels blend toward a
/// with weight bias_strength and flip with probability label_noise.
LabeledBatch gen_biased_tabular(size_t n, int input_dim, double bias_strength, double label_noise,
                                RngState rng);

// --- sentiment text generator (OOD / adversarial tasks) ---

/// Token-id pools. Strong cues decide the label by majority; shifted ids are
/// reserved style-transfer synonyms that never appear in generated data;
/// weak cues carry a statistical tilt toward the label and survive the
/// style shift.
struct TextPools {
  std::vector<int> positive, negative;
  std::vector<int> shifted_positive, shifted_negative;
  std::vector<int> weak_positive, weak_negative;
  std::vector<int> neutral;
};

struct TextDataset {
  LabeledBatch batch;
  TextPools pools;
  int vocab_size = 0;
};

/// Majority polarity of the strong cue tokens; -1 when tied or cueless.
int majority_cue_label(const std::vector<int>& tokens, const TextPools& pools);

TextDataset gen_sentiment_text(size_t n, int vocab_size, size_t seq_len, RngState rng);

/// Cue id -> shifted synonym id, polarity preserving by construction.
std::vector<std::pair<int, int>> default_substitution_table(const TextPools& pools);

/// Substitutes a shift_rate fraction of cue-token occurrences with their
/// shifted synonyms. Labels are untouched; shift_rate 0 is the identity.
LabeledBatch apply_style_shift(const LabeledBatch& data, const TextPools& pools,
                               const std::vector<std::pair<int, int>>& table, double shift_rate,
                               RngState rng);

// --- gradient-guided token substitution (adversarial twins) ---

/// Greedy first-order attack: up to flip_budget positions per sample are
/// replaced by the pool candidate maximizing gradient-of-loss x
/// embedding-difference, restricted so the majority-cue label is preserved.
/// Returns the twin token matrix (same shape as data.tokens).
std::vector<int> gen_adversarial_twins(const ModelSpec& spec, const ParamVector& params,
                                       const LabeledBatch& data, int flip_budget,
                                       const TextPools& pools);

// --- canary corpus (privacy task) ---

struct Canary {
  std::vector<int> prefix;
  std::vector<int> secret;  // k tokens, uniform random, absent from filler
  int repetitions = 1;
  int64_t group_id = 0;
};

struct CanaryCorpus {
  std::vector<std::vector<int>> sequences;  // filler + repeated canary copies
  std::vector<int64_t> group_ids;           // per sequence; copies share one
  std::vector<bool> is_canary;              // per sequence
  std::vector<Canary> canaries;
  int vocab_size = 0;
  int prefix_len = 0;
  int k = 0;
};

/// Filler follows a learnable modular-stride pattern (benign text is
/// predictable); canary secrets are uniform random strings verified absent
/// from filler. Each canary appears exactly `repetitions` times.
CanaryCorpus gen_canary_corpus(size_t n_filler, size_t n_canaries, int k, int repetitions,
                               int vocab_size, RngState rng);

bool contains_subsequence(const std::vector<int>& hay, const std::vector<int>& needle);

/// (prefix, secret) extraction probes for the canaries whose sequence
/// indices fall inside `sequence_idx` (pass all indices for the full set).
std::vector<ExtractionProbe> canary_probes(const CanaryCorpus& corpus,
                                           const std::vector<size_t>& sequence_idx);

// --- CSV ingestion (real-data escape hatch, Adult-shaped) ---

enum class ColumnRole { kNumeric, kCategorical, kLabel, kProtected };

using CsvSchema = std::vector<std::pair<std::string, ColumnRole>>;

/// Sidecar schema file: one "column_name,role" line per column.
CsvSchema load_csv_schema(const std::string& path);

/// Header row required. Numeric columns standardized with mean/std over
/// stats_rows (all rows when null); categoricals one-hot in sorted value
/// order; label and protected must be binary 0/1. Errors name row/column.
LabeledBatch ingest_tabular_csv(const std::string& path, const CsvSchema& schema,
                                const std::vector<size_t>* stats_rows = nullptr);

/// Columnar text export shared with WeakLabelSet for auditability.
std::string dataset_to_text(const LabeledBatch& data);

}  // namespace wtslab
