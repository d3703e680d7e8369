#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wtslab/matrix.hpp"
#include "wtslab/rng.hpp"

namespace wtslab {

enum class ModelFamily { kLinearTabular, kMlpTabular, kTextMlp, kTinyLm };

const char* family_name(ModelFamily f);
ModelFamily family_from_name(const std::string& s);

/// Architecture description. Parameter count is a pure function of the spec.
struct ModelSpec {
  ModelFamily family = ModelFamily::kLinearTabular;
  int input_dim = 0;    // tabular families
  int vocab_size = 0;   // text families; token id 0 is the reserved PAD
  int embed_dim = 0;    // text families
  int hidden_dim = 0;   // 0 for kLinearTabular
  int context_len = 0;  // kTinyLm
  int num_classes = 2;  // kTinyLm: equals vocab_size
};

void validate_spec(const ModelSpec& spec);
size_t param_count(const ModelSpec& spec);
uint64_t spec_hash(const ModelSpec& spec);

/// Flat parameter storage; spec_hash binds it to one ModelSpec.
struct ParamVector {
  std::vector<double> values;
  uint64_t spec_hash = 0;
};

/// Feature or token inputs with labels, optional protected attribute and
/// optional adversarial twins of identical shape.
struct LabeledBatch {
  DenseMatrix features;    // n x input_dim (tabular)
  std::vector<int> tokens; // row-major n x seq_len (text)
  size_t seq_len = 0;

  std::vector<int> labels;  // hard labels in {0..num_classes-1}
  DenseMatrix soft_labels;  // n x num_classes rows summing to 1 (optional)

  std::vector<int> protected_attr;  // empty or size n, values in {0,1}

  DenseMatrix adv_features;    // optional twins, same shape as features
  std::vector<int> adv_tokens; // optional twins, same shape as tokens

  // Targets for the twin inputs; empty means "same targets as the clean
  // inputs" (the ground-truth adversarial objective). Student stages fill
  // them with the weak model's twin predictions.
  std::vector<int> adv_labels;
  DenseMatrix adv_soft_labels;

  std::vector<int64_t> sample_ids;
  int split_tag = -1;

  size_t n() const;
  bool token_input() const { return seq_len > 0; }
  bool has_adv() const { return !adv_features.empty() || !adv_tokens.empty(); }
};

void validate_batch(const ModelSpec& spec, const LabeledBatch& batch);

/// Row subset of a batch (copies the selected rows of every present field).
LabeledBatch take_rows(const LabeledBatch& batch, const std::vector<size_t>& idx);

/// Row-wise concatenation; both batches must carry the same field layout.
LabeledBatch concat_rows(const LabeledBatch& a, const LabeledBatch& b);

struct ForwardOutput {
  DenseMatrix logits;  // n x num_classes
  DenseMatrix probs;   // softmax(logits), rows sum to 1
  DenseMatrix pooled;  // text families: pooled (or concatenated) embedding per sample
};

/// Activations retained for backprop. `pooled` carries the noise actually
/// applied, so a gradient computed from a cache corresponds exactly to the
/// forward pass that produced it.
struct ForwardCache {
  DenseMatrix pooled;
  DenseMatrix hidden;
  DenseMatrix logits;
  DenseMatrix probs;
  bool adv_inputs = false;
};

/// Glorot-uniform weights, zero biases; deterministic in rng.
ParamVector init_params(const ModelSpec& spec, RngState rng);

/// Forward pass. embed_noise_std > 0 adds N(0, std^2) noise to every token
/// embedding before pooling (text families only; a tabular family rejects
/// it). With std == 0 the rng is never consumed.
ForwardOutput forward(const ModelSpec& spec, const ParamVector& params, const LabeledBatch& batch,
                      double embed_noise_std = 0.0, RngState rng = {});

ForwardCache forward_cache(const ModelSpec& spec, const ParamVector& params,
                           const LabeledBatch& batch, bool use_adv_inputs,
                           double embed_noise_std, RngState rng);

enum class LossKind { kCeHard, kCeSoft, kFairnessTerm };

/// Per-sample upstream gradients w.r.t. logits for the chosen per-sample
/// loss (CE, soft CE, or the (a_i - a_bar) * p1 fairness penalty unit).
DenseMatrix loss_dlogits(LossKind kind, const ForwardCache& cache, const LabeledBatch& batch);

/// Per-sample loss values for the chosen kind.
std::vector<double> loss_values(LossKind kind, const ForwardCache& cache,
                                const LabeledBatch& batch);

/// Accumulates sum_i scale * dparams_i into grad (length param_count).
void backward_accumulate(const ModelSpec& spec, const ParamVector& params,
                         const LabeledBatch& batch, const ForwardCache& cache,
                         const DenseMatrix& dlogits, double scale, std::vector<double>& grad);

/// One dense gradient row per sample: row i is the gradient of that sample's
/// loss. Mean over rows equals the batch-mean-loss gradient by linearity.
DenseMatrix backward_per_sample(const ModelSpec& spec, const ParamVector& params,
                                const LabeledBatch& batch, const ForwardCache& cache,
                                const DenseMatrix& dlogits);

/// Adds per-sample gradient rows into an existing n x param_count matrix
/// (multi-pass objectives compose rows across forward passes).
void backward_per_sample_accumulate(const ModelSpec& spec, const ParamVector& params,
                                    const LabeledBatch& batch, const ForwardCache& cache,
                                    const DenseMatrix& dlogits, DenseMatrix& rows);

/// Spec'd convenience wrapper: analytic per-sample gradients of the chosen
/// loss, noise replayable through rng.
DenseMatrix per_sample_gradients(const ModelSpec& spec, const ParamVector& params,
                                 const LabeledBatch& batch, LossKind kind,
                                 double embed_noise_std = 0.0, RngState rng = {});

/// Gradient of one text sample's hard-label CE w.r.t. each token position's
/// embedding (seq_len x embed_dim). Drives the token-substitution attack.
DenseMatrix ce_token_embedding_grads(const ModelSpec& spec, const ParamVector& params,
                                     const std::vector<int>& tokens, int label);

// --- tiny LM surface ---

/// Next-token distribution for a context (left-padded with PAD id 0 when
/// shorter than context_len).
std::vector<double> lm_next_dist(const ModelSpec& spec, const ParamVector& params,
                                 const std::vector<int>& context);

/// Iterated argmax decoding, ties broken toward the smallest token id.
std::vector<int> lm_generate_greedy(const ModelSpec& spec, const ParamVector& params,
                                    const std::vector<int>& prefix, int k);

/// Next-token training windows for a set of sequences: one row per predicted
/// position, inputs are the left-padded preceding window, label is the token.
LabeledBatch lm_window_batch(const ModelSpec& spec, const std::vector<std::vector<int>>& seqs);

// --- serialization ---

/// Versioned binary layout: magic, spec fields, little-endian doubles.
std::string serialize_params(const ModelSpec& spec, const ParamVector& params);
ParamVector deserialize_params(const ModelSpec& expected_spec, const std::string& bytes);
void write_params_file(const std::string& path, const ModelSpec& spec, const ParamVector& params);
ParamVector read_params_file(const std::string& path, const ModelSpec& expected_spec);

/// Lossless text export, one value per line at full round-trip precision.
std::string params_to_text(const ModelSpec& spec, const ParamVector& params);
ParamVector params_from_text(const ModelSpec& expected_spec, const std::string& text);

}  // namespace wtslab
