#include "wtslab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wtslab/common.hpp"

namespace wtslab {
namespace {

struct Layout {
  size_t embed = 0;  // E: vocab x embed_dim
  size_t w1 = 0;     // first dense layer
  size_t b1 = 0;
  size_t w2 = 0;     // classification / vocab head
  size_t b2 = 0;
  size_t total = 0;
  // dense layer dims
  size_t in1 = 0, out1 = 0, in2 = 0, out2 = 0;
};

Layout layout_of(const ModelSpec& s) {
  Layout l;
  const size_t c = static_cast<size_t>(s.num_classes);
  switch (s.family) {
    case ModelFamily::kLinearTabular:
      l.in2 = static_cast<size_t>(s.input_dim);
      l.out2 = c;
      l.w2 = 0;
      l.b2 = l.in2 * l.out2;
      l.total = l.b2 + l.out2;
      break;
    case ModelFamily::kMlpTabular:
      l.in1 = static_cast<size_t>(s.input_dim);
      l.out1 = static_cast<size_t>(s.hidden_dim);
      l.in2 = l.out1;
      l.out2 = c;
      l.w1 = 0;
      l.b1 = l.in1 * l.out1;
      l.w2 = l.b1 + l.out1;
      l.b2 = l.w2 + l.in2 * l.out2;
      l.total = l.b2 + l.out2;
      break;
    case ModelFamily::kTextMlp:
      l.embed = 0;
      l.in1 = static_cast<size_t>(s.embed_dim);
      l.out1 = static_cast<size_t>(s.hidden_dim);
      l.in2 = l.out1;
      l.out2 = c;
      l.w1 = static_cast<size_t>(s.vocab_size) * static_cast<size_t>(s.embed_dim);
      l.b1 = l.w1 + l.in1 * l.out1;
      l.w2 = l.b1 + l.out1;
      l.b2 = l.w2 + l.in2 * l.out2;
      l.total = l.b2 + l.out2;
      break;
    case ModelFamily::kTinyLm:
      l.embed = 0;
      l.in1 = static_cast<size_t>(s.context_len) * static_cast<size_t>(s.embed_dim);
      l.out1 = static_cast<size_t>(s.hidden_dim);
      l.in2 = l.out1;
      l.out2 = static_cast<size_t>(s.vocab_size);
      l.w1 = static_cast<size_t>(s.vocab_size) * static_cast<size_t>(s.embed_dim);
      l.b1 = l.w1 + l.in1 * l.out1;
      l.w2 = l.b1 + l.out1;
      l.b2 = l.w2 + l.in2 * l.out2;
      l.total = l.b2 + l.out2;
      break;
  }
  return l;
}

void softmax_row(const double* logits, double* probs, size_t c) {
  double mx = logits[0];
  for (size_t j = 1; j < c; ++j) mx = std::max(mx, logits[j]);
  double sum = 0.0;
  for (size_t j = 0; j < c; ++j) {
    probs[j] = std::exp(logits[j] - mx);
    sum += probs[j];
  }
  for (size_t j = 0; j < c; ++j) probs[j] /= sum;
}

// Stable per-sample CE from logits: logsumexp(z) - z_target.
double ce_from_logits(const double* z, size_t c, size_t target) {
  double mx = z[0];
  for (size_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
  double sum = 0.0;
  for (size_t j = 0; j < c; ++j) sum += std::exp(z[j] - mx);
  return std::log(sum) + mx - z[target];
}

const int* token_source(const LabeledBatch& b, bool adv) {
  return adv ? b.adv_tokens.data() : b.tokens.data();
}

const DenseMatrix& feature_source(const LabeledBatch& b, bool adv) {
  return adv ? b.adv_features : b.features;
}

}  // namespace

const char* family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::kLinearTabular: return "LINEAR_TABULAR";
    case ModelFamily::kMlpTabular: return "MLP_TABULAR";
    case ModelFamily::kTextMlp: return "TEXT_MLP";
    case ModelFamily::kTinyLm: return "TINY_LM";
  }
  return "?";
}

ModelFamily family_from_name(const std::string& s) {
  if (s == "LINEAR_TABULAR") return ModelFamily::kLinearTabular;
  if (s == "MLP_TABULAR") return ModelFamily::kMlpTabular;
  if (s == "TEXT_MLP") return ModelFamily::kTextMlp;
  if (s == "TINY_LM") return ModelFamily::kTinyLm;
  throw ConfigError("unknown model family: " + s);
}

void validate_spec(const ModelSpec& s) {
  if (s.num_classes < 2) throw ConfigError("spec: num_classes must be >= 2");
  switch (s.family) {
    case ModelFamily::kLinearTabular:
      if (s.input_dim < 1) throw ConfigError("spec: input_dim must be >= 1");
      break;
    case ModelFamily::kMlpTabular:
      if (s.input_dim < 1 || s.hidden_dim < 1) throw ConfigError("spec: need input_dim and hidden_dim");
      break;
    case ModelFamily::kTextMlp:
      if (s.vocab_size < 2 || s.embed_dim < 1 || s.hidden_dim < 1)
        throw ConfigError("spec: need vocab_size, embed_dim, hidden_dim");
      break;
    case ModelFamily::kTinyLm:
      if (s.vocab_size < 2 || s.embed_dim < 1 || s.hidden_dim < 1 || s.context_len < 1)
        throw ConfigError("spec: need vocab_size, embed_dim, hidden_dim, context_len");
      if (s.num_classes != s.vocab_size)
        throw ConfigError("spec: TINY_LM num_classes must equal vocab_size");
      break;
  }
}

size_t param_count(const ModelSpec& s) {
  validate_spec(s);
  return layout_of(s).total;
}

uint64_t spec_hash(const ModelSpec& s) {
  uint64_t h = fnv1a64(family_name(s.family));
  const int fields[] = {s.input_dim, s.vocab_size, s.embed_dim, s.hidden_dim, s.context_len,
                        s.num_classes};
  h = fnv1a64(fields, sizeof(fields), h);
  return h;
}

size_t LabeledBatch::n() const {
  if (seq_len > 0) return tokens.size() / seq_len;
  return features.rows;
}

void validate_batch(const ModelSpec& spec, const LabeledBatch& batch) {
  const size_t n = batch.n();
  if (n == 0) throw DataError("batch: empty");
  const bool text = spec.family == ModelFamily::kTextMlp || spec.family == ModelFamily::kTinyLm;
  if (text) {
    if (batch.seq_len == 0 || batch.tokens.size() != n * batch.seq_len)
      throw DataError("batch: token matrix shape mismatch");
    for (int t : batch.tokens)
      if (t < 0 || t >= spec.vocab_size) throw DataError("batch: token id out of range");
    if (!batch.adv_tokens.empty()) {
      if (batch.adv_tokens.size() != batch.tokens.size())
        throw DataError("batch: adversarial twin shape mismatch");
      for (int t : batch.adv_tokens)
        if (t < 0 || t >= spec.vocab_size) throw DataError("batch: adversarial token id out of range");
    }
  } else {
    if (batch.features.rows != n || batch.features.cols != static_cast<size_t>(spec.input_dim))
      throw DataError("batch: feature matrix shape mismatch");
    if (!batch.adv_features.empty() &&
        (batch.adv_features.rows != n || batch.adv_features.cols != batch.features.cols))
      throw DataError("batch: adversarial twin shape mismatch");
  }
  if (!batch.labels.empty()) {
    if (batch.labels.size() != n) throw DataError("batch: label count mismatch");
    for (int y : batch.labels)
      if (y < 0 || y >= spec.num_classes) throw DataError("batch: label out of range");
  }
  if (!batch.soft_labels.empty()) {
    if (batch.soft_labels.rows != n ||
        batch.soft_labels.cols != static_cast<size_t>(spec.num_classes))
      throw DataError("batch: soft label shape mismatch");
    for (size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (size_t c = 0; c < batch.soft_labels.cols; ++c) s += batch.soft_labels.at(i, c);
      if (std::fabs(s - 1.0) > 1e-9) throw DataError("batch: soft label row does not sum to 1");
    }
  }
  if (!batch.protected_attr.empty() && batch.protected_attr.size() != n)
    throw DataError("batch: protected attribute count mismatch");
  if (!batch.adv_labels.empty() && batch.adv_labels.size() != n)
    throw DataError("batch: twin label count mismatch");
}

LabeledBatch take_rows(const LabeledBatch& b, const std::vector<size_t>& idx) {
  LabeledBatch out;
  out.seq_len = b.seq_len;
  out.split_tag = b.split_tag;
  auto take_mat = [&](const DenseMatrix& m) {
    DenseMatrix r;
    if (m.empty()) return r;
    r = DenseMatrix(idx.size(), m.cols);
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy(m.row(idx[i]), m.row(idx[i]) + m.cols, r.row(i));
    return r;
  };
  auto take_tokens = [&](const std::vector<int>& t) {
    std::vector<int> r;
    if (t.empty()) return r;
    r.resize(idx.size() * b.seq_len);
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy(t.begin() + static_cast<long>(idx[i] * b.seq_len),
                t.begin() + static_cast<long>((idx[i] + 1) * b.seq_len),
                r.begin() + static_cast<long>(i * b.seq_len));
    return r;
  };
  auto take_ints = [&](const std::vector<int>& v) {
    std::vector<int> r;
    if (v.empty()) return r;
    r.reserve(idx.size());
    for (size_t i : idx) r.push_back(v[i]);
    return r;
  };
  out.features = take_mat(b.features);
  out.tokens = take_tokens(b.tokens);
  out.labels = take_ints(b.labels);
  out.soft_labels = take_mat(b.soft_labels);
  out.protected_attr = take_ints(b.protected_attr);
  out.adv_features = take_mat(b.adv_features);
  out.adv_tokens = take_tokens(b.adv_tokens);
  out.adv_labels = take_ints(b.adv_labels);
  out.adv_soft_labels = take_mat(b.adv_soft_labels);
  if (!b.sample_ids.empty()) {
    out.sample_ids.reserve(idx.size());
    for (size_t i : idx) out.sample_ids.push_back(b.sample_ids[i]);
  }
  return out;
}

LabeledBatch concat_rows(const LabeledBatch& a, const LabeledBatch& b) {
  if (a.seq_len != b.seq_len || a.features.cols != b.features.cols)
    throw DataError("concat_rows: shape mismatch");
  LabeledBatch out = a;
  out.split_tag = -1;
  auto cat_mat = [](DenseMatrix& dst, const DenseMatrix& src) {
    if (dst.empty() != src.empty()) throw DataError("concat_rows: field layout mismatch");
    if (src.empty()) return;
    dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
    dst.rows += src.rows;
  };
  auto cat_vec = [](auto& dst, const auto& src) {
    if (dst.empty() != src.empty()) throw DataError("concat_rows: field layout mismatch");
    dst.insert(dst.end(), src.begin(), src.end());
  };
  cat_mat(out.features, b.features);
  cat_vec(out.tokens, b.tokens);
  cat_vec(out.labels, b.labels);
  cat_mat(out.soft_labels, b.soft_labels);
  cat_vec(out.protected_attr, b.protected_attr);
  cat_mat(out.adv_features, b.adv_features);
  cat_vec(out.adv_tokens, b.adv_tokens);
  cat_vec(out.adv_labels, b.adv_labels);
  cat_mat(out.adv_soft_labels, b.adv_soft_labels);
  cat_vec(out.sample_ids, b.sample_ids);
  return out;
}

ParamVector init_params(const ModelSpec& spec, RngState rng) {
  validate_spec(spec);
  const Layout l = layout_of(spec);
  ParamVector pv;
  pv.values.assign(l.total, 0.0);
  pv.spec_hash = spec_hash(spec);

  auto fill_uniform = [&](size_t off, size_t count, size_t fan_in, size_t fan_out) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (size_t i = 0; i < count; ++i) pv.values[off + i] = (2.0 * rng.next_unit() - 1.0) * s;
  };

  if (spec.family == ModelFamily::kTextMlp || spec.family == ModelFamily::kTinyLm) {
    fill_uniform(l.embed, static_cast<size_t>(spec.vocab_size) * spec.embed_dim,
                 static_cast<size_t>(spec.vocab_size), static_cast<size_t>(spec.embed_dim));
  }
  if (l.out1 > 0) fill_uniform(l.w1, l.in1 * l.out1, l.in1, l.out1);
  fill_uniform(l.w2, l.in2 * l.out2, l.in2, l.out2);
  // biases stay zero
  return pv;
}

ForwardCache forward_cache(const ModelSpec& spec, const ParamVector& params,
                           const LabeledBatch& batch, bool use_adv_inputs,
                           double embed_noise_std, RngState rng) {
  validate_spec(spec);
  validate_batch(spec, batch);
  if (params.values.size() != param_count(spec)) throw ConfigError("params: length mismatch");
  if (params.spec_hash != spec_hash(spec)) throw ConfigError("params: spec hash mismatch");
  if (use_adv_inputs && !batch.has_adv()) throw DataError("forward: adversarial twin missing");
  if (embed_noise_std < 0.0) throw ConfigError("forward: embed_noise_std must be >= 0");
  const bool text = spec.family == ModelFamily::kTextMlp || spec.family == ModelFamily::kTinyLm;
  if (embed_noise_std > 0.0 && !text)
    throw ConfigError("forward: embedding noise unsupported for tabular family");

  const Layout l = layout_of(spec);
  const size_t n = batch.n();
  const size_t c = l.out2;
  const double* p = params.values.data();

  ForwardCache cache;
  cache.adv_inputs = use_adv_inputs;
  cache.logits = DenseMatrix(n, c);

  // Input-side activations.
  const DenseMatrix* dense_in = nullptr;
  if (spec.family == ModelFamily::kTextMlp) {
    const size_t eb = static_cast<size_t>(spec.embed_dim);
    const size_t len = batch.seq_len;
    cache.pooled = DenseMatrix(n, eb);
    const int* toks = token_source(batch, use_adv_inputs);
    for (size_t i = 0; i < n; ++i) {
      double* out = cache.pooled.row(i);
      for (size_t j = 0; j < len; ++j) {
        const double* e = p + l.embed + static_cast<size_t>(toks[i * len + j]) * eb;
        for (size_t d = 0; d < eb; ++d) out[d] += e[d];
        if (embed_noise_std > 0.0) {
          for (size_t d = 0; d < eb; ++d) out[d] += embed_noise_std * rng.next_gaussian();
        }
      }
      const double inv = 1.0 / static_cast<double>(len);
      for (size_t d = 0; d < eb; ++d) out[d] *= inv;
    }
    dense_in = &cache.pooled;
  } else if (spec.family == ModelFamily::kTinyLm) {
    const size_t eb = static_cast<size_t>(spec.embed_dim);
    const size_t len = batch.seq_len;
    if (len != static_cast<size_t>(spec.context_len))
      throw DataError("forward: TINY_LM batch seq_len must equal context_len");
    cache.pooled = DenseMatrix(n, len * eb);
    const int* toks = token_source(batch, use_adv_inputs);
    for (size_t i = 0; i < n; ++i) {
      double* out = cache.pooled.row(i);
      for (size_t j = 0; j < len; ++j) {
        const double* e = p + l.embed + static_cast<size_t>(toks[i * len + j]) * eb;
        for (size_t d = 0; d < eb; ++d) out[j * eb + d] = e[d];
        if (embed_noise_std > 0.0) {
          for (size_t d = 0; d < eb; ++d) out[j * eb + d] += embed_noise_std * rng.next_gaussian();
        }
      }
    }
    dense_in = &cache.pooled;
  } else {
    dense_in = &feature_source(batch, use_adv_inputs);
  }

  // Hidden layer (absent for the linear family).
  const DenseMatrix* head_in = dense_in;
  if (l.out1 > 0) {
    cache.hidden = DenseMatrix(n, l.out1);
    for (size_t i = 0; i < n; ++i) {
      const double* x = dense_in->row(i);
      double* h = cache.hidden.row(i);
      for (size_t k = 0; k < l.out1; ++k) h[k] = p[l.b1 + k];
      for (size_t d = 0; d < l.in1; ++d) {
        const double xv = x[d];
        if (xv == 0.0) continue;
        const double* w = p + l.w1 + d * l.out1;
        for (size_t k = 0; k < l.out1; ++k) h[k] += xv * w[k];
      }
      for (size_t k = 0; k < l.out1; ++k) h[k] = std::tanh(h[k]);
    }
    head_in = &cache.hidden;
  }

  // Classification / vocab head.
  for (size_t i = 0; i < n; ++i) {
    const double* x = head_in->row(i);
    double* z = cache.logits.row(i);
    for (size_t j = 0; j < c; ++j) z[j] = p[l.b2 + j];
    for (size_t d = 0; d < l.in2; ++d) {
      const double xv = x[d];
      if (xv == 0.0) continue;
      const double* w = p + l.w2 + d * c;
      for (size_t j = 0; j < c; ++j) z[j] += xv * w[j];
    }
  }

  cache.probs = DenseMatrix(n, c);
  for (size_t i = 0; i < n; ++i) softmax_row(cache.logits.row(i), cache.probs.row(i), c);
  if (!all_finite(cache.probs)) throw NumericError("forward: non-finite probabilities");
  return cache;
}

ForwardOutput forward(const ModelSpec& spec, const ParamVector& params, const LabeledBatch& batch,
                      double embed_noise_std, RngState rng) {
  ForwardCache cache = forward_cache(spec, params, batch, false, embed_noise_std, rng);
  ForwardOutput out;
  out.logits = std::move(cache.logits);
  out.probs = std::move(cache.probs);
  const bool text = spec.family == ModelFamily::kTextMlp || spec.family == ModelFamily::kTinyLm;
  if (text) out.pooled = std::move(cache.pooled);
  return out;
}

std::vector<double> loss_values(LossKind kind, const ForwardCache& cache,
                                const LabeledBatch& batch) {
  const size_t n = cache.logits.rows;
  const size_t c = cache.logits.cols;
  std::vector<double> out(n);
  switch (kind) {
    case LossKind::kCeHard: {
      if (batch.labels.size() != n) throw DataError("loss: hard labels required");
      for (size_t i = 0; i < n; ++i)
        out[i] = ce_from_logits(cache.logits.row(i), c, static_cast<size_t>(batch.labels[i]));
      break;
    }
    case LossKind::kCeSoft: {
      if (batch.soft_labels.rows != n) throw DataError("loss: soft labels required");
      for (size_t i = 0; i < n; ++i) {
        double v = 0.0;
        for (size_t j = 0; j < c; ++j) {
          const double q = batch.soft_labels.at(i, j);
          if (q != 0.0) v += q * ce_from_logits(cache.logits.row(i), c, j);
        }
        out[i] = v;
      }
      break;
    }
    case LossKind::kFairnessTerm: {
      if (batch.protected_attr.size() != n)
        throw DataError("loss: protected attribute required for fairness term");
      if (c != 2) throw ConfigError("loss: fairness term requires binary classification");
      double abar = 0.0;
      for (int a : batch.protected_attr) abar += a;
      abar /= static_cast<double>(n);
      for (size_t i = 0; i < n; ++i)
        out[i] = (batch.protected_attr[i] - abar) * cache.probs.at(i, 1);
      break;
    }
  }
  return out;
}

DenseMatrix loss_dlogits(LossKind kind, const ForwardCache& cache, const LabeledBatch& batch) {
  const size_t n = cache.probs.rows;
  const size_t c = cache.probs.cols;
  DenseMatrix dl(n, c);
  switch (kind) {
    case LossKind::kCeHard: {
      if (batch.labels.size() != n) throw DataError("loss: hard labels required");
      for (size_t i = 0; i < n; ++i) {
        const double* p = cache.probs.row(i);
        double* d = dl.row(i);
        for (size_t j = 0; j < c; ++j) d[j] = p[j];
        d[static_cast<size_t>(batch.labels[i])] -= 1.0;
      }
      break;
    }
    case LossKind::kCeSoft: {
      if (batch.soft_labels.rows != n) throw DataError("loss: soft labels required");
      for (size_t i = 0; i < n; ++i) {
        const double* p = cache.probs.row(i);
        const double* q = batch.soft_labels.row(i);
        double* d = dl.row(i);
        for (size_t j = 0; j < c; ++j) d[j] = p[j] - q[j];
      }
      break;
    }
    case LossKind::kFairnessTerm: {
      if (batch.protected_attr.size() != n)
        throw DataError("loss: protected attribute required for fairness term");
      if (c != 2) throw ConfigError("loss: fairness term requires binary classification");
      double abar = 0.0;
      for (int a : batch.protected_attr) abar += a;
      abar /= static_cast<double>(n);
      // d[(a - abar) * p1]/dz_j = (a - abar) * p1 * (1[j==1] - p_j)
      for (size_t i = 0; i < n; ++i) {
        const double* p = cache.probs.row(i);
        const double w = (batch.protected_attr[i] - abar) * p[1];
        double* d = dl.row(i);
        for (size_t j = 0; j < c; ++j) d[j] = w * ((j == 1 ? 1.0 : 0.0) - p[j]);
      }
      break;
    }
  }
  return dl;
}

namespace {

// Shared per-sample backprop: writes the gradient of sample i (scaled) into
// grad, which may be the full accumulator or a per-sample row.
void backprop_sample(const ModelSpec& spec, const Layout& l, const double* p,
                     const LabeledBatch& batch, const ForwardCache& cache,
                     const double* dlogit_row, size_t i, double scale, double* grad) {
  const size_t c = l.out2;

  const double* head_in =
      l.out1 > 0 ? cache.hidden.row(i)
                 : (spec.family == ModelFamily::kLinearTabular
                        ? feature_source(batch, cache.adv_inputs).row(i)
                        : cache.pooled.row(i));

  // Head: dW2[d][j] += x_d * dl_j ; db2[j] += dl_j.
  for (size_t j = 0; j < c; ++j) grad[l.b2 + j] += scale * dlogit_row[j];
  for (size_t d = 0; d < l.in2; ++d) {
    const double xv = head_in[d];
    if (xv == 0.0) continue;
    double* g = grad + l.w2 + d * c;
    for (size_t j = 0; j < c; ++j) g[j] += scale * xv * dlogit_row[j];
  }
  if (l.out1 == 0) return;

  // Through tanh into the first dense layer.
  std::vector<double> dpre(l.out1);
  const double* h = cache.hidden.row(i);
  for (size_t k = 0; k < l.out1; ++k) {
    double dh = 0.0;
    const double* w2k = p + l.w2 + k * c;
    for (size_t j = 0; j < c; ++j) dh += dlogit_row[j] * w2k[j];
    dpre[k] = dh * (1.0 - h[k] * h[k]);
  }

  const bool text = spec.family == ModelFamily::kTextMlp || spec.family == ModelFamily::kTinyLm;
  const double* x1 = text ? cache.pooled.row(i) : feature_source(batch, cache.adv_inputs).row(i);
  for (size_t k = 0; k < l.out1; ++k) grad[l.b1 + k] += scale * dpre[k];
  for (size_t d = 0; d < l.in1; ++d) {
    const double xv = x1[d];
    if (xv == 0.0) continue;
    double* g = grad + l.w1 + d * l.out1;
    for (size_t k = 0; k < l.out1; ++k) g[k] += scale * xv * dpre[k];
  }
  if (!text) return;

  // Into the embedding table.
  const size_t eb = static_cast<size_t>(spec.embed_dim);
  const size_t len = batch.seq_len;
  const int* toks = token_source(batch, cache.adv_inputs);
  if (spec.family == ModelFamily::kTextMlp) {
    // dpooled = W1 * dpre ; each position receives dpooled / len.
    std::vector<double> dpooled(eb, 0.0);
    for (size_t d = 0; d < eb; ++d) {
      const double* w1d = p + l.w1 + d * l.out1;
      double acc = 0.0;
      for (size_t k = 0; k < l.out1; ++k) acc += w1d[k] * dpre[k];
      dpooled[d] = acc / static_cast<double>(len);
    }
    for (size_t j = 0; j < len; ++j) {
      double* g = grad + l.embed + static_cast<size_t>(toks[i * len + j]) * eb;
      for (size_t d = 0; d < eb; ++d) g[d] += scale * dpooled[d];
    }
  } else {
    for (size_t j = 0; j < len; ++j) {
      double* g = grad + l.embed + static_cast<size_t>(toks[i * len + j]) * eb;
      for (size_t d = 0; d < eb; ++d) {
        const double* w1d = p + l.w1 + (j * eb + d) * l.out1;
        double acc = 0.0;
        for (size_t k = 0; k < l.out1; ++k) acc += w1d[k] * dpre[k];
        g[d] += scale * acc;
      }
    }
  }
}

}  // namespace

void backward_accumulate(const ModelSpec& spec, const ParamVector& params,
                         const LabeledBatch& batch, const ForwardCache& cache,
                         const DenseMatrix& dlogits, double scale, std::vector<double>& grad) {
  const Layout l = layout_of(spec);
  if (grad.size() != l.total) throw NumericError("backward: gradient buffer size mismatch");
  for (size_t i = 0; i < batch.n(); ++i)
    backprop_sample(spec, l, params.values.data(), batch, cache, dlogits.row(i), i, scale,
                    grad.data());
}

DenseMatrix backward_per_sample(const ModelSpec& spec, const ParamVector& params,
                                const LabeledBatch& batch, const ForwardCache& cache,
                                const DenseMatrix& dlogits) {
  const Layout l = layout_of(spec);
  DenseMatrix rows(batch.n(), l.total);
  for (size_t i = 0; i < batch.n(); ++i)
    backprop_sample(spec, l, params.values.data(), batch, cache, dlogits.row(i), i, 1.0,
                    rows.row(i));
  return rows;
}

void backward_per_sample_accumulate(const ModelSpec& spec, const ParamVector& params,
                                    const LabeledBatch& batch, const ForwardCache& cache,
                                    const DenseMatrix& dlogits, DenseMatrix& rows) {
  const Layout l = layout_of(spec);
  if (rows.rows != batch.n() || rows.cols != l.total)
    throw NumericError("backward: per-sample row buffer shape mismatch");
  for (size_t i = 0; i < batch.n(); ++i)
    backprop_sample(spec, l, params.values.data(), batch, cache, dlogits.row(i), i, 1.0,
                    rows.row(i));
}

DenseMatrix per_sample_gradients(const ModelSpec& spec, const ParamVector& params,
                                 const LabeledBatch& batch, LossKind kind, double embed_noise_std,
                                 RngState rng) {
  ForwardCache cache = forward_cache(spec, params, batch, false, embed_noise_std, rng);
  DenseMatrix dl = loss_dlogits(kind, cache, batch);
  return backward_per_sample(spec, params, batch, cache, dl);
}

DenseMatrix ce_token_embedding_grads(const ModelSpec& spec, const ParamVector& params,
                                     const std::vector<int>& tokens, int label) {
  const bool text = spec.family == ModelFamily::kTextMlp || spec.family == ModelFamily::kTinyLm;
  if (!text) throw ConfigError("ce_token_embedding_grads: text family required");
  LabeledBatch b;
  b.tokens = tokens;
  b.seq_len = tokens.size();
  b.labels = {label};
  ForwardCache cache = forward_cache(spec, params, b, false, 0.0, {});
  DenseMatrix dl = loss_dlogits(LossKind::kCeHard, cache, b);

  const Layout l = layout_of(spec);
  const double* p = params.values.data();
  const size_t c = l.out2;
  const size_t eb = static_cast<size_t>(spec.embed_dim);
  const size_t len = b.seq_len;

  std::vector<double> dpre(l.out1);
  const double* h = cache.hidden.row(0);
  for (size_t k = 0; k < l.out1; ++k) {
    double dh = 0.0;
    const double* w2k = p + l.w2 + k * c;
    for (size_t j = 0; j < c; ++j) dh += dl.at(0, j) * w2k[j];
    dpre[k] = dh * (1.0 - h[k] * h[k]);
  }

  DenseMatrix out(len, eb);
  if (spec.family == ModelFamily::kTextMlp) {
    std::vector<double> dpooled(eb, 0.0);
    for (size_t d = 0; d < eb; ++d) {
      const double* w1d = p + l.w1 + d * l.out1;
      double acc = 0.0;
      for (size_t k = 0; k < l.out1; ++k) acc += w1d[k] * dpre[k];
      dpooled[d] = acc / static_cast<double>(len);
    }
    for (size_t j = 0; j < len; ++j)
      for (size_t d = 0; d < eb; ++d) out.at(j, d) = dpooled[d];
  } else {
    for (size_t j = 0; j < len; ++j) {
      for (size_t d = 0; d < eb; ++d) {
        const double* w1d = p + l.w1 + (j * eb + d) * l.out1;
        double acc = 0.0;
        for (size_t k = 0; k < l.out1; ++k) acc += w1d[k] * dpre[k];
        out.at(j, d) = acc;
      }
    }
  }
  return out;
}

std::vector<double> lm_next_dist(const ModelSpec& spec, const ParamVector& params,
                                 const std::vector<int>& context) {
  if (spec.family != ModelFamily::kTinyLm) throw ConfigError("lm_next_dist: TINY_LM required");
  const size_t ctx = static_cast<size_t>(spec.context_len);
  LabeledBatch b;
  b.seq_len = ctx;
  b.tokens.assign(ctx, 0);  // PAD
  const size_t take = std::min(context.size(), ctx);
  for (size_t j = 0; j < take; ++j) b.tokens[ctx - take + j] = context[context.size() - take + j];
  ForwardCache cache = forward_cache(spec, params, b, false, 0.0, {});
  const double* p = cache.probs.row(0);
  return std::vector<double>(p, p + spec.vocab_size);
}

std::vector<int> lm_generate_greedy(const ModelSpec& spec, const ParamVector& params,
                                    const std::vector<int>& prefix, int k) {
  if (k < 1) throw ConfigError("lm_generate_greedy: k must be >= 1");
  std::vector<int> window = prefix;
  std::vector<int> out;
  out.reserve(static_cast<size_t>(k));
  for (int step = 0; step < k; ++step) {
    const std::vector<double> dist = lm_next_dist(spec, params, window);
    int best = 0;
    for (int j = 1; j < spec.vocab_size; ++j)
      if (dist[j] > dist[best]) best = j;  // strict > keeps ties at the smallest id
    out.push_back(best);
    window.push_back(best);
  }
  return out;
}

LabeledBatch lm_window_batch(const ModelSpec& spec, const std::vector<std::vector<int>>& seqs) {
  if (spec.family != ModelFamily::kTinyLm) throw ConfigError("lm_window_batch: TINY_LM required");
  const size_t ctx = static_cast<size_t>(spec.context_len);
  LabeledBatch b;
  b.seq_len = ctx;
  size_t total = 0;
  for (const auto& s : seqs) total += s.size();
  b.tokens.reserve(total * ctx);
  b.labels.reserve(total);
  for (const auto& s : seqs) {
    for (size_t t = 0; t < s.size(); ++t) {
      for (size_t j = 0; j < ctx; ++j) {
        // window covers positions [t-ctx, t), PAD where negative
        const long long pos = static_cast<long long>(t) - static_cast<long long>(ctx) +
                              static_cast<long long>(j);
        b.tokens.push_back(pos >= 0 ? s[static_cast<size_t>(pos)] : 0);
      }
      b.labels.push_back(s[t]);
    }
  }
  for (size_t i = 0; i < b.labels.size(); ++i) b.sample_ids.push_back(static_cast<int64_t>(i));
  return b;
}

// --- serialization ---

namespace {
constexpr char kMagic[9] = "WTSPARAM";
}

std::string serialize_params(const ModelSpec& spec, const ParamVector& params) {
  if (params.values.size() != param_count(spec)) throw IoError("serialize: param length mismatch");
  std::string out;
  out.append(kMagic, 8);
  put_u64_le(out, 1);  // version
  put_u64_le(out, static_cast<uint64_t>(spec.family));
  put_u64_le(out, static_cast<uint64_t>(spec.input_dim));
  put_u64_le(out, static_cast<uint64_t>(spec.vocab_size));
  put_u64_le(out, static_cast<uint64_t>(spec.embed_dim));
  put_u64_le(out, static_cast<uint64_t>(spec.hidden_dim));
  put_u64_le(out, static_cast<uint64_t>(spec.context_len));
  put_u64_le(out, static_cast<uint64_t>(spec.num_classes));
  put_u64_le(out, params.values.size());
  for (double v : params.values) put_f64_le(out, v);
  return out;
}

ParamVector deserialize_params(const ModelSpec& expected_spec, const std::string& bytes) {
  const size_t header = 8 + 9 * 8;
  if (bytes.size() < header || bytes.compare(0, 8, kMagic, 8) != 0)
    throw IoError("deserialize: bad magic or truncated header");
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
  size_t off = 8;
  auto next = [&]() {
    const uint64_t v = get_u64_le(u + off);
    off += 8;
    return v;
  };
  if (next() != 1) throw IoError("deserialize: unsupported version");
  ModelSpec s;
  s.family = static_cast<ModelFamily>(next());
  s.input_dim = static_cast<int>(next());
  s.vocab_size = static_cast<int>(next());
  s.embed_dim = static_cast<int>(next());
  s.hidden_dim = static_cast<int>(next());
  s.context_len = static_cast<int>(next());
  s.num_classes = static_cast<int>(next());
  if (spec_hash(s) != spec_hash(expected_spec)) throw IoError("deserialize: spec mismatch");
  const uint64_t count = next();
  if (count != param_count(expected_spec) || bytes.size() != header + count * 8)
    throw IoError("deserialize: payload size mismatch");
  ParamVector pv;
  pv.spec_hash = spec_hash(expected_spec);
  pv.values.resize(count);
  for (uint64_t i = 0; i < count; ++i) pv.values[i] = get_f64_le(u + off + i * 8);
  if (!all_finite(pv.values)) throw IoError("deserialize: non-finite parameter");
  return pv;
}

void write_params_file(const std::string& path, const ModelSpec& spec, const ParamVector& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  const std::string bytes = serialize_params(spec, params);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

ParamVector read_params_file(const std::string& path, const ModelSpec& expected_spec) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_params(expected_spec, ss.str());
}

std::string params_to_text(const ModelSpec& spec, const ParamVector& params) {
  if (params.values.size() != param_count(spec)) throw IoError("text export: length mismatch");
  std::string out = "# wtslab params v1\n";
  char line[64];
  std::snprintf(line, sizeof(line), "# family=%s count=%zu\n", family_name(spec.family),
                params.values.size());
  out += line;
  for (double v : params.values) {
    std::snprintf(line, sizeof(line), "%.17g\n", v);
    out += line;
  }
  return out;
}

ParamVector params_from_text(const ModelSpec& expected_spec, const std::string& text) {
  std::istringstream ss(text);
  std::string line;
  ParamVector pv;
  pv.spec_hash = spec_hash(expected_spec);
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    pv.values.push_back(std::stod(line));
  }
  if (pv.values.size() != param_count(expected_spec))
    throw IoError("text import: parameter count mismatch");
  return pv;
}

}  // namespace wtslab
