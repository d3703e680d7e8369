#include "wtslab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "wtslab/common.hpp"

namespace wtslab {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool in_pool(const std::vector<int>& pool, int id) {
  return std::find(pool.begin(), pool.end(), id) != pool.end();
}

}  // namespace

SplitIndices split_indices(size_t n, const SplitSpec& spec) {
  if (std::fabs(spec.frac_dw + spec.frac_dwts + spec.frac_dt - 1.0) > 1e-9)
    throw ConfigError("split: fractions must sum to 1");
  if (spec.frac_dw < 0.0 || spec.frac_dwts < 0.0 || spec.frac_dt < 0.0)
    throw ConfigError("split: fractions must be nonnegative");
  RngState rng = rng_derive(RngState{spec.seed, 0, 0}, "split");
  std::vector<size_t> order = shuffled_indices(rng, n);
  const size_t n_dw = static_cast<size_t>(std::floor(spec.frac_dw * static_cast<double>(n)));
  const size_t n_dwts = static_cast<size_t>(std::floor(spec.frac_dwts * static_cast<double>(n)));
  SplitIndices out;
  out.dw.assign(order.begin(), order.begin() + static_cast<long>(n_dw));
  out.dwts.assign(order.begin() + static_cast<long>(n_dw),
                  order.begin() + static_cast<long>(n_dw + n_dwts));
  out.dt.assign(order.begin() + static_cast<long>(n_dw + n_dwts), order.end());
  return out;
}

SplitIndices split_groups(const std::vector<int64_t>& group_ids, const SplitSpec& spec) {
  std::vector<int64_t> distinct = group_ids;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const SplitIndices group_split = split_indices(distinct.size(), spec);

  auto collect = [&](const std::vector<size_t>& gidx) {
    std::set<int64_t> chosen;
    for (size_t g : gidx) chosen.insert(distinct[g]);
    std::vector<size_t> rows;
    for (size_t i = 0; i < group_ids.size(); ++i)
      if (chosen.count(group_ids[i])) rows.push_back(i);
    return rows;
  };
  SplitIndices out;
  out.dw = collect(group_split.dw);
  out.dwts = collect(group_split.dwts);
  out.dt = collect(group_split.dt);
  return out;
}

LabeledBatch split_take(const LabeledBatch& data, const std::vector<size_t>& idx, int split_tag) {
  LabeledBatch out = take_rows(data, idx);
  out.split_tag = split_tag;
  return out;
}

LabeledBatch gen_biased_tabular(size_t n, int input_dim, double bias_strength, double label_noise,
                                RngState rng) {
  if (input_dim < 2) throw ConfigError("gen_biased_tabular: input_dim must be >= 2");
  if (bias_strength < 0.0 || bias_strength > 1.0)
    throw ConfigError("gen_biased_tabular: bias_strength must lie in [0,1]");

  constexpr size_t kClusters = 8;
  constexpr double kClusterStd = 0.3;
  constexpr double kScoreGain = 3.0;
  constexpr double kNonlinearWeight = 1.6;
  const int d = input_dim - 1;  // non-protected features

  // Cluster centers and linear weights are part of the dataset draw.
  DenseMatrix centers(kClusters, static_cast<size_t>(d));
  for (auto& v : centers.data) v = (2.0 * rng.next_unit() - 1.0) * 2.2;
  std::vector<double> w(static_cast<size_t>(d));
  for (auto& v : w) v = 2.0 * rng.next_unit() - 1.0;

  LabeledBatch out;
  out.features = DenseMatrix(n, static_cast<size_t>(input_dim));
  out.labels.resize(n);
  out.protected_attr.resize(n);
  out.sample_ids.resize(n);

  for (size_t i = 0; i < n; ++i) {
    const int a = rng.next_unit() < 0.5 ? 0 : 1;
    const size_t cl = static_cast<size_t>(rng.next_below(kClusters));
    double* x = out.features.row(i);
    x[0] = static_cast<double>(a);
    for (int j = 0; j < d; ++j)
      x[1 + j] = centers.at(cl, static_cast<size_t>(j)) + kClusterStd * rng.next_gaussian();

    double score = 0.0;
    for (int j = 0; j < d; ++j) score += w[static_cast<size_t>(j)] * x[1 + j];
    if (d >= 2) score += kNonlinearWeight * std::sin(x[1]) * x[2];

    const double p_task = sigmoid(kScoreGain * score);
    const double p = (1.0 - bias_strength) * p_task + bias_strength * static_cast<double>(a);
    int y = rng.next_unit() < p ? 1 : 0;
    if (label_noise > 0.0 && rng.next_unit() < label_noise) y = 1 - y;

    out.labels[i] = y;
    out.protected_attr[i] = a;
    out.sample_ids[i] = static_cast<int64_t>(i);
  }
  return out;
}

int majority_cue_label(const std::vector<int>& tokens, const TextPools& pools) {
  int pos = 0, neg = 0;
  for (int t : tokens) {
    if (in_pool(pools.positive, t) || in_pool(pools.shifted_positive, t)) ++pos;
    if (in_pool(pools.negative, t) || in_pool(pools.shifted_negative, t)) ++neg;
  }
  if (pos == neg) return -1;
  return pos > neg ? 1 : 0;
}

TextDataset gen_sentiment_text(size_t n, int vocab_size, size_t seq_len, RngState rng) {
  if (vocab_size < 48) throw ConfigError("gen_sentiment_text: vocab_size must be >= 48");
  if (seq_len < 6) throw ConfigError("gen_sentiment_text: seq_len must be >= 6");

  TextDataset ds;
  ds.vocab_size = vocab_size;
  constexpr int kStrong = 6;  // per polarity
  constexpr int kWeak = 8;    // per polarity
  int next = 1;               // id 0 = PAD
  auto claim = [&](int count) {
    std::vector<int> ids(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) ids[static_cast<size_t>(i)] = next++;
    return ids;
  };
  ds.pools.positive = claim(kStrong);
  ds.pools.negative = claim(kStrong);
  ds.pools.shifted_positive = claim(kStrong);
  ds.pools.shifted_negative = claim(kStrong);
  ds.pools.weak_positive = claim(kWeak);
  ds.pools.weak_negative = claim(kWeak);
  ds.pools.neutral = claim(vocab_size - next);

  auto pick = [&](const std::vector<int>& pool) {
    return pool[static_cast<size_t>(rng.next_below(pool.size()))];
  };

  LabeledBatch& b = ds.batch;
  b.seq_len = seq_len;
  b.tokens.assign(n * seq_len, 0);
  b.labels.resize(n);
  b.sample_ids.resize(n);

  for (size_t i = 0; i < n; ++i) {
    const int y = rng.next_unit() < 0.5 ? 0 : 1;
    const auto& match = y == 1 ? ds.pools.positive : ds.pools.negative;
    const auto& opp = y == 1 ? ds.pools.negative : ds.pools.positive;
    const auto& weak_match = y == 1 ? ds.pools.weak_positive : ds.pools.weak_negative;
    const auto& weak_opp = y == 1 ? ds.pools.weak_negative : ds.pools.weak_positive;

    const size_t n_match = 2 + rng.next_below(2);              // 2..3 matching cues
    const size_t n_opp = rng.next_below(n_match);               // strictly fewer opposing
    std::vector<int> toks;
    toks.reserve(seq_len);
    for (size_t j = 0; j < n_match; ++j) toks.push_back(pick(match));
    for (size_t j = 0; j < n_opp && toks.size() < seq_len; ++j) toks.push_back(pick(opp));
    while (toks.size() < seq_len) {
      const double u = rng.next_unit();
      if (u < 0.5) {
        // weak cue with a 70/30 tilt toward the label
        toks.push_back(rng.next_unit() < 0.7 ? pick(weak_match) : pick(weak_opp));
      } else {
        toks.push_back(pick(ds.pools.neutral));
      }
    }
    const std::vector<size_t> order = shuffled_indices(rng, seq_len);
    for (size_t j = 0; j < seq_len; ++j) b.tokens[i * seq_len + j] = toks[order[j]];
    b.labels[i] = y;
    b.sample_ids[i] = static_cast<int64_t>(i);
  }
  return ds;
}

std::vector<std::pair<int, int>> default_substitution_table(const TextPools& pools) {
  if (pools.positive.size() != pools.shifted_positive.size() ||
      pools.negative.size() != pools.shifted_negative.size())
    throw ConfigError("substitution table: shifted pools must mirror cue pools");
  std::vector<std::pair<int, int>> table;
  for (size_t i = 0; i < pools.positive.size(); ++i)
    table.emplace_back(pools.positive[i], pools.shifted_positive[i]);
  for (size_t i = 0; i < pools.negative.size(); ++i)
    table.emplace_back(pools.negative[i], pools.shifted_negative[i]);
  return table;
}

LabeledBatch apply_style_shift(const LabeledBatch& data, const TextPools& pools,
                               const std::vector<std::pair<int, int>>& table, double shift_rate,
                               RngState rng) {
  if (shift_rate < 0.0 || shift_rate > 1.0)
    throw ConfigError("apply_style_shift: shift_rate must lie in [0,1]");
  // Polarity preservation: a cue may only map to its own polarity's shifted pool.
  std::map<int, int> subst;
  for (const auto& [from, to] : table) {
    const bool from_pos = in_pool(pools.positive, from);
    const bool from_neg = in_pool(pools.negative, from);
    if (!from_pos && !from_neg)
      throw ConfigError("apply_style_shift: table maps a non-cue token");
    if ((from_pos && !in_pool(pools.shifted_positive, to)) ||
        (from_neg && !in_pool(pools.shifted_negative, to)))
      throw ConfigError("apply_style_shift: table crosses polarity");
    subst[from] = to;
  }
  LabeledBatch out = data;
  if (shift_rate == 0.0) return out;
  for (auto& t : out.tokens) {
    const auto it = subst.find(t);
    if (it == subst.end()) continue;
    if (shift_rate >= 1.0 || rng.next_unit() < shift_rate) t = it->second;
  }
  return out;
}

std::vector<int> gen_adversarial_twins(const ModelSpec& spec, const ParamVector& params,
                                       const LabeledBatch& data, int flip_budget,
                                       const TextPools& pools) {
  if (flip_budget < 0) throw ConfigError("gen_adversarial_twins: negative flip budget");
  if (data.tokens.empty()) throw ConfigError("gen_adversarial_twins: token inputs required");
  const size_t n = data.n();
  const size_t len = data.seq_len;
  const size_t eb = static_cast<size_t>(spec.embed_dim);
  std::vector<int> twins = data.tokens;
  if (flip_budget == 0) return twins;

  // Candidate pools preserve the label: neutral and weak tokens always,
  // plus strong cues of the sample's own polarity.
  std::vector<int> base_pool = pools.neutral;
  base_pool.insert(base_pool.end(), pools.weak_positive.begin(), pools.weak_positive.end());
  base_pool.insert(base_pool.end(), pools.weak_negative.begin(), pools.weak_negative.end());
  if (base_pool.empty()) throw ConfigError("gen_adversarial_twins: empty candidate pool");

  const size_t embed_off = 0;  // embedding table leads the layout for text families
  const double* pv = params.values.data();

  for (size_t i = 0; i < n; ++i) {
    const int y = data.labels[i];
    std::vector<int> pool = base_pool;
    const auto& same = y == 1 ? pools.positive : pools.negative;
    pool.insert(pool.end(), same.begin(), same.end());

    std::vector<int> cur(twins.begin() + static_cast<long>(i * len),
                         twins.begin() + static_cast<long>((i + 1) * len));
    std::vector<bool> flipped(len, false);

    for (int flip = 0; flip < flip_budget; ++flip) {
      const DenseMatrix grads = ce_token_embedding_grads(spec, params, cur, y);
      double best_score = 0.0;
      size_t best_pos = len;
      int best_tok = -1;
      for (size_t j = 0; j < len; ++j) {
        if (flipped[j]) continue;
        const double* g = grads.row(j);
        const double* e_old = pv + embed_off + static_cast<size_t>(cur[j]) * eb;
        for (int c : pool) {
          if (c == cur[j]) continue;
          const double* e_new = pv + embed_off + static_cast<size_t>(c) * eb;
          double score = 0.0;
          for (size_t d = 0; d < eb; ++d) score += g[d] * (e_new[d] - e_old[d]);
          if (score <= best_score) continue;
          // keep the majority-cue label intact
          std::vector<int> trial = cur;
          trial[j] = c;
          if (majority_cue_label(trial, pools) != y) continue;
          best_score = score;
          best_pos = j;
          best_tok = c;
        }
      }
      if (best_pos == len) break;  // no loss-increasing flip left
      cur[best_pos] = best_tok;
      flipped[best_pos] = true;
    }
    std::copy(cur.begin(), cur.end(), twins.begin() + static_cast<long>(i * len));
  }
  return twins;
}

bool contains_subsequence(const std::vector<int>& hay, const std::vector<int>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool match = true;
    for (size_t j = 0; j < needle.size(); ++j)
      if (hay[i + j] != needle[j]) {
        match = false;
        break;
      }
    if (match) return true;
  }
  return false;
}

CanaryCorpus gen_canary_corpus(size_t n_filler, size_t n_canaries, int k, int repetitions,
                               int vocab_size, RngState rng) {
  if (k < 1 || repetitions < 1) throw ConfigError("gen_canary_corpus: k and repetitions >= 1");
  if (vocab_size < 8) throw ConfigError("gen_canary_corpus: vocab too small");
  const double capacity = std::pow(static_cast<double>(vocab_size - 1), std::min(k, 10));
  if (capacity < 100.0 * static_cast<double>(std::max<size_t>(n_canaries, 1)))
    throw ConfigError("gen_canary_corpus: vocab too small to guarantee secret uniqueness");

  CanaryCorpus corpus;
  corpus.vocab_size = vocab_size;
  corpus.k = k;
  corpus.prefix_len = 8;
  const int content = vocab_size - 1;  // ids 1..V-1; 0 stays PAD
  const size_t filler_len = static_cast<size_t>(corpus.prefix_len + k);

  // Learnable filler: modular stride progressions.
  int64_t group = 0;
  for (size_t s = 0; s < n_filler; ++s) {
    const int start = static_cast<int>(rng.next_below(static_cast<uint64_t>(content)));
    const int stride = 1 + static_cast<int>(rng.next_below(3));
    std::vector<int> seq(filler_len);
    for (size_t i = 0; i < filler_len; ++i)
      seq[i] = 1 + (start + static_cast<int>(i) * stride) % content;
    corpus.sequences.push_back(std::move(seq));
    corpus.group_ids.push_back(group++);
    corpus.is_canary.push_back(false);
  }

  auto random_tokens = [&](int count) {
    std::vector<int> t(static_cast<size_t>(count));
    for (auto& v : t) v = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(content)));
    return t;
  };

  for (size_t cidx = 0; cidx < n_canaries; ++cidx) {
    Canary c;
    c.prefix = random_tokens(corpus.prefix_len);
    c.repetitions = repetitions;
    c.group_id = group;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000)
        throw ConfigError("gen_canary_corpus: cannot draw a filler-free unique secret");
      c.secret = random_tokens(k);
      bool clash = false;
      for (size_t s = 0; s < n_filler && !clash; ++s)
        clash = contains_subsequence(corpus.sequences[s], c.secret);
      for (const auto& other : corpus.canaries)
        if (other.secret == c.secret) clash = true;
      if (!clash) break;
    }
    std::vector<int> seq = c.prefix;
    seq.insert(seq.end(), c.secret.begin(), c.secret.end());
    for (int r = 0; r < repetitions; ++r) {
      corpus.sequences.push_back(seq);
      corpus.group_ids.push_back(group);
      corpus.is_canary.push_back(true);
    }
    corpus.canaries.push_back(std::move(c));
    ++group;
  }
  return corpus;
}

std::vector<ExtractionProbe> canary_probes(const CanaryCorpus& corpus,
                                           const std::vector<size_t>& sequence_idx) {
  std::set<int64_t> groups;
  for (size_t i : sequence_idx)
    if (corpus.is_canary[i]) groups.insert(corpus.group_ids[i]);
  std::vector<ExtractionProbe> probes;
  for (const Canary& c : corpus.canaries)
    if (groups.count(c.group_id)) probes.push_back({c.prefix, c.secret});
  return probes;
}

CsvSchema load_csv_schema(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open schema file: " + path);
  CsvSchema schema;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos) throw IoError("schema line missing role: " + line);
    const std::string name = line.substr(0, comma);
    const std::string role = line.substr(comma + 1);
    ColumnRole r;
    if (role == "numeric") r = ColumnRole::kNumeric;
    else if (role == "categorical") r = ColumnRole::kCategorical;
    else if (role == "label") r = ColumnRole::kLabel;
    else if (role == "protected") r = ColumnRole::kProtected;
    else throw IoError("schema: unknown role '" + role + "' for column " + name);
    schema.emplace_back(name, r);
  }
  if (schema.empty()) throw IoError("schema file empty: " + path);
  return schema;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

LabeledBatch ingest_tabular_csv(const std::string& path, const CsvSchema& schema,
                                const std::vector<size_t>* stats_rows) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open csv: " + path);
  std::string line;
  if (!std::getline(f, line)) throw DataError("csv: empty file " + path);
  const std::vector<std::string> header = split_csv_line(line);

  std::vector<size_t> col_of(schema.size());
  for (size_t s = 0; s < schema.size(); ++s) {
    const auto it = std::find(header.begin(), header.end(), schema[s].first);
    if (it == header.end())
      throw DataError("csv: missing column '" + schema[s].first + "' (no header row?)");
    col_of[s] = static_cast<size_t>(it - header.begin());
  }

  std::vector<std::vector<std::string>> rows;
  size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() < header.size())
      throw DataError("csv: row " + std::to_string(line_no) + " has too few cells");
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw DataError("csv: no data rows in " + path);
  const size_t n = rows.size();

  std::vector<size_t> stats(n);
  std::iota(stats.begin(), stats.end(), 0);
  if (stats_rows != nullptr) stats = *stats_rows;

  // Resolve output feature layout: schema order, categoricals expanded over
  // sorted distinct values.
  struct ColPlan {
    size_t csv_col;
    ColumnRole role;
    std::string name;
    std::vector<std::string> categories;  // categorical only
    double mean = 0.0, std = 1.0;         // numeric only
  };
  std::vector<ColPlan> plans;
  size_t feature_dim = 0;
  for (size_t s = 0; s < schema.size(); ++s) {
    ColPlan plan{col_of[s], schema[s].second, schema[s].first, {}, 0.0, 1.0};
    if (plan.role == ColumnRole::kNumeric) {
      double sum = 0.0, sq = 0.0;
      for (size_t r : stats) {
        const std::string& cell = rows[r][plan.csv_col];
        try {
          const double v = std::stod(cell);
          sum += v;
          sq += v * v;
        } catch (...) {
          throw DataError("csv: unparseable numeric at row " + std::to_string(r + 2) +
                          " column " + plan.name);
        }
      }
      plan.mean = sum / static_cast<double>(stats.size());
      const double var = sq / static_cast<double>(stats.size()) - plan.mean * plan.mean;
      plan.std = var > 1e-24 ? std::sqrt(var) : 1.0;
      ++feature_dim;
    } else if (plan.role == ColumnRole::kCategorical) {
      std::set<std::string> values;
      for (const auto& r : rows) values.insert(r[plan.csv_col]);
      plan.categories.assign(values.begin(), values.end());
      feature_dim += plan.categories.size();
    }
    plans.push_back(std::move(plan));
  }

  LabeledBatch out;
  out.features = DenseMatrix(n, feature_dim);
  out.labels.resize(n);
  out.sample_ids.resize(n);
  bool has_protected = false;
  for (const auto& p : plans) has_protected |= p.role == ColumnRole::kProtected;
  if (has_protected) out.protected_attr.resize(n);

  for (size_t r = 0; r < n; ++r) {
    size_t fcol = 0;
    for (const auto& plan : plans) {
      const std::string& cell = rows[r][plan.csv_col];
      switch (plan.role) {
        case ColumnRole::kNumeric: {
          double v;
          try {
            v = std::stod(cell);
          } catch (...) {
            throw DataError("csv: unparseable numeric at row " + std::to_string(r + 2) +
                            " column " + plan.name);
          }
          out.features.at(r, fcol++) = (v - plan.mean) / plan.std;
          break;
        }
        case ColumnRole::kCategorical: {
          const auto it = std::find(plan.categories.begin(), plan.categories.end(), cell);
          for (size_t c = 0; c < plan.categories.size(); ++c)
            out.features.at(r, fcol + c) = 0.0;
          out.features.at(r, fcol + static_cast<size_t>(it - plan.categories.begin())) = 1.0;
          fcol += plan.categories.size();
          break;
        }
        case ColumnRole::kLabel:
        case ColumnRole::kProtected: {
          if (cell != "0" && cell != "1")
            throw DataError("csv: column " + plan.name + " must be binary 0/1, row " +
                            std::to_string(r + 2) + " has '" + cell + "'");
          const int v = cell == "1" ? 1 : 0;
          if (plan.role == ColumnRole::kLabel)
            out.labels[r] = v;
          else
            out.protected_attr[r] = v;
          break;
        }
      }
    }
    out.sample_ids[r] = static_cast<int64_t>(r);
  }
  return out;
}

std::string dataset_to_text(const LabeledBatch& data) {
  std::string out = "# wtslab dataset v1\n";
  out += "# columns: split_id sample_id label protected inputs...\n";
  char buf[64];
  const size_t n = data.n();
  for (size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%d\t%lld\t%d\t%d", data.split_tag,
                  static_cast<long long>(i < data.sample_ids.size() ? data.sample_ids[i]
                                                                    : static_cast<int64_t>(i)),
                  i < data.labels.size() ? data.labels[i] : -1,
                  i < data.protected_attr.size() ? data.protected_attr[i] : -1);
    out += buf;
    if (data.token_input()) {
      for (size_t j = 0; j < data.seq_len; ++j) {
        std::snprintf(buf, sizeof(buf), "\t%d", data.tokens[i * data.seq_len + j]);
        out += buf;
      }
    } else {
      for (size_t j = 0; j < data.features.cols; ++j) {
        std::snprintf(buf, sizeof(buf), "\t%.17g", data.features.at(i, j));
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace wtslab
