#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "heg/dataset.hpp"
#include "heg/encoder.hpp"
#include "heg/error.hpp"
#include "heg/jsonl.hpp"
#include "heg/kb.hpp"
#include "heg/rng.hpp"

namespace heg {

// --- numerics --------------------------------------------------------------

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Binary cross-entropy of sigmoid(logit) against a 0/1 label.
inline double bce_with_logit(double logit, bool positive) {
  return positive ? softplus(-logit) : softplus(logit);
}

/// Mean BCE over a score matrix (rows x cols, row-major).
inline double mean_bce(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) s += bce_with_logit(scores[i], labels[i]);
  return s / static_cast<double>(scores.size());
}

/// Hierarchy objective on a precomputed score matrix: rows are the N_h
/// parents, columns the in-batch children; the sum over a row is divided by
/// the number of rows only.
inline double hierarchy_bce(std::span<const double> scores, const std::vector<bool>& positive,
                            std::size_t rows) {
  if (rows == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) s += bce_with_logit(scores[i], positive[i]);
  return s / static_cast<double>(rows);
}

// --- ComplEx head -------------------------------------------------------------

/// Projects event encodings into real and imaginary parts and scores
/// (parent, child) with the antisymmetric part of the Hermitian product.
struct ComplExHead {
  std::size_t dim = 0;
  Vec w_re, w_im;  // d x d, row-major
  Vec b_re, b_im;
  Vec r;           // imaginary part of the relation embedding

  ComplExHead() = default;
  explicit ComplExHead(std::size_t d)
      : dim(d), w_re(d * d, 0.0), w_im(d * d, 0.0), b_re(d, 0.0), b_im(d, 0.0), r(d, 0.0) {}

  friend bool operator==(const ComplExHead&, const ComplExHead&) = default;
};

struct ComplexProjection {
  Vec re, im;
};

inline ComplexProjection project(const ComplExHead& head, std::span<const double> e) {
  const std::size_t d = head.dim;
  if (e.size() != d) {
    throw Error(ErrorKind::DimensionMismatch,
                "encoding of size " + std::to_string(e.size()) + " for head of dim " + std::to_string(d));
  }
  ComplexProjection p{head.b_re, head.b_im};
  for (std::size_t i = 0; i < d; ++i) {
    const double* wr = head.w_re.data() + i * d;
    const double* wi = head.w_im.data() + i * d;
    double sr = 0.0, si = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      sr += wr[j] * e[j];
      si += wi[j] * e[j];
    }
    p.re[i] += sr;
    p.im[i] += si;
  }
  return p;
}

/// s(p, c) = sum_k r_k (Im(p)_k Re(c)_k - Re(p)_k Im(c)_k). Swapping the
/// arguments negates every term, so antisymmetry holds bit-for-bit.
inline double complex_score(const ComplExHead& head, const ComplexProjection& parent,
                            const ComplexProjection& child) {
  double s = 0.0;
  for (std::size_t k = 0; k < head.dim; ++k) {
    s += head.r[k] * (parent.im[k] * child.re[k] - parent.re[k] * child.im[k]);
  }
  return s;
}

inline double complex_score(const ComplExHead& head, std::span<const double> parent,
                            std::span<const double> child) {
  return complex_score(head, project(head, parent), project(head, child));
}

// --- gradients ------------------------------------------------------------------

/// Row-sparse gradient of an F x d tower.
struct SparseRows {
  std::size_t dim = 0;
  std::map<std::uint32_t, Vec> rows;

  void add(std::uint32_t row, double scale, std::span<const double> v) {
    auto [it, inserted] = rows.try_emplace(row);
    if (inserted) it->second.assign(dim, 0.0);
    for (std::size_t k = 0; k < dim; ++k) it->second[k] += scale * v[k];
  }

  void add(const SparseRows& other, double scale) {
    for (const auto& [row, v] : other.rows) add(row, scale, v);
  }

  Vec densify(std::uint32_t feature_dim) const {
    Vec out(static_cast<std::size_t>(feature_dim) * dim, 0.0);
    for (const auto& [row, v] : rows) std::copy(v.begin(), v.end(), out.begin() + row * dim);
    return out;
  }
};

struct Gradients {
  SparseRows mention;
  SparseRows event;
  ComplExHead head;
  bool has_head = false;

  explicit Gradients(std::size_t d = 0) : head(d) {
    mention.dim = d;
    event.dim = d;
  }

  /// this += scale * other
  void add(const Gradients& other, double scale) {
    mention.add(other.mention, scale);
    event.add(other.event, scale);
    if (other.has_head) {
      auto axpy = [scale](Vec& y, const Vec& x) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * x[i];
      };
      axpy(head.w_re, other.head.w_re);
      axpy(head.w_im, other.head.w_im);
      axpy(head.b_re, other.head.b_re);
      axpy(head.b_im, other.head.b_im);
      axpy(head.r, other.head.r);
      has_head = true;
    }
  }
};

struct LossResult {
  double loss = 0.0;
  Gradients grads;
  bool degenerate = false;  // every label in the batch was identical
  std::size_t pairs = 0;
};

inline void backprop_tower(SparseRows& out, const FeatureVector& fv, std::span<const double> g) {
  for (const auto& [i, x] : fv.entries) out.add(i, x, g);
}

// --- linking loss ------------------------------------------------------------------

struct LinkingExample {
  FeatureVector mention;
  std::vector<std::pair<EventId, FeatureVector>> gold_events;
};

/// In-batch BCE: every mention is scored against every distinct gold event of
/// the batch (deduplicated by id, first occurrence wins); events in its own
/// gold set are positives, the rest negatives. Mean over all pairs.
inline LossResult linking_loss(const EncoderParams& params, std::span<const LinkingExample> batch) {
  if (batch.empty()) throw Error(ErrorKind::DegenerateBatch, "empty linking batch");
  const std::size_t d = params.dim;

  std::vector<EventId> ids;
  std::vector<const FeatureVector*> event_fvs;
  std::unordered_map<EventId, std::size_t> slot;
  for (const auto& ex : batch) {
    for (const auto& [id, fv] : ex.gold_events) {
      if (slot.emplace(id, ids.size()).second) {
        ids.push_back(id);
        event_fvs.push_back(&fv);
      }
    }
  }
  if (ids.empty()) throw Error(ErrorKind::DegenerateBatch, "linking batch has no gold events");

  std::vector<Vec> m_enc, e_enc;
  for (const auto& ex : batch) m_enc.push_back(encode(params, ex.mention, Tower::Mention));
  for (const auto* fv : event_fvs) e_enc.push_back(encode(params, *fv, Tower::Event));

  const std::size_t n_pairs = batch.size() * ids.size();
  LossResult res{0.0, Gradients(d), false, n_pairs};
  std::vector<Vec> g_m(batch.size(), Vec(d, 0.0));
  std::vector<Vec> g_e(ids.size(), Vec(d, 0.0));
  std::size_t n_pos = 0;
  const double inv = 1.0 / static_cast<double>(n_pairs);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<bool> gold(ids.size(), false);
    for (const auto& [id, fv] : batch[i].gold_events) gold[slot.at(id)] = true;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const double s = pair_score(m_enc[i], e_enc[j]);
      const bool y = gold[j];
      n_pos += y;
      res.loss += bce_with_logit(s, y);
      const double g = (sigmoid(s) - (y ? 1.0 : 0.0)) * inv;
      for (std::size_t k = 0; k < d; ++k) {
        g_m[i][k] += g * e_enc[j][k];
        g_e[j][k] += g * m_enc[i][k];
      }
    }
  }
  res.loss *= inv;
  res.degenerate = n_pos == 0 || n_pos == n_pairs;
  for (std::size_t i = 0; i < batch.size(); ++i) backprop_tower(res.grads.mention, batch[i].mention, g_m[i]);
  for (std::size_t j = 0; j < ids.size(); ++j) backprop_tower(res.grads.event, *event_fvs[j], g_e[j]);
  return res;
}

// --- hierarchy loss ------------------------------------------------------------------

struct HierarchyPair {
  EventId parent;
  FeatureVector parent_fv;
  EventId child;
  FeatureVector child_fv;
};

/// In-batch hierarchy BCE over ComplEx scores. Each of the N_h pairs
/// contributes a row: its parent against every distinct in-batch child, with
/// the children of that parent as positives.
inline LossResult hierarchy_loss(const EncoderParams& params, const ComplExHead& head,
                                 std::span<const HierarchyPair> batch) {
  if (batch.empty()) throw Error(ErrorKind::DegenerateBatch, "empty hierarchy batch");
  const std::size_t d = params.dim;
  if (head.dim != d) throw Error(ErrorKind::DimensionMismatch, "head dim differs from encoder dim");

  struct Child {
    const HierarchyPair* pair;
    Vec enc;
    ComplexProjection proj;
  };
  std::vector<Child> children;
  std::unordered_map<EventId, std::size_t> seen;
  for (const auto& p : batch) {
    if (seen.emplace(p.child, children.size()).second) {
      Vec enc = encode(params, p.child_fv, Tower::Event);
      auto proj = project(head, enc);
      children.push_back({&p, std::move(enc), std::move(proj)});
    }
  }

  const std::size_t rows = batch.size();
  const std::size_t cols = children.size();
  LossResult res{0.0, Gradients(d), false, rows * cols};
  res.grads.has_head = true;
  const double inv = 1.0 / static_cast<double>(rows);

  std::vector<Vec> g_child_re(cols, Vec(d, 0.0)), g_child_im(cols, Vec(d, 0.0));
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const Vec p_enc = encode(params, batch[i].parent_fv, Tower::Event);
    const auto pp = project(head, p_enc);
    Vec g_re(d, 0.0), g_im(d, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      const auto& c = children[j];
      const double s = complex_score(head, pp, c.proj);
      const bool y = c.pair->parent == batch[i].parent;
      n_pos += y;
      res.loss += bce_with_logit(s, y);
      const double g = (sigmoid(s) - (y ? 1.0 : 0.0)) * inv;
      for (std::size_t k = 0; k < d; ++k) {
        const double rk = head.r[k];
        g_re[k] -= g * rk * c.proj.im[k];
        g_im[k] += g * rk * c.proj.re[k];
        g_child_re[j][k] += g * rk * pp.im[k];
        g_child_im[j][k] -= g * rk * pp.re[k];
        res.grads.head.r[k] += g * (pp.im[k] * c.proj.re[k] - pp.re[k] * c.proj.im[k]);
      }
    }
    // Through the projections into the head weights and the event encoding.
    Vec g_enc(d, 0.0);
    for (std::size_t a = 0; a < d; ++a) {
      res.grads.head.b_re[a] += g_re[a];
      res.grads.head.b_im[a] += g_im[a];
      for (std::size_t b = 0; b < d; ++b) {
        res.grads.head.w_re[a * d + b] += g_re[a] * p_enc[b];
        res.grads.head.w_im[a * d + b] += g_im[a] * p_enc[b];
        g_enc[b] += head.w_re[a * d + b] * g_re[a] + head.w_im[a * d + b] * g_im[a];
      }
    }
    backprop_tower(res.grads.event, batch[i].parent_fv, g_enc);
  }
  for (std::size_t j = 0; j < cols; ++j) {
    const auto& c = children[j];
    Vec g_enc(d, 0.0);
    for (std::size_t a = 0; a < d; ++a) {
      res.grads.head.b_re[a] += g_child_re[j][a];
      res.grads.head.b_im[a] += g_child_im[j][a];
      for (std::size_t b = 0; b < d; ++b) {
        res.grads.head.w_re[a * d + b] += g_child_re[j][a] * c.enc[b];
        res.grads.head.w_im[a * d + b] += g_child_im[j][a] * c.enc[b];
        g_enc[b] += head.w_re[a * d + b] * g_child_re[j][a] + head.w_im[a * d + b] * g_child_im[j][a];
      }
    }
    backprop_tower(res.grads.event, c.pair->child_fv, g_enc);
  }
  res.loss *= inv;
  res.degenerate = n_pos == 0 || n_pos == res.pairs;
  return res;
}

// --- training loop -------------------------------------------------------------------

enum class Strategy { Baseline, HP, HJL, HP_HJL };

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Baseline: return "baseline";
    case Strategy::HP: return "hp";
    case Strategy::HJL: return "hjl";
    case Strategy::HP_HJL: return "hp_hjl";
  }
  return "";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "baseline" || s == "BASELINE") return Strategy::Baseline;
  if (s == "hp" || s == "HP") return Strategy::HP;
  if (s == "hjl" || s == "HJL") return Strategy::HJL;
  if (s == "hp_hjl" || s == "HP_HJL" || s == "hp+hjl" || s == "HP+HJL") return Strategy::HP_HJL;
  throw Error(ErrorKind::ConfigError, "unknown strategy '" + std::string(s) + "'");
}

struct TrainConfig {
  Strategy strategy = Strategy::Baseline;
  double learning_rate = 50.0;
  int epochs = 30;           // linking (or joint) epochs
  std::size_t batch_size = 64;        // mentions per step
  std::size_t hier_batch_size = 128;  // N_h
  double hier_loss_weight = 0.01;
  int pretrain_epochs = 1;   // hierarchy-only epochs for HP and HP_HJL
  std::uint64_t seed = 0;
  std::size_t embed_dim = 32;
  double init_scale = 0.05;
  double head_learning_rate = 2.0;  // ComplEx head step size

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be positive");
    if (epochs < 0 || pretrain_epochs < 0) throw Error(ErrorKind::InvalidConfig, "negative epoch count");
    if (batch_size == 0 || hier_batch_size == 0 || embed_dim == 0)
      throw Error(ErrorKind::InvalidConfig, "batch sizes and embed_dim must be positive");
    if (!(head_learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "head_learning_rate must be positive");
    if (!(hier_loss_weight >= 0.0)) throw Error(ErrorKind::InvalidConfig, "hier_loss_weight must be >= 0");
  }

  io::json to_json() const {
    return {{"strategy", strategy_name(strategy)}, {"learning_rate", learning_rate},
            {"epochs", epochs},                    {"batch_size", batch_size},
            {"hier_batch_size", hier_batch_size},  {"hier_loss_weight", hier_loss_weight},
            {"pretrain_epochs", pretrain_epochs},  {"seed", seed},
            {"embed_dim", embed_dim},              {"init_scale", init_scale},
            {"head_learning_rate", head_learning_rate}};
  }

  static TrainConfig from_json(const io::json& j) {
    TrainConfig c;
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.hier_batch_size = j.value("hier_batch_size", c.hier_batch_size);
    c.hier_loss_weight = j.value("hier_loss_weight", c.hier_loss_weight);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.seed = j.value("seed", c.seed);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.init_scale = j.value("init_scale", c.init_scale);
    c.head_learning_rate = j.value("head_learning_rate", c.head_learning_rate);
    return c;
  }
};

enum class Phase { Pretrain, Link, Joint };

inline std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Pretrain: return "pretrain";
    case Phase::Link: return "link";
    case Phase::Joint: return "joint";
  }
  return "";
}

struct EpochLog {
  int epoch = 0;
  Phase phase = Phase::Link;
  std::optional<double> linking_loss;
  std::optional<double> hierarchy_loss;

  io::json to_json() const {
    io::json j{{"epoch", epoch}, {"phase", phase_name(phase)}};
    j["linking_loss"] = linking_loss ? io::json(*linking_loss) : io::json(nullptr);
    j["hierarchy_loss"] = hierarchy_loss ? io::json(*hierarchy_loss) : io::json(nullptr);
    return j;
  }
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::vector<double> step_linking_losses;
  std::vector<double> step_hierarchy_losses;
  std::size_t degenerate_batches = 0;
};

struct TrainingSet {
  std::vector<LinkingExample> examples;
  std::vector<HierarchyPair> pairs;
};

struct TrainResult {
  EncoderParams params;
  ComplExHead head;
  TrainLog log;
};

/// Linking examples for `instances` and hierarchy pairs for every forest edge
/// whose endpoints both lie in `active` (all edges when null). Hierarchy pairs
/// use English labels.
inline TrainingSet make_training_set(std::span<const GroundingInstance> instances,
                                     const KnowledgeBase& kb, const HierarchyForest& forest,
                                     const Featurizer& featurizer, TaskMode mode,
                                     const std::set<EventId>* active = nullptr) {
  TrainingSet set;
  for (const auto& inst : instances) {
    LinkingExample ex;
    ex.mention = featurizer.featurize_mention(inst.mention);
    for (const auto& id : forest.ancestor_chain(inst.atomic_event)) {
      ex.gold_events.emplace_back(id, featurizer.featurize_event(kb.at(id), inst.mention.language, mode));
    }
    set.examples.push_back(std::move(ex));
  }
  const std::string english(kFallbackLanguage);
  for (const auto& [child, parent] : forest.parent()) {
    if (active && (!active->count(child) || !active->count(parent))) continue;
    set.pairs.push_back({parent, featurizer.featurize_event(kb.at(parent), english, TaskMode::Crosslingual),
                         child, featurizer.featurize_event(kb.at(child), english, TaskMode::Crosslingual)});
  }
  return set;
}

inline void sgd_step(EncoderParams& params, ComplExHead& head, const Gradients& g, double lr,
                     double head_lr) {
  const std::size_t d = params.dim;
  for (const auto& [row, v] : g.mention.rows) {
    double* w = params.w_mention.data() + static_cast<std::size_t>(row) * d;
    for (std::size_t k = 0; k < d; ++k) w[k] -= lr * v[k];
  }
  for (const auto& [row, v] : g.event.rows) {
    double* w = params.w_event.data() + static_cast<std::size_t>(row) * d;
    for (std::size_t k = 0; k < d; ++k) w[k] -= lr * v[k];
  }
  if (g.has_head) {
    auto step = [head_lr](Vec& w, const Vec& gw) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= head_lr * gw[i];
    };
    step(head.w_re, g.head.w_re);
    step(head.w_im, g.head.w_im);
    step(head.b_re, g.head.b_re);
    step(head.b_im, g.head.b_im);
    step(head.r, g.head.r);
  }
}

/// Seeded uniform(-scale, scale) weights, zero biases. Draw order: mention
/// tower, event tower, W_Re, W_Im, r.
inline std::pair<EncoderParams, ComplExHead> init_params(std::uint32_t feature_dim, std::size_t d,
                                                         double scale, std::uint64_t seed) {
  EncoderParams params(feature_dim, d);
  ComplExHead head(d);
  Rng rng(derive_seed(seed, "init"));
  init_uniform(params.w_mention, rng, scale);
  init_uniform(params.w_event, rng, scale);
  init_uniform(head.w_re, rng, scale);
  init_uniform(head.w_im, rng, scale);
  init_uniform(head.r, rng, scale);
  return {std::move(params), std::move(head)};
}

/// Mini-batch SGD over the selected strategy. Baseline: linking epochs.
/// HP: pretrain_epochs of hierarchy loss, then linking epochs. HJL: joint
/// epochs (linking + weight * hierarchy on an independently sampled pair
/// batch every step). HP_HJL: pretraining, then joint epochs.
inline TrainResult train(const TrainingSet& data, std::uint32_t feature_dim, const TrainConfig& cfg) {
  cfg.validate();
  if (data.examples.empty()) throw Error(ErrorKind::EmptyTrainSplit, "no training mentions");
  const bool uses_hierarchy = cfg.strategy != Strategy::Baseline;
  if (uses_hierarchy && data.pairs.empty()) {
    throw Error(ErrorKind::NoHierarchyEdges, std::string(strategy_name(cfg.strategy)) +
                                                 " needs parent-child pairs in the training split");
  }

  auto [params, head] = init_params(feature_dim, cfg.embed_dim, cfg.init_scale, cfg.seed);
  TrainResult out{std::move(params), std::move(head), {}};
  Rng batch_rng(derive_seed(cfg.seed, "batching"));
  Rng hier_rng(derive_seed(cfg.seed, "hierarchy"));

  std::vector<Phase> phases;
  const bool pretrain = cfg.strategy == Strategy::HP || cfg.strategy == Strategy::HP_HJL;
  const bool joint = cfg.strategy == Strategy::HJL || cfg.strategy == Strategy::HP_HJL;
  if (pretrain) phases.insert(phases.end(), static_cast<std::size_t>(cfg.pretrain_epochs), Phase::Pretrain);
  phases.insert(phases.end(), static_cast<std::size_t>(cfg.epochs), joint ? Phase::Joint : Phase::Link);

  auto sample_pairs = [&](std::size_t n) {
    std::vector<std::size_t> idx(data.pairs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t take = std::min(n, idx.size());
    for (std::size_t i = 0; i < take; ++i) {  // partial Fisher-Yates
      const std::size_t j = i + static_cast<std::size_t>(hier_rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    std::vector<HierarchyPair> batch;
    for (std::size_t i = 0; i < take; ++i) batch.push_back(data.pairs[idx[i]]);
    return batch;
  };

  for (std::size_t e = 0; e < phases.size(); ++e) {
    const Phase phase = phases[e];
    EpochLog entry{static_cast<int>(e), phase, std::nullopt, std::nullopt};
    double link_sum = 0.0, hier_sum = 0.0;
    std::size_t steps = 0;

    if (phase == Phase::Pretrain) {
      std::vector<std::size_t> order(data.pairs.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      hier_rng.shuffle(order);
      for (std::size_t b = 0; b < order.size(); b += cfg.hier_batch_size) {
        std::vector<HierarchyPair> batch;
        for (std::size_t i = b; i < std::min(order.size(), b + cfg.hier_batch_size); ++i)
          batch.push_back(data.pairs[order[i]]);
        auto res = hierarchy_loss(out.params, out.head, batch);
        out.log.degenerate_batches += res.degenerate;
        out.log.step_hierarchy_losses.push_back(res.loss);
        hier_sum += res.loss;
        ++steps;
        sgd_step(out.params, out.head, res.grads, cfg.learning_rate, cfg.head_learning_rate);
      }
      entry.hierarchy_loss = hier_sum / static_cast<double>(std::max<std::size_t>(steps, 1));
    } else {
      std::vector<std::size_t> order(data.examples.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      batch_rng.shuffle(order);
      for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
        std::vector<LinkingExample> batch;
        for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i)
          batch.push_back(data.examples[order[i]]);
        auto res = linking_loss(out.params, batch);
        out.log.degenerate_batches += res.degenerate;
        out.log.step_linking_losses.push_back(res.loss);
        link_sum += res.loss;
        if (phase == Phase::Joint) {
          const auto pairs = sample_pairs(cfg.hier_batch_size);
          auto hres = hierarchy_loss(out.params, out.head, pairs);
          out.log.step_hierarchy_losses.push_back(hres.loss);
          hier_sum += hres.loss;
          res.grads.add(hres.grads, cfg.hier_loss_weight);
        }
        ++steps;
        sgd_step(out.params, out.head, res.grads, cfg.learning_rate, cfg.head_learning_rate);
      }
      const double n = static_cast<double>(std::max<std::size_t>(steps, 1));
      entry.linking_loss = link_sum / n;
      if (phase == Phase::Joint) entry.hierarchy_loss = hier_sum / n;
    }
    out.log.epochs.push_back(entry);
  }
  return out;
}

inline TrainResult train(std::span<const GroundingInstance> instances, const KnowledgeBase& kb,
                         const HierarchyForest& forest, const Featurizer& featurizer, TaskMode mode,
                         const TrainConfig& cfg, const std::set<EventId>* active = nullptr) {
  return train(make_training_set(instances, kb, forest, featurizer, mode, active), featurizer.dim(), cfg);
}

inline std::vector<io::json> train_log_rows(const TrainLog& log) {
  std::vector<io::json> rows;
  for (const auto& e : log.epochs) rows.push_back(e.to_json());
  return rows;
}

// --- gradient verification ------------------------------------------------------------

enum class LossKind { Linking, Hierarchy };

struct ProbeConfig {
  std::uint32_t feature_dim = 24;
  std::size_t dim = 4;
  std::size_t mentions = 3;
  std::size_t events = 4;
  std::size_t nnz = 6;           // features per probe vector
  double param_scale = 0.5;
  bool zero_params = false;
  double step = 1e-5;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double loss = 0.0;
  std::size_t parameters = 0;
  bool finite = true;
};

/// Compares analytic gradients with central differences over every
/// parameter of both towers and the head.
inline GradCheckResult gradient_check(LossKind kind, const ProbeConfig& probe = {}) {
  Rng rng(probe.seed);
  EncoderParams params(probe.feature_dim, probe.dim);
  ComplExHead head(probe.dim);
  if (!probe.zero_params) {
    for (Vec* v : {&params.w_mention, &params.w_event, &head.w_re, &head.w_im, &head.b_re, &head.b_im, &head.r})
      init_uniform(*v, rng, probe.param_scale);
  }
  auto random_fv = [&] {
    FeatureCounts c;
    for (std::size_t i = 0; i < probe.nnz; ++i) c[static_cast<std::uint32_t>(rng.below(probe.feature_dim))] += 1.0 + rng.unit();
    return normalized(c);
  };

  std::vector<LinkingExample> link_batch;
  std::vector<HierarchyPair> hier_batch;
  std::vector<FeatureVector> event_fv;
  for (std::size_t j = 0; j < probe.events; ++j) event_fv.push_back(random_fv());
  if (kind == LossKind::Linking) {
    for (std::size_t i = 0; i < probe.mentions; ++i) {
      LinkingExample ex{random_fv(), {}};
      const std::size_t first = i % probe.events;
      ex.gold_events.emplace_back("E" + std::to_string(first), event_fv[first]);
      if (i % 2 == 0) {
        const std::size_t second = (first + 1) % probe.events;
        ex.gold_events.emplace_back("E" + std::to_string(second), event_fv[second]);
      }
      link_batch.push_back(std::move(ex));
    }
  } else {
    // Parents E0 and E1; E0 has two children so a row holds two positives.
    for (std::size_t j = 2; j < probe.events; ++j) {
      const std::size_t p = (j == 2 || j == 3) ? 0 : 1;
      hier_batch.push_back({"E" + std::to_string(p), event_fv[p], "E" + std::to_string(j), event_fv[j]});
    }
    hier_batch.push_back({"E1", event_fv[1], "E" + std::to_string(probe.events), random_fv()});
  }

  auto evaluate = [&]() {
    return kind == LossKind::Linking ? linking_loss(params, link_batch) : hierarchy_loss(params, head, hier_batch);
  };
  const LossResult base = evaluate();
  GradCheckResult out;
  out.loss = base.loss;
  out.finite = std::isfinite(base.loss);

  std::vector<std::pair<Vec*, Vec>> blocks;
  blocks.emplace_back(&params.w_mention, base.grads.mention.densify(probe.feature_dim));
  blocks.emplace_back(&params.w_event, base.grads.event.densify(probe.feature_dim));
  const Vec zero_dd(probe.dim * probe.dim, 0.0), zero_d(probe.dim, 0.0);
  const bool hg = base.grads.has_head;
  blocks.emplace_back(&head.w_re, hg ? base.grads.head.w_re : zero_dd);
  blocks.emplace_back(&head.w_im, hg ? base.grads.head.w_im : zero_dd);
  blocks.emplace_back(&head.b_re, hg ? base.grads.head.b_re : zero_d);
  blocks.emplace_back(&head.b_im, hg ? base.grads.head.b_im : zero_d);
  blocks.emplace_back(&head.r, hg ? base.grads.head.r : zero_d);

  for (auto& [param, analytic] : blocks) {
    for (std::size_t i = 0; i < param->size(); ++i) {
      const double saved = (*param)[i];
      (*param)[i] = saved + probe.step;
      const double up = evaluate().loss;
      (*param)[i] = saved - probe.step;
      const double down = evaluate().loss;
      (*param)[i] = saved;
      const double fd = (up - down) / (2.0 * probe.step);
      const double a = analytic[i];
      out.finite = out.finite && std::isfinite(a) && std::isfinite(fd);
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(a - fd) / denom);
      ++out.parameters;
    }
  }
  return out;
}

}  // namespace heg
