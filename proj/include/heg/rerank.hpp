#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "heg/checkpoint.hpp"
#include "heg/dataset.hpp"
#include "heg/encoder.hpp"
#include "heg/error.hpp"
#include "heg/kb.hpp"
#include "heg/metrics.hpp"
#include "heg/retrieval.hpp"
#include "heg/rng.hpp"
#include "heg/training.hpp"

namespace heg {

/// Joint mention-event features in three blocks of `block_dim`: the mention
/// window, the event text, and their shared n-grams (element-wise minimum of
/// raw counts). Each block is L2-normalized on its own.
class PairFeaturizer {
 public:
  explicit PairFeaturizer(FeaturizerConfig cfg = {4096, 3, 5, 128, 128}) : base_(cfg) {}

  std::uint32_t block_dim() const { return base_.dim(); }
  std::uint32_t dim() const { return 3 * base_.dim(); }
  const Featurizer& base() const { return base_; }

  static FeatureCounts intersection(const FeatureCounts& a, const FeatureCounts& b) {
    FeatureCounts out;
    for (const auto& [i, c] : a) {
      auto it = b.find(i);
      if (it != b.end()) out[i] = std::min(c, it->second);
    }
    return out;
  }

  FeatureVector featurize(const Mention& mention, const Event& event, TaskMode mode) const {
    const auto mc = base_.mention_counts(mention);
    const auto ec = base_.event_counts(event, mention.language, mode);
    const auto ic = intersection(mc, ec);
    FeatureVector out;
    const std::uint32_t b = block_dim();
    std::uint32_t offset = 0;
    for (const auto* counts : {&mc, &ec, &ic}) {
      for (const auto& [i, w] : normalized(*counts).entries) out.entries.emplace_back(offset + i, w);
      offset += b;
    }
    return out;
  }

 private:
  Featurizer base_;
};

/// One tanh hidden layer over the pair features: w . tanh(V^T x + c) + b.
struct RerankerParams {
  std::uint32_t input_dim = 0;
  std::size_t hidden = 0;
  Vec v;  // input_dim x hidden
  Vec c;
  Vec w;
  double b = 0.0;

  RerankerParams() = default;
  RerankerParams(std::uint32_t p, std::size_t h)
      : input_dim(p), hidden(h), v(static_cast<std::size_t>(p) * h, 0.0), c(h, 0.0), w(h, 0.0) {}

  friend bool operator==(const RerankerParams&, const RerankerParams&) = default;
};

struct RerankConfig {
  std::size_t k = 8;
  std::vector<double> grid{0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9};
  double threshold = 0.5;
  int epochs = 10;
  double learning_rate = 0.5;
  std::size_t batch_size = 16;
  std::size_t hidden = 32;
  std::uint32_t block_dim = 4096;
  double init_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (k == 0) throw Error(ErrorKind::InvalidConfig, "rerank k must be positive");
    if (grid.empty()) throw Error(ErrorKind::InvalidConfig, "empty threshold grid");
    for (double t : grid) {
      if (!(t > 0.0 && t < 1.0)) throw Error(ErrorKind::InvalidConfig, "threshold grid values must lie in (0, 1)");
    }
    if (epochs < 0 || !(learning_rate > 0.0) || batch_size == 0 || hidden == 0 || block_dim == 0) {
      throw Error(ErrorKind::InvalidConfig, "bad reranker training settings");
    }
  }

  io::json to_json() const {
    return {{"k", k},           {"grid", grid},           {"threshold", threshold},
            {"epochs", epochs}, {"learning_rate", learning_rate}, {"batch_size", batch_size},
            {"hidden", hidden}, {"block_dim", block_dim}, {"init_scale", init_scale},
            {"seed", seed}};
  }

  static RerankConfig from_json(const io::json& j) {
    RerankConfig c;
    c.k = j.value("k", c.k);
    c.grid = j.value("grid", c.grid);
    c.threshold = j.value("threshold", c.threshold);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.hidden = j.value("hidden", c.hidden);
    c.block_dim = j.value("block_dim", c.block_dim);
    c.init_scale = j.value("init_scale", c.init_scale);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

inline double reranker_score(const RerankerParams& p, const FeatureVector& x, Vec* hidden_out = nullptr) {
  Vec z = p.c;
  const std::size_t h = p.hidden;
  for (const auto& [i, val] : x.entries) {
    if (i >= p.input_dim) throw Error(ErrorKind::DimensionMismatch, "pair feature index out of range");
    const double* row = p.v.data() + static_cast<std::size_t>(i) * h;
    for (std::size_t k = 0; k < h; ++k) z[k] += val * row[k];
  }
  double s = p.b;
  for (std::size_t k = 0; k < h; ++k) {
    z[k] = std::tanh(z[k]);
    s += p.w[k] * z[k];
  }
  if (hidden_out) *hidden_out = std::move(z);
  return s;
}

// --- candidate lists ----------------------------------------------------------------

struct CandidateSlot {
  EventId event;
  std::optional<double> retrieval_score;  // empty for substituted golds
  bool gold = false;
  bool substituted = false;

  friend bool operator==(const CandidateSlot&, const CandidateSlot&) = default;
};

/// Training list for one mention: the top-k retrieval with every missing gold
/// event written over the negative of lowest retrieval score (the latest-
/// ranked one on ties), one gold at a time in ascending id order.
inline std::vector<CandidateSlot> substitute_missing_golds(const RetrievalResult& retrieval,
                                                           const std::set<EventId>& gold, std::size_t k) {
  if (retrieval.candidates.empty()) {
    throw Error(ErrorKind::EmptyRetrievals, "mention " + retrieval.mention_id + " has no candidates");
  }
  const std::size_t n = std::min(k, retrieval.candidates.size());
  if (gold.size() > n) {
    throw Error(ErrorKind::InvalidConfig, "gold set of " + std::to_string(gold.size()) +
                                              " exceeds the " + std::to_string(n) + " candidate slots");
  }
  std::vector<CandidateSlot> slots;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = retrieval.candidates[i];
    slots.push_back({c.event, c.score, gold.count(c.event) != 0, false});
  }
  for (const auto& g : gold) {
    const bool present = std::any_of(slots.begin(), slots.end(), [&](const CandidateSlot& s) { return s.event == g; });
    if (present) continue;
    std::size_t victim = slots.size();
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i].gold) continue;
      if (victim == slots.size() || *slots[i].retrieval_score <= *slots[victim].retrieval_score) victim = i;
    }
    slots[victim] = {g, std::nullopt, true, true};
  }
  return slots;
}

struct RerankExample {
  Mention mention;
  std::set<EventId> gold;
  RetrievalResult retrieval;
};

struct RerankTrainLog {
  std::vector<double> epoch_losses;
  std::size_t substitutions = 0;
  std::vector<std::vector<CandidateSlot>> candidate_lists;  // one per example, after substitution
};

/// BCE training on the substituted top-k lists, mini-batches of mentions,
/// plain SGD. Initialization: uniform(-init_scale, init_scale) for V and w,
/// zero biases.
inline RerankerParams train_reranker(std::span<const RerankExample> examples, const KnowledgeBase& kb,
                                     TaskMode mode, const RerankConfig& cfg, RerankTrainLog* log = nullptr) {
  cfg.validate();
  if (examples.empty()) throw Error(ErrorKind::EmptyRetrievals, "no reranker training examples");
  const PairFeaturizer pf({cfg.block_dim, 3, 5, 128, 128});

  struct Item {
    FeatureVector x;
    bool y;
  };
  std::vector<std::vector<Item>> lists;
  std::size_t substitutions = 0;
  for (const auto& ex : examples) {
    auto slots = substitute_missing_golds(ex.retrieval, ex.gold, cfg.k);
    std::vector<Item> items;
    for (const auto& s : slots) {
      substitutions += s.substituted;
      items.push_back({pf.featurize(ex.mention, kb.at(s.event), mode), s.gold});
    }
    lists.push_back(std::move(items));
    if (log) log->candidate_lists.push_back(std::move(slots));
  }

  RerankerParams p(pf.dim(), cfg.hidden);
  Rng init(derive_seed(cfg.seed, "rerank-init"));
  init_uniform(p.v, init, cfg.init_scale);
  init_uniform(p.w, init, cfg.init_scale);
  Rng batching(derive_seed(cfg.seed, "rerank-batching"));
  if (log) log->substitutions = substitutions;

  const std::size_t h = p.hidden;
  std::vector<std::size_t> order(lists.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    batching.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::size_t pairs = 0;
      for (std::size_t i = start; i < end; ++i) pairs += lists[order[i]].size();
      const double inv = 1.0 / static_cast<double>(pairs);
      std::map<std::uint32_t, Vec> g_v;
      Vec g_c(h, 0.0), g_w(h, 0.0);
      double g_b = 0.0, loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        for (const auto& item : lists[order[i]]) {
          Vec a;
          const double s = reranker_score(p, item.x, &a);
          loss += bce_with_logit(s, item.y);
          const double g = (sigmoid(s) - (item.y ? 1.0 : 0.0)) * inv;
          g_b += g;
          Vec dz(h);
          for (std::size_t k = 0; k < h; ++k) {
            g_w[k] += g * a[k];
            dz[k] = g * p.w[k] * (1.0 - a[k] * a[k]);
            g_c[k] += dz[k];
          }
          for (const auto& [row, val] : item.x.entries) {
            auto [it, inserted] = g_v.try_emplace(row);
            if (inserted) it->second.assign(h, 0.0);
            for (std::size_t k = 0; k < h; ++k) it->second[k] += val * dz[k];
          }
        }
      }
      const double lr = cfg.learning_rate;
      for (const auto& [row, gv] : g_v) {
        double* vrow = p.v.data() + static_cast<std::size_t>(row) * h;
        for (std::size_t k = 0; k < h; ++k) vrow[k] -= lr * gv[k];
      }
      for (std::size_t k = 0; k < h; ++k) {
        p.c[k] -= lr * g_c[k];
        p.w[k] -= lr * g_w[k];
      }
      p.b -= lr * g_b;
      epoch_loss += loss * inv;
      ++steps;
    }
    if (log) log->epoch_losses.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(steps, 1)));
  }
  return p;
}

// --- inference ----------------------------------------------------------------------

/// Reranker logits for a retrieval list, in retrieval order.
inline std::vector<ScoredEvent> score_candidates(const RerankerParams& p, const PairFeaturizer& pf,
                                                 const KnowledgeBase& kb, TaskMode mode,
                                                 const Mention& mention, const RetrievalResult& retrieval,
                                                 std::size_t k) {
  std::vector<ScoredEvent> out;
  const std::size_t n = std::min(k, retrieval.candidates.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = retrieval.candidates[i].event;
    out.push_back({id, reranker_score(p, pf.featurize(mention, kb.at(id), mode))});
  }
  return out;
}

/// Candidates with sigmoid(score) >= threshold, or {NULL} when none clear it.
inline std::set<EventId> predict_set(std::span<const ScoredEvent> scored, double threshold) {
  std::set<EventId> out;
  for (const auto& s : scored) {
    if (sigmoid(s.score) >= threshold) out.insert(s.event);
  }
  if (out.empty()) out.insert(kNullEvent);
  return out;
}

/// Candidate ids by descending reranker score (ties by id).
inline std::vector<EventId> rerank_order(std::span<const ScoredEvent> scored) {
  std::vector<ScoredEvent> sorted(scored.begin(), scored.end());
  std::stable_sort(sorted.begin(), sorted.end(), ranks_before);
  std::vector<EventId> out;
  for (const auto& s : sorted) out.push_back(s.event);
  return out;
}

struct ScoredMention {
  std::string mention_id;
  std::set<EventId> gold;
  std::vector<ScoredEvent> scored;
};

/// Grid value maximizing strict acc x macro F1 x micro F1 on dev; ties go to
/// the smaller threshold.
inline double select_threshold(std::span<const ScoredMention> dev, std::vector<double> grid,
                               std::vector<std::pair<double, double>>* trace = nullptr) {
  if (grid.empty()) throw Error(ErrorKind::InvalidConfig, "empty threshold grid");
  if (dev.empty()) throw Error(ErrorKind::EmptyRecords, "no dev mentions for threshold selection");
  std::sort(grid.begin(), grid.end());
  double best_t = grid.front();
  double best = -1.0;
  for (double t : grid) {
    std::vector<EvalRecord> records;
    for (const auto& m : dev) {
      EvalRecord r;
      r.mention_id = m.mention_id;
      r.gold = m.gold;
      r.predicted = predict_set(m.scored, t);
      records.push_back(std::move(r));
    }
    const double value = set_metrics(records).product();
    if (trace) trace->emplace_back(t, value);
    if (value > best) {
      best = value;
      best_t = t;
    }
  }
  return best_t;
}

// --- persistence ----------------------------------------------------------------------

inline void save_reranker(const std::filesystem::path& path, const RerankerParams& p, std::uint32_t block_dim,
                          double threshold) {
  ArrayBundle bundle;
  bundle.header = {{"kind", "reranker"}, {"P", p.input_dim}, {"h", p.hidden}, {"block_dim", block_dim},
                   {"threshold", threshold}};
  bundle.shapes = {{"V", {p.input_dim, p.hidden}}, {"c", {p.hidden}}, {"w", {p.hidden}}, {"b", {1}}};
  bundle.arrays = {p.v, p.c, p.w, Vec{p.b}};
  save_bundle(path, bundle);
}

struct StoredReranker {
  RerankerParams params;
  std::uint32_t block_dim = 0;
  double threshold = 0.5;
};

inline StoredReranker load_reranker(const std::filesystem::path& path) {
  const auto bundle = load_bundle(path);
  if (bundle.header.value("kind", std::string{}) != "reranker" || bundle.arrays.size() != 4) {
    throw Error(ErrorKind::ParseError, path.string() + " is not a reranker checkpoint");
  }
  StoredReranker s;
  s.params = RerankerParams(bundle.header.at("P").get<std::uint32_t>(), bundle.header.at("h").get<std::size_t>());
  s.params.v = bundle.arrays[0];
  s.params.c = bundle.arrays[1];
  s.params.w = bundle.arrays[2];
  s.params.b = bundle.arrays[3].at(0);
  s.block_dim = bundle.header.at("block_dim").get<std::uint32_t>();
  s.threshold = bundle.header.at("threshold").get<double>();
  return s;
}

inline void save_predictions(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::set<EventId>>>& predictions) {
  std::vector<io::json> rows;
  for (const auto& [id, set] : predictions) {
    rows.push_back({{"mention_id", id}, {"predicted", std::vector<EventId>(set.begin(), set.end())}});
  }
  io::write_jsonl(path, rows);
}

}  // namespace heg
