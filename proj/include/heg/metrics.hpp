#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "heg/error.hpp"
#include "heg/jsonl.hpp"
#include "heg/kb.hpp"

namespace heg {

/// Reserved prediction for "no candidate cleared the threshold". Never a
/// gold event.
inline const EventId kNullEvent = "NULL";

struct EvalRecord {
  std::string mention_id;
  std::set<EventId> gold;
  EventId atomic;                              // deepest gold event
  std::vector<EventId> ranked;                 // bi-encoder retrieval order
  std::optional<std::set<EventId>> predicted;  // thresholded reranker output
  std::vector<EventId> reranked;               // candidates by reranker score
};

namespace detail {

inline void require_records(std::span<const EvalRecord> records) {
  if (records.empty()) throw Error(ErrorKind::EmptyRecords, "no evaluation records");
}

inline bool prefix_contains(const std::vector<EventId>& ranked, std::size_t k, const EventId& id) {
  const auto end = ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size()));
  return std::find(ranked.begin(), end, id) != end;
}

inline std::size_t prefix_hits(const std::vector<EventId>& ranked, std::size_t k, const std::set<EventId>& gold) {
  std::size_t hits = 0;
  for (const auto& g : gold) hits += prefix_contains(ranked, k, g);
  return hits;
}

}  // namespace detail

/// Fraction of mentions whose whole gold set is inside the top-k; with
/// `atomic_only`, whose atomic event is.
inline double recall_at_k(std::span<const EvalRecord> records, std::size_t k, bool atomic_only,
                          std::vector<std::string>* warnings = nullptr) {
  detail::require_records(records);
  if (k < 1) throw Error(ErrorKind::InvalidConfig, "k must be >= 1");
  if (!atomic_only && k < 4 && warnings) {
    warnings->push_back("strict Recall@" + std::to_string(k) +
                        " cannot cover gold sets of up to 4 events; Recall@min is the intended measure");
  }
  std::size_t hits = 0;
  for (const auto& r : records) {
    hits += atomic_only ? detail::prefix_contains(r.ranked, k, r.atomic)
                        : detail::prefix_hits(r.ranked, k, r.gold) == r.gold.size();
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

/// Per mention, the top-|gold| candidates must be exactly the gold events.
inline double recall_at_min(std::span<const EvalRecord> records) {
  detail::require_records(records);
  std::size_t hits = 0;
  for (const auto& r : records) hits += detail::prefix_hits(r.ranked, r.gold.size(), r.gold) == r.gold.size();
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

/// Mean over mentions of (gold events in top-k) / |gold|.
inline double recall_at_k_fraction(std::span<const EvalRecord> records, std::size_t k) {
  detail::require_records(records);
  if (k < 1) throw Error(ErrorKind::InvalidConfig, "k must be >= 1");
  double sum = 0.0;
  for (const auto& r : records) {
    sum += static_cast<double>(detail::prefix_hits(r.ranked, k, r.gold)) / static_cast<double>(r.gold.size());
  }
  return sum / static_cast<double>(records.size());
}

struct SetMetrics {
  double strict_acc = 0.0;
  double strict_acc_top_min = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;

  /// Threshold-selection objective.
  double product() const { return strict_acc * macro_f1 * micro_f1; }

  io::json to_json() const {
    return {{"strict_acc", strict_acc},           {"strict_acc_top_min", strict_acc_top_min},
            {"macro_precision", macro_precision}, {"macro_recall", macro_recall},
            {"macro_f1", macro_f1},               {"micro_precision", micro_precision},
            {"micro_recall", micro_recall},       {"micro_f1", micro_f1}};
  }
};

inline double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Strict accuracy, macro and micro precision/recall/F1 over the predicted
/// sets. Macro F1 is the harmonic mean of the aggregate MaP and MaR. The
/// top-min accuracy predicts the |gold| best reranked candidates (retrieval
/// order when a record carries no reranked list).
inline SetMetrics set_metrics(std::span<const EvalRecord> records) {
  detail::require_records(records);
  SetMetrics m;
  std::size_t strict = 0, strict_top = 0;
  double inter_total = 0.0, pred_total = 0.0, gold_total = 0.0;
  for (const auto& r : records) {
    if (!r.predicted) throw Error(ErrorKind::InvalidConfig, "record " + r.mention_id + " has no prediction");
    const std::set<EventId> pred = r.predicted->empty() ? std::set<EventId>{kNullEvent} : *r.predicted;
    std::size_t inter = 0;
    for (const auto& p : pred) inter += r.gold.count(p);
    strict += pred == r.gold;
    m.macro_precision += static_cast<double>(inter) / static_cast<double>(pred.size());
    m.macro_recall += static_cast<double>(inter) / static_cast<double>(r.gold.size());
    inter_total += static_cast<double>(inter);
    pred_total += static_cast<double>(pred.size());
    gold_total += static_cast<double>(r.gold.size());

    const auto& order = r.reranked.empty() ? r.ranked : r.reranked;
    const std::size_t x = std::min(r.gold.size(), order.size());
    const std::set<EventId> top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(x));
    strict_top += top == r.gold;
  }
  const double n = static_cast<double>(records.size());
  m.strict_acc = static_cast<double>(strict) / n;
  m.strict_acc_top_min = static_cast<double>(strict_top) / n;
  m.macro_precision /= n;
  m.macro_recall /= n;
  m.macro_f1 = harmonic(m.macro_precision, m.macro_recall);
  m.micro_precision = pred_total > 0 ? inter_total / pred_total : 0.0;
  m.micro_recall = gold_total > 0 ? inter_total / gold_total : 0.0;
  m.micro_f1 = harmonic(m.micro_precision, m.micro_recall);
  return m;
}

/// Parent-discovery Recall@k over the non-root events of `query_events`.
/// Events with a parent but no ranking (never linked) are misses.
inline double relext_recall_at_k(const std::map<EventId, std::vector<EventId>>& rankings,
                                 const HierarchyForest& forest, std::span<const EventId> query_events,
                                 std::size_t k) {
  std::size_t total = 0, hits = 0;
  for (const auto& e : query_events) {
    const auto parent = forest.parent_of(e);
    if (!parent) continue;
    ++total;
    auto it = rankings.find(e);
    if (it != rankings.end() && detail::prefix_contains(it->second, k, *parent)) ++hits;
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

}  // namespace heg
