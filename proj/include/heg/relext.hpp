#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "heg/error.hpp"
#include "heg/jsonl.hpp"
#include "heg/kb.hpp"
#include "heg/retrieval.hpp"

namespace heg {

/// M_e for every event: the mentions whose top-k retrieval contains e.
struct MentionLists {
  std::size_t k = 0;
  std::map<EventId, std::set<std::string>> by_event;
  std::map<std::string, std::vector<EventId>> by_mention;

  const std::set<std::string>& mentions_of(const EventId& e) const {
    static const std::set<std::string> kNone;
    auto it = by_event.find(e);
    return it == by_event.end() ? kNone : it->second;
  }
};

inline MentionLists build_mention_lists(std::span<const RetrievalResult> retrievals, std::size_t k = 4) {
  MentionLists lists;
  lists.k = k;
  for (const auto& r : retrievals) {
    auto& events = lists.by_mention[r.mention_id];
    const std::size_t n = std::min(k, r.candidates.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& e = r.candidates[i].event;
      if (std::find(events.begin(), events.end(), e) != events.end()) continue;
      events.push_back(e);
      lists.by_event[e].insert(r.mention_id);
    }
  }
  return lists;
}

/// h(child, parent) = |M_child ∩ M_parent| / |M_child|.
inline double h_score(const MentionLists& lists, const EventId& child, const EventId& parent) {
  const auto& mc = lists.mentions_of(child);
  if (mc.empty()) throw Error(ErrorKind::UndefinedScore, "event " + child + " has no linked mentions");
  const auto& mp = lists.mentions_of(parent);
  std::size_t shared = 0;
  for (const auto& m : mc) shared += mp.count(m);
  return static_cast<double>(shared) / static_cast<double>(mc.size());
}

/// Every other pool event as a candidate parent of `e`, by descending h.
/// Among equal h the candidate with fewer linked mentions comes first (the
/// tightest superset of M_e, so a parent outranks the grandparent it ties
/// with), then ascending id.
inline std::vector<ScoredEvent> rank_parents(const MentionLists& lists, const EventId& e,
                                             const std::set<EventId>& pool) {
  if (!pool.count(e)) throw Error(ErrorKind::UnknownEvent, e + " is not in the candidate pool");
  const auto& mc = lists.mentions_of(e);
  if (mc.empty()) throw Error(ErrorKind::UndefinedScore, "event " + e + " has no linked mentions");
  std::map<EventId, std::size_t> shared;
  for (const auto& m : mc) {
    for (const auto& other : lists.by_mention.at(m)) ++shared[other];
  }
  const double denom = static_cast<double>(mc.size());
  struct Entry {
    ScoredEvent scored;
    std::size_t linked;
  };
  std::vector<Entry> entries;
  entries.reserve(pool.size());
  for (const auto& cand : pool) {
    if (cand == e) continue;
    auto it = shared.find(cand);
    entries.push_back({{cand, it == shared.end() ? 0.0 : static_cast<double>(it->second) / denom},
                       lists.mentions_of(cand).size()});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.scored.score != b.scored.score) return a.scored.score > b.scored.score;
    if (a.linked != b.linked) return a.linked < b.linked;
    return a.scored.event < b.scored.event;
  });
  std::vector<ScoredEvent> out;
  out.reserve(entries.size());
  for (auto& en : entries) out.push_back(std::move(en.scored));
  return out;
}

/// Rankings for every linked event of `queries`; unlinked events are left
/// out (the metric counts them as misses).
inline std::map<EventId, std::vector<ScoredEvent>> parent_rankings(const MentionLists& lists,
                                                                  std::span<const EventId> queries,
                                                                  const std::set<EventId>& pool,
                                                                  std::size_t keep) {
  std::map<EventId, std::vector<ScoredEvent>> out;
  for (const auto& e : queries) {
    if (lists.mentions_of(e).empty()) continue;
    auto ranking = rank_parents(lists, e, pool);
    if (ranking.size() > keep) ranking.resize(keep);
    out.emplace(e, std::move(ranking));
  }
  return out;
}

inline std::map<EventId, std::vector<EventId>> ranking_ids(
    const std::map<EventId, std::vector<ScoredEvent>>& rankings) {
  std::map<EventId, std::vector<EventId>> out;
  for (const auto& [e, list] : rankings) {
    auto& ids = out[e];
    for (const auto& s : list) ids.push_back(s.event);
  }
  return out;
}

inline void save_parents(const std::filesystem::path& path,
                         const std::map<EventId, std::vector<ScoredEvent>>& rankings) {
  std::vector<io::json> rows;
  for (const auto& [e, list] : rankings) {
    io::json ranking = io::json::array();
    for (const auto& s : list) ranking.push_back({{"parent", s.event}, {"h", s.score}});
    rows.push_back({{"event", e}, {"ranking", ranking}});
  }
  io::write_jsonl(path, rows);
}

}  // namespace heg
