#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heg/dataset.hpp"
#include "heg/encoder.hpp"
#include "heg/error.hpp"
#include "heg/jsonl.hpp"
#include "heg/kb.hpp"

namespace heg {

struct ScoredEvent {
  EventId event;
  double score = 0.0;

  friend bool operator==(const ScoredEvent&, const ScoredEvent&) = default;
};

/// Ranking order: higher score first, ties by ascending id.
inline bool ranks_before(const ScoredEvent& a, const ScoredEvent& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.event < b.event;
}

struct RetrievalResult {
  std::string mention_id;
  std::vector<ScoredEvent> candidates;

  std::vector<EventId> ids() const {
    std::vector<EventId> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(c.event);
    return out;
  }

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

/// Event-tower encodings of the candidate pool. Crosslingual indexes hold
/// one English matrix; multilingual indexes hold one matrix per requested
/// mention language.
class CandidateIndex {
 public:
  const std::vector<EventId>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  TaskMode mode() const { return mode_; }

  const Vec& matrix(const std::string& language) const {
    const std::string key = mode_ == TaskMode::Crosslingual ? std::string(kFallbackLanguage) : language;
    auto it = matrices_.find(key);
    if (it == matrices_.end()) {
      throw Error(ErrorKind::MissingLabel, "index has no encodings for language '" + language + "'");
    }
    return it->second;
  }

  const std::map<std::string, Vec>& matrices() const { return matrices_; }

 private:
  std::vector<EventId> ids_;
  std::size_t dim_ = 0;
  TaskMode mode_ = TaskMode::Crosslingual;
  std::map<std::string, Vec> matrices_;

  friend CandidateIndex build_index(const EncoderParams&, const KnowledgeBase&, const std::set<EventId>&,
                                    const Featurizer&, TaskMode, const std::set<std::string>&);
};

/// Encodes every pool event. In multilingual mode one matrix is built per
/// language in `languages` (events without that label fall back to English).
inline CandidateIndex build_index(const EncoderParams& params, const KnowledgeBase& kb,
                                  const std::set<EventId>& pool, const Featurizer& featurizer,
                                  TaskMode mode, const std::set<std::string>& languages = {"en"}) {
  CandidateIndex index;
  index.ids_.assign(pool.begin(), pool.end());
  index.dim_ = params.dim;
  index.mode_ = mode;
  std::set<std::string> langs;
  if (mode == TaskMode::Crosslingual) {
    langs.insert(std::string(kFallbackLanguage));
  } else {
    langs = languages;
  }
  for (const auto& lang : langs) {
    Vec m;
    m.reserve(index.ids_.size() * params.dim);
    for (const auto& id : index.ids_) {
      const Vec row = encode(params, featurizer.featurize_event(kb.at(id), lang, mode), Tower::Event);
      m.insert(m.end(), row.begin(), row.end());
    }
    index.matrices_.emplace(lang, std::move(m));
  }
  return index;
}

/// Exact top-k by inner product with a bounded selection heap.
inline RetrievalResult topk(const CandidateIndex& index, std::span<const double> query, std::size_t k,
                            const std::string& language = std::string(kFallbackLanguage)) {
  if (k < 1 || k > index.size()) {
    throw Error(ErrorKind::KTooLarge,
                "k=" + std::to_string(k) + " for a pool of " + std::to_string(index.size()));
  }
  if (query.size() != index.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "query of size " + std::to_string(query.size()) +
                                                  " for index of dim " + std::to_string(index.dim()));
  }
  const Vec& m = index.matrix(language);
  const std::size_t d = index.dim();
  // Heap top is the worst kept candidate.
  auto worse_on_top = [](const ScoredEvent& a, const ScoredEvent& b) { return ranks_before(a, b); };
  std::priority_queue<ScoredEvent, std::vector<ScoredEvent>, decltype(worse_on_top)> heap(worse_on_top);
  for (std::size_t row = 0; row < index.size(); ++row) {
    ScoredEvent cand{index.ids()[row], dot(query, std::span<const double>(m.data() + row * d, d))};
    if (heap.size() < k) {
      heap.push(std::move(cand));
    } else if (ranks_before(cand, heap.top())) {
      heap.pop();
      heap.push(std::move(cand));
    }
  }
  RetrievalResult out;
  out.candidates.resize(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    out.candidates[i] = heap.top();
    heap.pop();
  }
  return out;
}

inline std::vector<RetrievalResult> retrieve_all(const CandidateIndex& index, const EncoderParams& params,
                                                 const Featurizer& featurizer,
                                                 std::span<const Mention> mentions, std::size_t k) {
  std::vector<RetrievalResult> out;
  out.reserve(mentions.size());
  for (const auto& m : mentions) {
    const Vec q = encode(params, featurizer.featurize_mention(m), Tower::Mention);
    auto r = topk(index, q, k, m.language);
    r.mention_id = m.id;
    out.push_back(std::move(r));
  }
  return out;
}

inline io::json retrieval_to_json(const RetrievalResult& r) {
  io::json cands = io::json::array();
  for (const auto& c : r.candidates) cands.push_back({{"event", c.event}, {"score", c.score}});
  return {{"mention_id", r.mention_id}, {"candidates", cands}};
}

inline RetrievalResult retrieval_from_json(const io::json& j) {
  RetrievalResult r;
  r.mention_id = j.at("mention_id").get<std::string>();
  for (const auto& c : j.at("candidates")) {
    r.candidates.push_back({c.at("event").get<std::string>(), c.at("score").get<double>()});
  }
  return r;
}

inline void save_retrievals(const std::filesystem::path& path, std::span<const RetrievalResult> rs) {
  std::vector<io::json> rows;
  for (const auto& r : rs) rows.push_back(retrieval_to_json(r));
  io::write_jsonl(path, rows);
}

inline std::vector<RetrievalResult> load_retrievals(const std::filesystem::path& path) {
  std::vector<RetrievalResult> out;
  io::read_jsonl(path, [&](const io::json& j, std::size_t) { out.push_back(retrieval_from_json(j)); });
  return out;
}

}  // namespace heg
