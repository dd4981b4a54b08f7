#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "heg/error.hpp"
#include "heg/jsonl.hpp"
#include "heg/kb.hpp"
#include "heg/rng.hpp"
#include "heg/utf8.hpp"

namespace heg {

/// A linked text span. Offsets are code-point offsets into `context`,
/// half-open.
struct Mention {
  std::string id;
  std::string language;
  std::string context;
  std::size_t span_start = 0;
  std::size_t span_end = 0;
  EventId anchor_event;

  friend bool operator==(const Mention&, const Mention&) = default;
};

inline void validate_mention(const Mention& m, const KnowledgeBase& kb) {
  const std::size_t len = utf8::length(m.context);
  if (!(m.span_start < m.span_end && m.span_end <= len)) {
    throw Error(ErrorKind::InvalidMention,
                "mention " + m.id + " span [" + std::to_string(m.span_start) + ", " +
                    std::to_string(m.span_end) + ") outside context of length " +
                    std::to_string(len));
  }
  if (!kb.contains(m.anchor_event)) {
    throw Error(ErrorKind::UnknownEvent, "mention " + m.id + " anchors " + m.anchor_event);
  }
}

inline std::string mention_text(const Mention& m) {
  const auto cps = utf8::decode(m.context);
  return utf8::encode(std::u32string_view(cps).substr(m.span_start, m.span_end - m.span_start));
}

struct GroundingInstance {
  Mention mention;
  std::set<EventId> gold_set;
  EventId atomic_event;
};

/// Gold set = the anchor's ancestor chain.
inline GroundingInstance expand_gold(const Mention& mention, const HierarchyForest& forest) {
  if (!forest.contains(mention.anchor_event)) {
    throw Error(ErrorKind::UnknownEvent, "mention " + mention.id + " anchors " + mention.anchor_event);
  }
  const auto chain = forest.ancestor_chain(mention.anchor_event);
  return GroundingInstance{mention, std::set<EventId>(chain.begin(), chain.end()),
                           mention.anchor_event};
}

inline std::vector<GroundingInstance> expand_all(std::span<const Mention> mentions,
                                                 const HierarchyForest& forest) {
  std::vector<GroundingInstance> out;
  out.reserve(mentions.size());
  for (const auto& m : mentions) out.push_back(expand_gold(m, forest));
  return out;
}

// --- zero-shot splits ----------------------------------------------------

enum class Split { Train, Dev, Test };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "";
}

inline Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "dev") return Split::Dev;
  if (name == "test") return Split::Test;
  throw Error(ErrorKind::ParseError, "unknown split '" + std::string(name) + "'");
}

struct SplitAssignment {
  std::map<EventId, int> components;  // event -> component id
  std::map<int, Split> splits;        // component id -> split
  std::uint64_t seed = 0;

  Split split_of(const EventId& id) const {
    auto it = components.find(id);
    if (it == components.end()) throw Error(ErrorKind::UnknownEvent, id);
    return splits.at(it->second);
  }

  std::set<EventId> events_in(Split s) const {
    std::set<EventId> out;
    for (const auto& [id, comp] : components) {
      if (splits.at(comp) == s) out.insert(id);
    }
    return out;
  }

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

/// Connected components over all four relation properties, assigned whole to
/// train/dev/test. Components are numbered by their smallest event id,
/// shuffled with `seed`, and each goes to the split with the largest
/// remaining event deficit (quota minus events already placed), earlier
/// split on ties.
inline SplitAssignment split_components(std::span<const Event> events,
                                        std::span<const RelationEdge> edges,
                                        std::array<double, 3> ratios, std::uint64_t seed) {
  if (events.empty()) throw Error(ErrorKind::EmptyKB, "no events to split");
  for (double r : ratios) {
    if (!(r >= 0.0)) throw Error(ErrorKind::InvalidConfig, "split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidConfig, "split ratios must sum to 1");
  }

  std::vector<EventId> ids;
  for (const auto& e : events) ids.push_back(e.id);
  std::sort(ids.begin(), ids.end());
  std::map<EventId, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);

  UnionFind uf(ids.size());
  for (const auto& edge : edges) {
    auto a = index.find(edge.subject);
    auto b = index.find(edge.object);
    if (a == index.end()) throw Error(ErrorKind::UnknownEvent, edge.subject);
    if (b == index.end()) throw Error(ErrorKind::UnknownEvent, edge.object);
    uf.unite(a->second, b->second);
  }

  // ids are sorted, so the first member seen fixes the component number.
  SplitAssignment out;
  out.seed = seed;
  std::map<std::size_t, int> comp_of_root;
  std::vector<std::size_t> comp_size;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t root = uf.find(i);
    auto [it, inserted] = comp_of_root.emplace(root, static_cast<int>(comp_size.size()));
    if (inserted) comp_size.push_back(0);
    ++comp_size[static_cast<std::size_t>(it->second)];
    out.components.emplace(ids[i], it->second);
  }

  std::vector<int> order(comp_size.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  const double total = static_cast<double>(ids.size());
  std::array<double, 3> quota{ratios[0] * total, ratios[1] * total, ratios[2] * total};
  std::array<double, 3> filled{0.0, 0.0, 0.0};
  constexpr std::array<Split, 3> kSplits{Split::Train, Split::Dev, Split::Test};
  for (int comp : order) {
    std::size_t pick = 0;
    for (std::size_t s = 1; s < 3; ++s) {
      if (quota[s] - filled[s] > quota[pick] - filled[pick] + 1e-9) pick = s;
    }
    filled[pick] += static_cast<double>(comp_size[static_cast<std::size_t>(comp)]);
    out.splits.emplace(comp, kSplits[pick]);
  }
  return out;
}

inline io::json splits_to_json(const SplitAssignment& a) {
  io::json comps = io::json::object();
  for (const auto& [id, c] : a.components) comps[id] = c;
  io::json splits = io::json::object();
  for (const auto& [c, s] : a.splits) splits[std::to_string(c)] = split_name(s);
  return {{"components", comps}, {"splits", splits}, {"seed", a.seed}};
}

inline SplitAssignment splits_from_json(const io::json& j) {
  SplitAssignment a;
  for (const auto& [id, c] : j.at("components").items()) {
    a.components.emplace(id, std::stoi(c.is_string() ? c.get<std::string>() : c.dump()));
  }
  for (const auto& [c, s] : j.at("splits").items()) {
    a.splits.emplace(std::stoi(c), parse_split(s.get<std::string>()));
  }
  a.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [id, c] : a.components) {
    if (!a.splits.count(c)) throw Error(ErrorKind::ParseError, "component without split for " + id);
  }
  return a;
}

/// Keeps the instances whose anchor lies in `split`. `dropped` receives the
/// number removed.
inline std::vector<GroundingInstance> instances_in_split(std::span<const GroundingInstance> all,
                                                         const SplitAssignment& assignment,
                                                         Split split, std::size_t* dropped = nullptr) {
  std::vector<GroundingInstance> out;
  std::size_t n_dropped = 0;
  for (const auto& inst : all) {
    if (assignment.split_of(inst.atomic_event) == split) {
      out.push_back(inst);
    } else {
      ++n_dropped;
    }
  }
  if (dropped) *dropped = n_dropped;
  return out;
}

// --- candidate pools ------------------------------------------------------

enum class PoolMode { Training, Inference };

/// Inference pools hold every event; training pools only in-hierarchy events,
/// optionally restricted to the events of the active split.
inline std::set<EventId> candidate_pool(std::span<const Event> events, PoolMode mode,
                                        const std::set<EventId>* active = nullptr) {
  std::set<EventId> out;
  for (const auto& e : events) {
    if (mode == PoolMode::Inference) {
      out.insert(e.id);
    } else if (e.in_hierarchy && (!active || active->count(e.id))) {
      out.insert(e.id);
    }
  }
  return out;
}

// --- statistics ------------------------------------------------------------

struct CorpusStats {
  std::size_t mentions = 0;
  std::size_t events = 0;  // events inside trees of height >= 1
  std::size_t trees = 0;
  double avg_children = 0.0;  // per non-terminal node
  double avg_depth = 0.0;     // effective depth, over trees with mentions

  io::json to_json() const {
    return {{"mentions", mentions},
            {"events", events},
            {"trees", trees},
            {"avg_children", avg_children},
            {"avg_effective_depth", avg_depth}};
  }
};

/// Effective depth of a tree is the deepest anchor actually used by a mention
/// (edges to the root); trees that no mention reaches are left out of the
/// depth average.
inline CorpusStats corpus_stats(std::span<const GroundingInstance> instances,
                                const HierarchyForest& forest) {
  CorpusStats st;
  st.mentions = instances.size();
  const auto roots = forest.tree_roots();
  st.trees = roots.size();

  std::size_t non_terminal = 0;
  std::size_t child_total = 0;
  for (const auto& [par, kids] : forest.children()) {
    ++non_terminal;
    child_total += kids.size();
  }
  for (const auto& id : forest.nodes()) {
    if (forest.in_tree(id)) ++st.events;
  }
  if (non_terminal) st.avg_children = static_cast<double>(child_total) / non_terminal;

  std::map<EventId, int> deepest;  // tree root -> deepest attested anchor
  for (const auto& inst : instances) {
    if (!forest.in_tree(inst.atomic_event)) continue;
    const int d = forest.depth(inst.atomic_event);
    auto [it, inserted] = deepest.emplace(forest.root_of(inst.atomic_event), d);
    if (!inserted) it->second = std::max(it->second, d);
  }
  if (!deepest.empty()) {
    double sum = 0.0;
    for (const auto& [root, d] : deepest) sum += d;
    st.avg_depth = sum / static_cast<double>(deepest.size());
  }
  return st;
}

// --- mention files ----------------------------------------------------------

inline io::json mention_to_json(const Mention& m) {
  return {{"id", m.id},
          {"language", m.language},
          {"context", m.context},
          {"span_start", m.span_start},
          {"span_end", m.span_end},
          {"anchor_event", m.anchor_event}};
}

inline Mention mention_from_json(const io::json& j) {
  Mention m;
  m.id = j.at("id").get<std::string>();
  m.language = j.at("language").get<std::string>();
  m.context = j.at("context").get<std::string>();
  const auto start = j.at("span_start").get<std::int64_t>();
  const auto end = j.at("span_end").get<std::int64_t>();
  if (start < 0 || end < 0) throw Error(ErrorKind::InvalidMention, "negative span offset in " + m.id);
  m.span_start = static_cast<std::size_t>(start);
  m.span_end = static_cast<std::size_t>(end);
  m.anchor_event = j.at("anchor_event").get<std::string>();
  return m;
}

inline std::vector<Mention> load_mentions(const std::filesystem::path& path) {
  std::vector<Mention> out;
  io::read_jsonl(path, [&](const io::json& j, std::size_t) { out.push_back(mention_from_json(j)); });
  return out;
}

inline void save_mentions(const std::filesystem::path& path, std::span<const Mention> mentions) {
  std::vector<io::json> rows;
  for (const auto& m : mentions) rows.push_back(mention_to_json(m));
  io::write_jsonl(path, rows);
}

}  // namespace heg
