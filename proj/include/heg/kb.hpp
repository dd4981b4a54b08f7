#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "heg/error.hpp"
#include "heg/jsonl.hpp"

namespace heg {

using EventId = std::string;

struct Label {
  std::string title;
  std::string description;
};

struct Event {
  EventId id;
  std::map<std::string, Label> labels;  // language code -> label
  bool in_hierarchy = false;
};

enum class Property { HasPart, PartOf, Follows, FollowedBy };

inline std::string_view property_code(Property p) {
  switch (p) {
    case Property::HasPart: return "P527";
    case Property::PartOf: return "P361";
    case Property::Follows: return "P155";
    case Property::FollowedBy: return "P156";
  }
  return "";
}

inline Property parse_property(std::string_view code) {
  if (code == "P527") return Property::HasPart;
  if (code == "P361") return Property::PartOf;
  if (code == "P155") return Property::Follows;
  if (code == "P156") return Property::FollowedBy;
  throw Error(ErrorKind::ParseError, "unknown property '" + std::string(code) + "'");
}

inline bool is_hierarchical(Property p) { return p == Property::HasPart || p == Property::PartOf; }

struct RelationEdge {
  EventId subject;
  Property property;
  EventId object;

  friend bool operator==(const RelationEdge&, const RelationEdge&) = default;
};

/// Event table with id lookup. Events are kept sorted by id.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  explicit KnowledgeBase(std::vector<Event> events) : events_(std::move(events)) {
    std::sort(events_.begin(), events_.end(),
              [](const Event& a, const Event& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < events_.size(); ++i) {
      const auto& e = events_[i];
      if (e.id.empty()) throw Error(ErrorKind::ParseError, "event with empty id");
      if (e.labels.empty()) throw Error(ErrorKind::MissingLabel, "event " + e.id + " has no labels");
      if (i > 0 && events_[i - 1].id == e.id)
        throw Error(ErrorKind::ParseError, "duplicate event id " + e.id);
      index_.emplace(e.id, i);
    }
  }

  std::span<const Event> events() const { return events_; }
  std::span<Event> mutable_events() { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  bool contains(const EventId& id) const { return index_.count(id) != 0; }

  const Event& at(const EventId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorKind::UnknownEvent, id);
    return events_[it->second];
  }

 private:
  std::vector<Event> events_;
  std::unordered_map<EventId, std::size_t> index_;
};

/// Child -> parent trees over KB events. Every known event is a node; events
/// without a parent are roots, including singletons.
class HierarchyForest {
 public:
  HierarchyForest() = default;

  const std::map<EventId, EventId>& parent() const { return parent_; }
  const std::map<EventId, std::vector<EventId>>& children() const { return children_; }
  const std::set<EventId>& roots() const { return roots_; }
  const std::set<EventId>& nodes() const { return nodes_; }
  int max_height() const { return max_height_; }

  bool contains(const EventId& id) const { return nodes_.count(id) != 0; }

  std::optional<EventId> parent_of(const EventId& id) const {
    require(id);
    auto it = parent_.find(id);
    if (it == parent_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<EventId>& children_of(const EventId& id) const {
    static const std::vector<EventId> kNone;
    require(id);
    auto it = children_.find(id);
    return it == children_.end() ? kNone : it->second;
  }

  /// [id, parent(id), ..., root].
  std::vector<EventId> ancestor_chain(const EventId& id) const {
    require(id);
    std::vector<EventId> chain{id};
    for (auto it = parent_.find(id); it != parent_.end(); it = parent_.find(chain.back())) {
      chain.push_back(it->second);
    }
    return chain;
  }

  /// Number of edges from `id` up to its root.
  int depth(const EventId& id) const { return static_cast<int>(ancestor_chain(id).size()) - 1; }

  const EventId& root_of(const EventId& id) const {
    require(id);
    const EventId* cur = &*nodes_.find(id);
    for (auto it = parent_.find(*cur); it != parent_.end(); it = parent_.find(*cur)) {
      cur = &it->second;
    }
    return *cur;
  }

  /// True when the event belongs to a tree of height >= 1.
  bool in_tree(const EventId& id) const {
    return parent_.count(id) != 0 || children_.count(id) != 0;
  }

  /// Roots with at least one child, i.e. the trees of height >= 1.
  std::vector<EventId> tree_roots() const {
    std::vector<EventId> out;
    for (const auto& r : roots_) {
      if (children_.count(r)) out.push_back(r);
    }
    return out;
  }

  std::size_t edge_count() const { return parent_.size(); }

  friend bool operator==(const HierarchyForest&, const HierarchyForest&) = default;

 private:
  void require(const EventId& id) const {
    if (!nodes_.count(id)) throw Error(ErrorKind::UnknownEvent, id);
  }

  std::map<EventId, EventId> parent_;
  std::map<EventId, std::vector<EventId>> children_;
  std::set<EventId> roots_;
  std::set<EventId> nodes_;
  int max_height_ = 3;

  friend HierarchyForest assemble_forest(std::set<EventId>, std::map<EventId, EventId>, int);
};

/// Builds the forest from already-normalized child -> parent links and
/// validates it. Used by build_forest and by deserialization.
inline HierarchyForest assemble_forest(std::set<EventId> nodes,
                                       std::map<EventId, EventId> parent, int max_height) {
  if (max_height < 1) throw Error(ErrorKind::InvalidConfig, "max_height must be positive");
  HierarchyForest f;
  f.max_height_ = max_height;
  f.nodes_ = std::move(nodes);
  f.parent_ = std::move(parent);
  for (const auto& [child, par] : f.parent_) {
    if (!f.nodes_.count(child)) throw Error(ErrorKind::UnknownEvent, child);
    if (!f.nodes_.count(par)) throw Error(ErrorKind::UnknownEvent, par);
    f.children_[par].push_back(child);
  }
  for (auto& [par, kids] : f.children_) std::sort(kids.begin(), kids.end());

  // Functional graph: walk parent pointers, colouring nodes, to find cycles.
  std::unordered_map<EventId, int> state;  // 0 unseen, 1 on current path, 2 done
  for (const auto& start : f.nodes_) {
    if (state[start] == 2) continue;
    std::vector<EventId> path;
    EventId cur = start;
    while (true) {
      int& st = state[cur];
      if (st == 2) break;
      if (st == 1) {
        auto pos = std::find(path.begin(), path.end(), cur);
        std::string cycle;
        for (auto it = pos; it != path.end(); ++it) cycle += *it + " -> ";
        cycle += cur;
        throw Error(ErrorKind::CycleDetected, cycle);
      }
      st = 1;
      path.push_back(cur);
      auto it = f.parent_.find(cur);
      if (it == f.parent_.end()) break;
      cur = it->second;
    }
    for (const auto& p : path) state[p] = 2;
  }

  for (const auto& n : f.nodes_) {
    if (!f.parent_.count(n)) f.roots_.insert(n);
  }
  for (const auto& [child, par] : f.parent_) {
    if (f.children_.count(child)) continue;  // only leaves start the longest chains
    const auto chain = f.ancestor_chain(child);
    if (static_cast<int>(chain.size()) - 1 > max_height) {
      std::string text;
      for (std::size_t i = 0; i < chain.size(); ++i) text += (i ? " -> " : "") + chain[i];
      throw Error(ErrorKind::HeightExceeded, text + " exceeds max height " +
                                                 std::to_string(max_height));
    }
  }
  return f;
}

/// Normalizes has-part / part-of edges into child -> parent links, validates
/// the resulting forest and marks `in_hierarchy` on the events. Temporal
/// edges are checked for known endpoints but otherwise ignored.
inline HierarchyForest build_forest(std::span<Event> events, std::span<const RelationEdge> edges,
                                    int max_height = 3) {
  std::set<EventId> nodes;
  for (const auto& e : events) nodes.insert(e.id);

  std::set<std::pair<EventId, EventId>> links;  // (child, parent)
  for (const auto& edge : edges) {
    if (!nodes.count(edge.subject)) throw Error(ErrorKind::UnknownEvent, edge.subject);
    if (!nodes.count(edge.object)) throw Error(ErrorKind::UnknownEvent, edge.object);
    if (edge.subject == edge.object) {
      if (is_hierarchical(edge.property))
        throw Error(ErrorKind::CycleDetected, edge.subject + " -> " + edge.subject);
      throw Error(ErrorKind::InvalidEdge, "self edge on " + edge.subject);
    }
    if (edge.property == Property::PartOf) {
      links.emplace(edge.subject, edge.object);
    } else if (edge.property == Property::HasPart) {
      links.emplace(edge.object, edge.subject);
    }
  }

  std::map<EventId, EventId> parent;
  for (const auto& [child, par] : links) {
    auto [it, inserted] = parent.emplace(child, par);
    if (!inserted) {
      throw Error(ErrorKind::MultipleParents,
                  child + " has parents " + it->second + " and " + par);
    }
  }

  HierarchyForest forest = assemble_forest(std::move(nodes), std::move(parent), max_height);
  for (auto& e : events) e.in_hierarchy = forest.in_tree(e.id);
  return forest;
}

// --- serialization -------------------------------------------------------

inline io::json event_to_json(const Event& e) {
  io::json labels = io::json::object();
  for (const auto& [lang, label] : e.labels) {
    labels[lang] = {{"title", label.title}, {"description", label.description}};
  }
  return {{"id", e.id}, {"labels", labels}};
}

inline Event event_from_json(const io::json& j) {
  Event e;
  e.id = j.at("id").get<std::string>();
  for (const auto& [lang, label] : j.at("labels").items()) {
    e.labels[lang] = Label{label.at("title").get<std::string>(),
                           label.value("description", std::string{})};
  }
  if (e.id.empty()) throw Error(ErrorKind::ParseError, "empty event id");
  if (e.labels.empty()) throw Error(ErrorKind::MissingLabel, "event " + e.id + " has no labels");
  return e;
}

inline io::json edge_to_json(const RelationEdge& r) {
  return {{"subject", r.subject}, {"property", property_code(r.property)}, {"object", r.object}};
}

inline RelationEdge edge_from_json(const io::json& j) {
  return RelationEdge{j.at("subject").get<std::string>(),
                      parse_property(j.at("property").get<std::string>()),
                      j.at("object").get<std::string>()};
}

inline std::vector<Event> load_events(const std::filesystem::path& path) {
  std::vector<Event> out;
  io::read_jsonl(path, [&](const io::json& j, std::size_t) { out.push_back(event_from_json(j)); });
  return out;
}

inline std::vector<RelationEdge> load_relations(const std::filesystem::path& path) {
  std::vector<RelationEdge> out;
  io::read_jsonl(path, [&](const io::json& j, std::size_t) { out.push_back(edge_from_json(j)); });
  return out;
}

inline void save_events(const std::filesystem::path& path, std::span<const Event> events) {
  std::vector<io::json> rows;
  for (const auto& e : events) rows.push_back(event_to_json(e));
  io::write_jsonl(path, rows);
}

inline void save_relations(const std::filesystem::path& path, std::span<const RelationEdge> edges) {
  std::vector<io::json> rows;
  for (const auto& r : edges) rows.push_back(edge_to_json(r));
  io::write_jsonl(path, rows);
}

inline io::json forest_to_json(const HierarchyForest& f) {
  return {{"max_height", f.max_height()}, {"nodes", f.nodes()}, {"parent", f.parent()}};
}

inline HierarchyForest forest_from_json(const io::json& j) {
  return assemble_forest(j.at("nodes").get<std::set<EventId>>(),
                         j.at("parent").get<std::map<EventId, EventId>>(),
                         j.at("max_height").get<int>());
}

}  // namespace heg
