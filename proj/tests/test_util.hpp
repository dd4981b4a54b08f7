#pragma once

#include <string>
#include <vector>

#include "heg/dataset.hpp"
#include "heg/kb.hpp"
#include "heg/rng.hpp"
#include "heg/synthetic.hpp"

namespace heg::testing {

inline Event make_event(const std::string& id, const std::string& title = "", const std::string& desc = "") {
  Event e;
  e.id = id;
  e.labels["en"] = Label{title.empty() ? "title " + id : title, desc};
  return e;
}

inline std::vector<Event> make_events(const std::vector<std::string>& ids) {
  std::vector<Event> out;
  for (const auto& id : ids) out.push_back(make_event(id));
  return out;
}

/// Random forest of height <= max_height over n events "N000"...: each node
/// picks a parent among earlier nodes whose depth allows it, or stays a root.
struct RandomForest {
  std::vector<Event> events;
  std::vector<RelationEdge> edges;
  std::vector<int> parent;  // -1 for roots
};

inline std::string node_id(std::size_t i) {
  std::string s = std::to_string(i);
  return "N" + std::string(4 - std::min<std::size_t>(4, s.size()), '0') + s;
}

inline RandomForest random_forest(Rng& rng, std::size_t n, int max_height, double root_prob = 0.3) {
  RandomForest f;
  std::vector<int> depth;
  for (std::size_t i = 0; i < n; ++i) {
    f.events.push_back(make_event(node_id(i)));
    int par = -1;
    if (i > 0 && !rng.bernoulli(root_prob)) {
      const int cand = static_cast<int>(rng.below(i));
      if (depth[static_cast<std::size_t>(cand)] < max_height) par = cand;
    }
    f.parent.push_back(par);
    depth.push_back(par < 0 ? 0 : depth[static_cast<std::size_t>(par)] + 1);
    if (par >= 0) {
      if (rng.bernoulli(0.5)) {
        f.edges.push_back({node_id(i), Property::PartOf, node_id(static_cast<std::size_t>(par))});
      } else {
        f.edges.push_back({node_id(static_cast<std::size_t>(par)), Property::HasPart, node_id(i)});
      }
    }
  }
  return f;
}

/// A generated corpus with its KB, forest and expanded instances.
struct World {
  SyntheticCorpus corpus;
  KnowledgeBase kb;
  HierarchyForest forest;
  std::vector<GroundingInstance> instances;
};

inline World make_world(const SynthConfig& cfg) {
  World w;
  w.corpus = generate_synthetic(cfg);
  w.forest = build_forest(w.corpus.events, w.corpus.edges);
  w.kb = KnowledgeBase(w.corpus.events);
  w.instances = expand_all(w.corpus.mentions, w.forest);
  return w;
}

}  // namespace heg::testing
