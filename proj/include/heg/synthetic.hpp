#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "heg/dataset.hpp"
#include "heg/error.hpp"
#include "heg/jsonl.hpp"
#include "heg/kb.hpp"
#include "heg/rng.hpp"
#include "heg/utf8.hpp"

namespace heg {

/// Parameters of the synthetic corpus. Each event owns two name tokens (its
/// title) and two descriptor tokens. A mention's span is its anchor's title;
/// the context carries one name token of every ancestor plus filler, and a
/// sibling's name token as a distractor with probability `noise`.
struct SynthConfig {
  int n_trees = 8;
  int branching = 2;
  int height = 2;
  int mentions_per_event = 10;
  int vocab = 1024;
  double noise = 0.1;
  std::uint64_t seed = 0;
  int n_singletons = 0;          // events outside every hierarchy
  double follows_prob = 0.0;     // chance consecutive tree roots get a P155 edge
  double parent_overlap = 0.0;   // chance a child's description reuses a parent name token
  int filler_tokens = 5;
  std::vector<std::string> languages{"en"};

  io::json to_json() const {
    return {{"n_trees", n_trees},
            {"branching", branching},
            {"height", height},
            {"mentions_per_event", mentions_per_event},
            {"vocab", vocab},
            {"noise", noise},
            {"seed", seed},
            {"n_singletons", n_singletons},
            {"follows_prob", follows_prob},
            {"parent_overlap", parent_overlap},
            {"filler_tokens", filler_tokens},
            {"languages", languages}};
  }

  static SynthConfig from_json(const io::json& j) {
    SynthConfig c;
    c.n_trees = j.value("n_trees", c.n_trees);
    c.branching = j.value("branching", c.branching);
    c.height = j.value("height", c.height);
    c.mentions_per_event = j.value("mentions_per_event", c.mentions_per_event);
    c.vocab = j.value("vocab", c.vocab);
    c.noise = j.value("noise", c.noise);
    c.seed = j.value("seed", c.seed);
    c.n_singletons = j.value("n_singletons", c.n_singletons);
    c.follows_prob = j.value("follows_prob", c.follows_prob);
    c.parent_overlap = j.value("parent_overlap", c.parent_overlap);
    c.filler_tokens = j.value("filler_tokens", c.filler_tokens);
    c.languages = j.value("languages", c.languages);
    return c;
  }
};

struct SyntheticCorpus {
  std::vector<Event> events;
  std::vector<RelationEdge> edges;
  std::vector<Mention> mentions;
};

namespace detail {

inline std::string make_token(Rng& rng) {
  static constexpr std::string_view kOnset = "bcdfghjklmnprstvz";
  static constexpr std::string_view kVowel = "aeiou";
  std::string t;
  const int syllables = 2 + static_cast<int>(rng.below(2));
  for (int s = 0; s < syllables; ++s) {
    t.push_back(kOnset[rng.below(kOnset.size())]);
    t.push_back(kVowel[rng.below(kVowel.size())]);
  }
  t.push_back(kOnset[rng.below(kOnset.size())]);
  return t;
}

/// Language variants are a fixed respelling of the English token.
inline std::string localize(const std::string& token, const std::string& lang) {
  if (lang == "en") return token;
  return std::string(token.rbegin(), token.rend()) + lang;
}

inline std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(' ');
    out += parts[i];
  }
  return out;
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic(const SynthConfig& cfg) {
  if (cfg.height < 0 || cfg.height > 3) throw Error(ErrorKind::InvalidConfig, "height must be in [0, 3]");
  if (cfg.n_trees < 0 || cfg.branching < 1 || cfg.mentions_per_event < 0 || cfg.n_singletons < 0 ||
      cfg.filler_tokens < 0) {
    throw Error(ErrorKind::InvalidConfig, "negative synthetic corpus size");
  }
  if (cfg.noise < 0.0 || cfg.noise > 1.0 || cfg.follows_prob < 0.0 || cfg.follows_prob > 1.0 ||
      cfg.parent_overlap < 0.0 || cfg.parent_overlap > 1.0) {
    throw Error(ErrorKind::InvalidConfig, "probabilities must lie in [0, 1]");
  }
  if (cfg.languages.empty()) throw Error(ErrorKind::InvalidConfig, "no languages");

  std::size_t per_tree = 0;
  for (int level = 0, width = 1; level <= cfg.height; ++level, width *= cfg.branching) per_tree += width;
  const std::size_t n_events = per_tree * static_cast<std::size_t>(cfg.n_trees) +
                               static_cast<std::size_t>(cfg.n_singletons);
  const std::size_t needed = 4 * n_events + 16;
  if (static_cast<std::size_t>(cfg.vocab) < needed) {
    throw Error(ErrorKind::InvalidConfig,
                "vocab " + std::to_string(cfg.vocab) + " too small, need " + std::to_string(needed));
  }

  Rng rng(derive_seed(cfg.seed, "synth"));
  std::vector<std::string> vocab;
  {
    std::set<std::string> seen;
    while (vocab.size() < static_cast<std::size_t>(cfg.vocab)) {
      auto t = detail::make_token(rng);
      if (seen.insert(t).second) vocab.push_back(std::move(t));
    }
  }
  // First 4 * n_events tokens are owned by events, the rest is filler.
  std::size_t next_token = 0;
  const std::size_t filler_begin = 4 * n_events;

  struct Node {
    EventId id;
    int parent = -1;  // index into nodes
    std::vector<std::string> name;
    std::vector<std::string> desc;
  };
  std::vector<Node> nodes;
  SyntheticCorpus out;
  auto new_node = [&](int parent) {
    Node n;
    n.id = "Q" + std::to_string(100000 + nodes.size());
    n.parent = parent;
    n.name = {vocab[next_token], vocab[next_token + 1]};
    n.desc = {vocab[next_token + 2], vocab[next_token + 3]};
    next_token += 4;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  };

  std::vector<int> tree_roots;
  for (int t = 0; t < cfg.n_trees; ++t) {
    std::vector<int> level{new_node(-1)};
    tree_roots.push_back(level.front());
    for (int h = 0; h < cfg.height; ++h) {
      std::vector<int> next;
      for (int p : level) {
        for (int b = 0; b < cfg.branching; ++b) {
          const int c = new_node(p);
          next.push_back(c);
          // Alternate the two encodings of the same child -> parent link.
          if (b % 2 == 0) {
            out.edges.push_back({nodes[c].id, Property::PartOf, nodes[p].id});
          } else {
            out.edges.push_back({nodes[p].id, Property::HasPart, nodes[c].id});
          }
        }
      }
      level = std::move(next);
    }
  }
  for (std::size_t t = 1; t < tree_roots.size(); ++t) {
    if (cfg.follows_prob > 0.0 && rng.bernoulli(cfg.follows_prob)) {
      out.edges.push_back({nodes[tree_roots[t]].id, Property::Follows, nodes[tree_roots[t - 1]].id});
    }
  }
  for (int s = 0; s < cfg.n_singletons; ++s) new_node(-1);

  for (auto& n : nodes) {
    if (n.parent >= 0 && cfg.parent_overlap > 0.0 && rng.bernoulli(cfg.parent_overlap)) {
      n.desc.push_back(nodes[n.parent].name[0]);
    }
  }

  for (const auto& n : nodes) {
    Event e;
    e.id = n.id;
    for (const auto& lang : cfg.languages) {
      std::vector<std::string> title, desc;
      for (const auto& t : n.name) title.push_back(detail::localize(t, lang));
      for (const auto& t : n.desc) desc.push_back(detail::localize(t, lang));
      e.labels[lang] = Label{detail::join(title), detail::join(desc)};
    }
    out.events.push_back(std::move(e));
  }

  const std::size_t n_tree_nodes = per_tree * static_cast<std::size_t>(cfg.n_trees);
  const std::size_t filler_count = vocab.size() - filler_begin;
  std::size_t mention_no = 0;
  for (std::size_t ni = 0; ni < n_tree_nodes; ++ni) {
    const Node& n = nodes[ni];
    std::vector<int> siblings;
    for (std::size_t k = 0; k < n_tree_nodes; ++k) {
      if (k != ni && nodes[k].parent == n.parent && nodes[k].parent >= 0) siblings.push_back(static_cast<int>(k));
    }
    for (int j = 0; j < cfg.mentions_per_event; ++j) {
      const std::string& lang = cfg.languages[static_cast<std::size_t>(j) % cfg.languages.size()];
      std::vector<std::string> words;
      for (int f = 0; f < cfg.filler_tokens; ++f) {
        words.push_back(vocab[filler_begin + rng.below(filler_count)]);
      }
      for (int a = n.parent; a >= 0; a = nodes[a].parent) {
        words.push_back(nodes[a].name[rng.below(2)]);
      }
      if (rng.bernoulli(cfg.noise)) {
        int other = -1;
        if (!siblings.empty()) {
          other = siblings[rng.below(siblings.size())];
        } else if (n_tree_nodes > 1) {
          do {
            other = static_cast<int>(rng.below(n_tree_nodes));
          } while (other == static_cast<int>(ni));
        }
        if (other >= 0) words.push_back(nodes[other].name[rng.below(2)]);
      }
      rng.shuffle(words);
      for (auto& w : words) w = detail::localize(w, lang);

      const std::size_t insert_at = rng.below(words.size() + 1);
      std::string left, right;
      for (std::size_t w = 0; w < words.size(); ++w) {
        auto& side = w < insert_at ? left : right;
        if (w < insert_at) {
          side += words[w] + " ";
        } else {
          side += " " + words[w];
        }
      }
      const std::string span = detail::localize(n.name[0], lang) + " " + detail::localize(n.name[1], lang);
      Mention m;
      m.id = "M" + std::to_string(1000000 + mention_no++);
      m.language = lang;
      m.context = left + span + right;
      m.span_start = utf8::length(left);
      m.span_end = m.span_start + utf8::length(span);
      m.anchor_event = n.id;
      out.mentions.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace heg
