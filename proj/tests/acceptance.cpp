// Acceptance suite: one PASS/FAIL line per criterion. Criterion 11 is
// reported only and never fails the run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "heg/config.hpp"
#include "heg/dataset.hpp"
#include "heg/kb.hpp"
#include "heg/metrics.hpp"
#include "heg/pipeline.hpp"
#include "heg/relext.hpp"
#include "heg/rerank.hpp"
#include "heg/retrieval.hpp"
#include "heg/training.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace {

using namespace heg;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1 ---------------------------------------------------------------------------
Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto lin = gradient_check(LossKind::Linking);
  const auto hier = gradient_check(LossKind::Hierarchy);
  const double secs = seconds_since(t0);
  const bool ok = lin.finite && hier.finite && lin.max_rel_error <= 1e-4 && hier.max_rel_error <= 1e-4 && secs < 10.0;
  return {ok, "linking " + fmt("%.2e", lin.max_rel_error) + ", hierarchy " + fmt("%.2e", hier.max_rel_error) +
                  ", " + fmt("%.2f", secs) + " s"};
}

// 2 ---------------------------------------------------------------------------
Outcome antisymmetry() {
  Rng rng(1);
  double worst = 0.0;
  const int draws = 1000;
  for (int t = 0; t < draws; ++t) {
    const std::size_t d = 1 + rng.below(16);
    ComplExHead h(d);
    const double scale = std::pow(10.0, rng.uniform(-2, 2));
    for (Vec* v : {&h.w_re, &h.w_im, &h.b_re, &h.b_im, &h.r}) init_uniform(*v, rng, scale);
    Vec a(d), b(d);
    init_uniform(a, rng, scale);
    init_uniform(b, rng, scale);
    const double s = complex_score(h, a, b);
    const double r = complex_score(h, b, a);
    worst = std::max(worst, std::abs(s + r) / std::max(1.0, std::abs(s)));
  }
  return {worst <= 1e-9, std::to_string(draws) + " draws, worst normalized |s(a,b)+s(b,a)| " + fmt("%.2e", worst)};
}

// 3 ---------------------------------------------------------------------------
Outcome metric_equivalence() {
  Rng rng(3);
  double worst = 0.0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  for (int t = 0; t < 200; ++t) {
    const auto rs = oracle::random_records(rng);
    for (std::size_t k = 1; k <= 10; ++k) {
      track(recall_at_k(rs, k, false), oracle::Brute::recall(rs, k, false));
      track(recall_at_k(rs, k, true), oracle::Brute::recall(rs, k, true));
      track(recall_at_k_fraction(rs, k), oracle::Brute::fraction(rs, k));
    }
    track(recall_at_min(rs), oracle::Brute::rmin(rs));
    const auto a = set_metrics(rs);
    const auto b = oracle::Brute::sets(rs);
    track(a.strict_acc, b.strict_acc);
    track(a.strict_acc_top_min, b.strict_acc_top_min);
    track(a.macro_precision, b.macro_precision);
    track(a.macro_recall, b.macro_recall);
    track(a.macro_f1, b.macro_f1);
    track(a.micro_precision, b.micro_precision);
    track(a.micro_recall, b.micro_recall);
    track(a.micro_f1, b.micro_f1);

    // Relext Recall@k on a random forest with random partial rankings.
    auto rf = testing::random_forest(rng, 1 + rng.below(10), 3);
    const auto forest = build_forest(rf.events, rf.edges);
    std::vector<EventId> ids;
    for (const auto& e : rf.events) ids.push_back(e.id);
    std::map<EventId, std::vector<EventId>> rankings;
    for (const auto& e : ids) {
      if (rng.bernoulli(0.2)) continue;
      auto order = ids;
      rng.shuffle(order);
      order.erase(std::find(order.begin(), order.end(), e));
      rankings[e] = order;
    }
    for (std::size_t k = 1; k <= 10; ++k) {
      track(relext_recall_at_k(rankings, forest, ids, k), oracle::relext_recall(rankings, forest.parent(), ids, k));
    }
  }
  return {worst <= 1e-12, "200 instances, largest deviation " + fmt("%.2e", worst)};
}

// 4 ---------------------------------------------------------------------------
Outcome split_soundness() {
  Rng rng(4);
  std::size_t crossing = 0, mismatched = 0;
  const Property props[] = {Property::HasPart, Property::PartOf, Property::Follows, Property::FollowedBy};
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<Event> events;
    std::vector<EventId> ids;
    for (std::size_t i = 0; i < n; ++i) {
      events.push_back(testing::make_event(testing::node_id(i)));
      ids.push_back(testing::node_id(i));
    }
    std::vector<RelationEdge> edges;
    const std::size_t m = rng.below(n + 1);
    for (std::size_t e = 0; e < m && n > 1; ++e) {
      const auto a = rng.below(n), b = rng.below(n);
      if (a == b) continue;
      edges.push_back({ids[a], props[rng.below(4)], ids[b]});
    }
    const auto split = split_components(events, edges, {0.8, 0.1, 0.1}, rng.next());
    for (const auto& e : edges) crossing += split.split_of(e.subject) != split.split_of(e.object);
    std::map<int, std::set<EventId>> groups;
    for (const auto& [id, c] : split.components) groups[c].insert(id);
    std::set<std::set<EventId>> mine;
    for (auto& [c, g] : groups) mine.insert(g);
    mismatched += mine != oracle::bfs_components(ids, edges);
  }
  return {crossing == 0 && mismatched == 0, "100 graphs, " + std::to_string(crossing) + " crossing edges, " +
                                                std::to_string(mismatched) + " component mismatches"};
}

// 5 ---------------------------------------------------------------------------
Outcome gold_expansion() {
  Rng rng(5);
  std::size_t checked = 0, bad = 0;
  for (int t = 0; t < 200; ++t) {
    auto rf = testing::random_forest(rng, 1 + rng.below(30), 3, rng.uniform(0.05, 0.6));
    const auto forest = build_forest(rf.events, rf.edges);
    for (std::size_t i = 0; i < rf.events.size(); ++i) {
      Mention m{"m", "en", "context", 0, 3, rf.events[i].id};
      const auto inst = expand_gold(m, forest);
      std::set<EventId> brute;
      int depth = 0;
      for (int cur = static_cast<int>(i); cur >= 0; cur = rf.parent[static_cast<std::size_t>(cur)]) {
        brute.insert(rf.events[static_cast<std::size_t>(cur)].id);
        if (cur != static_cast<int>(i)) ++depth;
      }
      ++checked;
      bad += inst.gold_set != brute || inst.gold_set.size() != static_cast<std::size_t>(depth) + 1 ||
             inst.atomic_event != rf.events[i].id;
    }
  }
  return {bad == 0, std::to_string(checked) + " anchors, " + std::to_string(bad) + " disagreements"};
}

// Shared: Recall@min of a trained encoder over `inst`, against the full pool.
double heldin_recall_at_min(const EncoderParams& params, const KnowledgeBase& kb,
                            const std::vector<GroundingInstance>& inst, const Featurizer& featurizer) {
  const auto pool = candidate_pool(kb.events(), PoolMode::Inference);
  const auto index = build_index(params, kb, pool, featurizer, TaskMode::Crosslingual);
  std::vector<EvalRecord> records;
  for (const auto& i : inst) {
    const Vec q = encode(params, featurizer.featurize_mention(i.mention), Tower::Mention);
    const auto r = topk(index, q, std::min<std::size_t>(8, index.size()));
    records.push_back({i.mention.id, i.gold_set, i.atomic_event, r.ids(), std::nullopt, {}});
  }
  return recall_at_min(records);
}

// 6 ---------------------------------------------------------------------------
Outcome synthetic_overfit() {
  const auto t0 = Clock::now();
  const auto world = testing::make_world(SynthConfig{});
  ExperimentConfig cfg;
  const auto split = split_components(world.kb.events(), world.corpus.edges, cfg.split_ratios, cfg.split_seed());
  const auto inst = instances_in_split(world.instances, split, Split::Train);
  const auto active = split.events_in(Split::Train);
  const Featurizer featurizer(cfg.encoder);
  auto tcfg = cfg.resolved_train();
  tcfg.strategy = Strategy::Baseline;
  const auto res = train(inst, world.kb, world.forest, featurizer, TaskMode::Crosslingual, tcfg, &active);
  const double r = heldin_recall_at_min(res.params, world.kb, inst, featurizer);
  const double secs = seconds_since(t0);
  return {r >= 0.90 && secs < 300.0 && tcfg.epochs <= 30,
          std::to_string(world.kb.size()) + " events, " + std::to_string(world.instances.size()) + " mentions (" +
              std::to_string(inst.size()) + " train), " + std::to_string(tcfg.epochs) +
              " epochs, train Recall@min " + fmt("%.4f", r) + ", " + fmt("%.1f", secs) + " s"};
}

// 7 ---------------------------------------------------------------------------
Outcome relext_oracle() {
  std::size_t forests = 0, failures = 0;
  double worst = 1.0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    SynthConfig sc;
    sc.seed = seed;
    sc.n_trees = 2 + static_cast<int>(seed % 4);
    sc.branching = 1 + static_cast<int>(seed % 3);
    sc.height = 1 + static_cast<int>(seed % 3);
    sc.mentions_per_event = 1 + static_cast<int>(seed % 5);
    sc.n_singletons = static_cast<int>(seed % 3);
    const auto w = testing::make_world(sc);
    // Perfect retriever: each mention's top-4 is its gold chain, padded with
    // ids that no other mention shares.
    std::vector<RetrievalResult> rs;
    for (const auto& i : w.instances) {
      RetrievalResult r{i.mention.id, {}};
      double s = 0.0;
      for (const auto& id : w.forest.ancestor_chain(i.atomic_event)) r.candidates.push_back({id, s -= 1.0});
      for (int p = 0; r.candidates.size() < 4; ++p) r.candidates.push_back({"pad:" + i.mention.id + ":" + std::to_string(p), s -= 1.0});
      rs.push_back(std::move(r));
    }
    const auto lists = build_mention_lists(rs, 4);
    const auto pool = candidate_pool(w.kb.events(), PoolMode::Inference);
    std::vector<EventId> queries(pool.begin(), pool.end());
    const auto rankings = parent_rankings(lists, queries, pool, 16);
    const double r1 = relext_recall_at_k(ranking_ids(rankings), w.forest, queries, 1);
    ++forests;
    failures += r1 != 1.0;
    worst = std::min(worst, r1);
  }
  return {failures == 0, std::to_string(forests) + " forests, lowest R@1 " + fmt("%.4f", worst)};
}

// 8 ---------------------------------------------------------------------------
std::string checkpoint_bytes(const TrainResult& r, const std::filesystem::path& path) {
  save_checkpoint(path, r.params, r.head);
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome strategy_equivalence(const std::filesystem::path& tmp) {
  SynthConfig sc;
  sc.n_trees = 4;
  const auto w = testing::make_world(sc);
  const Featurizer featurizer(FeaturizerConfig{1u << 14, 3, 5, 128, 128});
  const auto data = make_training_set(w.instances, w.kb, w.forest, featurizer, TaskMode::Crosslingual);
  TrainConfig base;
  base.epochs = 5;
  base.seed = 8;
  auto hp = base;
  hp.strategy = Strategy::HP;
  hp.pretrain_epochs = 0;
  auto hjl = base;
  hjl.strategy = Strategy::HJL;
  hjl.hier_loss_weight = 0.0;
  const auto a = train(data, featurizer.dim(), base);
  const auto b = train(data, featurizer.dim(), hp);
  const auto c = train(data, featurizer.dim(), hjl);
  const bool identical = checkpoint_bytes(a, tmp / "base.bin") == checkpoint_bytes(b, tmp / "hp.bin");
  double worst = 0.0;
  bool same_len = a.log.step_linking_losses.size() == c.log.step_linking_losses.size();
  for (std::size_t i = 0; same_len && i < a.log.step_linking_losses.size(); ++i)
    worst = std::max(worst, std::abs(a.log.step_linking_losses[i] - c.log.step_linking_losses[i]));
  return {identical && same_len && worst <= 1e-12,
          std::string("HP(pretrain 0) checkpoint ") + (identical ? "byte-identical" : "DIFFERS") +
              ", HJL(w=0) largest step deviation " + fmt("%.2e", worst) + " over " +
              std::to_string(a.log.step_linking_losses.size()) + " steps"};
}

// 9 ---------------------------------------------------------------------------
// Victims are the negatives in order of ascending retrieval score, later
// position first on ties; the i-th missing gold (ascending id) takes the
// i-th victim's slot.
std::vector<EventId> substitution_oracle(const RetrievalResult& r, const std::set<EventId>& gold, std::size_t k) {
  std::vector<EventId> ids;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < std::min(k, r.candidates.size()); ++i) {
    ids.push_back(r.candidates[i].event);
    if (!gold.count(r.candidates[i].event)) negatives.push_back(i);
  }
  std::sort(negatives.begin(), negatives.end(), [&](std::size_t a, std::size_t b) {
    if (r.candidates[a].score != r.candidates[b].score) return r.candidates[a].score < r.candidates[b].score;
    return a > b;
  });
  std::size_t next = 0;
  for (const auto& g : gold) {
    if (std::find(ids.begin(), ids.end(), g) != ids.end()) continue;
    ids[negatives[next++]] = g;
  }
  return ids;
}

Outcome reranker_substitution() {
  SynthConfig sc;
  sc.n_trees = 3;
  sc.mentions_per_event = 3;
  const auto w = testing::make_world(sc);
  std::vector<EventId> all;
  for (const auto& e : w.kb.events()) all.push_back(e.id);

  Rng rng(9);
  std::vector<RerankExample> examples;
  for (const auto& i : w.instances) {
    // Retrieval lists with deliberately missing golds and tied scores.
    auto order = all;
    rng.shuffle(order);
    RetrievalResult r{i.mention.id, {}};
    for (const auto& id : order) {
      if (r.candidates.size() == 8) break;
      if (i.gold_set.count(id) && rng.bernoulli(0.6)) continue;
      r.candidates.push_back({id, -static_cast<double>(rng.below(3))});
    }
    std::sort(r.candidates.begin(), r.candidates.end(), ranks_before);
    examples.push_back({i.mention, i.gold_set, r});
  }
  // Hand-built case: golds X and Y missing from an 8-list.
  Mention m0 = w.instances[0].mention;
  const auto chain = w.forest.ancestor_chain(w.instances.back().atomic_event);
  RetrievalResult hand{m0.id, {}};
  std::vector<EventId> negs;
  for (const auto& id : all) {
    if (std::find(chain.begin(), chain.end(), id) == chain.end() && negs.size() < 8) negs.push_back(id);
  }
  for (std::size_t i = 0; i < 8; ++i) hand.candidates.push_back({negs[i], 1.0 - 0.1 * static_cast<double>(i)});
  const std::set<EventId> hand_gold(chain.begin(), chain.begin() + 2);
  examples.push_back({m0, hand_gold, hand});
  std::vector<EventId> expected(negs.begin(), negs.end());
  expected[7] = *hand_gold.begin();
  expected[6] = *std::next(hand_gold.begin());

  RerankConfig cfg;
  cfg.epochs = 1;
  cfg.block_dim = 256;
  cfg.hidden = 4;
  RerankTrainLog log;
  train_reranker(examples, w.kb, TaskMode::Crosslingual, cfg, &log);

  std::size_t bad = 0, substituted = 0;
  for (std::size_t e = 0; e < examples.size(); ++e) {
    const auto& slots = log.candidate_lists[e];
    std::vector<EventId> got;
    std::size_t gold_slots = 0;
    for (const auto& s : slots) {
      got.push_back(s.event);
      gold_slots += s.gold;
      substituted += s.substituted;
    }
    bad += got != substitution_oracle(examples[e].retrieval, examples[e].gold, cfg.k);
    bad += gold_slots != examples[e].gold.size() || slots.size() != std::min<std::size_t>(8, examples[e].retrieval.candidates.size());
  }
  std::vector<EventId> hand_got;
  for (const auto& s : log.candidate_lists.back()) hand_got.push_back(s.event);
  bad += hand_got != expected;
  return {bad == 0, std::to_string(examples.size()) + " lists, " + std::to_string(substituted) +
                        " substitutions, " + std::to_string(bad) + " mismatches"};
}

// 10 --------------------------------------------------------------------------
std::map<std::string, std::string> run_pipeline(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::remove_all(cfg.output_dir());
  pipeline::synth(cfg);
  pipeline::ingest(cfg);
  pipeline::split(cfg);
  pipeline::train(cfg);
  for (Split s : {Split::Train, Split::Dev, Split::Test}) pipeline::retrieve(cfg, s);
  pipeline::rerank_train(cfg);
  pipeline::evaluate(cfg, Split::Test, true);
  pipeline::relext(cfg, Split::Test);
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(cfg.output_dir())) {
    std::ifstream in(entry.path(), std::ios::binary);
    files[entry.path().filename().string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return files;
}

Outcome determinism(const std::filesystem::path& tmp) {
  ExperimentConfig cfg;
  cfg.paths.output_dir = (tmp / "pipeline").string();
  cfg.seed = 42;
  cfg.train.epochs = 5;
  cfg.train.strategy = Strategy::HP_HJL;
  cfg.rerank.epochs = 3;
  const auto a = run_pipeline(cfg);
  const auto b = run_pipeline(cfg);
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) differing.push_back(name);
  }
  const bool required = a.count("checkpoint.bin") && a.count("retrievals_test.jsonl") &&
                        a.count("predictions_test.jsonl") && a.count("report.json") && a.count("parents.jsonl");
  std::string detail = std::to_string(a.size()) + " artifacts compared";
  for (const auto& d : differing) detail += ", differs: " + d;
  return {required && differing.empty() && a.size() == b.size(), detail};
}

// 11 --------------------------------------------------------------------------
Outcome directional_replication() {
  std::ostringstream detail;
  int wins = 0;
  for (std::uint64_t seed : {0, 1, 2}) {
    SynthConfig sc;
    sc.seed = seed;
    sc.n_trees = 24;
    sc.mentions_per_event = 6;
    sc.parent_overlap = 0.5;
    sc.noise = 0.2;
    const auto w = testing::make_world(sc);
    ExperimentConfig cfg;
    cfg.seed = seed;
    const auto split = split_components(w.kb.events(), w.corpus.edges, cfg.split_ratios, cfg.split_seed());
    const auto train_inst = instances_in_split(w.instances, split, Split::Train);
    auto held = instances_in_split(w.instances, split, Split::Dev);
    const auto test = instances_in_split(w.instances, split, Split::Test);
    held.insert(held.end(), test.begin(), test.end());
    const auto active = split.events_in(Split::Train);
    const Featurizer featurizer(cfg.encoder);
    auto base = cfg.resolved_train();
    auto hp = base;
    hp.strategy = Strategy::HP;
    const auto rb = train(train_inst, w.kb, w.forest, featurizer, TaskMode::Crosslingual, base, &active);
    const auto rh = train(train_inst, w.kb, w.forest, featurizer, TaskMode::Crosslingual, hp, &active);
    const double b = heldin_recall_at_min(rb.params, w.kb, held, featurizer);
    const double h = heldin_recall_at_min(rh.params, w.kb, held, featurizer);
    wins += h >= b;
    detail << (seed ? "; " : "") << "seed " << seed << ": baseline " << fmt("%.4f", b) << ", HP " << fmt("%.4f", h)
           << ", delta " << fmt("%+.4f", h - b) << " (" << held.size() << " held-out mentions)";
  }
  detail << "; HP >= baseline on " << wins << "/3 seeds";
  return {wins == 3, detail.str()};
}

}  // namespace

int main() {
  namespace fs = std::filesystem;
  const fs::path tmp = fs::temp_directory_path() / "heg_acceptance";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    bool gated;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient fidelity", gradient_fidelity, true},
      {2, "ComplEx antisymmetry", antisymmetry, true},
      {3, "metric oracle equivalence", metric_equivalence, true},
      {4, "zero-shot split soundness", split_soundness, true},
      {5, "gold-set expansion", gold_expansion, true},
      {6, "synthetic overfit", synthetic_overfit, true},
      {7, "relation-extraction oracle", relext_oracle, true},
      {8, "strategy equivalences", [&] { return strategy_equivalence(tmp); }, true},
      {9, "reranker substitution", reranker_substitution, true},
      {10, "pipeline determinism", [&] { return determinism(tmp); }, true},
      {11, "directional replication (reported)", directional_replication, false},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const char* tag = !c.gated ? "INFO" : (o.pass ? "PASS" : "FAIL");
    std::printf("%s  %2d  %s: %s\n", tag, c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass && c.gated) ++failed;
  }
  fs::remove_all(tmp);
  std::printf("%d gated criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
