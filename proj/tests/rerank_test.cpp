#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "heg/rerank.hpp"
#include "test_util.hpp"

namespace heg {
namespace {

RetrievalResult list(std::vector<ScoredEvent> cands) { return RetrievalResult{"m", std::move(cands)}; }

std::vector<EventId> slot_ids(const std::vector<CandidateSlot>& slots) {
  std::vector<EventId> out;
  for (const auto& s : slots) out.push_back(s.event);
  return out;
}

TEST(PairFeatures, SharedNgramBlockForIdenticalText) {
  PairFeaturizer pf;
  Event e = testing::make_event("Q1", "abcd", "");
  Mention m{"m", "en", "abcd", 0, 4, "Q1"};
  const auto x = pf.featurize(m, e, TaskMode::Crosslingual);
  const std::uint32_t off = 2 * 4096;
  std::vector<std::pair<std::uint32_t, double>> shared;
  for (const auto& [i, w] : x.entries) {
    EXPECT_LT(i, 3u * 4096u);
    if (i >= off) shared.emplace_back(i - off, w);
  }
  const double w = 1.0 / std::sqrt(3.0);
  ASSERT_EQ(shared.size(), 3u);
  EXPECT_EQ(shared[0].first, 1245u);  // "abcd"
  EXPECT_EQ(shared[1].first, 1867u);  // "abc"
  EXPECT_EQ(shared[2].first, 3682u);  // "bcd"
  for (const auto& [i, v] : shared) EXPECT_NEAR(v, w, 1e-15);

  // Mention block: the three plain grams plus six marker grams, all count 1.
  std::size_t mention_block = 0, event_block = 0;
  for (const auto& [i, v] : x.entries) {
    if (i < 4096) ++mention_block;
    else if (i < off) ++event_block;
  }
  EXPECT_EQ(mention_block, 9u);
  EXPECT_EQ(event_block, 3u);
}

TEST(PairFeatures, DisjointTextHasEmptySharedBlock) {
  PairFeaturizer pf;
  Event e = testing::make_event("Q1", "xyz", "");
  Mention m{"m", "en", "abcd", 0, 4, "Q1"};
  for (const auto& [i, w] : pf.featurize(m, e, TaskMode::Crosslingual).entries) EXPECT_LT(i, 2u * 4096u);
}

TEST(Substitution, MissingGoldReplacesLowestNegative) {
  const auto r = list({{"A", 0.9}, {"B", 0.8}, {"C", 0.7}, {"D", 0.6}});
  const auto slots = substitute_missing_golds(r, {"A", "X"}, 4);
  EXPECT_EQ(slot_ids(slots), (std::vector<EventId>{"A", "B", "C", "X"}));
  EXPECT_TRUE(slots[0].gold);
  EXPECT_FALSE(slots[0].substituted);
  EXPECT_TRUE(slots[3].gold);
  EXPECT_TRUE(slots[3].substituted);
  EXPECT_FALSE(slots[3].retrieval_score.has_value());
}

TEST(Substitution, SeveralMissingGoldsInIdOrder) {
  const auto r = list({{"A", 0.9}, {"B", 0.8}, {"C", 0.7}, {"D", 0.6}});
  const auto slots = substitute_missing_golds(r, {"Y", "X"}, 4);
  EXPECT_EQ(slot_ids(slots), (std::vector<EventId>{"A", "B", "Y", "X"}));
}

TEST(Substitution, TiedScoresEvictLaterPosition) {
  const auto r = list({{"A", 0.5}, {"B", 0.5}, {"C", 0.5}});
  EXPECT_EQ(slot_ids(substitute_missing_golds(r, {"X"}, 3)), (std::vector<EventId>{"A", "B", "X"}));
}

TEST(Substitution, GoldNeverEvicted) {
  const auto r = list({{"A", 0.9}, {"B", 0.1}, {"C", 0.5}});
  EXPECT_EQ(slot_ids(substitute_missing_golds(r, {"B", "X"}, 3)), (std::vector<EventId>{"A", "B", "X"}));
}

TEST(Substitution, CompleteListUnchangedAndTruncatedToK) {
  const auto r = list({{"A", 0.9}, {"B", 0.8}, {"C", 0.7}, {"D", 0.6}});
  const auto slots = substitute_missing_golds(r, {"B"}, 2);
  EXPECT_EQ(slot_ids(slots), (std::vector<EventId>{"A", "B"}));
  for (const auto& s : slots) EXPECT_FALSE(s.substituted);
}

TEST(Substitution, Guards) {
  const auto r = list({{"A", 0.9}, {"B", 0.8}});
  try {
    substitute_missing_golds(r, {"X", "Y", "Z"}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
  try {
    substitute_missing_golds(list({}), {"X"}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyRetrievals);
  }
}

TEST(Substitution, RandomListsKeepEveryGold) {
  Rng rng(21);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.below(10);
    RetrievalResult r;
    for (std::size_t i = 0; i < n; ++i) r.candidates.push_back({testing::node_id(i), -static_cast<double>(rng.below(4))});
    std::sort(r.candidates.begin(), r.candidates.end(), ranks_before);
    std::set<EventId> gold;
    const std::size_t g = rng.below(n + 1);
    while (gold.size() < g) gold.insert(testing::node_id(rng.below(2 * n)));
    const auto slots = substitute_missing_golds(r, gold, n);
    ASSERT_EQ(slots.size(), n);
    std::set<EventId> ids;
    std::size_t gold_slots = 0;
    for (const auto& s : slots) {
      ids.insert(s.event);
      gold_slots += s.gold;
      EXPECT_EQ(s.gold, gold.count(s.event) == 1);
    }
    EXPECT_EQ(ids.size(), n);
    EXPECT_EQ(gold_slots, gold.size());
  }
}

TEST(PredictSet, ThresholdAndNull) {
  const std::vector<ScoredEvent> s{{"A", 2.0}, {"B", 0.0}, {"C", -3.0}};
  EXPECT_EQ(predict_set(s, 0.5), (std::set<EventId>{"A", "B"}));
  EXPECT_EQ(predict_set(s, 0.9), (std::set<EventId>{kNullEvent}));
  EXPECT_EQ(predict_set(s, 0.01), (std::set<EventId>{"A", "B", "C"}));
  EXPECT_EQ(predict_set(s, 0.0), (std::set<EventId>{"A", "B", "C"}));

  // sigma = 0.95, 0.4, 0.2 at tau 0.3 keeps two events.
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  const std::vector<ScoredEvent> t{{"A", logit(0.95)}, {"B", logit(0.4)}, {"C", logit(0.2)}};
  EXPECT_EQ(predict_set(t, 0.3), (std::set<EventId>{"A", "B"}));
}

TEST(PredictSet, MonotoneInThreshold) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    std::vector<ScoredEvent> s;
    for (int i = 0; i < 6; ++i) s.push_back({testing::node_id(static_cast<std::size_t>(i)), rng.uniform(-4, 4)});
    const double lo = rng.uniform(0.01, 0.99), hi = rng.uniform(lo, 0.999);
    const auto big = predict_set(s, lo);
    const auto small = predict_set(s, hi);
    if (small.count(kNullEvent)) continue;
    for (const auto& id : small) EXPECT_TRUE(big.count(id));
  }
}

TEST(RerankOrder, DescendingWithIdTieBreak) {
  const std::vector<ScoredEvent> s{{"C", 1.0}, {"A", 1.0}, {"B", 3.0}};
  EXPECT_EQ(rerank_order(s), (std::vector<EventId>{"B", "A", "C"}));
}

TEST(SelectThreshold, UniqueBest) {
  // sigma(0) = 0.5 exactly, sigma(-0.5) ~ 0.378.
  std::vector<ScoredMention> dev{{"m", {"A"}, {{"A", 0.0}, {"B", -0.5}}}};
  std::vector<std::pair<double, double>> trace;
  EXPECT_EQ(select_threshold(dev, RerankConfig{}.grid, &trace), 0.5);
  ASSERT_EQ(trace.size(), 7u);
  for (const auto& [t, v] : trace) EXPECT_EQ(v, t == 0.5 ? 1.0 : 0.0);
}

TEST(SelectThreshold, TiesGoToSmallerValue) {
  std::vector<ScoredMention> dev{{"m", {"A"}, {{"A", 10.0}, {"B", -10.0}}}};
  EXPECT_EQ(select_threshold(dev, {0.9, 0.3, 0.01}), 0.01);
  EXPECT_THROW(select_threshold(dev, {}), Error);
  EXPECT_THROW(select_threshold({}, {0.5}), Error);
}

TEST(RerankConfigJson, RoundTripAndValidation) {
  RerankConfig c;
  c.k = 4;
  c.grid = {0.2, 0.4};
  EXPECT_EQ(RerankConfig::from_json(c.to_json()).to_json(), c.to_json());
  c.grid = {1.0};
  EXPECT_THROW(c.validate(), Error);
}

class RerankTraining : public ::testing::Test {
 protected:
  void SetUp() override {
    SynthConfig sc;
    sc.n_trees = 3;
    sc.mentions_per_event = 4;
    sc.vocab = 256;
    world_ = testing::make_world(sc);
    // A retrieval that ranks events by id: golds are frequently missing.
    const auto pool = candidate_pool(world_.kb.events(), PoolMode::Inference);
    for (const auto& inst : world_.instances) {
      RetrievalResult r{inst.mention.id, {}};
      double score = 0.0;
      for (const auto& id : pool) {
        if (r.candidates.size() == 6) break;
        r.candidates.push_back({id, score});
        score -= 1.0;
      }
      examples_.push_back({inst.mention, inst.gold_set, r});
    }
    cfg_.k = 6;
    cfg_.epochs = 5;
    cfg_.block_dim = 512;
    cfg_.hidden = 8;
    cfg_.seed = 3;
  }

  testing::World world_;
  std::vector<RerankExample> examples_;
  RerankConfig cfg_;
};

TEST_F(RerankTraining, LossDecreasesAndIsDeterministic) {
  RerankTrainLog log;
  const auto p = train_reranker(examples_, world_.kb, TaskMode::Crosslingual, cfg_, &log);
  ASSERT_EQ(log.epoch_losses.size(), 5u);
  EXPECT_LT(log.epoch_losses.back(), log.epoch_losses.front());
  EXPECT_GT(log.substitutions, 0u);
  EXPECT_EQ(train_reranker(examples_, world_.kb, TaskMode::Crosslingual, cfg_), p);
}

TEST_F(RerankTraining, SaveLoadRoundTrip) {
  const auto p = train_reranker(examples_, world_.kb, TaskMode::Crosslingual, cfg_);
  const auto path = std::filesystem::temp_directory_path() / "heg_reranker_test.bin";
  save_reranker(path, p, cfg_.block_dim, 0.3);
  const auto back = load_reranker(path);
  EXPECT_EQ(back.params, p);
  EXPECT_EQ(back.block_dim, 512u);
  EXPECT_EQ(back.threshold, 0.3);
  std::filesystem::remove(path);

  const PairFeaturizer pf({512, 3, 5, 128, 128});
  const auto scored = score_candidates(p, pf, world_.kb, TaskMode::Crosslingual, examples_[0].mention,
                                       examples_[0].retrieval, 4);
  ASSERT_EQ(scored.size(), 4u);
  EXPECT_EQ(scored[0].event, examples_[0].retrieval.candidates[0].event);
}

}  // namespace
}  // namespace heg
