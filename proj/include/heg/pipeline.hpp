#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "heg/checkpoint.hpp"
#include "heg/config.hpp"
#include "heg/dataset.hpp"
#include "heg/encoder.hpp"
#include "heg/jsonl.hpp"
#include "heg/kb.hpp"
#include "heg/metrics.hpp"
#include "heg/relext.hpp"
#include "heg/rerank.hpp"
#include "heg/retrieval.hpp"
#include "heg/synthetic.hpp"
#include "heg/training.hpp"

// Experiment stages. Each stage reads its inputs from the configured paths
// and the output directory, writes its artifacts there, and refreshes
// config.json and manifest.json.

namespace heg::pipeline {

inline constexpr int kManifestFormat = 1;

namespace fs = std::filesystem;

struct Corpus {
  KnowledgeBase kb;
  std::vector<RelationEdge> edges;
  HierarchyForest forest;
  std::vector<Mention> mentions;
  std::vector<GroundingInstance> instances;
};

inline Corpus load_corpus(const ExperimentConfig& cfg) {
  Corpus c;
  auto events = load_events(cfg.events_path());
  if (events.empty()) throw Error(ErrorKind::EmptyKB, cfg.events_path().string() + " holds no events");
  c.edges = load_relations(cfg.relations_path());
  c.forest = build_forest(events, c.edges, cfg.max_height);
  c.kb = KnowledgeBase(std::move(events));
  c.mentions = load_mentions(cfg.mentions_path());
  for (const auto& m : c.mentions) validate_mention(m, c.kb);
  c.instances = expand_all(c.mentions, c.forest);
  return c;
}

inline SplitAssignment load_splits(const ExperimentConfig& cfg) {
  return splits_from_json(io::read_json(cfg.output_dir() / "splits.json"));
}

inline fs::path retrievals_path(const ExperimentConfig& cfg, Split s) {
  return cfg.output_dir() / ("retrievals_" + std::string(split_name(s)) + ".jsonl");
}

/// Writes the resolved config and merges `artifacts` into the manifest.
inline void record_run(const ExperimentConfig& cfg, const std::string& command,
                       const std::vector<fs::path>& artifacts) {
  const fs::path dir = cfg.output_dir();
  io::write_json(dir / "config.json", cfg.to_json());
  io::json manifest{{"format_version", kManifestFormat}, {"artifacts", io::json::object()}};
  const fs::path mpath = dir / "manifest.json";
  if (fs::exists(mpath)) {
    const auto old = io::read_json(mpath);
    if (old.value("format_version", 0) == kManifestFormat && old.contains("artifacts"))
      manifest["artifacts"] = old["artifacts"];
  }
  for (const auto& a : artifacts) {
    manifest["artifacts"][a.filename().string()] = {{"command", command}, {"bytes", fs::file_size(a)}};
  }
  io::write_json(mpath, manifest);
}

inline void prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir());
}

// --- stages -------------------------------------------------------------------

inline io::json synth(const ExperimentConfig& cfg) {
  prepare(cfg);
  const auto corpus = generate_synthetic(cfg.synth);
  save_events(cfg.events_path(), corpus.events);
  save_relations(cfg.relations_path(), corpus.edges);
  save_mentions(cfg.mentions_path(), corpus.mentions);
  record_run(cfg, "synth", {cfg.events_path(), cfg.relations_path(), cfg.mentions_path()});
  return {{"events", corpus.events.size()}, {"relations", corpus.edges.size()}, {"mentions", corpus.mentions.size()}};
}

inline io::json ingest(const ExperimentConfig& cfg) {
  prepare(cfg);
  const auto c = load_corpus(cfg);
  std::size_t singletons = 0;
  for (const auto& e : c.kb.events()) singletons += !e.in_hierarchy;
  io::json stats = corpus_stats(c.instances, c.forest).to_json();
  stats["kb_events"] = c.kb.size();
  stats["singleton_events"] = singletons;
  stats["hierarchy_edges"] = c.forest.edge_count();
  stats["relations"] = c.edges.size();
  const fs::path out = cfg.output_dir() / "stats.json";
  io::write_json(out, stats);
  record_run(cfg, "ingest", {out});
  return stats;
}

inline io::json split(const ExperimentConfig& cfg) {
  prepare(cfg);
  const auto c = load_corpus(cfg);
  const auto a = split_components(c.kb.events(), c.edges, cfg.split_ratios, cfg.split_seed());
  const fs::path out = cfg.output_dir() / "splits.json";
  io::write_json(out, splits_to_json(a));
  record_run(cfg, "split", {out});
  io::json summary = io::json::object();
  for (Split s : {Split::Train, Split::Dev, Split::Test}) {
    std::size_t dropped = 0;
    const auto inst = instances_in_split(c.instances, a, s, &dropped);
    summary[std::string(split_name(s))] = {{"events", a.events_in(s).size()}, {"mentions", inst.size()}};
  }
  return summary;
}

inline io::json train(const ExperimentConfig& cfg) {
  prepare(cfg);
  const auto c = load_corpus(cfg);
  const auto a = load_splits(cfg);
  std::size_t dropped = 0;
  const auto inst = instances_in_split(c.instances, a, Split::Train, &dropped);
  const auto active = a.events_in(Split::Train);
  const Featurizer featurizer(cfg.encoder);
  const auto res = heg::train(inst, c.kb, c.forest, featurizer, cfg.task_mode, cfg.resolved_train(), &active);
  const fs::path ck = cfg.output_dir() / "checkpoint.bin";
  const fs::path log = cfg.output_dir() / "train_log.jsonl";
  save_checkpoint(ck, res.params, res.head);
  io::write_jsonl(log, train_log_rows(res.log));
  record_run(cfg, "train", {ck, log});
  io::json summary{{"mentions", inst.size()},
                   {"dropped_mentions", dropped},
                   {"epochs", res.log.epochs.size()},
                   {"degenerate_batches", res.log.degenerate_batches},
                   {"empty_inputs", featurizer.empty_inputs()}};
  if (!res.log.epochs.empty()) summary["final"] = res.log.epochs.back().to_json();
  return summary;
}

inline io::json retrieve(const ExperimentConfig& cfg, Split s) {
  prepare(cfg);
  const auto c = load_corpus(cfg);
  const auto a = load_splits(cfg);
  const auto ck = load_checkpoint(cfg.output_dir() / "checkpoint.bin");
  if (ck.params.feature_dim != cfg.encoder.feature_dim) {
    throw Error(ErrorKind::DimensionMismatch, "checkpoint F differs from encoder.feature_dim");
  }
  const auto inst = instances_in_split(c.instances, a, s);
  std::vector<Mention> mentions;
  std::set<std::string> languages{std::string(kFallbackLanguage)};
  for (const auto& i : inst) {
    mentions.push_back(i.mention);
    languages.insert(i.mention.language);
  }
  const Featurizer featurizer(cfg.encoder);
  const auto pool = candidate_pool(c.kb.events(), PoolMode::Inference);
  const auto index = build_index(ck.params, c.kb, pool, featurizer, cfg.task_mode, languages);
  const auto rs = retrieve_all(index, ck.params, featurizer, mentions, std::min(cfg.retrieve_k, index.size()));
  const fs::path out = retrievals_path(cfg, s);
  save_retrievals(out, rs);
  record_run(cfg, "retrieve", {out});
  return {{"split", split_name(s)}, {"mentions", rs.size()}, {"pool", index.size()}};
}

namespace detail {

inline std::map<std::string, RetrievalResult> retrievals_by_mention(const fs::path& path) {
  std::map<std::string, RetrievalResult> out;
  for (auto& r : load_retrievals(path)) out.emplace(r.mention_id, std::move(r));
  return out;
}

inline const RetrievalResult& retrieval_for(const std::map<std::string, RetrievalResult>& rs, const Mention& m) {
  auto it = rs.find(m.id);
  if (it == rs.end()) throw Error(ErrorKind::EmptyRetrievals, "no retrieval for mention " + m.id);
  return it->second;
}

}  // namespace detail

inline io::json rerank_train(const ExperimentConfig& cfg) {
  prepare(cfg);
  const auto c = load_corpus(cfg);
  const auto a = load_splits(cfg);
  const auto rcfg = cfg.resolved_rerank();

  const auto train_rs = detail::retrievals_by_mention(retrievals_path(cfg, Split::Train));
  std::vector<RerankExample> examples;
  for (const auto& i : instances_in_split(c.instances, a, Split::Train)) {
    examples.push_back({i.mention, i.gold_set, detail::retrieval_for(train_rs, i.mention)});
  }
  RerankTrainLog log;
  const auto params = train_reranker(examples, c.kb, cfg.task_mode, rcfg, &log);

  const PairFeaturizer pf({rcfg.block_dim, cfg.encoder.min_n, cfg.encoder.max_n, cfg.encoder.max_context_chars,
                           cfg.encoder.max_cand_chars});
  double threshold = rcfg.threshold;
  std::vector<std::pair<double, double>> trace;
  const auto dev_inst = instances_in_split(c.instances, a, Split::Dev);
  if (!dev_inst.empty()) {
    const auto dev_rs = detail::retrievals_by_mention(retrievals_path(cfg, Split::Dev));
    std::vector<ScoredMention> dev;
    for (const auto& i : dev_inst) {
      dev.push_back({i.mention.id, i.gold_set,
                     score_candidates(params, pf, c.kb, cfg.task_mode, i.mention,
                                      detail::retrieval_for(dev_rs, i.mention), rcfg.k)});
    }
    threshold = select_threshold(dev, rcfg.grid, &trace);
  }

  const fs::path out = cfg.output_dir() / "reranker.bin";
  const fs::path log_path = cfg.output_dir() / "rerank_log.jsonl";
  save_reranker(out, params, rcfg.block_dim, threshold);
  std::vector<io::json> rows;
  for (std::size_t e = 0; e < log.epoch_losses.size(); ++e) rows.push_back({{"epoch", e}, {"loss", log.epoch_losses[e]}});
  for (const auto& [t, v] : trace) rows.push_back({{"threshold", t}, {"dev_product", v}});
  io::write_jsonl(log_path, rows);
  record_run(cfg, "rerank-train", {out, log_path});
  return {{"examples", examples.size()},
          {"substitutions", log.substitutions},
          {"threshold", threshold},
          {"dev_mentions", dev_inst.size()}};
}

inline io::json evaluate(const ExperimentConfig& cfg, Split s, bool atomic_only) {
  prepare(cfg);
  const auto c = load_corpus(cfg);
  const auto a = load_splits(cfg);
  const auto inst = instances_in_split(c.instances, a, s);
  if (inst.empty()) throw Error(ErrorKind::EmptyRecords, std::string("no mentions in split ") + std::string(split_name(s)));
  const auto rs = detail::retrievals_by_mention(retrievals_path(cfg, s));

  const fs::path reranker_path = cfg.output_dir() / "reranker.bin";
  std::optional<StoredReranker> reranker;
  if (fs::exists(reranker_path)) reranker = load_reranker(reranker_path);

  std::vector<EvalRecord> records;
  std::vector<std::pair<std::string, std::set<EventId>>> predictions;
  for (const auto& i : inst) {
    const auto& r = detail::retrieval_for(rs, i.mention);
    EvalRecord rec{i.mention.id, i.gold_set, i.atomic_event, r.ids(), std::nullopt, {}};
    if (reranker) {
      const PairFeaturizer pf({reranker->block_dim, cfg.encoder.min_n, cfg.encoder.max_n,
                               cfg.encoder.max_context_chars, cfg.encoder.max_cand_chars});
      const auto scored = score_candidates(reranker->params, pf, c.kb, cfg.task_mode, i.mention, r, cfg.rerank.k);
      rec.predicted = predict_set(scored, reranker->threshold);
      rec.reranked = rerank_order(scored);
      predictions.emplace_back(i.mention.id, *rec.predicted);
    }
    records.push_back(std::move(rec));
  }

  io::json report = io::json::object();
  std::vector<std::string> warnings;
  std::ofstream tsv;
  const std::string sname(split_name(s));
  const fs::path tsv_path = cfg.output_dir() / ("recall_" + sname + ".tsv");
  tsv.open(tsv_path, std::ios::binary | std::ios::trunc);
  tsv << (atomic_only ? "k\trecall\tatomic_recall\n" : "k\trecall\n");
  for (auto k : cfg.ks) {
    const double strict = recall_at_k(records, k, false, &warnings);
    report["recall@" + std::to_string(k)] = strict;
    report["recall_fraction@" + std::to_string(k)] = recall_at_k_fraction(records, k);
    tsv << k << '\t' << io::json(strict).dump();
    if (atomic_only) {
      const double atomic = recall_at_k(records, k, true);
      report["atomic_recall@" + std::to_string(k)] = atomic;
      tsv << '\t' << io::json(atomic).dump();
    }
    tsv << '\n';
  }
  tsv.close();
  report["recall@min"] = recall_at_min(records);

  std::vector<fs::path> written{tsv_path};
  if (reranker) {
    const io::json m = set_metrics(records).to_json();
    for (const auto& [key, value] : m.items()) report[key] = value;
    report["threshold"] = reranker->threshold;
    const fs::path pred_path = cfg.output_dir() / ("predictions_" + sname + ".jsonl");
    save_predictions(pred_path, predictions);
    written.push_back(pred_path);
  }
  report["split"] = sname;
  report["mentions"] = records.size();
  report["warnings"] = warnings;
  report["config"] = cfg.to_json();
  const fs::path out = cfg.output_dir() / "report.json";
  io::write_json(out, report);
  written.push_back(out);
  record_run(cfg, "evaluate", written);
  return report;
}

inline io::json relext(const ExperimentConfig& cfg, Split s) {
  prepare(cfg);
  const auto c = load_corpus(cfg);
  const auto a = load_splits(cfg);
  const auto retrievals = load_retrievals(retrievals_path(cfg, s));
  const auto lists = build_mention_lists(retrievals, cfg.relext.k);
  const auto pool = candidate_pool(c.kb.events(), PoolMode::Inference);

  std::vector<EventId> queries;
  for (const auto& id : a.events_in(s)) {
    if (c.forest.in_tree(id)) queries.push_back(id);
  }
  const auto rankings = parent_rankings(lists, queries, pool, cfg.relext.ranking_length);
  const auto ids = ranking_ids(rankings);

  io::json report = io::json::object();
  for (std::size_t k : {1, 2, 4, 8, 16}) {
    if (k > cfg.relext.ranking_length) break;
    report["relext_recall@" + std::to_string(k)] = relext_recall_at_k(ids, c.forest, queries, k);
  }
  std::size_t non_root = 0, unlinked = 0;
  for (const auto& e : queries) {
    if (!c.forest.parent_of(e)) continue;
    ++non_root;
    unlinked += !rankings.count(e);
  }
  report["split"] = std::string(split_name(s));
  report["non_root_events"] = non_root;
  report["unlinked_events"] = unlinked;

  const fs::path parents = cfg.output_dir() / "parents.jsonl";
  const fs::path out = cfg.output_dir() / "relext_report.json";
  save_parents(parents, rankings);
  io::write_json(out, report);
  record_run(cfg, "relext", {parents, out});
  return report;
}

}  // namespace heg::pipeline
