#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "heg/encoder.hpp"
#include "heg/error.hpp"
#include "heg/jsonl.hpp"
#include "heg/rerank.hpp"
#include "heg/rng.hpp"
#include "heg/synthetic.hpp"
#include "heg/training.hpp"

namespace heg {

/// Environment variable consulted for the output directory when no flag
/// sets it.
inline constexpr const char* kOutputDirEnv = "HEG_OUTPUT_DIR";

struct PathsConfig {
  // Empty input paths resolve to <output_dir>/{events,relations,mentions}.jsonl.
  std::string events;
  std::string relations;
  std::string mentions;
  std::string output_dir = "heg-out";
};

struct RelextConfig {
  std::size_t k = 4;
  std::size_t ranking_length = 16;
};

struct ExperimentConfig {
  PathsConfig paths;
  TaskMode task_mode = TaskMode::Crosslingual;
  std::uint64_t seed = 0;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  int max_height = 3;
  FeaturizerConfig encoder;
  TrainConfig train;
  RerankConfig rerank;
  std::size_t retrieve_k = 16;
  std::vector<std::size_t> ks{1, 2, 4, 8, 16};
  RelextConfig relext;
  SynthConfig synth;

  std::filesystem::path output_dir() const { return paths.output_dir; }

  std::filesystem::path events_path() const {
    return paths.events.empty() ? output_dir() / "events.jsonl" : std::filesystem::path(paths.events);
  }
  std::filesystem::path relations_path() const {
    return paths.relations.empty() ? output_dir() / "relations.jsonl" : std::filesystem::path(paths.relations);
  }
  std::filesystem::path mentions_path() const {
    return paths.mentions.empty() ? output_dir() / "mentions.jsonl" : std::filesystem::path(paths.mentions);
  }

  /// Per-module seeds, all derived from the experiment seed.
  std::uint64_t split_seed() const { return derive_seed(seed, "split"); }
  std::uint64_t train_seed() const { return derive_seed(seed, "train"); }
  std::uint64_t rerank_seed() const { return derive_seed(seed, "rerank"); }

  TrainConfig resolved_train() const {
    TrainConfig t = train;
    t.seed = train_seed();
    return t;
  }

  RerankConfig resolved_rerank() const {
    RerankConfig r = rerank;
    r.seed = rerank_seed();
    return r;
  }

  void validate() const {
    double sum = 0.0;
    for (double r : split_ratios) {
      if (r < 0.0) throw Error(ErrorKind::ConfigError, "split ratios must be non-negative");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::ConfigError, "split ratios must sum to 1");
    if (max_height < 0) throw Error(ErrorKind::ConfigError, "max_height must be >= 0");
    if (paths.output_dir.empty()) throw Error(ErrorKind::ConfigError, "output_dir is empty");
    if (retrieve_k == 0) throw Error(ErrorKind::ConfigError, "retrieve_k must be positive");
    if (rerank.k > retrieve_k) throw Error(ErrorKind::ConfigError, "rerank.k exceeds retrieve_k");
    if (relext.k == 0 || relext.k > retrieve_k)
      throw Error(ErrorKind::ConfigError, "relext.k must lie in [1, retrieve_k]");
    for (auto k : ks) {
      if (k == 0) throw Error(ErrorKind::ConfigError, "metric k values must be positive");
    }
    train.validate();
    rerank.validate();
  }

  io::json to_json() const {
    return {
        {"paths",
         {{"events", paths.events},
          {"relations", paths.relations},
          {"mentions", paths.mentions},
          {"output_dir", paths.output_dir}}},
        {"task_mode", mode_name(task_mode)},
        {"seed", seed},
        {"split_ratios", split_ratios},
        {"max_height", max_height},
        {"encoder",
         {{"feature_dim", encoder.feature_dim},
          {"min_n", encoder.min_n},
          {"max_n", encoder.max_n},
          {"max_context_chars", encoder.max_context_chars},
          {"max_cand_chars", encoder.max_cand_chars}}},
        {"train", train.to_json()},
        {"rerank", rerank.to_json()},
        {"retrieve_k", retrieve_k},
        {"ks", ks},
        {"relext", {{"k", relext.k}, {"ranking_length", relext.ranking_length}}},
        {"synth", synth.to_json()},
    };
  }

  /// Missing keys keep their defaults; unknown top-level keys are rejected.
  static ExperimentConfig from_json(const io::json& j) {
    static const std::set<std::string> known{"paths", "task_mode", "seed",       "split_ratios", "max_height",
                                             "encoder", "train",   "rerank",     "retrieve_k",   "ks",
                                             "relext",  "synth"};
    if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'");
    }
    ExperimentConfig c;
    try {
      if (j.contains("paths")) {
        const auto& p = j.at("paths");
        c.paths.events = p.value("events", c.paths.events);
        c.paths.relations = p.value("relations", c.paths.relations);
        c.paths.mentions = p.value("mentions", c.paths.mentions);
        c.paths.output_dir = p.value("output_dir", c.paths.output_dir);
      }
      if (j.contains("task_mode")) c.task_mode = parse_mode(j.at("task_mode").get<std::string>());
      c.seed = j.value("seed", c.seed);
      c.split_ratios = j.value("split_ratios", c.split_ratios);
      c.max_height = j.value("max_height", c.max_height);
      if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        c.encoder.feature_dim = e.value("feature_dim", c.encoder.feature_dim);
        c.encoder.min_n = e.value("min_n", c.encoder.min_n);
        c.encoder.max_n = e.value("max_n", c.encoder.max_n);
        c.encoder.max_context_chars = e.value("max_context_chars", c.encoder.max_context_chars);
        c.encoder.max_cand_chars = e.value("max_cand_chars", c.encoder.max_cand_chars);
      }
      if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
      if (j.contains("rerank")) c.rerank = RerankConfig::from_json(j.at("rerank"));
      c.retrieve_k = j.value("retrieve_k", c.retrieve_k);
      c.ks = j.value("ks", c.ks);
      if (j.contains("relext")) {
        c.relext.k = j.at("relext").value("k", c.relext.k);
        c.relext.ranking_length = j.at("relext").value("ranking_length", c.relext.ranking_length);
      }
      if (j.contains("synth")) c.synth = SynthConfig::from_json(j.at("synth"));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorKind::ConfigError, std::string("bad config value: ") + e.what());
    }
    return c;
  }
};

}  // namespace heg
