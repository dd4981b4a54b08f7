// Command-line driver for the event grounding pipeline.
//
// Setting precedence, highest first: command-line flags, the HEG_OUTPUT_DIR
// environment variable (output directory only), the --config file, built-in
// defaults.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "heg/config.hpp"
#include "heg/pipeline.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task_mode;
  std::optional<std::string> strategy;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> retrieve_k;
};

heg::ExperimentConfig resolve(const Overrides& o) {
  heg::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = heg::ExperimentConfig::from_json(heg::io::read_json(o.config_path));
  if (const char* env = std::getenv(heg::kOutputDirEnv); env && *env) cfg.paths.output_dir = env;
  if (o.output_dir) cfg.paths.output_dir = *o.output_dir;
  if (o.seed) cfg.seed = *o.seed;
  if (o.task_mode) cfg.task_mode = heg::parse_mode(*o.task_mode);
  if (o.strategy) cfg.train.strategy = heg::parse_strategy(*o.strategy);
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.learning_rate) cfg.train.learning_rate = *o.learning_rate;
  if (o.retrieve_k) cfg.retrieve_k = *o.retrieve_k;
  return cfg;
}

void print_error(const std::string& command, const std::string& kind, const std::string& message) {
  const heg::io::json record{{"error", kind}, {"message", message}, {"command", command}};
  std::cerr << record.dump() << '\n';
}

std::vector<heg::Split> parse_splits(const std::string& s) {
  if (s == "all") return {heg::Split::Train, heg::Split::Dev, heg::Split::Test};
  return {heg::parse_split(s)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical event grounding toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("-c,--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("-o,--output-dir", o.output_dir, "Artifact directory (overrides HEG_OUTPUT_DIR)");
  app.add_option("--seed", o.seed, "Experiment seed");
  app.add_option("--task-mode", o.task_mode, "multilingual | crosslingual");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  auto* ingest = app.add_subcommand("ingest", "Validate the corpus and write stats.json");
  auto* split = app.add_subcommand("split", "Assign connected components to train/dev/test");
  auto* train = app.add_subcommand("train", "Train the bi-encoder");
  train->add_option("--strategy", o.strategy, "BASELINE | HP | HJL | HP_HJL");
  train->add_option("--epochs", o.epochs, "Linking (or joint) epochs");
  train->add_option("--lr", o.learning_rate, "SGD learning rate");

  std::string retrieve_split = "all";
  auto* retrieve = app.add_subcommand("retrieve", "Top-k retrieval for the mentions of a split");
  retrieve->add_option("--split", retrieve_split, "train | dev | test | all");
  retrieve->add_option("-k", o.retrieve_k, "Candidates per mention");

  auto* rerank = app.add_subcommand("rerank-train", "Train the reranker and pick its threshold on dev");

  std::string eval_split = "test";
  bool atomic_only = false;
  auto* evaluate = app.add_subcommand("evaluate", "Compute metrics and write report.json");
  evaluate->add_option("--split", eval_split, "train | dev | test");
  evaluate->add_flag("--atomic-only", atomic_only, "Also report recall of the atomic event");

  std::string relext_split = "test";
  auto* relext = app.add_subcommand("relext", "Rank candidate parents from retrieval overlap");
  relext->add_option("--split", relext_split, "train | dev | test");

  double tolerance = 1e-4;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of both loss gradients");
  grad->add_option("--tolerance", tolerance, "Largest accepted relative error");

  std::string command = "heg";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(command, "ConfigError", e.what());
    return 2;
  }

  try {
    for (auto* sub : app.get_subcommands()) command = sub->get_name();
    if (grad->parsed()) {
      const auto lin = heg::gradient_check(heg::LossKind::Linking);
      const auto hier = heg::gradient_check(heg::LossKind::Hierarchy);
      const bool ok = lin.finite && hier.finite && lin.max_rel_error <= tolerance && hier.max_rel_error <= tolerance;
      std::cout << "linking max_rel_error " << lin.max_rel_error << '\n'
                << "hierarchy max_rel_error " << hier.max_rel_error << '\n'
                << (ok ? "ok" : "FAILED") << '\n';
      return ok ? 0 : 1;
    }

    const auto cfg = resolve(o);
    heg::io::json out;
    if (synth->parsed()) {
      out = heg::pipeline::synth(cfg);
    } else if (ingest->parsed()) {
      out = heg::pipeline::ingest(cfg);
    } else if (split->parsed()) {
      out = heg::pipeline::split(cfg);
    } else if (train->parsed()) {
      out = heg::pipeline::train(cfg);
    } else if (retrieve->parsed()) {
      out = heg::io::json::array();
      for (auto s : parse_splits(retrieve_split)) out.push_back(heg::pipeline::retrieve(cfg, s));
    } else if (rerank->parsed()) {
      out = heg::pipeline::rerank_train(cfg);
    } else if (evaluate->parsed()) {
      out = heg::pipeline::evaluate(cfg, heg::parse_split(eval_split), atomic_only);
      out.erase("config");
    } else if (relext->parsed()) {
      out = heg::pipeline::relext(cfg, heg::parse_split(relext_split));
    }
    std::cout << out.dump(2) << '\n';
    return 0;
  } catch (const heg::Error& e) {
    print_error(command, std::string(heg::to_string(e.kind())), e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    print_error(command, "IoError", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error(command, "InternalError", e.what());
    return 3;
  }
}
