// Experiment runner for the continual text classification framework.
//
//   idbr run <spec.json> [--jobs N] [key=value ...]
//   idbr report <results_dir>
//   idbr export-embeddings <checkpoint> <tasks> --out <file>
//   idbr probe <checkpoint> <tasks> [--space generic|specific|both]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdlib>
#include <variant>
#include <cctype>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "idbr/checkpoint.hpp"
#include "idbr/error.hpp"
#include "idbr/evaluation.hpp"
#include "idbr/experiment.hpp"

namespace {

using namespace idbr;

CorpusOptions corpus_options_for(const Checkpoint& ckpt,
                                 const std::string& data_root) {
  CorpusOptions opts;
  opts.data_seed = ckpt.meta.seed;
  opts.max_vocab = ckpt.tokenizer.config().max_vocab;
  opts.max_length = ckpt.tokenizer.config().max_length;
  if (!data_root.empty()) {
    opts.data_root = data_root;
  } else if (const char* env = std::getenv("IDBR_DATA_ROOT")) {
    opts.data_root = env;
  }
  return opts;
}

// Re-materializes the requested tasks of a checkpointed run and encodes
// them with the checkpoint's own tokenizer, so exported features line up
// with what the model saw in training.
std::vector<Example> materialize_examples(const Checkpoint& ckpt,
                                          const std::string& task_list,
                                          const std::string& split,
                                          const std::string& data_root) {
  const TaskRegistry registry = TaskRegistry::with_builtins();
  const CorpusOptions opts = corpus_options_for(ckpt, data_root);

  std::vector<std::string> names;
  if (task_list == "all") {
    for (const CheckpointTaskInfo& t : ckpt.meta.tasks) names.push_back(t.name);
  } else {
    std::string current;
    for (char c : task_list + ",") {
      if (c == ',') {
        if (!current.empty()) names.push_back(current);
        current.clear();
      } else if (!std::isspace(static_cast<unsigned char>(c))) {
        current.push_back(c);
      }
    }
    if (names.empty()) throw ConfigError("no task names given");
  }

  SplitKind kind = SplitKind::kTest;
  if (split == "train") kind = SplitKind::kTrain;
  else if (split == "val") kind = SplitKind::kVal;
  else if (split != "test") throw ConfigError("unknown split `" + split + "`");

  std::vector<Example> out;
  for (const std::string& name : names) {
    int task_id = -1;
    int label_offset = 0;
    for (size_t i = 0; i < ckpt.meta.tasks.size(); ++i) {
      if (ckpt.meta.tasks[i].name == name) {
        task_id = static_cast<int>(i);
        label_offset = ckpt.meta.tasks[i].label_offset;
        break;
      }
    }
    if (task_id < 0) {
      throw ConfigError("task `" + name +
                        "` is not part of the checkpointed sequence");
    }
    // CSV-backed tasks only ship a train and a test file; train/val re-use
    // the training file here since the exported features are diagnostic.
    std::vector<LabeledText> rows =
        load_task_source(registry.at(name), opts,
                         kind == SplitKind::kVal &&
                                 std::holds_alternative<CsvSpec>(
                                     registry.at(name).source)
                             ? SplitKind::kTrain
                             : kind);
    uint64_t index = 0;
    for (const LabeledText& row : rows) {
      Example ex;
      ex.tokens = ckpt.tokenizer.encode(row.text);
      if (ex.tokens.size() < 2) continue;
      ex.text = row.text;
      ex.label = label_offset + row.label;
      ex.task_id = task_id;
      ex.id = (static_cast<uint64_t>(task_id) << 32) | index++;
      out.push_back(std::move(ex));
    }
  }
  if (out.empty()) throw ConfigError("no examples materialized");
  return out;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Continual text classification with disentangled "
               "representation regularization and episodic replay"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Execute an experiment spec");
  std::string spec_path;
  int jobs = 1;
  std::vector<std::string> overrides;
  run->add_option("spec", spec_path, "Experiment spec (JSON)")->required();
  run->add_option("--jobs", jobs, "Parallel cell workers");
  run->add_option("overrides", overrides, "key=value spec overrides");

  // report
  auto* report = app.add_subcommand("report", "Aggregate a results directory");
  std::string results_dir;
  report->add_option("dir", results_dir, "Results directory")->required();

  // export-embeddings
  auto* exp = app.add_subcommand("export-embeddings",
                                 "Write per-example features to CSV");
  std::string ckpt_path, task_list, out_path, split = "test", data_root;
  size_t limit = 0;
  exp->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
  exp->add_option("tasks", task_list, "Comma-separated task names or `all`")
      ->required();
  exp->add_option("--out", out_path, "Output CSV path")->required();
  exp->add_option("--split", split, "train|val|test (default test)");
  exp->add_option("--limit", limit, "Keep only the first N examples");
  exp->add_option("--data-root", data_root, "Dataset root directory");

  // probe
  auto* probe = app.add_subcommand(
      "probe", "Linear task-identity probe on frozen features");
  std::string probe_ckpt, probe_tasks, space = "both", probe_split = "test",
              probe_root;
  uint64_t probe_seed = 0;
  bool probe_seed_set = false;
  probe->add_option("checkpoint", probe_ckpt, "Checkpoint file")->required();
  probe->add_option("tasks", probe_tasks,
                    "Comma-separated task names or `all` (needs >= 2)")
      ->required();
  probe->add_option("--space", space, "generic|specific|both");
  probe->add_option("--split", probe_split, "train|val|test (default test)");
  probe->add_option("--data-root", probe_root, "Dataset root directory");
  probe->add_option("--seed", probe_seed, "Probe split seed")
      ->each([&](const std::string&) { probe_seed_set = true; });

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    const ExperimentSpec spec = ExperimentSpec::from_file(spec_path, overrides);
    const SweepOutcome outcome = run_experiment(spec, jobs);
    std::cout << "cells executed: " << outcome.executed
              << ", skipped: " << outcome.skipped
              << ", failed: " << outcome.failed << '\n';
    if (outcome.failed > 0) return 2;
    std::cout << "results: " << spec.output_dir.string() << '\n';
    return 0;
  }

  if (report->parsed()) {
    write_report(results_dir);
    std::cout << "report written to " << results_dir << "/report.md\n";
    return 0;
  }

  if (exp->parsed()) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    std::vector<Example> examples =
        materialize_examples(ckpt, task_list, split, data_root);
    if (limit > 0 && examples.size() > limit) examples.resize(limit);
    export_embeddings(ckpt.model, examples, out_path);
    std::cout << "wrote " << examples.size() << " rows to " << out_path << '\n';
    return 0;
  }

  if (probe->parsed()) {
    const Checkpoint ckpt = load_checkpoint(probe_ckpt);
    const std::vector<Example> examples =
        materialize_examples(ckpt, probe_tasks, probe_split, probe_root);
    const uint64_t seed = probe_seed_set ? probe_seed : ckpt.meta.seed;
    if (space == "generic" || space == "both") {
      std::cout << "generic-space task-id probe accuracy: "
                << probe_disentanglement(ckpt.model, examples,
                                         RegSpace::kGeneric, seed)
                << '\n';
    }
    if (space == "specific" || space == "both") {
      std::cout << "specific-space task-id probe accuracy: "
                << probe_disentanglement(ckpt.model, examples,
                                         RegSpace::kSpecific, seed)
                << '\n';
    }
    if (space != "generic" && space != "specific" && space != "both") {
      throw ConfigError("unknown space `" + space + "`");
    }
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const idbr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
