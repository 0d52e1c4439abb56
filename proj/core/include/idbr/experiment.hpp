#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "idbr/registry.hpp"
#include "idbr/trainer.hpp"

namespace idbr {

/// A method column of the experiment grid: a core method plus ablation
/// switches, named like "idbr-no-nsp". parse_method_variant accepts the
/// five core names and the idbr-* ablation variants.
struct MethodVariant {
  std::string name;
  Method method = Method::kIdbr;
  bool no_nsp = false;
  bool no_task = false;
  bool reg_generic_only = false;
  bool reg_specific_only = false;
  bool random_selection = false;
};

MethodVariant parse_method_variant(const std::string& name);

/// The declarative sweep description: orders x methods x seeds plus the
/// shared training configuration. Loaded from a JSON file; flat
/// `key=value` command line overrides are applied before validation.
struct ExperimentSpec {
  std::vector<std::string> orders;
  std::vector<std::string> methods;
  std::vector<uint64_t> seeds;
  std::filesystem::path output_dir;
  TrainConfig base;
  CorpusOptions corpus;
  TaskRegistry registry = TaskRegistry::with_builtins();
  bool save_checkpoints = true;

  static ExperimentSpec from_file(const std::filesystem::path& path,
                                  std::span<const std::string> overrides = {});
  static ExperimentSpec from_json_text(const std::string& text,
                                       std::span<const std::string> overrides = {});

  void validate() const;  // throws ConfigError

  /// Canonical serialized form; hashed into cell manifests so a resumed
  /// cell can detect a configuration change.
  std::string canonical_json() const;
};

std::filesystem::path cell_directory(const std::filesystem::path& output_dir,
                                     const std::string& order,
                                     const std::string& method, uint64_t seed);

struct SweepOutcome {
  int executed = 0;
  int skipped = 0;
  int failed = 0;
};

/// Runs every (order, method, seed) cell that is not already complete.
/// Each cell writes matrix.csv, metrics.json, steps.jsonl, checkpoints and
/// a manifest.json completion marker into its own directory; failures are
/// isolated per cell. `jobs` > 1 runs cells on a thread pool.
SweepOutcome run_experiment(const ExperimentSpec& spec, int jobs = 1);

/// Aggregates completed cells into CSV + markdown tables: averaged
/// accuracy (methods x orders), forgetting by checkpoint, and ablation
/// tables for whichever variant cells exist.
void write_report(const std::filesystem::path& results_dir);

}  // namespace idbr
