#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "idbr/corpus.hpp"
#include "idbr/synthetic.hpp"

namespace idbr {

/// CSV-backed task: train/test files plus the per-class sample sizes used
/// to carve balanced train/val splits out of the train file.
struct CsvSpec {
  std::string train_path;
  std::string test_path;
  int train_per_class = 2000;
  int val_per_class = 2000;
};

struct TaskSpec {
  std::string name;
  int num_classes = 0;
  std::string merge_group;  // empty = own label block
  std::variant<CsvSpec, SyntheticSpec> source;
};

/// Declarative task catalogue. with_builtins() registers the five standard
/// text classification datasets (ag, yelp, amazon, dbpedia, yahoo; amazon
/// and yelp share a label block) plus synthetic tasks used by the test and
/// acceptance suites: syn-a/b/c (disjoint vocabularies) and probe-a/b/c
/// (shared vocabulary, marker-identified tasks).
class TaskRegistry {
 public:
  static TaskRegistry with_builtins();

  void add(TaskSpec spec);  // replaces an existing entry with the same name
  bool contains(const std::string& name) const;
  const TaskSpec& at(const std::string& name) const;  // ConfigError if absent
  std::vector<std::string> names() const;

 private:
  std::map<std::string, TaskSpec> tasks_;
};

/// Expands an order id into task names: "1".."7" are the built-in task
/// sequences; anything containing a comma is a custom order.
std::vector<std::string> resolve_order(const std::string& order_id);

struct CorpusOptions {
  uint64_t data_seed = 1;
  std::string data_root;  // prepended to relative CSV paths
  size_t max_vocab = 20000;
  size_t max_length = 256;
};

/// Materializes an ordered task sequence: loads or generates each dataset,
/// carves balanced splits, merges the global label space, fits the
/// tokenizer on all train texts and encodes every split. Deterministic in
/// CorpusOptions::data_seed.
TaskSequence build_task_sequence(const std::string& order_id,
                                 const TaskRegistry& registry,
                                 const CorpusOptions& options);

/// Loads the raw rows for one task (CSV file or generator), without
/// splitting or encoding. Used by build_task_sequence and by the CLI verbs
/// that re-materialize datasets against a checkpoint.
std::vector<LabeledText> load_task_source(const TaskSpec& spec,
                                          const CorpusOptions& options,
                                          SplitKind split);

}  // namespace idbr
