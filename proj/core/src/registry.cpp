#include "idbr/registry.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "idbr/error.hpp"

namespace idbr {

namespace {

TaskSpec csv_task(std::string name, int num_classes, std::string merge_group) {
  CsvSpec csv;
  csv.train_path = name + "/train.csv";
  csv.test_path = name + "/test.csv";
  TaskSpec spec;
  spec.name = name;
  spec.num_classes = num_classes;
  spec.merge_group = std::move(merge_group);
  spec.source = csv;
  return spec;
}

// Disjoint-vocabulary tasks sized so that sequential finetuning forgets
// catastrophically while replay with a 1% memory is strong but not
// saturated: a wide diffuse class vocabulary keeps a handful of stored
// exemplars from covering the class signal outright.
TaskSpec synthetic_task(std::string name, int num_classes, int block) {
  SyntheticSpec syn;
  syn.num_classes = num_classes;
  syn.vocab_block = block;
  syn.filler_words = 60;
  syn.class_words = 30;
  syn.class_word_rate = 0.25;
  syn.min_length = 8;
  syn.max_length = 20;
  TaskSpec spec;
  spec.name = std::move(name);
  spec.num_classes = num_classes;
  spec.source = syn;
  return spec;
}

// Probe tasks share fillers and class words and one merged label block,
// so classification never needs task identity; only the low-rate marker
// words and the task-identity loss separate the tasks. This makes the
// generic/specific probe comparison meaningful: nothing but L_task pushes
// task information into the representation.
TaskSpec probe_task(std::string name, int block) {
  SyntheticSpec syn;
  syn.num_classes = 2;
  syn.vocab_block = block;
  syn.shared_vocabulary = true;
  syn.marker_rate = 0.12;
  syn.class_word_rate = 0.40;
  TaskSpec spec;
  spec.name = std::move(name);
  spec.num_classes = 2;
  spec.merge_group = "probe-shared";
  spec.source = syn;
  return spec;
}

}  // namespace

TaskRegistry TaskRegistry::with_builtins() {
  TaskRegistry r;
  r.add(csv_task("ag", 4, ""));
  r.add(csv_task("yelp", 5, "sentiment"));
  r.add(csv_task("amazon", 5, "sentiment"));
  r.add(csv_task("dbpedia", 14, ""));
  r.add(csv_task("yahoo", 10, ""));
  r.add(synthetic_task("syn-a", 3, 0));
  r.add(synthetic_task("syn-b", 4, 1));
  r.add(synthetic_task("syn-c", 4, 2));
  r.add(probe_task("probe-a", 0));
  r.add(probe_task("probe-b", 1));
  r.add(probe_task("probe-c", 2));
  return r;
}

void TaskRegistry::add(TaskSpec spec) {
  if (spec.name.empty()) throw ConfigError("task registry: empty task name");
  tasks_[spec.name] = std::move(spec);
}

bool TaskRegistry::contains(const std::string& name) const {
  return tasks_.count(name) > 0;
}

const TaskSpec& TaskRegistry::at(const std::string& name) const {
  auto it = tasks_.find(name);
  if (it == tasks_.end()) {
    throw ConfigError("unknown task name: `" + name + "`");
  }
  return it->second;
}

std::vector<std::string> TaskRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(tasks_.size());
  for (const auto& [name, spec] : tasks_) out.push_back(name);
  return out;
}

std::vector<std::string> resolve_order(const std::string& order_id) {
  static const std::map<std::string, std::vector<std::string>> builtin = {
      {"1", {"ag", "yelp", "yahoo"}},
      {"2", {"yelp", "yahoo", "ag"}},
      {"3", {"yahoo", "ag", "yelp"}},
      {"4", {"ag", "yelp", "amazon", "yahoo", "dbpedia"}},
      {"5", {"yelp", "yahoo", "amazon", "dbpedia", "ag"}},
      {"6", {"dbpedia", "yahoo", "ag", "amazon", "yelp"}},
      {"7", {"yelp", "ag", "dbpedia", "amazon", "yahoo"}},
  };
  if (auto it = builtin.find(order_id); it != builtin.end()) {
    return it->second;
  }
  if (order_id.find(',') == std::string::npos) {
    throw ConfigError("unknown order id: `" + order_id +
                      "` (expected 1..7 or a comma-separated task list)");
  }
  std::vector<std::string> names;
  std::string current;
  for (char c : order_id) {
    if (c == ',') {
      if (!current.empty()) names.push_back(current);
      current.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      current.push_back(c);
    }
  }
  if (!current.empty()) names.push_back(current);
  if (names.empty()) throw ConfigError("order `" + order_id + "` names no tasks");
  std::set<std::string> unique(names.begin(), names.end());
  if (unique.size() != names.size()) {
    throw ConfigError("order `" + order_id + "` repeats a task name");
  }
  return names;
}

std::vector<LabeledText> load_task_source(const TaskSpec& spec,
                                          const CorpusOptions& options,
                                          SplitKind split) {
  if (const auto* syn = std::get_if<SyntheticSpec>(&spec.source)) {
    return generate_synthetic(
        *syn, derive_seed(options.data_seed, spec.name), split);
  }
  const auto& csv = std::get<CsvSpec>(spec.source);
  const std::string& rel =
      split == SplitKind::kTest ? csv.test_path : csv.train_path;
  std::filesystem::path path(rel);
  if (path.is_relative() && !options.data_root.empty()) {
    path = std::filesystem::path(options.data_root) / path;
  }
  return load_csv_dataset(path, spec.num_classes);
}

namespace {

// The separator-pair construction needs two tokens; rows that tokenize
// shorter are dropped before class-balanced sampling so balance survives.
void drop_short_rows(std::vector<LabeledText>& rows) {
  std::erase_if(rows, [](const LabeledText& r) {
    return Tokenizer::split_lowercase(r.text).size() < 2;
  });
}

std::vector<Example> encode_split(const std::vector<LabeledText>& rows,
                                  const Tokenizer& tokenizer, int task_id,
                                  int label_offset, uint64_t& next_index) {
  std::vector<Example> out;
  out.reserve(rows.size());
  for (const LabeledText& row : rows) {
    Example ex;
    ex.tokens = tokenizer.encode(row.text);
    ex.text = row.text;
    ex.label = label_offset + row.label;
    ex.task_id = task_id;
    ex.id = (static_cast<uint64_t>(task_id) << 32) | next_index++;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TaskSequence build_task_sequence(const std::string& order_id,
                                 const TaskRegistry& registry,
                                 const CorpusOptions& options) {
  const std::vector<std::string> names = resolve_order(order_id);

  struct Loaded {
    const TaskSpec* spec;
    std::vector<LabeledText> train, val, test;
  };
  std::vector<Loaded> loaded;
  std::vector<LabelSpaceEntry> entries;
  for (const std::string& name : names) {
    const TaskSpec& spec = registry.at(name);
    entries.push_back({spec.name, spec.num_classes, spec.merge_group});

    Loaded l;
    l.spec = &spec;
    if (std::holds_alternative<SyntheticSpec>(spec.source)) {
      l.train = load_task_source(spec, options, SplitKind::kTrain);
      l.val = load_task_source(spec, options, SplitKind::kVal);
      l.test = load_task_source(spec, options, SplitKind::kTest);
      drop_short_rows(l.train);
      drop_short_rows(l.val);
      drop_short_rows(l.test);
    } else {
      const auto& csv = std::get<CsvSpec>(spec.source);
      auto full_train = load_task_source(spec, options, SplitKind::kTrain);
      l.test = load_task_source(spec, options, SplitKind::kTest);
      drop_short_rows(full_train);
      drop_short_rows(l.test);
      SampledSplit split =
          subsample_split(full_train, csv.train_per_class, csv.val_per_class,
                          derive_seed(options.data_seed, "subsample",
                                      {fnv1a64(spec.name)}));
      l.train = std::move(split.train);
      l.val = std::move(split.val);
    }
    loaded.push_back(std::move(l));
  }

  const LabelSpace space = merge_label_space(entries);

  std::vector<std::string> train_texts;
  for (const Loaded& l : loaded) {
    for (const LabeledText& row : l.train) train_texts.push_back(row.text);
  }
  TokenizerConfig tok_cfg;
  tok_cfg.max_vocab = options.max_vocab;
  tok_cfg.max_length = options.max_length;
  Tokenizer tokenizer = Tokenizer::fit(train_texts, tok_cfg);

  TaskSequence seq;
  seq.order_id = order_id;
  seq.tokenizer = std::move(tokenizer);
  seq.total_classes = space.total_classes;
  for (size_t t = 0; t < loaded.size(); ++t) {
    const Loaded& l = loaded[t];
    TaskDescriptor task;
    task.name = l.spec->name;
    task.num_classes = l.spec->num_classes;
    task.merge_group = l.spec->merge_group;
    task.label_offset = space.offset_by_task.at(l.spec->name);
    uint64_t next_index = 0;
    const int task_id = static_cast<int>(t);
    task.train = encode_split(l.train, seq.tokenizer, task_id,
                              task.label_offset, next_index);
    task.val = encode_split(l.val, seq.tokenizer, task_id, task.label_offset,
                            next_index);
    task.test = encode_split(l.test, seq.tokenizer, task_id, task.label_offset,
                             next_index);
    seq.tasks.push_back(std::move(task));
  }
  return seq;
}

}  // namespace idbr
